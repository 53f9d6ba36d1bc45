/** Bounded ring buffer of telemetry frames, strictly ordered in time. */

export class FrameRing<T extends { t_ms: number }> {
  private items: T[] = [];

  constructor(readonly capacity: number) {
    if (capacity < 1) throw new Error("capacity must be at least 1");
  }

  /** Append a frame; stale or duplicate timestamps are ignored. */
  push(frame: T): boolean {
    const last = this.items[this.items.length - 1];
    if (last !== undefined && frame.t_ms <= last.t_ms) return false;
    this.items.push(frame);
    if (this.items.length > this.capacity) {
      this.items.splice(0, this.items.length - this.capacity);
    }
    return true;
  }

  get length(): number {
    return this.items.length;
  }

  last(): T | undefined {
    return this.items[this.items.length - 1];
  }

  toArray(): readonly T[] {
    return this.items;
  }

  clear(): void {
    this.items = [];
  }
}
