/** Canvas strip chart: displayed current vs time with phase shading. */

import { SessionStateName } from "./protocol.js";
import { ChartModel } from "./view.js";

const PHASE_FILL: Record<SessionStateName, string> = {
  idle: "#f6f7f8",
  armed: "#f6f7f8",
  warmup: "#fff4df",
  dose: "#e8f5e9",
  cooldown: "#e3eef7",
  done: "#f0f0f0",
  aborted: "#fdecea",
};

export function drawStripChart(
  canvas: HTMLCanvasElement,
  model: ChartModel,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);

  const span = Math.max(model.t1_ms - model.t0_ms, 1000);
  const x = (t: number) => ((t - model.t0_ms) / span) * width;
  const y = (mA: number) => height - (mA / model.yMax_mA) * (height - 14) - 4;

  for (const phase of model.phases) {
    ctx.fillStyle = PHASE_FILL[phase.state] ?? "#ffffff";
    const x0 = Math.max(0, x(phase.t0_ms));
    ctx.fillRect(x0, 0, Math.max(1, x(phase.t1_ms) - x0), height);
  }

  // y grid each 0.5 mA
  ctx.strokeStyle = "#dddddd";
  ctx.fillStyle = "#888888";
  ctx.font = "10px sans-serif";
  for (let level = 0; level <= model.yMax_mA; level += 0.5) {
    ctx.beginPath();
    ctx.moveTo(0, y(level));
    ctx.lineTo(width, y(level));
    ctx.stroke();
    ctx.fillText(`${level.toFixed(1)}`, 2, y(level) - 2);
  }

  ctx.strokeStyle = "#1463b0";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  let started = false;
  for (const frame of model.points) {
    if (frame.t_ms < model.t0_ms) continue;
    const px = x(frame.t_ms);
    const py = y(frame.displayed_mA);
    if (started) ctx.lineTo(px, py);
    else ctx.moveTo(px, py);
    started = true;
  }
  ctx.stroke();

  ctx.fillStyle = "#c62828";
  for (const t of model.complianceMarks_ms) {
    if (t < model.t0_ms) continue;
    ctx.beginPath();
    ctx.arc(x(t), 8, 3, 0, Math.PI * 2);
    ctx.fill();
  }
}
