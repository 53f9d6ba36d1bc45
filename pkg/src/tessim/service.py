"""Network control surface for live sessions.

A thin adapter over the session engine: JSON request/response for
create / start / abort / set-intensity, and newline-delimited JSON
telemetry streams.  Every behavior is the engine's; the service adds
only transport, the single-output-stage rule (one running session at a
time, like the hardware), and the blinding boundary.

Blinding contract: responses and the default telemetry channel never
carry the SHAM flag or the delivered current (nor the load voltage,
which is just the delivered current rescaled).  The unblinded channel
requires the token configured at service start, supplied via the
``X-Unblind-Token`` header (or ``token`` query parameter).

The engine is ticked at 100 Hz on the wall clock and every 10th frame is
published, so streams run at 10 frames/s.  Slow subscribers lose oldest
frames first; each published record carries that subscriber's running
drop count.
"""

from __future__ import annotations

import asyncio
import contextlib
import hmac
import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .circuit import CircuitParams
from .config import ConfigError, circuit_params_from_mapping, stim_params_from_mapping
from .params import ValidationError
from .session import Session, SessionState, SessionStateError, TelemetryFrame, create_session

TICK_HZ = 100
PUBLISH_HZ = 10
SUBSCRIBER_BUFFER = 64

RUNNING_STATES = (SessionState.WARMUP, SessionState.DOSE, SessionState.COOLDOWN)
FINISHED_STATES = (SessionState.DONE, SessionState.ABORTED)


class _Subscriber:
    def __init__(self) -> None:
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=SUBSCRIBER_BUFFER)
        self.dropped = 0

    def publish(self, item) -> None:
        while True:
            try:
                self.queue.put_nowait(item)
                return
            except asyncio.QueueFull:
                try:
                    self.queue.get_nowait()
                    self.dropped += 1
                except asyncio.QueueEmpty:
                    pass


@dataclass
class _Record:
    id: str
    session: Session
    created_at: str
    frames: list[TelemetryFrame] = field(default_factory=list)
    subscribers: list[_Subscriber] = field(default_factory=list)
    task: asyncio.Task | None = None


def frame_payload(frame: TelemetryFrame, sham: bool, unblinded: bool,
                  dropped: int = 0) -> dict:
    payload = {
        "t_ms": frame.t_ms,
        "state": frame.state.value,
        "displayed_mA": frame.displayed_mA,
        "compliant": frame.compliant,
        "dropped": dropped,
    }
    if unblinded:
        payload["actual_mA"] = frame.actual_mA
        payload["v_body_V"] = frame.v_body_V
        payload["sham"] = sham
    return payload


def resource_payload(record: _Record, unblinded: bool) -> dict:
    p = record.session.params
    params: dict = {
        "mode": p.mode.value,
        "intensity_mA": p.intensity_mA,
        "dose_s": p.dose_s,
        "ramp_rate_mA_per_min": p.ramp_rate_mA_per_min,
        "freq_lo_Hz": p.freq_lo_Hz,
        "freq_hi_Hz": p.freq_hi_Hz,
        "duty_pct": p.duty_pct,
        "pattern": p.pattern.value,
        "seed": p.seed,
    }
    if p.burst is not None:
        params["burst"] = {
            "burst_freq_Hz": p.burst.burst_freq_Hz,
            "chain_count": p.burst.chain_count,
        }
    if unblinded:
        params["sham"] = p.sham
    return {
        "id": record.id,
        "state": record.session.state.value,
        "created_at": record.created_at,
        "params": params,
    }


def create_app(
    unblind_token: str | None = None,
    console_dir: str | Path | None = None,
    trace_dir: str | Path | None = None,
    tick_hz: int = TICK_HZ,
    publish_hz: int = PUBLISH_HZ,
) -> FastAPI:
    """Build the control-service application."""

    records: dict[str, _Record] = {}
    lock = asyncio.Lock()
    tick_ms = 1000.0 / tick_hz
    publish_every = max(1, round(tick_hz / publish_hz))

    @contextlib.asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        # Abort anything still running and fast-forward its accelerated
        # ramp so the shutdown never cuts current instantaneously.
        for record in records.values():
            session = record.session
            if session.state in RUNNING_STATES:
                with contextlib.suppress(SessionStateError):
                    session.abort()
                frame = None
                while session.state not in FINISHED_STATES:
                    frame = session.tick(tick_ms)
                if frame is not None:
                    _publish(record, frame)
                _finish_stream(record)
            if record.task is not None:
                record.task.cancel()
        if trace_dir is not None:
            _flush_telemetry_logs(records, Path(trace_dir))

    app = FastAPI(title="tessim control service", lifespan=lifespan)

    def _conflict(message: str) -> JSONResponse:
        return JSONResponse({"detail": message}, status_code=409)

    def _not_found(session_id: str) -> JSONResponse:
        return JSONResponse(
            {"detail": f"no session {session_id!r}"}, status_code=404)

    def _unblinded_allowed(request: Request) -> bool:
        supplied = request.headers.get("x-unblind-token") or \
            request.query_params.get("token")
        if unblind_token is None or supplied is None:
            return False
        return hmac.compare_digest(supplied, unblind_token)

    def _publish(record: _Record, frame: TelemetryFrame) -> None:
        record.frames.append(frame)
        for sub in record.subscribers:
            sub.publish(frame)

    def _finish_stream(record: _Record) -> None:
        for sub in record.subscribers:
            sub.publish(None)

    async def _drive(record: _Record) -> None:
        session = record.session
        ticks = 0
        try:
            while True:
                async with lock:
                    if session.state in FINISHED_STATES:
                        break
                    frame = session.tick(tick_ms)
                ticks += 1
                if ticks % publish_every == 0 or frame.state in FINISHED_STATES:
                    _publish(record, frame)
                if frame.state in FINISHED_STATES:
                    break
                await asyncio.sleep(tick_ms / 1000.0)
        finally:
            _finish_stream(record)

    def _any_running() -> _Record | None:
        for rec in records.values():
            if rec.session.state in RUNNING_STATES:
                return rec
        return None

    @app.post("/sessions")
    async def create(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            return JSONResponse(
                {"detail": f"body is not valid JSON: {exc}"}, status_code=400)
        if not isinstance(body, dict):
            return JSONResponse(
                {"detail": "body must be an object with 'stim' and "
                           "optional 'circuit' sections"}, status_code=400)
        stim_raw = body.get("stim")
        circuit_raw = body.get("circuit", {})
        unknown = set(body) - {"stim", "circuit"}
        if unknown or not isinstance(stim_raw, dict) or not isinstance(circuit_raw, dict):
            return JSONResponse(
                {"detail": f"body must be {{'stim': {{...}}, 'circuit': {{...}}}}; "
                           f"unexpected keys: {sorted(unknown)}"}, status_code=400)
        try:
            stim = stim_params_from_mapping(stim_raw)
            circuit = circuit_params_from_mapping(circuit_raw)
        except ConfigError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=400)
        try:
            session = create_session(stim, circuit)
        except ValidationError as exc:
            return JSONResponse(
                {"detail": "parameter validation failed",
                 "violations": [
                     {"field": v.field, "value": v.value, "message": v.message}
                     for v in exc.violations]},
                status_code=422)
        record = _Record(
            id=uuid.uuid4().hex[:12],
            session=session,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        records[record.id] = record
        return JSONResponse(
            resource_payload(record, _unblinded_allowed(request)),
            status_code=201)

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str, request: Request):
        record = records.get(session_id)
        if record is None:
            return _not_found(session_id)
        return resource_payload(record, _unblinded_allowed(request))

    @app.post("/sessions/{session_id}/start")
    async def start(session_id: str, request: Request):
        record = records.get(session_id)
        if record is None:
            return _not_found(session_id)
        async with lock:
            running = _any_running()
            if running is not None and running is not record:
                return _conflict(
                    f"session {running.id} is already running; "
                    f"the device has one output stage")
            try:
                record.session.start()
            except SessionStateError as exc:
                return _conflict(str(exc))
            record.task = asyncio.create_task(_drive(record))
        return resource_payload(record, _unblinded_allowed(request))

    @app.post("/sessions/{session_id}/abort")
    async def abort(session_id: str, request: Request):
        record = records.get(session_id)
        if record is None:
            return _not_found(session_id)
        async with lock:
            try:
                record.session.abort()
            except SessionStateError as exc:
                return _conflict(str(exc))
        return resource_payload(record, _unblinded_allowed(request))

    @app.post("/sessions/{session_id}/intensity")
    async def set_intensity(session_id: str, request: Request):
        record = records.get(session_id)
        if record is None:
            return _not_found(session_id)
        try:
            body = await request.json()
            new_mA = float(body["intensity_mA"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            return JSONResponse(
                {"detail": "body must be {'intensity_mA': <number>}"},
                status_code=400)
        async with lock:
            try:
                record.session.set_intensity(new_mA)
            except SessionStateError as exc:
                return _conflict(str(exc))
            except ValidationError as exc:
                return JSONResponse(
                    {"detail": "parameter validation failed",
                     "violations": [
                         {"field": v.field, "value": v.value, "message": v.message}
                         for v in exc.violations]},
                    status_code=422)
        return resource_payload(record, _unblinded_allowed(request))

    @app.get("/sessions/{session_id}/telemetry")
    async def telemetry(session_id: str, request: Request,
                        channel: str = "blinded"):
        record = records.get(session_id)
        if record is None:
            return _not_found(session_id)
        if channel not in ("blinded", "unblinded"):
            return JSONResponse(
                {"detail": "channel must be 'blinded' or 'unblinded'"},
                status_code=400)
        unblinded = channel == "unblinded"
        if unblinded and not _unblinded_allowed(request):
            return JSONResponse(
                {"detail": "unblinded telemetry requires a valid unblind token"},
                status_code=403)
        sham = record.session.params.sham

        async def stream():
            if record.session.state in FINISHED_STATES:
                if record.frames:
                    final = record.frames[-1]
                    yield json.dumps(frame_payload(final, sham, unblinded)) + "\n"
                return
            sub = _Subscriber()
            record.subscribers.append(sub)
            try:
                while True:
                    frame = await sub.queue.get()
                    if frame is None:
                        return
                    yield json.dumps(
                        frame_payload(frame, sham, unblinded, sub.dropped)
                    ) + "\n"
                    if frame.state in FINISHED_STATES:
                        return
            finally:
                with contextlib.suppress(ValueError):
                    record.subscribers.remove(sub)

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    if console_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(console_dir), html=True),
                  name="console")

    app.state.records = records
    return app


def _flush_telemetry_logs(records: dict[str, _Record], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for record in records.values():
        if not record.frames:
            continue
        path = out_dir / f"session-{record.id}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t_s,state,displayed_mA,actual_mA,v_body_V,compliant\n")
            for fr in record.frames:
                fh.write(
                    f"{fr.t_ms / 1000.0!r},{fr.state.value},"
                    f"{fr.displayed_mA!r},{fr.actual_mA!r},"
                    f"{fr.v_body_V!r},{1 if fr.compliant else 0}\n")
