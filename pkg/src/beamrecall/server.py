"""HTTP service over ingested sessions, consumed by the CLI's twin and the web UI.

Queries are synchronous (seconds at session scale); ingest runs in the
background with a status sub-resource because transcribing long captures
is slow. All error bodies are structured {stage, code, message}.
"""

from __future__ import annotations

import io
import json
import tempfile
import threading
from pathlib import Path

from fastapi import BackgroundTasks, FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .audio import encode_wav, slice_audio, stft
from .beamform import estimate_covariance, beam_pattern, mvdr_weights, steering_for_bins
from .config import ServiceConfig, build_embedding_provider, build_llm_backend
from .errors import (
    BackendUnreachable,
    BadConfig,
    BeamrecallError,
    EmptyInterval,
    FixtureMissing,
    PipelineError,
    ProviderUnreachable,
    UnknownChunk,
    UnknownSession,
)
from .geometry import uma8_geometry
from .recall import answer_query
from .session import SessionStore

_NOT_FOUND = (UnknownSession, UnknownChunk, FixtureMissing)
_UPSTREAM = (BackendUnreachable, ProviderUnreachable)


def _error_response(exc: BeamrecallError, stage: str = "") -> JSONResponse:
    if isinstance(exc, PipelineError):
        stage = exc.stage
        exc = exc.cause
    if isinstance(exc, _NOT_FOUND):
        status = 404
    elif isinstance(exc, _UPSTREAM):
        status = 502
    elif isinstance(exc, (BadConfig, EmptyInterval)) or isinstance(exc, BeamrecallError):
        status = 400
    else:
        status = 500
    return JSONResponse(
        status_code=status,
        content={"stage": stage, "code": exc.code, "message": str(exc)},
    )


class IngestTracker:
    """In-memory ingest states; committed sessions read as complete."""

    def __init__(self):
        self._states: dict[str, dict] = {}
        self._lock = threading.Lock()

    def set(self, session_id: str, state: str, error: str = ""):
        with self._lock:
            self._states[session_id] = {"state": state, "error": error}

    def get(self, session_id: str) -> dict | None:
        with self._lock:
            return self._states.get(session_id)


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="beamrecall", version="0.1.0")
    store = SessionStore(Path(config.sessions_root), config)
    tracker = IngestTracker()
    app.state.store = store
    app.state.config = config

    @app.exception_handler(BeamrecallError)
    async def handle_domain_error(request: Request, exc: BeamrecallError):
        return _error_response(exc)

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        if config.api_token and request.url.path.startswith("/sessions"):
            header = request.headers.get("authorization", "")
            if header != f"Bearer {config.api_token}":
                return JSONResponse(status_code=401, content={
                    "stage": "auth", "code": "unauthorized", "message": "bad token"})
        return await call_next(request)

    @app.get("/sessions")
    def list_sessions():
        return [
            {
                "session_id": m.session_id,
                "created_at": m.created_at,
                "streams": [s["label"] for s in m.streams],
                "chunk_count": m.chunk_count,
            }
            for m in store.list_sessions()
        ]

    @app.post("/sessions", status_code=202)
    def create_session(background: BackgroundTasks,
                       file: UploadFile = File(...),
                       plan: str = Form("{}")):
        try:
            plan_data = json.loads(plan)
        except json.JSONDecodeError as exc:
            return _error_response(BadConfig(f"plan is not JSON: {exc}"), stage="ingest")
        azimuths = {str(k): float(v)
                    for k, v in (plan_data.get("azimuths") or {}).items()}
        auto_doa = bool(plan_data.get("auto_doa", False))
        n_sources = int(plan_data.get("n_sources", 2))
        if not azimuths and not auto_doa:
            return _error_response(
                BadConfig("plan needs azimuths or auto_doa"), stage="ingest")

        upload_dir = Path(config.sessions_root) / ".uploads"
        upload_dir.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=upload_dir, suffix=".wav",
                                         delete=False) as tmp:
            tmp.write(file.file.read())
            wav_path = Path(tmp.name)

        from .session import session_id_for
        plan_key = {"azimuths": azimuths, "auto_doa": auto_doa,
                    "n_sources": n_sources if auto_doa else 0}
        session_id = session_id_for(wav_path.read_bytes(), plan_key, config)
        tracker.set(session_id, "pending")

        def run():
            tracker.set(session_id, "running")
            try:
                store.ingest(wav_path, azimuths or None, auto_doa, n_sources)
                tracker.set(session_id, "complete")
            except BeamrecallError as exc:
                tracker.set(session_id, "failed", str(exc))
            except Exception as exc:  # pragma: no cover - defensive
                tracker.set(session_id, "failed", f"internal: {exc}")
            finally:
                wav_path.unlink(missing_ok=True)

        background.add_task(run)
        return {"session_id": session_id, "status_url": f"/sessions/{session_id}/status"}

    @app.get("/sessions/{session_id}")
    def get_manifest(session_id: str):
        return store.manifest(session_id).to_dict()

    @app.get("/sessions/{session_id}/status")
    def get_status(session_id: str):
        if (store.session_dir(session_id) / "manifest.json").is_file():
            return {"session_id": session_id, "state": "complete", "error": ""}
        state = tracker.get(session_id)
        if state is None:
            raise UnknownSession(f"no session {session_id}")
        return {"session_id": session_id, **state}

    @app.post("/sessions/{session_id}/query")
    def query_session(session_id: str, body: dict):
        text = str(body.get("query", ""))
        if not text.strip():
            return _error_response(BadConfig("query text is required"), stage="query")
        recall_config = config.recall.with_overrides(body.get("config"))
        _, index, chunk_store = store.load_session(session_id)
        llm = build_llm_backend(config)
        provider = build_embedding_provider(config)
        result = answer_query(index, chunk_store, text, recall_config, llm, provider)
        return Response(content=result.to_json(), media_type="application/json")

    @app.get("/sessions/{session_id}/audio")
    def get_audio(session_id: str, direction: str, start: float, end: float):
        audio = store.stream_audio(session_id, direction)
        clip = slice_audio(audio, start, end)
        blob, _ = encode_wav(clip, bit_depth=16)
        return Response(content=blob, media_type="audio/wav")

    @app.get("/sessions/{session_id}/beampattern")
    def get_beampattern(session_id: str, freq: float, direction: str = ""):
        manifest = store.manifest(session_id)
        audio = store.input_audio(session_id)
        geometry = uma8_geometry()
        dsp = config.dsp
        tensor = stft(audio, dsp.window_size, dsp.hop_size)
        covariances = estimate_covariance(tensor, dsp.loading_factor)
        wanted = [s for s in manifest.streams
                  if not direction or s["label"] == direction]
        if not wanted:
            raise UnknownSession(f"session {session_id} has no stream {direction!r}")
        columns = {}
        azimuth_axis = None
        for entry in wanted:
            steering = steering_for_bins(geometry, entry["azimuth_deg"], tensor.n_bins,
                                         dsp.window_size, manifest.sample_rate_hz,
                                         dsp.speed_of_sound)
            weights = mvdr_weights(covariances, steering, entry["azimuth_deg"])
            pattern = beam_pattern(weights, geometry, freq,
                                   grid_resolution_deg=dsp.grid_resolution_deg,
                                   window_size=dsp.window_size,
                                   sample_rate_hz=manifest.sample_rate_hz,
                                   speed_of_sound=dsp.speed_of_sound)
            azimuth_axis = [p[0] for p in pattern]
            columns[entry["label"]] = [p[1] for p in pattern]
        labels = [e["label"] for e in wanted]
        buf = io.StringIO()
        buf.write("azimuth_deg," + ",".join(labels) + "\n")
        for i, azimuth in enumerate(azimuth_axis):
            row = ",".join(f"{columns[label][i]:.6f}" for label in labels)
            buf.write(f"{azimuth:.1f},{row}\n")
        return Response(content=buf.getvalue(), media_type="text/csv")

    if config.static_dir and Path(config.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=config.static_dir, html=True),
                  name="static")

    return app


def serve(config: ServiceConfig):
    """Run the service until interrupted; in-flight requests finish on shutdown."""
    import uvicorn

    try:
        uvicorn.run(create_app(config), host=config.listen_host,
                    port=config.listen_port, log_level="info")
    except OSError as exc:
        from .errors import BindFailure

        raise BindFailure(
            f"cannot bind {config.listen_host}:{config.listen_port}: {exc}"
        ) from exc
