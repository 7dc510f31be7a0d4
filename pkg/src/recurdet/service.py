"""HTTP facade over the classifier session state machine.

One session = one uploaded image run through the pipeline plus an
actively-learned separator. Mutating requests on a session are serialized
by a per-session lock; a request that arrives in the wrong phase gets 409.
Sessions live in memory, with optional JSONL snapshots per round.
"""

from __future__ import annotations

import base64
import dataclasses
import io
import json
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .classifier import (
    Phase,
    QueryBatch,
    SessionState,
    apply_corrections,
    classify_all,
    init_session,
    next_query_batch,
    session_round_seed,
    set_bias,
    slider_batch,
)
from .errors import (
    DegenerateBox,
    IncompleteResponse,
    PipelineError,
    RecurdetError,
    TooFewClusters,
    UnsupportedImageFormat,
    WrongPhase,
)
from .image_core import GrayImage, load_image
from .pipeline import PipelineArtifacts, PipelineConfig, derive_seeds, run_pipeline


class Session:
    def __init__(self, sid: str, artifacts: PipelineArtifacts, state: SessionState, seed: int):
        self.id = sid
        self.artifacts = artifacts
        self.state = state
        self.seed = seed  # base seed for per-round query sampling
        self.created_at = time.time()
        self.lock = threading.Lock()


class BiasRequest(BaseModel):
    b: float


class LabelsRequest(BaseModel):
    labels: dict[int, str]  # cluster id -> "positive" | "negative"


def _crop_b64(img: GrayImage, center, size: int) -> str:
    from PIL import Image

    half = size // 2
    r, c = int(round(center[0])), int(round(center[1]))
    r0, c0 = max(r - half, 0), max(c - half, 0)
    r1, c1 = min(r + half + 1, img.height), min(c + half + 1, img.width)
    arr = np.zeros((size, size), dtype=np.uint8)
    window = np.clip(np.rint(img.data[r0:r1, c0:c1] * 255), 0, 255).astype(np.uint8)
    arr[r0 - (r - half) : r0 - (r - half) + window.shape[0],
        c0 - (c - half) : c0 - (c - half) + window.shape[1]] = window
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _batch_payload(session: Session, batch: QueryBatch) -> dict:
    size = 3 * 9  # canonical object size in the rescaled frame
    entries = []
    for e in batch.entries:
        cluster = session.artifacts.clusters[e.cluster_id]
        entries.append(
            {
                "cluster_id": e.cluster_id,
                "score": e.score,
                "predicted": "positive" if e.predicted else "negative",
                "zone": e.zone,
                "crop": _crop_b64(session.artifacts.image, cluster.center, size),
            }
        )
    return {"round": batch.round_id, "phase": session.state.phase.value, "entries": entries}


def _result_payload(session: Session) -> dict:
    labels, count = classify_all(session.state)
    scale = session.artifacts.scale
    scores = session.state.separator.scores(session.state.features) - session.state.separator.b
    detections = [
        {
            "x": float(c.center[1] / scale),
            "y": float(c.center[0] / scale),
            "score": float(scores[c.id]),
            "label": "positive" if labels[c.id] else "negative",
        }
        for c in session.artifacts.clusters
    ]
    return {
        "count": int(count),
        "detections": detections,
        "converged": session.state.phase is Phase.CONVERGED,
        "round": session.state.round,
        "phase": session.state.phase.value,
    }


def create_app(persist_dir=None) -> FastAPI:
    app = FastAPI(title="recurdet session service")
    sessions: dict[str, Session] = {}
    persist = Path(persist_dir) if persist_dir else None
    if persist:
        persist.mkdir(parents=True, exist_ok=True)

    def snapshot(session: Session):
        if persist is None:
            return
        lines = [json.dumps(rec, sort_keys=True) for rec in session.state.log]
        (persist / f"{session.id}.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))

    def get_session(sid: str) -> Session:
        session = sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return session

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/sessions", status_code=201)
    async def create_session(
        image: UploadFile = File(...),
        bbox: str = Form(...),
        seed: int = Form(0),
    ):
        try:
            parts = [int(v) for v in bbox.split(",")]
            if len(parts) != 4:
                raise ValueError
        except ValueError:
            raise HTTPException(status_code=400, detail="bbox must be x,y,w,h integers")
        payload = await image.read()
        suffix = Path(image.filename or "upload.png").suffix or ".png"
        import tempfile

        with tempfile.NamedTemporaryFile(suffix=suffix, delete=False) as tmp:
            tmp.write(payload)
            tmp_path = tmp.name
        try:
            img = load_image(tmp_path)
        except UnsupportedImageFormat as exc:
            raise HTTPException(status_code=422, detail=f"decode: {exc}")
        finally:
            Path(tmp_path).unlink(missing_ok=True)

        config = dataclasses.replace(PipelineConfig(), seed=seed)
        try:
            artifacts = run_pipeline(img, tuple(parts), config)
            if len(artifacts.clusters) < 2:
                raise PipelineError("classify", TooFewClusters(str(len(artifacts.clusters))))
            state = init_session(artifacts.features_norm, svm_c=config.svm_c)
        except PipelineError as exc:
            status = 400 if isinstance(exc.cause, DegenerateBox) else 422
            raise HTTPException(status_code=status, detail=str(exc))

        sid = uuid.uuid4().hex[:12]
        session = Session(sid, artifacts, state, derive_seeds(seed)["session"])
        sessions[sid] = session
        batch = slider_batch(state)
        return {
            "session_id": sid,
            "n_clusters": len(artifacts.clusters),
            "slider": _batch_payload(session, batch),
            "b_min": state.b_min,
            "b_max": state.b_max,
        }

    @app.put("/sessions/{sid}/bias")
    def submit_bias(sid: str, req: BiasRequest):
        session = get_session(sid)
        with session.lock:
            try:
                session.state = set_bias(session.state, req.b)
            except WrongPhase as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            snapshot(session)
            return {"phase": session.state.phase.value, "b": session.state.separator.b}

    @app.get("/sessions/{sid}/batch")
    def get_batch(sid: str):
        session = get_session(sid)
        with session.lock:
            state = session.state
            if state.phase is Phase.SLIDER:
                return _batch_payload(session, slider_batch(state))
            if state.phase is Phase.CONVERGED:
                raise HTTPException(status_code=409, detail="session converged")
            seed = session_round_seed(session.seed, state.round)
            session.state, batch = next_query_batch(state, seed)
            if batch is None:
                snapshot(session)
                raise HTTPException(status_code=409, detail="session converged")
            return _batch_payload(session, batch)

    @app.post("/sessions/{sid}/labels")
    def submit_labels(sid: str, req: LabelsRequest):
        session = get_session(sid)
        with session.lock:
            responses = {}
            for cid, value in req.labels.items():
                if value not in ("positive", "negative"):
                    raise HTTPException(status_code=400, detail=f"bad label {value!r}")
                responses[int(cid)] = value == "positive"
            try:
                session.state = apply_corrections(session.state, responses)
            except WrongPhase as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except IncompleteResponse as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            snapshot(session)
            last = session.state.log[-1]
            return {
                "converged": session.state.phase is Phase.CONVERGED,
                "round": session.state.round,
                "corrections": last["corrections"],
            }

    @app.get("/sessions/{sid}/result")
    def get_result(sid: str):
        session = get_session(sid)
        with session.lock:
            return _result_payload(session)

    @app.get("/sessions/{sid}/log")
    def get_log(sid: str):
        session = get_session(sid)
        with session.lock:
            return JSONResponse([dict(rec) for rec in session.state.log])

    return app
