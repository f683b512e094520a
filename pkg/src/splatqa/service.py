"""HTTP service hosting rating sessions for the browser interface.

All authoritative session state lives here; the UI only replays it. Ratings
are persisted append-only (one CSV row per rating, flushed per request), and
session creation is journaled to a JSONL log, so a restarted service resumes
every session at its first unrated playlist position. Per-session mutation
is serialized with a lock (single writer per session).

Endpoints (all under /v1):
    POST /v1/sessions                      create session {participant_id, seed}
    GET  /v1/sessions/{sid}/current        current stimulus + phase + video URL
    GET  /v1/sessions/{sid}/progress       cursor / total / phase
    POST /v1/sessions/{sid}/rating         record {score: 1..5}, advance cursor
    GET  /v1/stimuli/{stimulus_id}/video   video bytes, single-range requests honored
"""

from __future__ import annotations

import csv
import json
import mimetypes
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .errors import DataError
from .rng import make_rng

RATINGS_COLUMNS = ["participant_id", "stimulus_id", "score", "timestamp_iso8601",
                   "session_id", "is_training"]


@dataclass
class Stimulus:
    stimulus_id: str
    video_path: str
    base_model: str = ""
    distortion_kind: str = ""
    level: float | int | None = None
    is_training: bool = False

    def public(self) -> dict:
        return {
            "id": self.stimulus_id,
            "base_model": self.base_model,
            "distortion_kind": self.distortion_kind,
            "level": self.level,
            "is_training": self.is_training,
        }


def load_stimulus_index(path: str) -> list[Stimulus]:
    """Index JSON: [{id, video_path, base_model, distortion_kind, level, is_training}]."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, list) or not doc:
        raise DataError(f"{path}: stimulus index must be a non-empty JSON array")
    seen = set()
    stimuli = []
    for item in doc:
        sid = item["id"]
        if sid in seen:
            raise DataError(f"{path}: duplicate stimulus id {sid!r}")
        seen.add(sid)
        stimuli.append(Stimulus(
            stimulus_id=sid,
            video_path=item["video_path"],
            base_model=item.get("base_model", ""),
            distortion_kind=item.get("distortion_kind", ""),
            level=item.get("level"),
            is_training=bool(item.get("is_training", False)),
        ))
    return stimuli


@dataclass
class ServiceConfig:
    index_path: str
    stimuli_dir: str
    ratings_csv: str
    sessions_log: str


@dataclass
class SessionState:
    session_id: str
    participant_id: str
    seed: int
    playlist: list[str]
    training_count: int
    cursor: int = 0
    video_served: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def phase(self) -> str:
        if self.cursor >= len(self.playlist):
            return "done"
        return "training" if self.cursor < self.training_count else "rating"


class CreateSession(BaseModel):
    participant_id: str = Field(min_length=1)
    seed: int = Field(ge=0)


class RatingBody(BaseModel):
    score: int = Field(ge=1, le=5)


def build_playlist(stimuli: list[Stimulus], seed: int) -> tuple[list[str], int]:
    """Training stimuli first, then the main set, each seeded-shuffled
    (Fisher-Yates via the Philox generator)."""
    rng = make_rng(seed)
    training = [s.stimulus_id for s in stimuli if s.is_training]
    main = [s.stimulus_id for s in stimuli if not s.is_training]
    playlist = [training[i] for i in rng.permutation(len(training))]
    playlist += [main[i] for i in rng.permutation(len(main))]
    return playlist, len(training)


def create_app(config: ServiceConfig) -> FastAPI:
    stimuli = load_stimulus_index(config.index_path)
    by_id = {s.stimulus_id: s for s in stimuli}
    sessions: dict[str, SessionState] = {}
    registry_lock = threading.Lock()

    def persist_session(state: SessionState) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(config.sessions_log)), exist_ok=True)
        with open(config.sessions_log, "a", encoding="utf-8") as f:
            f.write(json.dumps({
                "session_id": state.session_id,
                "participant_id": state.participant_id,
                "seed": state.seed,
                "playlist": state.playlist,
                "training_count": state.training_count,
                "created_at": datetime.now(timezone.utc).isoformat(),
            }) + "\n")

    def persist_rating(state: SessionState, stimulus_id: str, score: int, training: bool) -> None:
        new_file = not os.path.exists(config.ratings_csv)
        with open(config.ratings_csv, "a", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            if new_file:
                writer.writerow(RATINGS_COLUMNS)
            writer.writerow([
                state.participant_id, stimulus_id, score,
                datetime.now(timezone.utc).isoformat(),
                state.session_id, "1" if training else "0",
            ])
            f.flush()

    def restore() -> None:
        if os.path.exists(config.sessions_log):
            with open(config.sessions_log, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    doc = json.loads(line)
                    sessions[doc["session_id"]] = SessionState(
                        session_id=doc["session_id"],
                        participant_id=doc["participant_id"],
                        seed=int(doc["seed"]),
                        playlist=list(doc["playlist"]),
                        training_count=int(doc["training_count"]),
                    )
        if os.path.exists(config.ratings_csv):
            with open(config.ratings_csv, newline="", encoding="utf-8") as f:
                for row in csv.DictReader(f):
                    state = sessions.get(row.get("session_id", ""))
                    if state is not None:
                        state.cursor += 1

    restore()
    app = FastAPI(title="splatqa rating service", version="0.1.0")

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSession):
        playlist, training_count = build_playlist(stimuli, body.seed)
        state = SessionState(
            session_id=uuid.uuid4().hex,
            participant_id=body.participant_id,
            seed=body.seed,
            playlist=playlist,
            training_count=training_count,
        )
        with registry_lock:
            sessions[state.session_id] = state
        persist_session(state)
        return {
            "session_id": state.session_id,
            "playlist_length": len(playlist),
            "training_count": training_count,
        }

    def get_session(sid: str) -> SessionState | None:
        return sessions.get(sid)

    @app.get("/v1/sessions/{sid}/current")
    def current(sid: str):
        state = get_session(sid)
        if state is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        if state.phase == "done":
            return {"phase": "done", "stimulus": None,
                    "index": state.cursor, "total": len(state.playlist)}
        stim = by_id[state.playlist[state.cursor]]
        return {
            "phase": state.phase,
            "stimulus": stim.public(),
            "video_url": f"/v1/stimuli/{stim.stimulus_id}/video?session={sid}",
            "index": state.cursor,
            "total": len(state.playlist),
        }

    @app.get("/v1/sessions/{sid}/progress")
    def progress(sid: str):
        state = get_session(sid)
        if state is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        return {
            "cursor": state.cursor,
            "total": len(state.playlist),
            "phase": state.phase,
            "training_count": state.training_count,
        }

    @app.post("/v1/sessions/{sid}/rating")
    def rate(sid: str, body: RatingBody):
        state = get_session(sid)
        if state is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        with state.lock:
            if state.phase == "done":
                return JSONResponse({"detail": "session already complete"}, status_code=409)
            if not state.video_served:
                return JSONResponse(
                    {"detail": "rating before the current video was served"}, status_code=409)
            stimulus_id = state.playlist[state.cursor]
            training = state.cursor < state.training_count
            persist_rating(state, stimulus_id, body.score, training)
            state.cursor += 1
            state.video_served = False
            return {"recorded": True, "phase": state.phase,
                    "cursor": state.cursor, "total": len(state.playlist)}

    @app.get("/v1/stimuli/{stimulus_id}/video")
    def video(stimulus_id: str, request: Request, session: str | None = None):
        stim = by_id.get(stimulus_id)
        if stim is None:
            return JSONResponse({"detail": "unknown stimulus"}, status_code=404)
        path = os.path.join(config.stimuli_dir, stim.video_path)
        if not os.path.exists(path):
            return JSONResponse({"detail": f"video file missing: {stim.video_path}"}, status_code=404)
        # serving a session's current stimulus unlocks its rating
        if session is not None:
            state = sessions.get(session)
            if state is not None:
                with state.lock:
                    if state.phase != "done" and state.playlist[state.cursor] == stimulus_id:
                        state.video_served = True

        size = os.path.getsize(path)
        media_type = mimetypes.guess_type(path)[0] or "application/octet-stream"
        range_header = request.headers.get("range")
        with open(path, "rb") as f:
            if range_header:
                try:
                    unit, _, spec = range_header.partition("=")
                    start_s, _, end_s = spec.partition("-")
                    if unit.strip() != "bytes":
                        raise ValueError
                    start = int(start_s) if start_s else 0
                    end = int(end_s) if end_s else size - 1
                except ValueError:
                    return Response(status_code=416)
                if start > end or start >= size:
                    return Response(status_code=416,
                                    headers={"Content-Range": f"bytes */{size}"})
                end = min(end, size - 1)
                f.seek(start)
                chunk = f.read(end - start + 1)
                return Response(chunk, status_code=206, media_type=media_type, headers={
                    "Content-Range": f"bytes {start}-{end}/{size}",
                    "Accept-Ranges": "bytes",
                    "Content-Length": str(len(chunk)),
                })
            data = f.read()
        return Response(data, media_type=media_type,
                        headers={"Accept-Ranges": "bytes", "Content-Length": str(size)})

    app.state.sessions = sessions
    app.state.config = config
    return app


def run_server(config: ServiceConfig, port: int, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="info")
