"""HTTP service for the perceptual study.

Endpoints (JSON payloads):
  POST /api/sessions                  create a session, returns the first page
  GET  /api/sessions/<pid>/page       current page for a participant
  POST /api/sessions/<pid>/ratings    submit one page of ratings
  GET  /api/records                   export all persisted rating records
  GET  /api/report                    descriptive stats + RM-ANOVA per criterion
  GET  /videos/<name>                 static video assets (never transcoded)

Sessions live in memory; ratings are persisted to the append-only record
store, so analysis survives restarts even though open sessions do not.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import asdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .study import (
    PageRejected,
    RecordStore,
    SessionState,
    StudyConfig,
    analyze_records,
    create_session,
    submit_page,
)

VIDEO_SLOT_LABELS = ("Video A", "Video B", "Video C", "Video D")


def _json_safe(value):
    """Replace non-finite floats with None so payloads stay strict JSON."""
    import math

    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


class StudyService:
    """Session registry and submission logic shared by all HTTP workers."""

    def __init__(self, config: StudyConfig, store: RecordStore, seed: int = 0):
        self.config = config
        self.store = store
        self._sessions: dict[str, SessionState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._rng = np.random.default_rng(seed)

    @property
    def records_per_session(self) -> int:
        return self.config.total_pages * len(self.config.conditions)

    def _session_lock(self, participant_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(participant_id, threading.Lock())

    def create_session(self, participant_id: str | None = None) -> dict:
        with self._registry_lock:
            session_rng = np.random.default_rng(int(self._rng.integers(2**63)))
        session = create_session(self.config, session_rng, participant_id)
        with self._registry_lock:
            if session.participant_id in self._sessions:
                raise PageRejected(f"session {session.participant_id} already exists")
            self._sessions[session.participant_id] = session
        return {
            "participant_id": session.participant_id,
            "total_pages": self.config.total_pages,
            "page": self._page_payload(session),
        }

    def _get_session(self, participant_id: str) -> SessionState:
        with self._registry_lock:
            session = self._sessions.get(participant_id)
        if session is None:
            raise KeyError(f"unknown session {participant_id}")
        return session

    def _page_payload(self, session: SessionState) -> dict | None:
        page = session.current_page()
        if page is None:
            return None
        return {
            "participant_id": session.participant_id,
            "page_index": page.page_index,
            "total_pages": self.config.total_pages,
            "criterion": page.criterion,
            "question": page.question,
            "muted": page.muted,
            "sequence_id": page.sequence_id,
            "scale": list(self.config.scale),
            "videos": [
                {
                    "slot": slot,
                    "label": VIDEO_SLOT_LABELS[slot],
                    "condition": condition,
                    "uri": self.config.video_uris[(page.criterion, page.sequence_id, condition)],
                }
                for slot, condition in enumerate(page.condition_order)
            ],
        }

    def get_page(self, participant_id: str) -> dict:
        session = self._get_session(participant_id)
        payload = self._page_payload(session)
        if payload is None:
            return {"participant_id": participant_id, "completed": True, "page": None}
        return {"participant_id": participant_id, "completed": False, "page": payload}

    def submit(self, participant_id: str, page_index: int, ratings: list[dict]) -> dict:
        parsed = {}
        for item in ratings:
            condition = item.get("condition")
            if condition in parsed:
                raise PageRejected(f"duplicate rating for condition {condition}")
            parsed[condition] = item.get("score")
        lock = self._session_lock(participant_id)
        with lock:
            session = self._get_session(participant_id)
            advanced, records = submit_page(session, page_index, parsed)
            self.store.append_all(records)   # persisted before the state advances
            with self._registry_lock:
                self._sessions[participant_id] = advanced
        return {
            "accepted": True,
            "completed": advanced.completed,
            "page": self._page_payload(advanced),
        }

    def export_records(self) -> list[dict]:
        return [json.loads(r.to_json()) for r in self.store.read_all()]

    def report(self) -> dict:
        analysis = analyze_records(
            self.store.read_all(), total_records_per_session=self.records_per_session
        )
        anova = {}
        for criterion, result in analysis["anova"].items():
            # non-finite statistics (degenerate designs) are not valid JSON
            anova[criterion] = result if isinstance(result, str) else _json_safe(asdict(result))
        cells = {
            f"{criterion}/{condition}": cell
            for (criterion, condition), cell in analysis["descriptive"]["cells"].items()
        }
        return {
            "descriptive": {
                "cells": cells,
                "empty_cells": [list(k) for k in analysis["descriptive"]["empty_cells"]],
            },
            "anova": anova,
            "excluded_participants": analysis["excluded_participants"],
            "n_records": analysis["n_records"],
        }


STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".json": "application/json",
    ".mp4": "video/mp4",
    ".webm": "video/webm",
}


def make_handler(service: StudyService, videos_dir=None, frontend_dir=None):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):   # keep test output quiet
            pass

        def _send_json(self, payload, status=200):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _read_json(self):
            length = int(self.headers.get("Content-Length", 0))
            if length == 0:
                return {}
            return json.loads(self.rfile.read(length).decode("utf-8"))

        def do_GET(self):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            try:
                if parts == ["api", "records"]:
                    self._send_json({"records": service.export_records()})
                elif parts == ["api", "report"]:
                    self._send_json(service.report())
                elif len(parts) == 4 and parts[:2] == ["api", "sessions"] and parts[3] == "page":
                    self._send_json(service.get_page(parts[2]))
                elif len(parts) == 2 and parts[0] == "videos" and videos_dir:
                    self._send_video(parts[1])
                elif frontend_dir and (not parts or parts[0] != "api"):
                    self._send_static(parts)
                else:
                    self._send_json({"error": "not found"}, status=404)
            except KeyError as exc:
                self._send_json({"error": str(exc)}, status=404)

        def _send_static(self, parts):
            relative = os.path.join(*parts) if parts else "index.html"
            path = os.path.realpath(os.path.join(frontend_dir, relative))
            if not path.startswith(os.path.realpath(frontend_dir) + os.sep) and \
                    path != os.path.realpath(frontend_dir):
                self._send_json({"error": "bad path"}, status=400)
                return
            if not os.path.isfile(path):
                self._send_json({"error": "not found"}, status=404)
                return
            content_type = STATIC_TYPES.get(os.path.splitext(path)[1], "application/octet-stream")
            with open(path, "rb") as fh:
                data = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _send_video(self, name):
            if "/" in name or ".." in name:
                self._send_json({"error": "bad path"}, status=400)
                return
            path = os.path.join(videos_dir, name)
            if not os.path.isfile(path):
                self._send_json({"error": "video not found"}, status=404)
                return
            with open(path, "rb") as fh:
                data = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", "video/mp4")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            try:
                if parts == ["api", "sessions"]:
                    body = self._read_json()
                    payload = service.create_session(body.get("participant_id"))
                    self._send_json(payload, status=201)
                elif len(parts) == 4 and parts[:2] == ["api", "sessions"] and parts[3] == "ratings":
                    body = self._read_json()
                    payload = service.submit(
                        parts[2], body.get("page_index", -1), body.get("ratings", [])
                    )
                    self._send_json(payload)
                else:
                    self._send_json({"error": "not found"}, status=404)
            except PageRejected as exc:
                self._send_json({"accepted": False, "reason": str(exc)}, status=409)
            except KeyError as exc:
                self._send_json({"error": str(exc)}, status=404)
            except (ValueError, TypeError) as exc:
                self._send_json({"accepted": False, "reason": str(exc)}, status=400)

    return Handler


def serve(config: StudyConfig, records_path, host="127.0.0.1", port=8000,
          videos_dir=None, frontend_dir=None, seed=0) -> ThreadingHTTPServer:
    """Build a ready-to-run threading HTTP server (caller runs serve_forever)."""
    service = StudyService(config, RecordStore(records_path), seed=seed)
    server = ThreadingHTTPServer(
        (host, port), make_handler(service, videos_dir, frontend_dir)
    )
    server.study_service = service
    return server
