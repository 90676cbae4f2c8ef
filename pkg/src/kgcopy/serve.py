"""Chat sessions over a trained checkpoint, plus a small HTTP server.

The engine keeps one rolling transcript per session and decodes with
the same context-window rules the training data used. Responses carry
provenance: character spans that tile the reply text exactly, each
marked as vocabulary output or as a copy of a specific triple.

The server is stdlib-only (ThreadingHTTPServer). Sessions live in
memory; a per-session lock serializes concurrent messages to the same
session while distinct sessions proceed in parallel.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .corpus import DEFAULT_WINDOW, Turn, Vocabulary, encode_context
from .kg import LocalKG, embed_triples
from .model import KGCopyModel, gate_similarity
from .pipeline import first_token_ids, ids_to_tokens, query_embedding
from .text import normalize, tokenize
from .vectors import EmbeddingTable

__all__ = ["ChatEngine", "ChatSession", "make_server", "run_server"]

log = logging.getLogger(__name__)

MAX_BODY_BYTES = 1 << 20


@dataclass
class ChatSession:
    session_id: str
    team_id: str
    history: deque = field(default_factory=deque)
    lock: threading.Lock = field(default_factory=threading.Lock)


class ChatEngine:
    """Decoding plus session bookkeeping for one loaded checkpoint."""

    def __init__(self, model: KGCopyModel, vocab: Vocabulary,
                 table: EmbeddingTable, kgs: dict[str, LocalKG],
                 window: int = DEFAULT_WINDOW, max_decode_len: int = 40):
        self.model = model
        self.vocab = vocab
        self.table = table
        self.kgs = kgs
        self.window = window
        self.max_decode_len = max_decode_len
        self._sessions: dict[str, ChatSession] = {}
        self._lock = threading.Lock()
        self._rows = {t: embed_triples(kg, table) for t, kg in kgs.items()}
        self._feed = {t: first_token_ids(kg, vocab, model.k_max)
                      for t, kg in kgs.items()}

    @property
    def teams(self) -> list[str]:
        return sorted(self.kgs)

    def new_session(self, team_id: str) -> ChatSession:
        if team_id not in self.kgs:
            raise KeyError(team_id)
        session = ChatSession(
            session_id=uuid.uuid4().hex, team_id=team_id,
            history=deque(maxlen=2 * self.window))
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get_session(self, session_id: str) -> ChatSession:
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(session_id)
            return self._sessions[session_id]

    def chat_turn(self, session: ChatSession, text: str) -> dict:
        """Run one exchange; returns the wire-format response dict."""
        if not text or not text.strip():
            raise ValueError("empty message")
        with session.lock:
            kg = self.kgs[session.team_id]
            session.history.append(Turn("user", text))
            turns = list(session.history)[-self.window:]
            context_ids = encode_context(turns, self.vocab,
                                         window=self.window)
            query_tokens = tokenize(normalize(text))
            emb_q = query_embedding(query_tokens, self.table)
            kg_sim, kg_mask = gate_similarity(
                emb_q, self._rows[session.team_id], self.model.k_max)
            result = self.model.greedy_decode(
                context_ids, emb_q, kg_sim, kg_mask,
                self._feed[session.team_id], max_len=self.max_decode_len)
            tokens, copies = ids_to_tokens(result.ext_ids, self.vocab, kg)
            reply, spans = render_spans(tokens, copies, kg)
            session.history.append(Turn("system", reply))
            return {
                "text": reply,
                "spans": spans,
                "gate_trace": [round(float(g), 6) for g in result.gates],
                "truncated": len(result.ext_ids) >= self.max_decode_len,
            }


def render_spans(tokens: list[str], copies: list[tuple[int, int]],
                 kg: LocalKG) -> tuple[str, list[dict]]:
    """Join tokens and attribute character ranges.

    Spans tile the text exactly: every character, including separating
    spaces, belongs to exactly one span (a space between two spans goes
    with the preceding one). Copy emissions become one ``kg`` span each
    carrying the triple position and its subject/relation/object.
    """
    text = " ".join(tokens)
    if not tokens:
        return text, []
    starts = []
    pos = 0
    for tok in tokens:
        starts.append(pos)
        pos += len(tok) + 1
    ends = [starts[i + 1] for i in range(len(tokens) - 1)] + [len(text)]

    # mark each token with its owning copy emission, if any
    owner = [-1] * len(tokens)
    for emission, (tok_start, triple_pos) in enumerate(copies):
        width = len(tokenize(normalize(kg.triples[triple_pos].object))) or 1
        for i in range(tok_start, min(tok_start + width, len(tokens))):
            owner[i] = emission

    spans = []
    i = 0
    while i < len(tokens):
        j = i
        while j + 1 < len(tokens) and owner[j + 1] == owner[i]:
            j += 1
        if owner[i] < 0:
            spans.append({"start": starts[i], "end": ends[j],
                          "source": "vocab", "triple": None,
                          "triple_sro": None})
        else:
            triple_pos = copies[owner[i]][1]
            triple = kg.triples[triple_pos]
            spans.append({"start": starts[i], "end": ends[j],
                          "source": "kg", "triple": triple_pos,
                          "triple_sro": [triple.subject, triple.relation,
                                         triple.object]})
        i = j + 1
    return text, spans


def _json_bytes(payload) -> bytes:
    return json.dumps(payload).encode("utf-8")


def make_server(engine: ChatEngine, host: str = "127.0.0.1", port: int = 0,
                ui_dir=None) -> ThreadingHTTPServer:
    """Build (not start) the HTTP server bound to ``host:port``."""
    ui_root = Path(ui_dir).resolve() if ui_dir else None

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("http: " + fmt, *args)

        def _send(self, status: int, body: bytes,
                  content_type: str = "application/json"):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods",
                             "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(body)

        def _error(self, status: int, message: str):
            self._send(status, _json_bytes({"error": message}))

        def _read_json(self):
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY_BYTES:
                self._error(413, "request body too large")
                return None
            raw = self.rfile.read(length) if length else b""
            try:
                payload = json.loads(raw.decode("utf-8") or "{}")
            except (UnicodeDecodeError, json.JSONDecodeError):
                self._error(400, "request body is not valid JSON")
                return None
            if not isinstance(payload, dict):
                self._error(400, "request body must be a JSON object")
                return None
            return payload

        def do_OPTIONS(self):
            self._send(204, b"", content_type="text/plain")

        def do_GET(self):
            path = self.path.split("?", 1)[0]
            if path == "/teams":
                self._send(200, _json_bytes({"teams": engine.teams}))
                return
            if path == "/healthz":
                self._send(200, _json_bytes({"status": "ok"}))
                return
            if ui_root is not None:
                self._serve_static(path)
                return
            self._error(404, f"no such resource: {path}")

        def _serve_static(self, path: str):
            rel = path.lstrip("/") or "index.html"
            target = (ui_root / rel).resolve()
            if not str(target).startswith(str(ui_root)) \
                    or not target.is_file():
                self._error(404, f"no such resource: {path}")
                return
            ctype = {
                ".html": "text/html; charset=utf-8",
                ".js": "text/javascript; charset=utf-8",
                ".css": "text/css; charset=utf-8",
                ".map": "application/json",
                ".svg": "image/svg+xml",
            }.get(target.suffix, "application/octet-stream")
            self._send(200, target.read_bytes(), content_type=ctype)

        def do_POST(self):
            path = self.path.split("?", 1)[0]
            parts = [p for p in path.split("/") if p]
            payload = self._read_json()
            if payload is None:
                return
            if parts == ["sessions"]:
                team = payload.get("team")
                if not isinstance(team, str) or not team:
                    self._error(400, "field 'team' is required")
                    return
                try:
                    session = engine.new_session(team)
                except KeyError:
                    self._error(404, f"unknown team: {team}")
                    return
                self._send(201, _json_bytes({
                    "session_id": session.session_id,
                    "team": session.team_id}))
                return
            if len(parts) == 3 and parts[0] == "sessions" \
                    and parts[2] == "messages":
                try:
                    session = engine.get_session(parts[1])
                except KeyError:
                    self._error(404, f"unknown session: {parts[1]}")
                    return
                text = payload.get("text")
                if not isinstance(text, str) or not text.strip():
                    self._error(400, "field 'text' is required")
                    return
                try:
                    response = engine.chat_turn(session, text)
                except Exception:
                    log.exception("chat turn failed")
                    self._error(500, "internal error during decoding")
                    return
                self._send(200, _json_bytes(response))
                return
            self._error(404, f"no such resource: {path}")

    server = ThreadingHTTPServer((host, port), Handler)
    server.daemon_threads = True
    return server


def run_server(engine: ChatEngine, host: str = "127.0.0.1",
               port: int = 8000, ui_dir=None):
    server = make_server(engine, host=host, port=port, ui_dir=ui_dir)
    actual = server.server_address[1]
    log.info("serving on http://%s:%d (teams: %d)", host, actual,
             len(engine.teams))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
