"""Request/response wire interface and the asynchronous command consumer.

Wire request:  ``{"op": str, "payload": {...}, "request_id": str}``
Wire response: ``{"request_id": ..., "ok": true, "result": {...}}`` or
``{"request_id": ..., "ok": false, "error": {"code", "message", "detail"}}``.

The synchronous carrier is HTTP (``POST /`` with a JSON body). The
asynchronous carrier is any :class:`MessageStream`; responses to async
requests are written to the outbox in the same journal record as the state
change they describe.
"""

from __future__ import annotations

import json
import logging
import threading
from collections import OrderedDict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Optional, Protocol

from . import errors
from .engine import OPERATIONS, WRITE_OPS, Engine

logger = logging.getLogger(__name__)

ASYNC_EVENT = "response"


def ok_response(request_id, result) -> dict[str, Any]:
    return {"request_id": request_id, "ok": True, "result": result}


def error_response(request_id, exc: errors.RhabacError) -> dict[str, Any]:
    return {"request_id": request_id, "ok": False, "error": exc.to_dict()}


def parse_request(body: Any) -> tuple[Optional[str], str, dict[str, Any]]:
    """Validate a wire request; returns ``(request_id, op, payload)``."""
    if not isinstance(body, dict):
        raise errors.MalformedPayload("request must be a JSON object")
    request_id = body.get("request_id")
    if not isinstance(request_id, str) or not request_id:
        raise errors.MalformedPayload("request_id must be a non-empty string")
    op = body.get("op")
    if not isinstance(op, str):
        raise errors.MalformedPayload("op must be a string")
    payload = body.get("payload", {})
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise errors.MalformedPayload("payload must be an object")
    if op not in OPERATIONS:
        raise errors.UnknownOperation(f"unknown operation {op!r}", operation=op)
    return request_id, op, payload


def _loose_request_id(body: Any) -> Optional[str]:
    if isinstance(body, dict) and isinstance(body.get("request_id"), str):
        return body["request_id"]
    return None


class Service:
    def __init__(self, engine: Engine, dedup_window: int = 1024):
        self.engine = engine
        self.dedup_window = dedup_window
        self._recent: OrderedDict[str, dict[str, Any]] = OrderedDict()
        self._async_lock = threading.Lock()
        if engine.journal is not None:
            for record in engine.journal.outbox():
                if record.event_kind == ASYNC_EVENT and isinstance(record.body, dict):
                    self._remember(record.body.get("request_id"), record.body)

    # -- sync ----------------------------------------------------------------

    def handle(self, body: Any) -> dict[str, Any]:
        request_id = _loose_request_id(body)
        try:
            request_id, op, payload = parse_request(body)
            return ok_response(request_id, self.engine.execute(op, payload))
        except errors.RhabacError as exc:
            return error_response(request_id, exc)
        except (TypeError, ValueError, KeyError, AttributeError) as exc:
            return error_response(request_id, errors.MalformedPayload(str(exc)))

    def handle_bytes(self, raw: bytes) -> bytes:
        try:
            body = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            response = error_response(None, errors.MalformedPayload(f"invalid JSON: {exc}"))
        else:
            response = self.handle(body)
        return json.dumps(response, sort_keys=True).encode()

    # -- async ---------------------------------------------------------------

    def _remember(self, request_id, response) -> None:
        if not request_id:
            return
        self._recent[request_id] = response
        self._recent.move_to_end(request_id)
        while len(self._recent) > self.dedup_window:
            self._recent.popitem(last=False)

    def process_message(self, raw: bytes | str | dict) -> dict[str, Any]:
        """Handle one async message; the response goes to the outbox."""
        if self.engine.journal is None:
            raise errors.InvalidConfig("asynchronous consumption needs a journal-backed engine")
        with self._async_lock:
            body = raw
            if isinstance(raw, (bytes, str)):
                try:
                    body = json.loads(raw)
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    response = error_response(None, errors.MalformedPayload(f"invalid JSON: {exc}"))
                    self.engine.record_response(response)
                    return response
            request_id = _loose_request_id(body)
            if request_id is not None and request_id in self._recent:
                response = self._recent[request_id]
                self.engine.record_response(response)
                return response
            try:
                request_id, op, payload = parse_request(body)
                if op in WRITE_OPS:
                    def emit(result, _logged, rid=request_id):
                        return ASYNC_EVENT, ok_response(rid, result)

                    response = ok_response(request_id, self.engine.execute(op, payload, emit=emit))
                else:
                    response = ok_response(request_id, self.engine.execute(op, payload))
                    self.engine.record_response(response)
            except errors.RhabacError as exc:
                response = error_response(request_id, exc)
                self.engine.record_response(response)
            except (TypeError, ValueError, KeyError, AttributeError) as exc:
                response = error_response(request_id, errors.MalformedPayload(str(exc)))
                self.engine.record_response(response)
            self._remember(request_id, response)
            return response

    def consume_async(self, stream: "MessageStream", max_messages: Optional[int] = None) -> int:
        """Drain available messages from ``stream``; returns how many were handled."""
        handled = 0
        while max_messages is None or handled < max_messages:
            batch = stream.poll(1)
            if not batch:
                break
            offset, message = batch[0]
            self.process_message(message)
            stream.commit(offset + 1)
            handled += 1
        return handled


# --------------------------------------------------------------------------
# message streams
# --------------------------------------------------------------------------


class MessageStream(Protocol):
    def poll(self, max_messages: int) -> list[tuple[int, bytes]]: ...
    def commit(self, offset: int) -> None: ...


class MemoryStream:
    def __init__(self, messages=()):
        self.messages: list[bytes] = []
        self.offset = 0
        for message in messages:
            self.publish(message)

    def publish(self, message) -> None:
        if isinstance(message, dict):
            message = json.dumps(message)
        if isinstance(message, str):
            message = message.encode()
        self.messages.append(message)

    def poll(self, max_messages):
        return [(i, self.messages[i]) for i in range(self.offset, min(len(self.messages), self.offset + max_messages))]

    def commit(self, offset):
        self.offset = max(self.offset, offset)


class FileStream:
    """Directory-backed stream: ``messages.jsonl`` plus a committed ``offset`` file."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.messages_path = self.directory / "messages.jsonl"
        self.offset_path = self.directory / "offset"
        self.messages_path.touch(exist_ok=True)

    def publish(self, message) -> None:
        if isinstance(message, dict):
            message = json.dumps(message, sort_keys=True)
        if isinstance(message, bytes):
            message = message.decode()
        if "\n" in message:
            raise ValueError("stream messages must be single-line")
        with open(self.messages_path, "a") as fh:
            fh.write(message + "\n")

    @property
    def offset(self) -> int:
        try:
            return int(self.offset_path.read_text().strip() or 0)
        except FileNotFoundError:
            return 0

    def poll(self, max_messages):
        lines = self.messages_path.read_bytes().split(b"\n")
        complete = lines[:-1]  # trailing piece is empty or a partial write
        start = self.offset
        return [(i, complete[i]) for i in range(start, min(len(complete), start + max_messages))]

    def commit(self, offset):
        tmp = self.offset_path.with_suffix(".tmp")
        tmp.write_text(str(offset))
        tmp.replace(self.offset_path)


# --------------------------------------------------------------------------
# HTTP carrier
# --------------------------------------------------------------------------


def make_http_server(service: Service, host: str = "127.0.0.1", port: int = 8470) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def _send(self, status: int, body: bytes) -> None:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):  # noqa: N802
            if self.path == "/healthz":
                self._send(200, b'{"ok": true}')
            else:
                self._send(404, b'{"ok": false}')

        def do_POST(self):  # noqa: N802
            length = int(self.headers.get("Content-Length") or 0)
            self._send(200, service.handle_bytes(self.rfile.read(length)))

        def log_message(self, fmt, *args):
            logger.debug("http: " + fmt, *args)

    return ThreadingHTTPServer((host, port), Handler)
