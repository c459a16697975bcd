"""Append-only administrative log, snapshots and the transactional outbox.

``state.log`` holds one JSON object per line::

    {"seq": 7, "ts": 1712.5, "op": "dependency.add", "payload": {...},
     "outbox": {"event_kind": "...", "body": {...}} | null, "crc32": 123}

The CRC covers the canonical JSON of every other field. An outbox event lives
inside the line of the change that produced it, so the two are written by a
single append and can never exist without each other. Publication state is a
separate ``outbox.acks`` file listing acknowledged sequence numbers.
"""

from __future__ import annotations

import errno
import json
import logging
import os
import threading
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

from . import errors

logger = logging.getLogger(__name__)

LOG_NAME = "state.log"
ACKS_NAME = "outbox.acks"


@dataclass(frozen=True)
class OutboxRecord:
    sequence: int
    event_kind: str
    body: Any
    published: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "sequence": self.sequence,
            "event_kind": self.event_kind,
            "body": self.body,
            "published": self.published,
        }


@dataclass(frozen=True)
class LogRecord:
    sequence: int
    operation: str
    payload: Any
    timestamp: float
    outbox: Optional[OutboxRecord] = None


def _canonical(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def encode_record(seq: int, op: str, payload: Any, ts: float, outbox=None) -> bytes:
    body = {"seq": seq, "ts": ts, "op": op, "payload": payload, "outbox": outbox}
    crc = zlib.crc32(_canonical(body))
    body["crc32"] = crc
    return _canonical(body) + b"\n"


def decode_record(line: bytes) -> LogRecord:
    """Parse one log line; ``ValueError`` on malformed JSON or CRC mismatch."""
    body = json.loads(line)
    if not isinstance(body, dict):
        raise ValueError("record is not an object")
    crc = body.pop("crc32")
    if zlib.crc32(_canonical(body)) != crc:
        raise ValueError("checksum mismatch")
    outbox = body.get("outbox")
    return LogRecord(
        sequence=body["seq"],
        operation=body["op"],
        payload=body["payload"],
        timestamp=body["ts"],
        outbox=OutboxRecord(body["seq"], outbox["event_kind"], outbox["body"]) if outbox else None,
    )


# --------------------------------------------------------------------------
# Storage backends
# --------------------------------------------------------------------------


class MemoryStorage:
    """Storage kept in process memory; used by tests and embedded engines."""

    def __init__(self, max_bytes: Optional[int] = None):
        self.log = bytearray()
        self.acks = bytearray()
        self.snapshots: dict[int, bytes] = {}
        self.max_bytes = max_bytes

    def read_log(self) -> bytes:
        return bytes(self.log)

    def append_log(self, data: bytes) -> None:
        if self.max_bytes is not None and len(self.log) + len(data) > self.max_bytes:
            raise errors.StorageFull("log storage quota exhausted")
        self.log += data

    def truncate_log(self, size: int) -> None:
        del self.log[size:]

    def read_acks(self) -> bytes:
        return bytes(self.acks)

    def append_ack(self, data: bytes) -> None:
        self.acks += data

    def write_snapshot(self, seq: int, data: bytes) -> str:
        self.snapshots[seq] = data
        return f"snapshot-{seq}.json"

    def snapshot_sequences(self) -> list[int]:
        return sorted(self.snapshots)

    def read_snapshot(self, seq: int) -> bytes:
        return self.snapshots[seq]


class FileStorage:
    """Files under a data directory: ``state.log``, ``outbox.acks``, ``snapshot-<seq>.json``."""

    def __init__(self, directory, fsync: bool = False, max_bytes: Optional[int] = None):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self.max_bytes = max_bytes
        self.log_path = self.directory / LOG_NAME
        self.acks_path = self.directory / ACKS_NAME
        self.log_path.touch(exist_ok=True)
        self.acks_path.touch(exist_ok=True)

    def read_log(self) -> bytes:
        return self.log_path.read_bytes()

    def _append(self, path: Path, data: bytes) -> None:
        try:
            with open(path, "ab") as fh:
                fh.write(data)
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
        except OSError as exc:
            if exc.errno in (errno.ENOSPC, errno.EDQUOT):
                raise errors.StorageFull(str(exc)) from exc
            raise

    def append_log(self, data: bytes) -> None:
        size = self.log_path.stat().st_size
        if self.max_bytes is not None and size + len(data) > self.max_bytes:
            raise errors.StorageFull("log storage quota exhausted")
        try:
            self._append(self.log_path, data)
        except errors.StorageFull:
            # drop any partial line so the log stays appendable
            self.truncate_log(size)
            raise

    def truncate_log(self, size: int) -> None:
        with open(self.log_path, "r+b") as fh:
            fh.truncate(size)

    def read_acks(self) -> bytes:
        return self.acks_path.read_bytes()

    def append_ack(self, data: bytes) -> None:
        self._append(self.acks_path, data)

    def write_snapshot(self, seq: int, data: bytes) -> str:
        path = self.directory / f"snapshot-{seq}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        return str(path)

    def snapshot_sequences(self) -> list[int]:
        seqs = []
        for path in self.directory.glob("snapshot-*.json"):
            try:
                seqs.append(int(path.stem.split("-", 1)[1]))
            except ValueError:
                continue
        return sorted(seqs)

    def read_snapshot(self, seq: int) -> bytes:
        return (self.directory / f"snapshot-{seq}.json").read_bytes()


# --------------------------------------------------------------------------
# Journal
# --------------------------------------------------------------------------


class Journal:
    """Validated view over a storage backend.

    Opening reads and verifies the whole log. A damaged final line (torn
    write) raises ``CorruptLog`` unless ``repair=True``, in which case it is
    truncated away; damage anywhere else always raises.
    """

    def __init__(self, storage=None, repair: bool = False, clock: Callable[[], float] = time.time):
        self.storage = storage if storage is not None else MemoryStorage()
        self.clock = clock
        self._lock = threading.Lock()
        self._records: list[LogRecord] = []
        self._acked: set[int] = set()
        self._broken = False
        self._load(repair)

    @property
    def last_sequence(self) -> int:
        return self._records[-1].sequence if self._records else 0

    def _load(self, repair: bool) -> None:
        data = self.storage.read_log()
        offset = 0
        records = []
        while offset < len(data):
            end = data.find(b"\n", offset)
            line = data[offset:] if end < 0 else data[offset:end]
            last_line = end < 0 or end + 1 == len(data)
            try:
                if end < 0:
                    raise ValueError("unterminated record")
                record = decode_record(line)
                expected = (records[-1].sequence if records else 0) + 1
                if record.sequence != expected:
                    raise ValueError(f"sequence gap: expected {expected}, got {record.sequence}")
            except (ValueError, KeyError, TypeError) as exc:
                last_valid = records[-1].sequence if records else 0
                if repair and last_line:
                    logger.warning("truncating corrupt log tail after seq %d: %s", last_valid, exc)
                    self.storage.truncate_log(offset)
                    break
                raise errors.CorruptLog(
                    f"corrupt log record after sequence {last_valid}: {exc}",
                    last_valid_sequence=last_valid, byte_offset=offset,
                ) from None
            records.append(record)
            offset = end + 1
        self._records = records
        known = {r.sequence for r in records}
        acks = self.storage.read_acks()
        if acks and not acks.endswith(b"\n"):
            # torn ack line: close it with a marker so it never parses as a
            # sequence, even once later acks are appended after it
            self.storage.append_ack(b"#torn\n")
            acks += b"#torn\n"
        for raw in acks.split(b"\n")[:-1]:
            try:
                seq = int(raw)
            except ValueError:
                continue
            if seq in known:
                self._acked.add(seq)

    def append(self, op: str, payload: Any, outbox: Optional[tuple[str, Any]] = None) -> int:
        """Write one record (and its outbox event, if any) as a single unit."""
        with self._lock:
            seq = self.last_sequence + 1
            ts = self.clock()
            event = {"event_kind": outbox[0], "body": outbox[1]} if outbox else None
            line = encode_record(seq, op, payload, ts, event)
            if self._broken:
                raise errors.CorruptLog(
                    "an earlier append failed part-way; reopen the journal to recover",
                    last_valid_sequence=self.last_sequence,
                )
            try:
                self.storage.append_log(line)
            except errors.StorageFull:
                raise
            except BaseException:
                # bytes may have reached storage; only a reopen can tell
                self._broken = True
                raise
            # keep the in-memory copy identical to what a reload would produce
            stored = json.loads(line)
            self._records.append(
                LogRecord(seq, op, stored["payload"], ts,
                          OutboxRecord(seq, outbox[0], stored["outbox"]["body"]) if outbox else None)
            )
            return seq

    def records(self, after: int = 0) -> list[LogRecord]:
        return [r for r in self._records if r.sequence > after]

    def outbox(self) -> list[OutboxRecord]:
        return [
            OutboxRecord(r.sequence, r.outbox.event_kind, r.outbox.body, r.sequence in self._acked)
            for r in self._records
            if r.outbox is not None
        ]

    def pending_outbox(self, batch: Optional[int] = None) -> list[OutboxRecord]:
        pending = [rec for rec in self.outbox() if not rec.published]
        return pending if batch is None else pending[:batch]

    def acknowledge(self, seq: int) -> None:
        with self._lock:
            if seq in self._acked:
                return
            self.storage.append_ack(f"{seq}\n".encode())
            self._acked.add(seq)

    def drain_outbox(self, batch: int = 100, sink: Optional[Callable[[OutboxRecord], Any]] = None):
        """Deliver up to ``batch`` unpublished events in sequence order.

        Each event is acknowledged only after ``sink`` returns. If the sink
        raises, already-delivered events stay acknowledged, the rest remain
        pending for the next drain, and ``SinkUnavailable`` is raised. With no
        sink the caller is the sink: returned events count as delivered.
        """
        delivered = []
        for rec in self.pending_outbox(batch):
            if sink is not None:
                try:
                    sink(rec)
                except Exception as exc:
                    raise errors.SinkUnavailable(
                        f"sink failed at sequence {rec.sequence}: {exc}",
                        delivered=len(delivered), failed_sequence=rec.sequence,
                    ) from exc
            self.acknowledge(rec.sequence)
            delivered.append(OutboxRecord(rec.sequence, rec.event_kind, rec.body, True))
        return delivered

    # -- snapshots ---------------------------------------------------------

    def write_snapshot(self, state: dict[str, Any], sequence: Optional[int] = None) -> tuple[int, str]:
        seq = self.last_sequence if sequence is None else sequence
        data = json.dumps({"sequence": seq, "state": state}, sort_keys=True).encode()
        return seq, self.storage.write_snapshot(seq, data)

    def latest_snapshot(self) -> Optional[tuple[int, dict[str, Any]]]:
        seqs = self.storage.snapshot_sequences()
        if not seqs:
            return None
        return self.read_snapshot(seqs[-1])

    def read_snapshot(self, seq: int) -> tuple[int, dict[str, Any]]:
        doc = json.loads(self.storage.read_snapshot(seq))
        if doc["sequence"] > self.last_sequence:
            raise errors.SnapshotLogMismatch(
                f"snapshot covers sequence {doc['sequence']} but the log ends at {self.last_sequence}",
                snapshot_sequence=doc["sequence"], log_sequence=self.last_sequence,
            )
        return doc["sequence"], doc["state"]


class MessageRelay:
    """Polls the outbox and forwards events to a sink (at-least-once)."""

    def __init__(self, journal: Journal, sink: Callable[[OutboxRecord], Any],
                 interval: float = 0.5, batch: int = 100):
        self.journal = journal
        self.sink = sink
        self.interval = interval
        self.batch = batch
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def run_once(self) -> int:
        try:
            return len(self.journal.drain_outbox(self.batch, self.sink))
        except errors.SinkUnavailable as exc:
            logger.warning("relay: %s", exc.message)
            return exc.detail.get("delivered", 0)

    def start(self) -> None:
        def loop():
            while not self._stop.is_set():
                self.run_once()
                self._stop.wait(self.interval)

        self._thread = threading.Thread(target=loop, name="outbox-relay", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()


def open_journal(directory=None, *, fsync: bool = False, repair: bool = False) -> Journal:
    storage = MemoryStorage() if directory is None else FileStorage(directory, fsync=fsync)
    return Journal(storage, repair=repair)

