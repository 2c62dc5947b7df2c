"""File-backed persistence.

Layout under the store root, keyed by client then session:

    clients.json                          client registry (id, name, token)
    sessions_index.json                   session_id -> client_id
    clients/<client_id>/docs/<kind>.json  versioned documents
    clients/<client_id>/sessions/<session_id>/events.log
    clients/<client_id>/sessions/<session_id>/trace.log

Event logs are append-only line-delimited JSON with a gapless per-session
sequence; documents are written atomically (temp file + rename) with strictly
increasing versions. Everything is UTF-8 with UTC timestamps so logs diff and
compare byte-for-byte.
"""

from __future__ import annotations

import json
import os
import tarfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import CorruptLogError, IntegrityError, NotFoundError
from .gateway import ProviderCallRecord

EVENT_KINDS = (
    "client_msg",
    "agent_msg",
    "system_note",
    "plan_revision",
    "phase_change",
    "degraded_turn",
)

DOC_KINDS = ("profile", "record", "preferences", "plan")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class EventRecord:
    ts: str
    session_id: str
    seq: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {
            "ts": self.ts,
            "session_id": self.session_id,
            "seq": self.seq,
            "kind": self.kind,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EventRecord":
        return cls(
            ts=data["ts"],
            session_id=data["session_id"],
            seq=data["seq"],
            kind=data["kind"],
            payload=data["payload"],
        )


def serialize_events(events: list[EventRecord]) -> str:
    return "".join(canonical_json(e.to_dict()) + "\n" for e in events)


@dataclass(frozen=True)
class DocumentEnvelope:
    doc_kind: str
    client_id: str
    version: int
    body: dict
    written_at: str


class EventLog:
    """One append-only event log. Single writer, durable before ack."""

    def __init__(self, path: Path, session_id: str, durable: bool = True):
        self.path = path
        self.session_id = session_id
        self.durable = durable
        self._last_seq = 0
        if path.exists():
            events = self.read_all()
            if events:
                self._last_seq = events[-1].seq

    @property
    def last_seq(self) -> int:
        return self._last_seq

    def append(self, kind: str, payload: dict, ts: str, seq: int | None = None) -> EventRecord:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        expected = self._last_seq + 1
        if seq is None:
            seq = expected
        elif seq != expected:
            raise IntegrityError(
                f"{self.path}: expected seq {expected}, got {seq}"
            )
        record = EventRecord(ts=ts, session_id=self.session_id, seq=seq, kind=kind, payload=payload)
        line = canonical_json(record.to_dict()) + "\n"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(line)
            handle.flush()
            if self.durable:
                os.fsync(handle.fileno())
        self._last_seq = seq
        return record

    def read_all(self) -> list[EventRecord]:
        if not self.path.exists():
            raise NotFoundError(f"no event log at {self.path}")
        events: list[EventRecord] = []
        last_seq = 0
        with open(self.path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                stripped = line.rstrip("\n")
                if line and not line.endswith("\n"):
                    raise CorruptLogError(self.path, line_no, "truncated final line")
                try:
                    record = EventRecord.from_dict(json.loads(stripped))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise CorruptLogError(self.path, line_no, f"undecodable record: {exc}") from exc
                if record.seq != last_seq + 1:
                    raise CorruptLogError(
                        self.path, line_no, f"seq gap: expected {last_seq + 1}, got {record.seq}"
                    )
                last_seq = record.seq
                events.append(record)
        return events


class Store:
    """Root handle for all persisted state."""

    def __init__(self, root: str | Path, durable: bool = True):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.durable = durable
        self._logs: dict[tuple[str, str], EventLog] = {}

    # -- registry ------------------------------------------------------------

    def _registry_path(self) -> Path:
        return self.root / "clients.json"

    def _load_registry(self) -> dict:
        path = self._registry_path()
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def _write_json_atomic(self, path: Path, data) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(canonical_json(data) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    def create_client(self, display_name: str, client_id: str, token: str, created_at: str) -> dict:
        registry = self._load_registry()
        if client_id in registry:
            raise IntegrityError(f"client {client_id} already exists")
        entry = {"display_name": display_name, "token": token, "created_at": created_at}
        registry[client_id] = entry
        self._write_json_atomic(self._registry_path(), registry)
        return {"client_id": client_id, **entry}

    def get_client(self, client_id: str) -> dict:
        registry = self._load_registry()
        if client_id not in registry:
            raise NotFoundError(f"no client {client_id}")
        return {"client_id": client_id, **registry[client_id]}

    def client_by_token(self, token: str) -> dict | None:
        for client_id, entry in self._load_registry().items():
            if entry["token"] == token:
                return {"client_id": client_id, **entry}
        return None

    def list_clients(self) -> list[str]:
        return sorted(self._load_registry())

    # -- sessions ------------------------------------------------------------

    def _sessions_index_path(self) -> Path:
        return self.root / "sessions_index.json"

    def _client_dir(self, client_id: str) -> Path:
        return self.root / "clients" / client_id

    def session_dir(self, client_id: str, session_id: str) -> Path:
        return self._client_dir(client_id) / "sessions" / session_id

    def register_session(self, client_id: str, session_id: str) -> None:
        index = {}
        if self._sessions_index_path().exists():
            index = json.loads(self._sessions_index_path().read_text(encoding="utf-8"))
        index[session_id] = client_id
        self._write_json_atomic(self._sessions_index_path(), index)

    def client_for_session(self, session_id: str) -> str:
        path = self._sessions_index_path()
        if path.exists():
            index = json.loads(path.read_text(encoding="utf-8"))
            if session_id in index:
                return index[session_id]
        raise NotFoundError(f"no session {session_id}")

    def list_sessions(self, client_id: str) -> list[str]:
        sessions = self._client_dir(client_id) / "sessions"
        if not sessions.exists():
            return []
        return sorted(p.name for p in sessions.iterdir() if p.is_dir())

    def event_log(self, client_id: str, session_id: str) -> EventLog:
        key = (client_id, session_id)
        if key not in self._logs:
            path = self.session_dir(client_id, session_id) / "events.log"
            self._logs[key] = EventLog(path, session_id, durable=self.durable)
        return self._logs[key]

    def trace_sink(self, client_id: str, session_id: str):
        """Returns an appender writing one ProviderCallRecord per line."""
        path = self.session_dir(client_id, session_id) / "trace.log"
        path.parent.mkdir(parents=True, exist_ok=True)

        def sink(record: ProviderCallRecord) -> None:
            with open(path, "a", encoding="utf-8") as handle:
                handle.write(canonical_json(record.to_dict()) + "\n")
                handle.flush()

        return sink

    def read_trace(self, client_id: str, session_id: str) -> list[dict]:
        path = self.session_dir(client_id, session_id) / "trace.log"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]

    # -- documents -----------------------------------------------------------

    def _doc_path(self, client_id: str, doc_kind: str) -> Path:
        return self._client_dir(client_id) / "docs" / f"{doc_kind}.json"

    def load_document(self, client_id: str, doc_kind: str) -> DocumentEnvelope | None:
        if doc_kind not in DOC_KINDS:
            raise ValueError(f"unknown doc kind {doc_kind!r}")
        path = self._doc_path(client_id, doc_kind)
        if not path.exists():
            return None
        data = json.loads(path.read_text(encoding="utf-8"))
        return DocumentEnvelope(
            doc_kind=doc_kind,
            client_id=client_id,
            version=data["version"],
            body=data["body"],
            written_at=data["written_at"],
        )

    def save_document(self, client_id: str, doc_kind: str, version: int, body: dict, written_at: str) -> None:
        existing = self.load_document(client_id, doc_kind)
        if existing is not None and version <= existing.version:
            raise IntegrityError(
                f"{doc_kind} for {client_id}: version {version} not greater than {existing.version}"
            )
        self._write_json_atomic(
            self._doc_path(client_id, doc_kind),
            {"version": version, "body": body, "written_at": written_at},
        )

    # -- packs and export ----------------------------------------------------

    def pack_path(self) -> Path:
        return self.root / "knowledge" / "active.pack"

    def export_client(self, client_id: str, out_path: str | Path) -> Path:
        client_dir = self._client_dir(client_id)
        if not client_dir.exists():
            raise NotFoundError(f"no client {client_id}")
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with tarfile.open(out_path, "w:gz") as archive:
            archive.add(client_dir, arcname=client_id)
        return out_path

    def iter_event_logs(self) -> Iterator[tuple[str, str, Path]]:
        for client_id in self.list_clients():
            for session_id in self.list_sessions(client_id):
                path = self.session_dir(client_id, session_id) / "events.log"
                if path.exists():
                    yield client_id, session_id, path
