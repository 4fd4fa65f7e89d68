"""Document store behind the portal service.

A small key-value interface over named collections (users, sessions,
reg_tokens). Guarantees the service actually needs: read-your-writes and
atomic per-document updates; `transaction()` serializes multi-document
operations such as the Authmon send-and-clear. The memory store is the
default; the JSON file store adds embedded persistence for serve mode.
"""

from __future__ import annotations

import copy
import json
import os
import threading
from typing import Any, Callable, Iterator

USERS = "users"
SESSIONS = "sessions"
REG_TOKENS = "reg_tokens"


class MemoryStore:
    def __init__(self):
        self._data: dict[str, dict[str, dict]] = {}
        self._lock = threading.RLock()

    def get(self, collection: str, key: str) -> dict[str, Any] | None:
        with self._lock:
            doc = self._data.get(collection, {}).get(key)
            return copy.deepcopy(doc) if doc is not None else None

    def put(self, collection: str, key: str, doc: dict[str, Any]) -> None:
        with self._lock:
            self._data.setdefault(collection, {})[key] = copy.deepcopy(doc)
            self._persist()

    def delete(self, collection: str, key: str) -> None:
        with self._lock:
            self._data.get(collection, {}).pop(key, None)
            self._persist()

    def items(self, collection: str) -> list[tuple[str, dict[str, Any]]]:
        with self._lock:
            return [
                (key, copy.deepcopy(doc))
                for key, doc in self._data.get(collection, {}).items()
            ]

    def update(
        self,
        collection: str,
        key: str,
        fn: Callable[[dict[str, Any] | None], dict[str, Any] | None],
    ) -> dict[str, Any] | None:
        """Atomically replace one document: fn(old) -> new (None deletes)."""
        with self._lock:
            old = self._data.get(collection, {}).get(key)
            new = fn(copy.deepcopy(old) if old is not None else None)
            if new is None:
                self._data.get(collection, {}).pop(key, None)
            else:
                self._data.setdefault(collection, {})[key] = copy.deepcopy(new)
            self._persist()
            return copy.deepcopy(new) if new is not None else None

    def transaction(self) -> "_Transaction":
        return _Transaction(self._lock)

    def _persist(self) -> None:
        pass


class _Transaction:
    def __init__(self, lock: threading.RLock):
        self._lock = lock

    def __enter__(self):
        self._lock.acquire()
        return self

    def __exit__(self, *exc) -> None:
        self._lock.release()


class JsonFileStore(MemoryStore):
    """Memory store persisted to one JSON file (atomic tmp + rename)."""

    def __init__(self, path: str):
        super().__init__()
        self._path = path
        self._loading = True
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                self._data = json.load(fh)
        self._loading = False

    def _persist(self) -> None:
        if self._loading:
            return
        tmp = self._path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self._data, fh, indent=1, sort_keys=True)
        os.replace(tmp, self._path)


def iter_docs(store: MemoryStore, collection: str) -> Iterator[dict[str, Any]]:
    for _, doc in store.items(collection):
        yield doc
