"""Two-level read cache for authorization lookups.

Each engine owns a bounded LRU local level; engines may share a global level.
A hit carries the effective assignments (with priorities) and the object's
attributes, so the engine only has to evaluate conditions. Request attributes
are never cached.
"""

from __future__ import annotations

import enum
import hashlib
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Optional, Protocol


class InvalidationMode(str, enum.Enum):
    TTL = "ttl"
    ON_WRITE = "on_write"


@dataclass(frozen=True)
class CacheKey:
    user: str
    parents_fingerprint: str
    object: str
    operation: str

    @classmethod
    def for_request(cls, user: str, parents, obj: str, operation: str) -> "CacheKey":
        digest = hashlib.sha1("\x1f".join(sorted(parents)).encode()).hexdigest()
        return cls(user, digest, obj, operation)


@dataclass(frozen=True)
class CacheEntry:
    effective: tuple
    object_attributes: Mapping[str, Any]
    inserted_at: float


class GlobalCache(Protocol):
    def get(self, key: CacheKey) -> Optional[CacheEntry]: ...
    def set(self, key: CacheKey, entry: CacheEntry) -> None: ...
    def clear(self) -> None: ...


class SharedCache:
    """In-process stand-in for the shared global level."""

    def __init__(self):
        self._data: dict[CacheKey, CacheEntry] = {}
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            return self._data.get(key)

    def set(self, key, entry):
        with self._lock:
            self._data[key] = entry

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


class TwoLevelCache:
    def __init__(
        self,
        ttl: float = 30.0,
        capacity: int = 4096,
        shared: Optional[GlobalCache] = None,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.ttl = ttl
        self.capacity = capacity
        self.shared = shared
        self.clock = clock
        self._local: OrderedDict[CacheKey, CacheEntry] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _fresh(self, entry: Optional[CacheEntry]) -> bool:
        return entry is not None and self.clock() - entry.inserted_at < self.ttl

    def lookup(self, key: CacheKey) -> Optional[CacheEntry]:
        with self._lock:
            entry = self._local.get(key)
            if self._fresh(entry):
                self._local.move_to_end(key)
                self.hits += 1
                return entry
            if entry is not None:
                del self._local[key]
        entry = None
        if self.shared is not None:
            try:
                entry = self.shared.get(key)
            except Exception:
                entry = None
        with self._lock:
            if self._fresh(entry):
                self._put_local(key, entry)
                self.hits += 1
                return entry
            self.misses += 1
            return None

    def _put_local(self, key, entry):
        self._local[key] = entry
        self._local.move_to_end(key)
        while len(self._local) > self.capacity:
            self._local.popitem(last=False)

    def store(self, key: CacheKey, entry: CacheEntry) -> None:
        with self._lock:
            self._put_local(key, entry)
        if self.shared is not None:
            try:
                self.shared.set(key, entry)
            except Exception:
                pass

    def invalidate_all(self) -> None:
        with self._lock:
            self._local.clear()
        if self.shared is not None:
            try:
                self.shared.clear()
            except Exception:
                pass

    def __len__(self) -> int:
        return len(self._local)
