"""Rank and quantile summaries over non-negative watch times.

Two interchangeable implementations sit behind one interface:

* ExactSummary keeps every inserted value. Queries answer from the
  sorted multiset, so percentile_rank and query_threshold are exact
  under the nearest-rank convention.

* SketchSummary is a mergeable compactor sketch. Values live in level
  buffers where an item at level h stands for 2**h original values.
  When a level exceeds its capacity the buffer is sorted and every
  second element is promoted one level up, alternating the starting
  offset between compactions so successive rank errors cancel instead
  of accumulating. The compaction is deterministic: no randomness is
  involved, so identical insert and merge sequences always produce
  identical state. With per-level capacity k and L live levels the
  worst-case rank error is bounded by roughly L/k of the stream, far
  inside the configured eps; capacity is sized from eps with a wide
  safety factor so that labels derived from sketch ranks rarely move
  across group boundaries.

Thresholds follow the nearest-rank convention throughout: the p-th
percentile is the smallest value w with count(x <= w) >= p/100 * n.
Counts are tracked exactly in both modes.

Summaries serialize to a small versioned binary format (magic WLQS) so
grouped summaries can be persisted and reused across runs.
"""

from __future__ import annotations

import math
import struct
from typing import Iterable, Optional

import numpy as np

from .errors import (
    ConfigInvalid,
    EmptySummary,
    ModeMismatch,
    NegativeValue,
    PercentileOutOfRange,
    SerializationError,
)

SERIAL_MAGIC = b"WLQS"
SERIAL_VERSION = 1
_MODE_EXACT = 0
_MODE_SKETCH = 1

DEFAULT_EPS = 0.005

# Per-level capacity is ceil(CAPACITY_FACTOR / eps). The factor is far
# above what the eps rank bound alone would need; the slack keeps the
# realized error small enough that rank labels computed from a sketch
# agree with exact labels on almost every record even for fine
# partitions (hundreds of groups).
CAPACITY_FACTOR = 256.0
_MIN_CAPACITY = 16


def _validate_values(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
        raise NegativeValue("summary values must be finite and >= 0")
    return arr


def _nearest_rank(n: int, p: float) -> int:
    """1-based nearest rank for percentile p in (0, 100]."""
    if not 0 < p <= 100:
        raise PercentileOutOfRange(f"percentile {p} outside (0, 100]")
    return max(1, math.ceil(n * p / 100.0))


class QuantileSummary:
    """Interface shared by both summary modes."""

    mode: str

    @property
    def count(self) -> int:
        raise NotImplementedError

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    def insert(self, value: float) -> None:
        raise NotImplementedError

    def extend(self, values: Iterable[float]) -> None:
        raise NotImplementedError

    def merge(self, other: "QuantileSummary") -> "QuantileSummary":
        raise NotImplementedError

    def threshold(self, p: float) -> float:
        raise NotImplementedError

    def rank(self, value: float) -> float:
        raise NotImplementedError

    def rank_many(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_bytes(self) -> bytes:
        raise NotImplementedError


class ExactSummary(QuantileSummary):
    """Sorted-multiset summary with exact answers."""

    mode = "exact"
    __slots__ = ("_chunks", "_pending", "_n", "_sorted")

    def __init__(self) -> None:
        self._chunks: list[np.ndarray] = []
        self._pending: list[float] = []
        self._n = 0
        self._sorted: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        return self._n

    def insert(self, value: float) -> None:
        v = float(value)
        if not (math.isfinite(v) and v >= 0):
            raise NegativeValue("summary values must be finite and >= 0")
        self._pending.append(v)
        self._n += 1
        self._sorted = None

    def extend(self, values: Iterable[float]) -> None:
        arr = _validate_values(np.asarray(list(values) if not isinstance(values, np.ndarray) else values))
        if arr.size == 0:
            return
        self._chunks.append(arr)
        self._n += arr.size
        self._sorted = None

    def merge(self, other: QuantileSummary) -> "ExactSummary":
        if not isinstance(other, ExactSummary):
            raise ModeMismatch("cannot merge exact with sketch summaries")
        out = ExactSummary()
        out._chunks = [self.values(), other.values()]
        out._n = self._n + other._n
        return out

    def values(self) -> np.ndarray:
        """Sorted array of everything inserted so far (cached)."""
        if self._sorted is None:
            parts = list(self._chunks)
            if self._pending:
                parts.append(np.asarray(self._pending, dtype=np.float64))
            if parts:
                merged = parts[0] if len(parts) == 1 else np.concatenate(parts)
            else:
                merged = np.empty(0, dtype=np.float64)
            self._sorted = np.sort(merged)
            self._chunks = [self._sorted]
            self._pending = []
        return self._sorted

    def threshold(self, p: float) -> float:
        k = _nearest_rank(self._n, p)
        if self._n == 0:
            raise EmptySummary("threshold query on an empty summary")
        return float(self.values()[k - 1])

    def rank(self, value: float) -> float:
        return float(self.rank_many(np.asarray([value]))[0])

    def rank_many(self, values: np.ndarray) -> np.ndarray:
        if self._n == 0:
            raise EmptySummary("rank query on an empty summary")
        le = np.searchsorted(self.values(), np.asarray(values, dtype=np.float64), side="right")
        return le / self._n

    def count_lt_many(self, values: np.ndarray) -> np.ndarray:
        if self._n == 0:
            raise EmptySummary("rank query on an empty summary")
        return np.searchsorted(self.values(), np.asarray(values, dtype=np.float64), side="left")

    def count_le_many(self, values: np.ndarray) -> np.ndarray:
        if self._n == 0:
            raise EmptySummary("rank query on an empty summary")
        return np.searchsorted(self.values(), np.asarray(values, dtype=np.float64), side="right")

    def to_bytes(self) -> bytes:
        vals = self.values()
        head = struct.pack(
            "<4sHBQ", SERIAL_MAGIC, SERIAL_VERSION, _MODE_EXACT, self._n
        )
        return head + struct.pack("<Q", vals.size) + vals.tobytes()


class SketchSummary(QuantileSummary):
    """Deterministic mergeable compactor sketch."""

    mode = "sketch"
    __slots__ = ("eps", "capacity", "_levels", "_parity", "_pending", "_n", "_mat")

    def __init__(self, eps: float = DEFAULT_EPS, capacity: Optional[int] = None) -> None:
        if not (0 < eps < 0.5):
            raise ConfigInvalid(f"eps {eps} outside (0, 0.5)")
        self.eps = float(eps)
        if capacity is None:
            capacity = max(_MIN_CAPACITY, math.ceil(CAPACITY_FACTOR / eps))
        # compaction pairs items; an even capacity keeps leftovers rare
        self.capacity = capacity + (capacity % 2)
        self._levels: list[np.ndarray] = [np.empty(0, dtype=np.float64)]
        self._parity: list[int] = [0]
        self._pending: list[float] = []
        self._n = 0
        self._mat: Optional[tuple[np.ndarray, np.ndarray]] = None

    @property
    def count(self) -> int:
        return self._n

    def insert(self, value: float) -> None:
        v = float(value)
        if not (math.isfinite(v) and v >= 0):
            raise NegativeValue("summary values must be finite and >= 0")
        self._pending.append(v)
        self._n += 1
        self._mat = None
        if len(self._pending) + self._levels[0].size >= self.capacity:
            self._flush_pending()
            self._compact_cascade()

    def extend(self, values: Iterable[float]) -> None:
        arr = _validate_values(np.asarray(list(values) if not isinstance(values, np.ndarray) else values))
        if arr.size == 0:
            return
        self._mat = None
        # feed in capacity-sized pieces so level 0 never balloons
        for start in range(0, arr.size, self.capacity):
            piece = arr[start : start + self.capacity]
            self._flush_pending()
            self._levels[0] = np.concatenate([self._levels[0], piece])
            self._n += piece.size
            self._compact_cascade()

    def _flush_pending(self) -> None:
        if self._pending:
            self._levels[0] = np.concatenate(
                [self._levels[0], np.asarray(self._pending, dtype=np.float64)]
            )
            self._pending = []

    def _compact_cascade(self) -> None:
        h = 0
        while h < len(self._levels):
            if self._levels[h].size >= self.capacity:
                self._compact_level(h)
            h += 1

    def _compact_level(self, h: int) -> None:
        arr = np.sort(self._levels[h])
        m = arr.size - (arr.size % 2)
        promoted = arr[self._parity[h] : m : 2]
        leftover = arr[m:]  # at most one item, the maximum, stays behind
        self._parity[h] ^= 1
        self._levels[h] = leftover
        if h + 1 == len(self._levels):
            self._levels.append(np.empty(0, dtype=np.float64))
            self._parity.append(0)
        self._levels[h + 1] = np.concatenate([self._levels[h + 1], promoted])

    def merge(self, other: QuantileSummary) -> "SketchSummary":
        if not isinstance(other, SketchSummary):
            raise ModeMismatch("cannot merge sketch with exact summaries")
        if other.eps != self.eps or other.capacity != self.capacity:
            raise ModeMismatch(
                f"sketch accuracy differs: eps {self.eps} vs {other.eps}"
            )
        out = SketchSummary(self.eps, self.capacity - (self.capacity % 2))
        self._flush_pending()
        other_levels = list(other._levels)
        if other._pending:
            other_levels[0] = np.concatenate(
                [other_levels[0], np.asarray(other._pending, dtype=np.float64)]
            )
        depth = max(len(self._levels), len(other_levels))
        out._levels = []
        out._parity = []
        for h in range(depth):
            parts = []
            if h < len(self._levels):
                parts.append(self._levels[h])
            if h < len(other_levels):
                parts.append(other_levels[h])
            out._levels.append(np.concatenate(parts) if parts else np.empty(0))
            out._parity.append(self._parity[h] if h < len(self._parity) else 0)
        out._n = self._n + other._n
        out._compact_cascade()
        return out

    def _materialize(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted (values, cumulative weight ending at each value)."""
        if self._mat is None:
            self._flush_pending()
            vals = []
            weights = []
            for h, level in enumerate(self._levels):
                if level.size:
                    vals.append(level)
                    weights.append(np.full(level.size, float(2**h)))
            if not vals:
                raise EmptySummary("query on an empty summary")
            v = np.concatenate(vals)
            w = np.concatenate(weights)
            order = np.argsort(v, kind="stable")
            v = v[order]
            cw = np.cumsum(w[order])
            self._mat = (v, cw)
        return self._mat

    def threshold(self, p: float) -> float:
        k = _nearest_rank(self._n, p)
        if self._n == 0:
            raise EmptySummary("threshold query on an empty summary")
        v, cw = self._materialize()
        idx = int(np.searchsorted(cw, k, side="left"))
        return float(v[min(idx, v.size - 1)])

    def rank(self, value: float) -> float:
        return float(self.rank_many(np.asarray([value]))[0])

    def rank_many(self, values: np.ndarray) -> np.ndarray:
        if self._n == 0:
            raise EmptySummary("rank query on an empty summary")
        v, cw = self._materialize()
        prefixed = np.concatenate([[0.0], cw])
        idx = np.searchsorted(v, np.asarray(values, dtype=np.float64), side="right")
        return prefixed[idx] / self._n

    def to_bytes(self) -> bytes:
        self._flush_pending()
        head = struct.pack(
            "<4sHBQ", SERIAL_MAGIC, SERIAL_VERSION, _MODE_SKETCH, self._n
        )
        body = [struct.pack("<dII", self.eps, self.capacity, len(self._levels))]
        for h, level in enumerate(self._levels):
            body.append(struct.pack("<BQ", self._parity[h], level.size))
            body.append(np.ascontiguousarray(level).tobytes())
        return head + b"".join(body)


def make_summary(mode: str = "exact", eps: float = DEFAULT_EPS) -> QuantileSummary:
    if mode == "exact":
        return ExactSummary()
    if mode == "sketch":
        return SketchSummary(eps)
    raise ConfigInvalid(f"unknown summary mode {mode!r}")


def _read_floats(blob: bytes, off: int, size: int) -> np.ndarray:
    end = off + 8 * size
    if end > len(blob):
        raise SerializationError("summary payload truncated")
    return np.frombuffer(blob, dtype=np.float64, count=size, offset=off).copy()


def _unpack(fmt: str, blob: bytes, off: int) -> tuple:
    if off + struct.calcsize(fmt) > len(blob):
        raise SerializationError("summary payload truncated")
    return struct.unpack_from(fmt, blob, off)


def summary_from_bytes(blob: bytes) -> QuantileSummary:
    if len(blob) < 15:
        raise SerializationError("summary payload too short")
    magic, version, mode, n = struct.unpack_from("<4sHBQ", blob, 0)
    if magic != SERIAL_MAGIC:
        raise SerializationError(f"bad summary magic {magic!r}")
    if version != SERIAL_VERSION:
        raise SerializationError(f"unsupported summary version {version}")
    off = 15
    if mode == _MODE_EXACT:
        (size,) = _unpack("<Q", blob, off)
        off += 8
        vals = _read_floats(blob, off, size)
        s = ExactSummary()
        s.extend(vals)
        s._n = n
        return s
    if mode != _MODE_SKETCH:
        raise SerializationError(f"unknown summary mode byte {mode}")
    eps, capacity, n_levels = _unpack("<dII", blob, off)
    off += 16
    s = SketchSummary(eps, capacity - (capacity % 2))
    s._levels = []
    s._parity = []
    for _ in range(n_levels):
        parity, size = _unpack("<BQ", blob, off)
        off += 9
        level = _read_floats(blob, off, size)
        off += 8 * size
        s._levels.append(level)
        s._parity.append(int(parity))
    if not s._levels:
        s._levels = [np.empty(0, dtype=np.float64)]
        s._parity = [0]
    s._n = n
    return s


# operation-style aliases

def summary_insert(summary: QuantileSummary, value: float) -> None:
    summary.insert(value)


def summary_merge(a: QuantileSummary, b: QuantileSummary) -> QuantileSummary:
    return a.merge(b)


def query_threshold(summary: QuantileSummary, p: float) -> float:
    return summary.threshold(p)


def percentile_rank(summary: QuantileSummary, value: float) -> float:
    return summary.rank(value)
