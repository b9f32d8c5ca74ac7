"""Domain types for watch-time labeling.

A record is one user-video interaction carrying a video duration and an
observed watch time, both in seconds. Labels are produced by ranking
watch times inside a group of records and mapping each record's rank
fraction onto a partition of (0, 1]. The types here cover validated
records, the rank partition itself, and equal-frequency duration bins
used to remove the duration confound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    InvalidRatios,
    MissingField,
    NegativeWatchTime,
    NonMonotoneCurve,
    NonPositiveDuration,
)

PARTITION_KINDS = ("equal_frequency", "power_decay", "log_quadratic", "explicit")

# Watch-time range (seconds) over which a log_quadratic curve is
# validated when the caller does not supply one. Covers sub-second
# skips up to an hour-long session.
DEFAULT_CURVE_RANGE = (1.0, 3600.0)


@dataclass(frozen=True)
class Interaction:
    """One validated user-video record."""

    user_id: str
    video_id: str
    duration_s: float
    watch_time_s: float
    row_index: int


def validate_interaction(
    user_id: object,
    video_id: object,
    duration_s: object,
    watch_time_s: object,
    row_index: int,
) -> Interaction:
    """Validate raw field values and build an Interaction.

    Raises MissingField for absent or unparsable fields,
    NonPositiveDuration and NegativeWatchTime for out-of-domain values.
    Diagnostics carry the row index.
    """
    fields = {
        "user_id": user_id,
        "video_id": video_id,
        "duration_s": duration_s,
        "watch_time_s": watch_time_s,
    }
    for name, value in fields.items():
        if value is None or (isinstance(value, str) and value.strip() == ""):
            raise MissingField(f"row {row_index}: field {name} is missing")
    try:
        dur = float(duration_s)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise MissingField(
            f"row {row_index}: field duration_s is not a number: {duration_s!r}"
        ) from None
    try:
        wt = float(watch_time_s)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise MissingField(
            f"row {row_index}: field watch_time_s is not a number: {watch_time_s!r}"
        ) from None
    # NaN fails both comparisons below, so it is rejected as well.
    if not dur > 0:
        raise NonPositiveDuration(f"row {row_index}: duration_s={dur} must be > 0")
    if not wt >= 0:
        raise NegativeWatchTime(f"row {row_index}: watch_time_s={wt} must be >= 0")
    return Interaction(str(user_id), str(video_id), dur, wt, row_index)


class InteractionTable:
    """Column-oriented view of a record list.

    Keeps the original text of numeric fields when the table was read
    from a file so downstream writers can echo input columns verbatim.
    """

    __slots__ = (
        "user_id",
        "video_id",
        "duration_s",
        "watch_time_s",
        "row_index",
        "duration_text",
        "watch_text",
    )

    def __init__(
        self,
        user_id: list[str],
        video_id: list[str],
        duration_s: np.ndarray,
        watch_time_s: np.ndarray,
        row_index: Optional[np.ndarray] = None,
        duration_text: Optional[list[str]] = None,
        watch_text: Optional[list[str]] = None,
    ):
        n = len(user_id)
        if not (len(video_id) == n == len(duration_s) == len(watch_time_s)):
            raise ValueError("column lengths differ")
        self.user_id = user_id
        self.video_id = video_id
        self.duration_s = np.asarray(duration_s, dtype=np.float64)
        self.watch_time_s = np.asarray(watch_time_s, dtype=np.float64)
        if row_index is None:
            row_index = np.arange(n, dtype=np.int64)
        self.row_index = np.asarray(row_index, dtype=np.int64)
        self.duration_text = duration_text
        self.watch_text = watch_text

    @property
    def n(self) -> int:
        return len(self.user_id)

    def __len__(self) -> int:
        return self.n

    def row(self, i: int) -> Interaction:
        return Interaction(
            self.user_id[i],
            self.video_id[i],
            float(self.duration_s[i]),
            float(self.watch_time_s[i]),
            int(self.row_index[i]),
        )

    @classmethod
    def from_rows(cls, rows: Iterable[Interaction]) -> "InteractionTable":
        users: list[str] = []
        videos: list[str] = []
        durs: list[float] = []
        wts: list[float] = []
        idx: list[int] = []
        for r in rows:
            users.append(r.user_id)
            videos.append(r.video_id)
            durs.append(r.duration_s)
            wts.append(r.watch_time_s)
            idx.append(r.row_index)
        return cls(
            users,
            videos,
            np.asarray(durs, dtype=np.float64),
            np.asarray(wts, dtype=np.float64),
            np.asarray(idx, dtype=np.int64),
        )

    def subset(self, index: np.ndarray) -> "InteractionTable":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return InteractionTable(
            [self.user_id[i] for i in index],
            [self.video_id[i] for i in index],
            self.duration_s[index],
            self.watch_time_s[index],
            self.row_index[index],
            [self.duration_text[i] for i in index] if self.duration_text else None,
            [self.watch_text[i] for i in index] if self.watch_text else None,
        )


def as_table(dataset) -> InteractionTable:
    """Coerce a record sequence into an InteractionTable."""
    if isinstance(dataset, InteractionTable):
        return dataset
    return InteractionTable.from_rows(dataset)


@dataclass(frozen=True, eq=False)
class PartitionScheme:
    """N ordered group ratios over (0, 1] plus their prefix sums.

    A record whose rank fraction is r gets the label prefix[g] of the
    first group g with r <= prefix[g]. The final prefix is exactly 1.0.
    """

    kind: str
    n_groups: int
    ratios: np.ndarray
    prefix: np.ndarray

    def label_of_group(self, g: int) -> float:
        return float(self.prefix[g])

    def group_of_rank(self, r: float) -> int:
        g = int(np.searchsorted(self.prefix, r, side="left"))
        return min(g, self.n_groups - 1)


def _finish_partition(kind: str, q: np.ndarray, progressive: bool, strict: bool) -> PartitionScheme:
    if np.any(~np.isfinite(q)) or np.any(q <= 0):
        raise InvalidRatios(f"{kind}: every group ratio must be positive and finite")
    if progressive or strict:
        diffs = np.diff(q)
        if strict:
            if np.any(diffs >= 0):
                raise InvalidRatios(f"{kind}: ratios must strictly decrease")
        elif np.any(diffs > 1e-15):
            raise InvalidRatios(f"{kind}: ratios must be non-increasing")
    q = q / q.sum()
    prefix = np.cumsum(q)
    prefix[-1] = 1.0
    if np.any(np.diff(prefix) <= 0):
        raise InvalidRatios(f"{kind}: prefix sums are not strictly increasing")
    q.setflags(write=False)
    prefix.setflags(write=False)
    return PartitionScheme(kind, len(q), q, prefix)


def make_partition(
    kind: str,
    n_groups: int = 0,
    *,
    gamma: float = 0.5,
    coeffs: Optional[tuple[float, float, float]] = None,
    curve_range: tuple[float, float] = DEFAULT_CURVE_RANGE,
    ratios: Optional[Sequence[float]] = None,
    progressive: bool = False,
    strict: bool = False,
) -> PartitionScheme:
    """Build a rank partition.

    kind selects how the ratios arise:
      equal_frequency  q_n = 1/N
      power_decay      q_n proportional to n**(-gamma), gamma >= 0
      log_quadratic    q_n from successive differences of the curve
                       w(k) = 1 / (a*k^2 + b*k + c) evaluated at N+1
                       evenly spaced boundaries in k = ceil(ln y) space
                       over curve_range, then renormalized
      explicit         caller-provided ratios

    progressive demands non-increasing ratios, strict demands a strict
    decrease. Both raise InvalidRatios on violation. A log_quadratic
    curve that is not strictly increasing, or leaves (0, 1], over the
    integer k values inside curve_range raises NonMonotoneCurve.
    """
    if kind not in PARTITION_KINDS:
        raise InvalidRatios(f"unknown partition kind {kind!r}")

    if kind == "explicit":
        if ratios is None:
            raise InvalidRatios("explicit partition needs ratios")
        q = np.asarray(list(ratios), dtype=np.float64)
        if n_groups and n_groups != len(q):
            raise InvalidRatios(
                f"explicit ratios have {len(q)} entries, n_groups says {n_groups}"
            )
        if len(q) < 2:
            raise InvalidRatios("a partition needs at least 2 groups")
        if np.any(q <= 0):
            raise InvalidRatios("explicit ratios must all be positive")
        if abs(q.sum() - 1.0) > 1e-9:
            raise InvalidRatios(f"explicit ratios sum to {q.sum()!r}, expected 1")
        return _finish_partition(kind, q, progressive, strict)

    if n_groups < 2:
        raise InvalidRatios("a partition needs at least 2 groups")

    if kind == "equal_frequency":
        # unnormalized ones; _finish_partition divides by the exact
        # integer sum, keeping this bitwise equal to power_decay at
        # gamma 0 for every group count
        q = np.ones(n_groups)
        return _finish_partition(kind, q, progressive, strict)

    if kind == "power_decay":
        if not (math.isfinite(gamma) and gamma >= 0):
            raise InvalidRatios(f"power_decay needs gamma >= 0, got {gamma}")
        q = np.arange(1, n_groups + 1, dtype=np.float64) ** (-gamma)
        return _finish_partition(kind, q, progressive, strict)

    # log_quadratic
    if coeffs is None:
        raise InvalidRatios("log_quadratic partition needs coeffs (a, b, c)")
    a, b, c = (float(v) for v in coeffs)
    y_lo, y_hi = curve_range
    if not (0 < y_lo < y_hi):
        raise NonMonotoneCurve(f"curve range {curve_range} is not an increasing positive span")
    k_lo = math.ceil(math.log(y_lo))
    k_hi = math.ceil(math.log(y_hi))
    if k_hi <= k_lo:
        raise NonMonotoneCurve(f"curve range {curve_range} spans no watch-time scale")
    ks = np.arange(k_lo, k_hi + 1, dtype=np.float64)
    denom = a * ks * ks + b * ks + c
    if np.any(denom <= 0):
        raise NonMonotoneCurve("curve denominator is not positive over the range")
    w = 1.0 / denom
    if np.any(w > 1.0) or np.any(np.diff(w) <= 0):
        raise NonMonotoneCurve(
            "curve must be strictly increasing and stay in (0, 1] over the range"
        )
    bounds = k_lo + (k_hi - k_lo) * np.arange(n_groups + 1, dtype=np.float64) / n_groups
    wb = 1.0 / (a * bounds * bounds + b * bounds + c)
    q = np.diff(wb)
    if np.any(q <= 0):
        raise NonMonotoneCurve("curve dips between integer points inside the range")
    return _finish_partition(kind, q, progressive, strict)


@dataclass(frozen=True, eq=False)
class DurationBins:
    """Upper-inclusive duration boundaries.

    boundaries[i] is the largest duration of bin i; bin 0 additionally
    covers everything below. Boundaries are observed data values, so
    records with equal duration always share a bin. counts holds the
    build-time occupancy per bin.
    """

    boundaries: np.ndarray
    counts: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.boundaries)

    def bin_of(self, duration_s: float) -> int:
        return int(self.bin_of_many(np.asarray([duration_s]))[0])

    def bin_of_many(self, durations: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.boundaries, durations, side="left")
        return np.minimum(idx, self.n_bins - 1).astype(np.int64)


def make_duration_bins(dataset, b: int, min_bin_size: int = 20) -> DurationBins:
    """Cut durations into up to b equal-frequency bins.

    Boundaries sit at nearest-rank quantiles of the duration multiset,
    deduplicated so point masses collapse. Any bin smaller than
    min_bin_size is merged into its right neighbor (leftmost first, the
    last bin merges left) until every remaining bin is large enough or
    one bin is left.
    """
    if b < 1:
        raise EmptyDataset(f"need at least one bin, got b={b}")
    if isinstance(dataset, np.ndarray):
        durations = np.asarray(dataset, dtype=np.float64)
    else:
        durations = as_table(dataset).duration_s
    n = len(durations)
    if n == 0:
        raise EmptyDataset("cannot build duration bins from an empty dataset")
    d = np.sort(durations)
    # nearest-rank quantile at p = i/b: smallest value with
    # count(d <= v) >= p * n
    ranks = np.ceil(np.arange(1, b + 1) * n / b).astype(np.int64)
    ranks = np.clip(ranks, 1, n)
    boundaries = np.unique(d[ranks - 1])
    counts = _bin_counts(boundaries, d)
    while len(boundaries) > 1 and counts.min() < min_bin_size:
        j = int(np.argmax(counts < min_bin_size))
        if j < len(boundaries) - 1:
            # drop the upper bound of bin j: bin j joins bin j+1
            boundaries = np.delete(boundaries, j)
            counts[j + 1] += counts[j]
            counts = np.delete(counts, j)
        else:
            boundaries = np.delete(boundaries, j - 1)
            counts[j - 1] += counts[j]
            counts = np.delete(counts, j)
    boundaries.setflags(write=False)
    counts.setflags(write=False)
    return DurationBins(boundaries, counts)


def _bin_counts(boundaries: np.ndarray, sorted_durations: np.ndarray) -> np.ndarray:
    idx = np.minimum(
        np.searchsorted(boundaries, sorted_durations, side="left"),
        len(boundaries) - 1,
    )
    return np.bincount(idx, minlength=len(boundaries)).astype(np.int64)


# Canonical label column order for labeled output. The two ablation
# columns are appended only when enabled.
STANDARD_LABELS = (
    "wpr",
    "wpr_d",
    "ev",
    "ev_d",
    "ev_v",
    "ev_u",
    "lv",
    "lv_d",
    "lv_v",
    "lv_u",
    "playing_rate",
)
ABLATION_LABELS = ("ef_wpr", "ew_wpr")
BINARY_LABELS = ("ev", "ev_d", "ev_v", "ev_u", "lv", "lv_d", "lv_v", "lv_u")


@dataclass
class LabelSet:
    """Per-record labels. None marks a label that was not requested."""

    wpr: Optional[float] = None
    wpr_d: Optional[float] = None
    ev: Optional[int] = None
    ev_d: Optional[int] = None
    ev_v: Optional[int] = None
    ev_u: Optional[int] = None
    lv: Optional[int] = None
    lv_d: Optional[int] = None
    lv_v: Optional[int] = None
    lv_u: Optional[int] = None
    playing_rate: Optional[float] = None
    ef_wpr: Optional[float] = None
    ew_wpr: Optional[float] = None
