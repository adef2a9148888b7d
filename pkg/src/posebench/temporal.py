"""Nearest-timestamp pairing of tracker and ground-truth streams.

No interpolation is performed; :func:`pairing_error_bound` quantifies what
that costs in position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from posebench.core import NS_PER_S, PoseSeries


class PairingError(ValueError):
    pass


@dataclass(frozen=True)
class AlignmentConfig:
    max_gap_ns: int | None = None  # None -> 1.5 x truth sample period
    max_truth_uses: int | None = None  # None -> unlimited


@dataclass(frozen=True, eq=False)
class PairedSeries:
    """Index-aligned tracker/truth samples; ``dt = t_tracker - t_truth`` in ns."""

    tracker: PoseSeries
    truth: "PairedTruth"
    dt: np.ndarray
    dropped: int = 0
    max_gap_ns: int = 0
    max_truth_uses: int | None = None

    def __len__(self) -> int:
        return len(self.tracker)

    @property
    def max_abs_dt(self) -> int:
        return int(np.max(np.abs(self.dt))) if len(self.dt) else 0

    @property
    def t(self) -> np.ndarray:
        return self.tracker.t

    def truth_use_counts(self) -> np.ndarray:
        _, counts = np.unique(self.truth.t, return_counts=True)
        return counts

    def select(self, mask) -> "PairedSeries":
        mask = np.asarray(mask)
        return PairedSeries(
            tracker=self.tracker.select(mask),
            truth=_select_allow_repeats(self.truth, mask),
            dt=self.dt[mask],
            dropped=self.dropped,
            max_gap_ns=self.max_gap_ns,
            max_truth_uses=self.max_truth_uses,
        )

    def window(self, t_start: int, t_end: int) -> "PairedSeries":
        return self.select((self.t >= t_start) & (self.t <= t_end))


class PairedTruth:
    """Truth samples aligned to pairs. Unlike PoseSeries, timestamps may repeat."""

    def __init__(self, frame, t, p, q, valid, nominal_rate):
        self.frame = frame
        self.t = t
        self.p = p
        self.q = q
        self.valid = valid
        self.nominal_rate = nominal_rate

    def __len__(self):
        return len(self.t)

    def select(self, idx) -> "PairedTruth":
        return _select_allow_repeats(self, idx)


def _select_allow_repeats(s, idx) -> PairedTruth:
    return PairedTruth(s.frame, s.t[idx], s.p[idx], s.q[idx], s.valid[idx], s.nominal_rate)


def default_max_gap_ns(truth: PoseSeries) -> int:
    if truth.nominal_rate > 0:
        period = NS_PER_S / truth.nominal_rate
    elif len(truth) > 1:
        period = float(np.median(np.diff(truth.t)))
    else:
        raise PairingError("cannot derive a default max_gap from a single-sample truth series")
    return int(round(1.5 * period))


def nearest_indices(t_query: np.ndarray, t_ref: np.ndarray) -> np.ndarray:
    """Index into sorted ``t_ref`` of the nearest value to each query; ties go earlier."""
    t_query = np.asarray(t_query, dtype=np.int64)
    t_ref = np.asarray(t_ref, dtype=np.int64)
    hi = np.searchsorted(t_ref, t_query, side="left")
    hi = np.clip(hi, 0, len(t_ref) - 1)
    lo = np.clip(hi - 1, 0, len(t_ref) - 1)
    d_lo = np.abs(t_query - t_ref[lo])
    d_hi = np.abs(t_ref[hi] - t_query)
    return np.where(d_lo <= d_hi, lo, hi)


def pair_nearest(
    tracker: PoseSeries,
    truth: PoseSeries,
    max_gap: int | None = None,
    max_truth_uses: int | None = None,
) -> PairedSeries:
    """Match every tracker sample to the truth sample closest in time.

    Pairs with ``|dt| > max_gap`` (ns) are dropped and counted. When
    ``max_truth_uses`` is set, a truth sample serves at most that many
    tracker samples; the closest ones win and the rest are dropped.
    """
    if len(tracker) == 0 or len(truth) == 0:
        raise PairingError("both series must be non-empty")
    if tracker.t[-1] < truth.t[0] or truth.t[-1] < tracker.t[0]:
        raise PairingError("tracker and truth time ranges do not intersect")
    if max_gap is None:
        max_gap = default_max_gap_ns(truth)

    j = nearest_indices(tracker.t, truth.t)
    dt = tracker.t - truth.t[j]
    keep = np.abs(dt) <= max_gap

    if max_truth_uses is not None:
        order = np.lexsort((np.abs(dt), j))
        used: dict[int, int] = {}
        for i in order:
            if not keep[i]:
                continue
            c = used.get(int(j[i]), 0)
            if c >= max_truth_uses:
                keep[i] = False
            else:
                used[int(j[i])] = c + 1

    return PairedSeries(
        tracker=tracker.select(keep),
        truth=_select_allow_repeats(truth, j[keep]),
        dt=dt[keep],
        dropped=int(np.count_nonzero(~keep)),
        max_gap_ns=int(max_gap),
        max_truth_uses=max_truth_uses,
    )


def pairing_error_bound(speed: float, truth_rate: float) -> float:
    """Positional uncertainty (mm) attributable to nearest-timestamp pairing.

    ``speed / (4 * truth_rate)``: the displacement over the mean absolute
    pairing offset, which is a quarter of the truth sample period when the
    device clock is uniformly phased against the truth clock. At 50 mm/s and
    50 Hz this is 0.25 mm. See :func:`max_pairing_error` for the worst case.
    """
    _check_bound_args(speed, truth_rate)
    return speed / (4.0 * truth_rate)


def max_pairing_error(speed: float, truth_rate: float) -> float:
    """Worst-case positional error (mm): ``speed`` times half a truth period."""
    _check_bound_args(speed, truth_rate)
    return speed / (2.0 * truth_rate)


def _check_bound_args(speed: float, truth_rate: float) -> None:
    if speed < 0:
        raise ValueError("speed must be non-negative")
    if truth_rate <= 0:
        raise ValueError("truth_rate must be positive")
