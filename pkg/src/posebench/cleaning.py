"""Outlier rejection: Z-score, IQR and kinematic-plausibility filters.

Z-score and IQR run on scalar 3D error magnitudes; the kinematic filter runs
on tracker positions. Each filter returns a boolean *kept* mask aligned with
its input, so stages compose by masking.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

REJECTION_WARN_FRACTION = 0.30
VMAX_SPEED_FACTOR = 10.0
VMAX_FLOOR = 100.0  # mm/s


class Stage(str, enum.Enum):
    ZSCORE = "ZSCORE"
    IQR = "IQR"
    KINEMATIC = "KINEMATIC"


# IQR is opt-in: on error magnitudes (a skewed, chi-like distribution) a
# 1.5 IQR fence rejects roughly 1% of genuine samples.
DEFAULT_STAGES = (Stage.ZSCORE, Stage.KINEMATIC)


@dataclass(frozen=True)
class CleaningConfig:
    zscore_k: float = 3.0
    iqr_k: float = 1.5
    vmax: float | None = None  # mm/s; None -> max(10 x trial speed, 100)
    enabled_stages: tuple[Stage, ...] = DEFAULT_STAGES

    def __post_init__(self):
        object.__setattr__(self, "enabled_stages", tuple(Stage(s) for s in self.enabled_stages))
        if len(set(self.enabled_stages)) != len(self.enabled_stages):
            raise ValueError("each cleaning stage may appear once")
        if not (self.zscore_k > 0 and self.iqr_k > 0):
            raise ValueError("filter constants must be positive")
        if self.vmax is not None and not self.vmax > 0:
            raise ValueError("vmax must be positive")

    def resolve_vmax(self, speed: float | None) -> float:
        if self.vmax is not None:
            return float(self.vmax)
        return max(VMAX_SPEED_FACTOR * (speed or 0.0), VMAX_FLOOR)

    def to_dict(self) -> dict:
        return {
            "zscore_k": self.zscore_k,
            "iqr_k": self.iqr_k,
            "vmax": self.vmax,
            "enabled_stages": [s.value for s in self.enabled_stages],
        }


@dataclass(frozen=True, eq=False)
class FilterResult:
    kept: np.ndarray
    stats: dict

    @property
    def rejected(self) -> int:
        return int(np.count_nonzero(~self.kept))


def zscore_filter(values, k: float = 3.0) -> FilterResult:
    """Reject ``|v - mean| > k * std``, with mean and population std of the full input."""
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        raise ValueError("zscore_filter needs at least 3 values")
    mean = float(v.mean())
    std = float(v.std())
    # values equal up to rounding count as zero variance
    if std <= 1e-12 * max(1.0, abs(mean)):
        kept = np.ones(len(v), dtype=bool)
    else:
        kept = np.abs(v - mean) <= k * std
    return FilterResult(kept, {"mean": mean, "std": std, "k": k, "rejected": int(np.count_nonzero(~kept))})


def iqr_filter(values, k: float = 1.5) -> FilterResult:
    """Tukey fences ``[Q1 - k IQR, Q3 + k IQR]``, quartiles by linear interpolation.

    With IQR = 0 the fence collapses onto the median, so every value that
    differs from it lies strictly outside and is rejected.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 4:
        raise ValueError("iqr_filter needs at least 4 values")
    q1, q3 = np.percentile(v, [25, 75], method="linear")
    iqr = q3 - q1
    lo, hi = q1 - k * iqr, q3 + k * iqr
    kept = (v >= lo) & (v <= hi)
    return FilterResult(
        kept,
        {"q1": float(q1), "q3": float(q3), "iqr": float(iqr), "lower": float(lo), "upper": float(hi), "k": k,
         "rejected": int(np.count_nonzero(~kept))},
    )


def kinematic_filter(t_ns, positions, vmax: float) -> FilterResult:
    """Forward pass rejecting samples that imply speed > ``vmax`` from the last kept sample.

    Comparing against the last *kept* sample stops a single glitch from
    also condemning the sample after it. Zero time steps reject the later
    sample as a duplicate.
    """
    t = np.asarray(t_ns, dtype=np.int64)
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = len(t)
    if n < 2:
        raise ValueError("kinematic_filter needs at least 2 samples")
    kept = np.ones(n, dtype=bool)
    anchor = 0
    duplicates = 0
    for i in range(1, n):
        dt = (t[i] - t[anchor]) / 1e9
        if dt <= 0:
            kept[i] = False
            duplicates += 1
            continue
        if np.linalg.norm(p[i] - p[anchor]) / dt > vmax:
            kept[i] = False
        else:
            anchor = i
    return FilterResult(kept, {"vmax": vmax, "duplicates": duplicates, "rejected": int(np.count_nonzero(~kept))})


def kinematic_filter_series(series, vmax: float) -> FilterResult:
    return kinematic_filter(series.t, series.p, vmax)


@dataclass(frozen=True)
class CleaningReport:
    stages: tuple[tuple[str, int], ...]  # (stage, rejected by that stage), in run order
    n_in: int
    n_out: int
    config: dict = field(default_factory=dict)
    vmax: float | None = None

    @property
    def total_rejected(self) -> int:
        return self.n_in - self.n_out

    @property
    def rejected_fraction(self) -> float:
        return self.total_rejected / self.n_in if self.n_in else 0.0

    @property
    def warning(self) -> bool:
        return self.rejected_fraction > REJECTION_WARN_FRACTION

    def to_dict(self) -> dict:
        return {
            "stages": [{"stage": s, "rejected": c} for s, c in self.stages],
            "n_in": self.n_in,
            "n_out": self.n_out,
            "rejected_fraction": self.rejected_fraction,
            "warning": self.warning,
            "vmax": self.vmax,
            "config": self.config,
        }


@dataclass(frozen=True, eq=False)
class CleaningResult:
    paired: object  # PairedSeries
    kept: np.ndarray  # mask over the input pairs
    report: CleaningReport


def error_magnitudes(paired) -> np.ndarray:
    return np.linalg.norm(paired.tracker.p - paired.truth.p, axis=1)


def run_pipeline(paired, cfg: CleaningConfig | None = None, speed: float | None = None) -> CleaningResult:
    """Apply the enabled stages, in order, to a paired series.

    Every stage runs exactly once on the survivors of the previous one.
    Output is always a subsequence of the input.
    """
    cfg = cfg or CleaningConfig()
    n = len(paired)
    kept = np.ones(n, dtype=bool)
    counts: list[tuple[str, int]] = []
    e3d = error_magnitudes(paired) if n else np.zeros(0)
    vmax = cfg.resolve_vmax(speed) if Stage.KINEMATIC in cfg.enabled_stages else None

    for stage in cfg.enabled_stages:
        idx = np.flatnonzero(kept)
        if stage == Stage.ZSCORE:
            if len(idx) < 3:
                counts.append((stage.value, 0))
                continue
            res = zscore_filter(e3d[idx], cfg.zscore_k)
        elif stage == Stage.IQR:
            if len(idx) < 4:
                counts.append((stage.value, 0))
                continue
            res = iqr_filter(e3d[idx], cfg.iqr_k)
        else:
            if len(idx) < 2:
                counts.append((stage.value, 0))
                continue
            res = kinematic_filter(paired.tracker.t[idx], paired.tracker.p[idx], vmax)
        kept[idx[~res.kept]] = False
        counts.append((stage.value, res.rejected))

    report = CleaningReport(
        stages=tuple(counts), n_in=n, n_out=int(kept.sum()), config=cfg.to_dict(), vmax=vmax
    )
    if report.warning:
        log.warning("cleaning rejected %.1f%% of samples; possible systematic failure", 100 * report.rejected_fraction)
    return CleaningResult(paired=paired.select(kept) if n else paired, kept=kept, report=report)
