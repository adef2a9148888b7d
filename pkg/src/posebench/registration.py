"""Closed-form rigid / similarity registration from point correspondences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from posebench.core import FrameId, RigidTransform

COLLINEAR_RTOL = 1e-6


class RegistrationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    transform: RigidTransform
    residuals: np.ndarray  # per-point distance after alignment, mm
    rms: float
    condition: float  # smallest / largest singular value of centred src
    warning: bool = False

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.to_dict(),
            "residuals_mm": self.residuals.tolist(),
            "rms_mm": self.rms,
            "condition": self.condition,
            "warning": self.warning,
        }


def _conditioning(centred: np.ndarray) -> float:
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[0] == 0:
        return 0.0
    return float(sv[1] / sv[0])


def estimate_rigid(
    src_points,
    dst_points,
    with_scale: bool = False,
    rms_threshold: float = 1.0,
    source: FrameId = FrameId.TRACKER_WORLD,
    target: FrameId = FrameId.GROUNDTRUTH_WORLD,
) -> RegistrationResult:
    """Least-squares ``T`` minimising ``sum ||dst_i - T(src_i)||^2`` (Umeyama).

    Reflections are excluded by flipping the sign of the last singular
    direction when the SVD solution has ``det < 0``. Point sets whose centred
    second singular value falls below 1e-6 of the first are treated as
    collinear and rejected.
    """
    src = np.asarray(src_points, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst_points, dtype=float).reshape(-1, 3)
    if src.shape != dst.shape:
        raise RegistrationError("source and destination must have the same number of points")
    n = len(src)
    if n < 3:
        raise RegistrationError(f"need at least 3 correspondences, got {n}")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cond = min(_conditioning(xs), _conditioning(xd))
    if cond < COLLINEAR_RTOL:
        raise RegistrationError(f"points are collinear (singular value ratio {cond:.3g})")

    H = xd.T @ xs / n
    U, D, Vt = np.linalg.svd(H)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt

    if with_scale:
        var_s = np.sum(xs**2) / n
        scale = float(np.sum(D * np.diag(S)) / var_s)
    else:
        scale = 1.0
    t = mu_d - scale * R @ mu_s

    T = RigidTransform(R=R, tvec=t, s=scale, source=source, target=target)
    res = np.linalg.norm(dst - T(src), axis=1)
    rms = float(np.sqrt(np.mean(res**2)))
    return RegistrationResult(transform=T, residuals=res, rms=rms, condition=cond, warning=rms > rms_threshold)


def registration_quality(T: RigidTransform, holdout_src, holdout_dst) -> float:
    """RMS distance (mm) between ``T(holdout_src)`` and ``holdout_dst``."""
    src = np.asarray(holdout_src, dtype=float).reshape(-1, 3)
    dst = np.asarray(holdout_dst, dtype=float).reshape(-1, 3)
    if len(src) < 1 or src.shape != dst.shape:
        raise RegistrationError("need at least one matching holdout pair")
    return float(np.sqrt(np.mean(np.sum((dst - T(src)) ** 2, axis=1))))
