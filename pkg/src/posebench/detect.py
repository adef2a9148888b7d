"""Confident-but-wrong detection and the pass/fail requirement gate."""

from __future__ import annotations

from dataclasses import dataclass

SYSTEMATIC_FAILURE = "SYSTEMATIC_FAILURE"
CLEANING_REJECTION = "CLEANING_REJECTION"
REGISTRATION_RMS = "REGISTRATION_RMS"
TRIAL_ERROR = "TRIAL_ERROR"


@dataclass(frozen=True)
class Flag:
    trial_id: str
    kind: str
    detail: str

    def to_dict(self) -> dict:
        return {"trial_id": self.trial_id, "kind": self.kind, "detail": self.detail}


def detect_systematic_failure(
    result, acc_threshold: float = 50.0, rep_threshold: float = 1.0, trial_id: str | None = None
) -> Flag | None:
    """Flag a static pose that is far off yet tightly clustered.

    Raised iff ``mean_acc > acc_threshold`` and ``repeatability <
    rep_threshold``. A pose without a repeatability value (single visit)
    is never flagged.
    """
    rep = result.repeatability
    if rep is None:
        return None
    if result.mean_acc > acc_threshold and rep < rep_threshold:
        return Flag(
            trial_id or result.pose_id,
            SYSTEMATIC_FAILURE,
            f"mean accuracy {result.mean_acc:.1f} mm with repeatability {rep:.2f} mm",
        )
    return None


@dataclass(frozen=True)
class GateDecision:
    trial_id: str
    passed: bool | None  # None: not gated (system trials)
    reason: str = ""

    def to_dict(self) -> dict:
        return {"trial_id": self.trial_id, "passed": self.passed, "reason": self.reason}


def requirement_gate(report, pos_limit: float = 5.0, rot_limit: float = 10.0) -> list[GateDecision]:
    """Per-trial decision: position error < ``pos_limit`` mm, angle < ``rot_limit`` deg, no failure flag.

    Static trials use mean accuracy; dynamic trials use the mean 3D error
    magnitude. Limits are strict. Trials that produced neither result are
    not gated.
    """
    failed = {f.trial_id for f in report.flags if f.kind == SYSTEMATIC_FAILURE}
    out = []
    for tr in report.trials:
        if tr.static is not None:
            pos, rot = tr.static.mean_acc, tr.static.orient_acc
        elif tr.dynamic is not None:
            pos, rot = tr.dynamic.mean_3d, tr.dynamic.orient_acc
        else:
            out.append(GateDecision(tr.trial_id, None, "not gated"))
            continue
        reasons = []
        if not pos < pos_limit:
            reasons.append(f"position {pos:.3f} mm >= {pos_limit:g} mm")
        if rot is not None and not rot < rot_limit:
            reasons.append(f"orientation {rot:.3f} deg >= {rot_limit:g} deg")
        if tr.trial_id in failed:
            reasons.append("systematic failure flagged")
        out.append(GateDecision(tr.trial_id, not reasons, "; ".join(reasons)))
    return out


def gate_passed(decisions) -> bool:
    return all(d.passed is not False for d in decisions)
