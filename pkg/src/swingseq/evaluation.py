"""PCE: percentage of events detected within a sample-dependent frame tolerance."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dataset import EVENT_ABBREVIATIONS, NUM_EVENTS, EventLabel, SwingAnnotation
from .inference import DetectionResult


class PairingError(ValueError):
    """Detections and ground truth do not line up by sample id."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def tolerance(ann: SwingAnnotation, f: float | None = None) -> int:
    """Frames of slack for ``ann``: max(round(n / f), 1) with n = Impact - Address.

    ``f`` defaults to the annotation's stored frame rate.
    """
    f = ann.fps if f is None else f
    if f <= 0:
        raise ValueError("sampling frequency must be positive")
    n = ann.event_frames[EventLabel.IMPACT] - ann.event_frames[EventLabel.ADDRESS]
    return max(round_half_up(n / f), 1)


@dataclass
class PceReport:
    per_event_pce: list[float]
    overall_pce: float
    n_samples: int
    per_stratum: dict[str, dict] = field(default_factory=dict)
    tolerance_stats: dict[str, float] = field(default_factory=dict)

    def subset_pce(self, events: Sequence[int]) -> float:
        """Mean PCE over a subset of event indices (e.g. all but Address and Finish)."""
        return float(np.mean([self.per_event_pce[e] for e in events]))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table_row(self) -> list[float]:
        """Values in column order A, TU, MB, T, MD, I, MFT, F, PCE."""
        return [*self.per_event_pce, self.overall_pce]


TABLE_COLUMNS = (*EVENT_ABBREVIATIONS, "PCE")


def _pair(detections, truths):
    by_id = {t.sample_id: t for t in truths}
    det_ids = [d.sample_id for d in detections]
    missing_truth = sorted(set(det_ids) - set(by_id))
    missing_det = sorted(set(by_id) - set(det_ids))
    if missing_truth or missing_det or len(det_ids) != len(set(det_ids)):
        raise PairingError(
            f"unpaired samples: no truth for {missing_truth[:5]}, no detection for {missing_det[:5]}"
            + ("; duplicate detections" if len(det_ids) != len(set(det_ids)) else ""))
    return [(d, by_id[d.sample_id]) for d in detections]


def correct_matrix(detections: Sequence[DetectionResult], truths: Sequence[SwingAnnotation],
                   f: float | None = None) -> tuple[np.ndarray, np.ndarray, list[SwingAnnotation]]:
    """Boolean (n_samples, 8) correctness and per-sample tolerances."""
    pairs = _pair(detections, truths)
    tol = np.array([tolerance(t, f) for _, t in pairs])
    pred = np.array([d.predicted_frames for d, _ in pairs]).reshape(-1, NUM_EVENTS)
    gt = np.array([t.event_frames for _, t in pairs]).reshape(-1, NUM_EVENTS)
    return np.abs(pred - gt) <= tol[:, None], tol, [t for _, t in pairs]


def _summarize(correct: np.ndarray) -> dict:
    per_event = (100.0 * correct.sum(axis=0) / len(correct)).tolist()
    return {"per_event_pce": per_event,
            "overall_pce": 100.0 * float(correct.sum()) / (NUM_EVENTS * len(correct)),
            "n_samples": int(len(correct))}


def pce(detections: Sequence[DetectionResult], truths: Sequence[SwingAnnotation],
        f: float | None = None) -> PceReport:
    if not detections:
        raise PairingError("no detections to evaluate")
    correct, tol, paired = correct_matrix(detections, truths, f)
    summary = _summarize(correct)
    slow = np.array([t.slow_motion for t in paired])
    strata = {}
    for name, mask in (("slow-motion", slow), ("real-time", ~slow)):
        if mask.any():
            strata[name] = _summarize(correct[mask])
    return PceReport(per_event_pce=summary["per_event_pce"], overall_pce=summary["overall_pce"],
                     n_samples=summary["n_samples"], per_stratum=strata,
                     tolerance_stats={"min": int(tol.min()), "mean": float(tol.mean()), "max": int(tol.max())})


def cross_validate(reports: Sequence[PceReport], n_folds: int = 4) -> PceReport:
    """Unweighted mean of per-fold reports."""
    if len(reports) != n_folds:
        raise ValueError(f"expected {n_folds} fold reports, got {len(reports)}")
    per_event = np.mean([r.per_event_pce for r in reports], axis=0).tolist()
    strata = {}
    for name in ("slow-motion", "real-time"):
        rows = [r.per_stratum[name] for r in reports if name in r.per_stratum]
        if len(rows) == len(reports):
            strata[name] = {
                "per_event_pce": np.mean([r["per_event_pce"] for r in rows], axis=0).tolist(),
                "overall_pce": float(np.mean([r["overall_pce"] for r in rows])),
                "n_samples": int(sum(r["n_samples"] for r in rows)),
            }
    return PceReport(
        per_event_pce=per_event,
        overall_pce=float(np.mean([r.overall_pce for r in reports])),
        n_samples=int(sum(r.n_samples for r in reports)),
        per_stratum=strata,
        tolerance_stats={
            "min": min(r.tolerance_stats["min"] for r in reports),
            "mean": float(np.mean([r.tolerance_stats["mean"] for r in reports])),
            "max": max(r.tolerance_stats["max"] for r in reports),
        },
    )


def report_csv(report: PceReport, label: str = "overall") -> str:
    lines = ["model," + ",".join(TABLE_COLUMNS)]
    rows = [(f"{label} ({k})", v["per_event_pce"] + [v["overall_pce"]]) for k, v in report.per_stratum.items()]
    rows.append((label, report.table_row()))
    for name, vals in rows:
        lines.append(name + "," + ",".join(f"{v:.1f}" for v in vals))
    return "\n".join(lines) + "\n"
