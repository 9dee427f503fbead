"""Segmentation evaluation: per-sample IoU and recall-weighted F-score,
averaged over samples, with per-category breakdowns.

Conventions: both masks empty counts as a perfect hit (score 1); exactly one
empty scores 0. Binarization thresholds at 0.5 with ties to foreground.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyListError, LengthMismatchError, ShapeMismatchError

F_SCORE_BETA2 = 0.3


def binarize(prob_map: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Pixel = 1 iff probability >= threshold."""
    return (np.asarray(prob_map) >= threshold).astype(np.uint8)


def _as_bool(mask: np.ndarray) -> np.ndarray:
    return np.asarray(mask).astype(bool)


def iou(p: np.ndarray, q: np.ndarray) -> float:
    """|P intersection Q| / |P union Q|; 1.0 when both are empty."""
    p, q = _as_bool(p), _as_bool(q)
    if p.shape != q.shape:
        raise ShapeMismatchError(f"{p.shape} vs {q.shape}")
    union = int(np.logical_or(p, q).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(p, q).sum()) / union


def miou(pairs) -> float:
    """Arithmetic mean of per-sample IoU."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyListError("miou over zero samples")
    return float(np.mean([iou(p, q) for p, q in pairs]))


def f_score(p: np.ndarray, q: np.ndarray, beta2: float = F_SCORE_BETA2) -> float:
    """(1 + b2) * prec * rec / (b2 * prec + rec) with prediction p, target q."""
    p, q = _as_bool(p), _as_bool(q)
    if p.shape != q.shape:
        raise ShapeMismatchError(f"{p.shape} vs {q.shape}")
    n_p, n_q = int(p.sum()), int(q.sum())
    if n_p == 0 and n_q == 0:
        return 1.0
    if n_p == 0 or n_q == 0:
        return 0.0
    inter = int(np.logical_and(p, q).sum())
    if inter == 0:
        return 0.0
    prec = inter / n_p
    rec = inter / n_q
    return (1.0 + beta2) * prec * rec / (beta2 * prec + rec)


def mean_f_score(pairs, beta2: float = F_SCORE_BETA2) -> float:
    pairs = list(pairs)
    if not pairs:
        raise EmptyListError("f-score over zero samples")
    return float(np.mean([f_score(p, q, beta2) for p, q in pairs]))


@dataclass
class MetricReport:
    """All four headline numbers in [0, 1] plus per-category breakdowns."""

    miou_f: float
    f_f: float
    miou_d: float
    f_d: float
    per_category: dict[str, dict[str, float]] = field(default_factory=dict)
    n_samples: int = 0
    per_frame: list["MetricReport"] | None = None  # populated by the 5-frame protocol

    def to_dict(self) -> dict:
        return {
            "miou_f": self.miou_f,
            "f_f": self.f_f,
            "miou_d": self.miou_d,
            "f_d": self.f_d,
            "per_category": self.per_category,
            "n_samples": self.n_samples,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        """Human-readable table; values scaled x100."""
        header = f"{'category':<24} {'n':>4} {'mIoU_f':>8} {'F_f':>8} {'mIoU_d':>8} {'F_d':>8}"
        lines = [header, "-" * len(header)]
        for cat in sorted(self.per_category):
            row = self.per_category[cat]
            lines.append(f"{cat:<24} {int(row['n_samples']):>4} "
                         f"{100 * row['miou_f']:>8.2f} {100 * row['f_f']:>8.2f} "
                         f"{100 * row['miou_d']:>8.2f} {100 * row['f_d']:>8.2f}")
        lines.append("-" * len(header))
        lines.append(f"{'overall':<24} {self.n_samples:>4} "
                     f"{100 * self.miou_f:>8.2f} {100 * self.f_f:>8.2f} "
                     f"{100 * self.miou_d:>8.2f} {100 * self.f_d:>8.2f}")
        return "\n".join(lines)


def _maybe_binarize(mask: np.ndarray) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype.kind == "f":
        return binarize(arr)
    return arr.astype(np.uint8)


def evaluate_split(predictions, ground_truths, categories) -> MetricReport:
    """Score a list of (func, dep) prediction pairs against (func, dep) targets.

    Probability maps are binarized at 0.5; integer masks are used as-is.
    Dependency metrics run over every sample (all-zero targets included).
    """
    predictions, ground_truths, categories = list(predictions), list(ground_truths), list(categories)
    if not (len(predictions) == len(ground_truths) == len(categories)):
        raise LengthMismatchError(
            f"{len(predictions)} predictions, {len(ground_truths)} targets, {len(categories)} categories")
    if not predictions:
        raise EmptyListError("evaluate_split over zero samples")

    rows = []
    for (pred_f, pred_d), (gt_f, gt_d), cat in zip(predictions, ground_truths, categories):
        pf, pd_ = _maybe_binarize(pred_f), _maybe_binarize(pred_d)
        rows.append((cat, iou(pf, gt_f), f_score(pf, gt_f), iou(pd_, gt_d), f_score(pd_, gt_d)))

    per_category: dict[str, dict[str, float]] = {}
    for cat in sorted({r[0] for r in rows}):
        sub = [r for r in rows if r[0] == cat]
        per_category[cat] = {
            "miou_f": float(np.mean([r[1] for r in sub])),
            "f_f": float(np.mean([r[2] for r in sub])),
            "miou_d": float(np.mean([r[3] for r in sub])),
            "f_d": float(np.mean([r[4] for r in sub])),
            "n_samples": len(sub),
        }
    return MetricReport(
        miou_f=float(np.mean([r[1] for r in rows])),
        f_f=float(np.mean([r[2] for r in rows])),
        miou_d=float(np.mean([r[3] for r in rows])),
        f_d=float(np.mean([r[4] for r in rows])),
        per_category=per_category,
        n_samples=len(rows),
    )
