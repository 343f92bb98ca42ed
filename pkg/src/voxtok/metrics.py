"""Evaluation metrics: AUROC, AP, pooled Dice/IoU sweep, lesion-wise TPR.

Voxel-level metrics run over brain-mask foreground only by default, since
background scores are forced to zero and would trivially inflate ranking
metrics; ``include_background=True`` restores the naive pooling for
comparison. The Dice threshold is a single dataset-pooled operating point.
Predictions binarize as ``score >= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the Mann-Whitney U statistic, ties 0.5."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Step-interpolated AP; tied scores collapse into one threshold group."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # last index of each tie group along the descending sweep
    group_end = np.flatnonzero(np.diff(sorted_scores) != 0)
    group_end = np.append(group_end, scores.size - 1)
    tp = np.cumsum(sorted_labels)[group_end].astype(np.float64)
    n_pred = group_end + 1.0
    precision = tp / n_pred
    recall = tp / n_pos
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


def _pool_foreground(
    maps: list[np.ndarray],
    gts: list[np.ndarray],
    masks: list[np.ndarray] | None,
    include_background: bool,
) -> tuple[np.ndarray, np.ndarray]:
    scores, labels = [], []
    for i, (m, g) in enumerate(zip(maps, gts)):
        if m.shape != g.shape:
            raise ValueError(f"volume {i}: map {m.shape} vs GT {g.shape} dims mismatch")
        if masks is not None and not include_background:
            fg = masks[i].astype(bool)
            if fg.shape != m.shape:
                raise ValueError(f"volume {i}: mask {fg.shape} vs map {m.shape} dims mismatch")
            scores.append(m[fg])
            labels.append(g[fg])
        else:
            scores.append(m.ravel())
            labels.append(g.ravel())
    return np.concatenate(scores), np.concatenate(labels).astype(bool)


def _counts_at(pooled_scores_sorted, gt_suffix_pos, thresholds):
    """TP and predicted-positive counts for pred = score >= t, vectorized."""
    idx = np.searchsorted(pooled_scores_sorted, thresholds, side="left")
    n = pooled_scores_sorted.size
    n_pred = n - idx
    tp = gt_suffix_pos[idx]
    return tp, n_pred


def dice_sweep(
    maps: list[np.ndarray],
    gts: list[np.ndarray],
    masks: list[np.ndarray] | None = None,
    n_thresholds: int = 200,
    include_background: bool = False,
) -> tuple[float, float]:
    """Best pooled Dice over a global threshold sweep; returns (dice, threshold).

    Candidate thresholds are the unique pooled scores when there are at most
    ``n_thresholds`` of them (making the sweep exhaustively optimal), else
    ``n_thresholds`` evenly spaced order statistics of the pooled scores.
    """
    scores, labels = _pool_foreground(maps, gts, masks, include_background)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("empty ground truth across dataset")

    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    l_sorted = labels[order]
    suffix_pos = np.concatenate((np.cumsum(l_sorted[::-1])[::-1], [0]))

    uniq = np.unique(s_sorted)
    if uniq.size <= n_thresholds:
        thresholds = uniq
    else:
        pos = np.round(np.linspace(0, s_sorted.size - 1, n_thresholds)).astype(np.int64)
        thresholds = np.unique(s_sorted[pos])

    tp, n_pred = _counts_at(s_sorted, suffix_pos, thresholds)
    fp = n_pred - tp
    fn = n_pos - tp
    dice = 2.0 * tp / np.maximum(2.0 * tp + fp + fn, 1)
    best = int(np.argmax(dice))
    return float(dice[best]), float(thresholds[best])


def iou_at(
    threshold: float,
    maps: list[np.ndarray],
    gts: list[np.ndarray],
    masks: list[np.ndarray] | None = None,
    include_background: bool = False,
) -> float:
    """Pooled intersection-over-union at a fixed threshold."""
    scores, labels = _pool_foreground(maps, gts, masks, include_background)
    pred = scores >= threshold
    tp = int(np.logical_and(pred, labels).sum())
    fp = int(np.logical_and(pred, ~labels).sum())
    fn = int(np.logical_and(~pred, labels).sum())
    denom = tp + fp + fn
    return float(tp / denom) if denom else 0.0


_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)


def connected_components_3d(binary: np.ndarray) -> tuple[np.ndarray, int]:
    """Label 26-connected components; label order follows each component's
    lexicographically first voxel."""
    binary = np.asarray(binary)
    if not np.isin(np.unique(binary), (0, 1)).all():
        raise ValueError("connected_components_3d expects a binary volume")
    labeled, n = ndimage.label(binary, structure=_STRUCT_26)
    if n == 0:
        return labeled.astype(np.int32), 0
    flat = labeled.ravel()
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size, dtype=np.int64))
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, n + 1, dtype=np.int32)
    return remap[labeled], n


@dataclass(frozen=True)
class LesionStats:
    lesion_id: int
    volume_id: str
    voxel_count: int
    volume_mm3: float
    detected: bool


@dataclass
class LtprBin:
    lo_mm3: float
    hi_mm3: float
    lesions: int
    detected: int

    @property
    def ltpr(self) -> float | None:
        return self.detected / self.lesions if self.lesions else None


def lesion_table(
    pred_binary: np.ndarray,
    gt_binary: np.ndarray,
    spacing_mm: float,
    volume_id: str = "",
    start_id: int = 1,
) -> list[LesionStats]:
    """Per-lesion voxel counts, physical volumes, and detection flags.

    A lesion counts as detected when at least one predicted-positive voxel
    overlaps it.
    """
    if spacing_mm <= 0:
        raise ValueError(f"spacing must be > 0, got {spacing_mm}")
    labeled, n = connected_components_3d(gt_binary)
    out = []
    for lesion in range(1, n + 1):
        voxels = labeled == lesion
        count = int(voxels.sum())
        out.append(
            LesionStats(
                lesion_id=start_id + lesion - 1,
                volume_id=volume_id,
                voxel_count=count,
                volume_mm3=count * spacing_mm**3,
                detected=bool(np.logical_and(voxels, pred_binary).any()),
            )
        )
    return out


def ltpr_bins(
    lesions: list[LesionStats],
    edges: tuple[float, float] = (100.0, 1000.0),
) -> list[LtprBin]:
    """Lesion-wise TPR in three volume bins: < lo, [lo, hi], > hi (mm^3)."""
    lo, hi = edges
    bins = [
        LtprBin(0.0, lo, 0, 0),
        LtprBin(lo, hi, 0, 0),
        LtprBin(hi, float("inf"), 0, 0),
    ]
    for les in lesions:
        if les.volume_mm3 < lo:
            b = bins[0]
        elif les.volume_mm3 <= hi:
            b = bins[1]
        else:
            b = bins[2]
        b.lesions += 1
        b.detected += int(les.detected)
    return bins


@dataclass
class EvalReport:
    patient_auroc: float
    patient_ap: float
    voxel_auroc: float
    voxel_ap: float
    dice_max: float
    iou_at_dice_max: float
    dice_threshold: float
    ltpr: list[LtprBin]
    lesions: list[LesionStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "patient_auroc": self.patient_auroc,
            "patient_ap": self.patient_ap,
            "voxel_auroc": self.voxel_auroc,
            "voxel_ap": self.voxel_ap,
            "dice_max": self.dice_max,
            "iou_at_dice_max": self.iou_at_dice_max,
            "dice_threshold": self.dice_threshold,
            "ltpr_bins": [
                {
                    "range_mm3": [b.lo_mm3, b.hi_mm3],
                    "lesions": b.lesions,
                    "detected": b.detected,
                    "ltpr": b.ltpr,
                }
                for b in self.ltpr
            ],
        }


def evaluate(
    patient_scores: dict[str, float],
    patient_labels: dict[str, int],
    full_maps: dict[str, np.ndarray],
    gt_masks: dict[str, np.ndarray],
    brain_masks: dict[str, np.ndarray],
    spacing_mm: float = 0.7,
    n_thresholds: int = 200,
    include_background: bool = False,
    ltpr_threshold: float | None = None,
) -> EvalReport:
    """Full patient- and voxel-level report over one dataset.

    ``ltpr_threshold`` defaults to the Dice-optimal threshold; pass a value
    to binarize lesion detection at a different operating point.
    """
    vids = sorted(full_maps)
    p_scores = np.array([patient_scores[v] for v in vids])
    p_labels = np.array([patient_labels[v] for v in vids])
    maps = [full_maps[v] for v in vids]
    gts = [gt_masks[v].astype(bool) for v in vids]
    masks = [brain_masks[v] for v in vids]

    voxel_scores, voxel_labels = _pool_foreground(maps, gts, masks, include_background)
    dice_max, thr = dice_sweep(maps, gts, masks, n_thresholds, include_background)
    iou = iou_at(thr, maps, gts, masks, include_background)
    bin_thr = thr if ltpr_threshold is None else ltpr_threshold

    lesions: list[LesionStats] = []
    for vid, m, g in zip(vids, maps, gts):
        lesions.extend(
            lesion_table(m >= bin_thr, g, spacing_mm, volume_id=vid, start_id=len(lesions) + 1)
        )

    return EvalReport(
        patient_auroc=auroc(p_scores, p_labels),
        patient_ap=average_precision(p_scores, p_labels),
        voxel_auroc=auroc(voxel_scores, voxel_labels),
        voxel_ap=average_precision(voxel_scores, voxel_labels),
        dice_max=dice_max,
        iou_at_dice_max=iou,
        dice_threshold=thr,
        ltpr=ltpr_bins(lesions),
        lesions=lesions,
    )
