"""Instance segmentation scoring.

Covers aggregated overlap scores, boundary agreement within a voxel
radius, per-layer depth profiles, centroid detection counts, and the
class-balanced cross entropy used to train the upstream classifier.

Two Jaccard flavors exist side by side and are easy to confuse:
mask_jaccard() is plain voxel-set overlap of two binary masks, while the
jaccard inside CentroidStats is computed from detection counts
(TP / (TP + FP + FN)).  Report fields name which one they carry.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .distance import edt_squared
from .volume import BinaryVolume, LabelVolume, ScalarVolume

__all__ = [
    "aggregated_jaccard",
    "aggregated_dice",
    "dice_from_jaccard",
    "extract_boundaries",
    "boundary_scores",
    "BoundaryScores",
    "depth_profiles",
    "LayerScore",
    "centroid_detection",
    "CentroidStats",
    "DegenerateClassError",
    "weighted_bce_loss",
    "weighted_bce_class_losses",
    "weighted_bce_grad",
    "mask_jaccard",
    "mask_dice",
    "EvaluationReport",
    "evaluate",
]


# ---------------------------------------------------------------------------
# aggregated Jaccard / Dice


def _overlap_table(gt_arr: np.ndarray, pred_arr: np.ndarray):
    """Pairwise intersection counts between nonzero gt and pred labels.

    Returns ({gt_label: [(pred_label, count), ...] sorted by pred_label},
    {gt_label: size}, {pred_label: size}).
    """
    gt_flat = gt_arr.ravel().astype(np.int64)
    pred_flat = pred_arr.ravel().astype(np.int64)
    any_nz = (gt_flat != 0) | (pred_flat != 0)
    g = gt_flat[any_nz]
    p = pred_flat[any_nz]
    keys = (g << 32) | p
    uniq, counts = np.unique(keys, return_counts=True)
    ug = uniq >> 32
    up = uniq & 0xFFFFFFFF

    gt_sizes: dict[int, int] = {}
    pred_sizes: dict[int, int] = {}
    overlaps: dict[int, list[tuple[int, int]]] = {}
    for gl, pl, n in zip(ug, up, counts):
        gl, pl, n = int(gl), int(pl), int(n)
        if gl != 0:
            gt_sizes[gl] = gt_sizes.get(gl, 0) + n
        if pl != 0:
            pred_sizes[pl] = pred_sizes.get(pl, 0) + n
        if gl != 0 and pl != 0:
            overlaps.setdefault(gl, []).append((pl, n))
    # np.unique sorts keys, so each overlap list is already pred-ascending
    return overlaps, gt_sizes, pred_sizes


def _greedy_accumulate(
    overlaps: dict[int, list[tuple[int, int]]],
    gt_sizes: dict[int, int],
    pred_sizes: dict[int, int],
    gt_labels: Sequence[int],
    restrict_unmatched: bool,
) -> tuple[int, int]:
    """Shared matcher: returns integer (C, U) totals.

    Walks gt labels in ascending order, matching each to the still-unused
    prediction with the largest intersection-over-union (ties go to the
    smaller prediction label; the comparison is exact via integer cross
    multiplication).  Unmatched gt instances contribute their full size to
    U.  Predictions never selected contribute their sizes too; when
    restrict_unmatched is set, only those overlapping some listed gt
    instance do.
    """
    used: set[int] = set()
    c_total = 0
    u_total = 0
    for gl in sorted(gt_labels):
        sg = gt_sizes[gl]
        best_p = 0
        best_inter = 0
        best_union = 1
        for pl, inter in overlaps.get(gl, ()):
            if pl in used:
                continue
            union = sg + pred_sizes[pl] - inter
            # inter/union > best_inter/best_union, exactly
            if inter * best_union > best_inter * union:
                best_p, best_inter, best_union = pl, inter, union
        if best_p:
            used.add(best_p)
            c_total += best_inter
            u_total += best_union
        else:
            u_total += sg
    if restrict_unmatched:
        touched: set[int] = set()
        for gl in gt_labels:
            touched.update(pl for pl, _ in overlaps.get(gl, ()))
        leftovers = touched - used
    else:
        leftovers = set(pred_sizes) - used
    for pl in leftovers:
        u_total += pred_sizes[pl]
    return c_total, u_total


def aggregated_jaccard(gt: LabelVolume, pred: LabelVolume) -> float:
    """Aggregated Jaccard index over instance labelings.

    Intersections of matched pairs accumulate into C, their unions into U,
    every unmatched ground-truth instance and every never-selected
    prediction adds its size to U, and the score is C / U.  Two volumes
    without any instance at all score 1.0.
    """
    if gt.dims != pred.dims:
        raise ValueError(f"dims mismatch: {gt.dims!r} vs {pred.dims!r}")
    overlaps, gt_sizes, pred_sizes = _overlap_table(gt.data, pred.data)
    if not gt_sizes and not pred_sizes:
        return 1.0
    c_total, u_total = _greedy_accumulate(
        overlaps, gt_sizes, pred_sizes, list(gt_sizes), restrict_unmatched=False
    )
    if u_total == 0:
        return 0.0
    return c_total / u_total


def dice_from_jaccard(j: float) -> float:
    """Dice score algebraically equivalent to a given Jaccard score."""
    return 2.0 * j / (1.0 + j)


def aggregated_dice(gt: LabelVolume, pred: LabelVolume) -> float:
    """Aggregated Dice, derived from the aggregated Jaccard as 2J/(1+J)."""
    return dice_from_jaccard(aggregated_jaccard(gt, pred))


# ---------------------------------------------------------------------------
# boundary agreement


def _boundary_mask(arr: np.ndarray) -> np.ndarray:
    """Nonzero voxels with a face neighbor of a different value.

    Faces on the volume border have no neighbor and never create
    boundaries.
    """
    out = np.zeros(arr.shape, dtype=bool)
    for axis in range(3):
        a = [slice(None)] * 3
        b = [slice(None)] * 3
        a[axis] = slice(0, -1)
        b[axis] = slice(1, None)
        a, b = tuple(a), tuple(b)
        diff = arr[a] != arr[b]
        out[a] |= diff & (arr[a] != 0)
        out[b] |= diff & (arr[b] != 0)
    return out


def extract_boundaries(labels: LabelVolume) -> BinaryVolume:
    """Mask of label voxels facing a different label (or background)."""
    return BinaryVolume(labels.dims, _boundary_mask(labels.data))


@dataclass(frozen=True)
class BoundaryScores:
    precision: float
    recall: float
    f1: float


def boundary_scores(
    gt: LabelVolume, pred: LabelVolume, radius: int = 2
) -> BoundaryScores:
    """Boundary precision/recall/F1 within a Euclidean voxel radius.

    Recall is the fraction of gt boundary voxels with a predicted boundary
    voxel within the radius; precision mirrors it.  Distances come from
    the exact squared distance transform of the opposite boundary set, so
    the radius test is integer-exact.  Two boundary-free volumes count as
    perfect agreement.
    """
    if gt.dims != pred.dims:
        raise ValueError(f"dims mismatch: {gt.dims!r} vs {pred.dims!r}")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    gt_b = _boundary_mask(gt.data)
    pred_b = _boundary_mask(pred.data)
    has_gt = bool(gt_b.any())
    has_pred = bool(pred_b.any())
    if not has_gt and not has_pred:
        return BoundaryScores(1.0, 1.0, 1.0)
    r2 = radius * radius

    if not has_gt:
        recall = 1.0
        precision = 0.0
    elif not has_pred:
        recall = 0.0
        precision = 1.0
    else:
        dist_to_pred = edt_squared(BinaryVolume.from_array(pred_b))
        recall = float(np.mean(dist_to_pred[gt_b] <= r2))
        dist_to_gt = edt_squared(BinaryVolume.from_array(gt_b))
        precision = float(np.mean(dist_to_gt[pred_b] <= r2))

    if precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return BoundaryScores(precision, recall, f1)


# ---------------------------------------------------------------------------
# per-layer depth profiles


@dataclass(frozen=True)
class LayerScore:
    z: int
    aji: float
    bf1: float


def _layer_bf1(gt: LabelVolume, pred: LabelVolume, z: int, window: int, radius: int) -> float:
    z0 = max(0, z - window)
    z1 = min(gt.dims.nz, z + window + 1)
    gt_sub = LabelVolume.from_array(gt.data[z0:z1])
    pred_sub = LabelVolume.from_array(pred.data[z0:z1])
    return boundary_scores(gt_sub, pred_sub, radius).f1


def depth_profiles(
    gt: LabelVolume,
    pred: LabelVolume,
    window: int = 5,
    radius: int = 2,
    threads: int = 1,
) -> list[LayerScore]:
    """Per-z scores tracking quality through the depth of a stack.

    For each z-layer holding at least one gt instance: aji is the
    aggregated Jaccard restricted to the full 3D extents of the instances
    present in that layer (unmatched predictions count only when they
    touch those extents), and bf1 is the boundary F1 of the subvolume
    z-window..z+window clamped to the stack.  Layers without gt instances
    produce no entry.

    Layers are independent, so they may be scored in parallel; the result
    order and values do not depend on the thread count.
    """
    if gt.dims != pred.dims:
        raise ValueError(f"dims mismatch: {gt.dims!r} vs {pred.dims!r}")
    if window < 0:
        raise ValueError(f"window must be >= 0, got {window}")

    # the overlap table is layer-independent; share it across layers
    overlaps, gt_sizes, pred_sizes = _overlap_table(gt.data, pred.data)

    def score(z: int) -> Optional[LayerScore]:
        layer_labels = np.unique(gt.data[z])
        layer_labels = layer_labels[layer_labels != 0]
        if layer_labels.size == 0:
            return None
        c_total, u_total = _greedy_accumulate(
            overlaps,
            gt_sizes,
            pred_sizes,
            [int(l) for l in layer_labels],
            restrict_unmatched=True,
        )
        aji = 0.0 if u_total == 0 else c_total / u_total
        return LayerScore(z, aji, _layer_bf1(gt, pred, z, window, radius))

    zs = range(gt.dims.nz)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(score, zs))
    else:
        rows = [score(z) for z in zs]
    return [r for r in rows if r is not None]


# ---------------------------------------------------------------------------
# centroid detection


@dataclass(frozen=True)
class CentroidStats:
    """Detection-count statistics; jaccard and dice are count-based."""

    true_positive: int
    false_positive: int
    false_negative: int
    jaccard: float
    dice: float


def centroid_detection(centroid_labels: LabelVolume, gt: LabelVolume) -> CentroidStats:
    """Score detected centroid components against gt instances.

    Each predicted component is reduced to its voxel centroid (coordinate
    mean, rounded half-up).  Walking components in ascending label order,
    a centroid landing inside a gt instance not yet claimed by an earlier
    centroid is a true positive and claims that instance; anything else
    (background, or an already-claimed instance) is a false positive.
    Unclaimed gt instances are the false negatives.
    """
    if centroid_labels.dims != gt.dims:
        raise ValueError(f"dims mismatch: {centroid_labels.dims!r} vs {gt.dims!r}")
    lbl = centroid_labels.data.ravel().astype(np.int64)
    nz = np.flatnonzero(lbl)
    tp = 0
    fp = 0
    claimed: set[int] = set()
    if nz.size:
        comp = lbl[nz]
        d = centroid_labels.dims
        xs = nz % d.nx
        ys = (nz // d.nx) % d.ny
        zs = nz // (d.nx * d.ny)
        counts = np.bincount(comp)
        sum_x = np.bincount(comp, weights=xs)
        sum_y = np.bincount(comp, weights=ys)
        sum_z = np.bincount(comp, weights=zs)
        for label in np.flatnonzero(counts):
            n = counts[label]
            cx = int(np.floor(sum_x[label] / n + 0.5))
            cy = int(np.floor(sum_y[label] / n + 0.5))
            cz = int(np.floor(sum_z[label] / n + 0.5))
            hit = int(gt.data[cz, cy, cx])
            if hit != 0 and hit not in claimed:
                claimed.add(hit)
                tp += 1
            else:
                fp += 1
    fn = gt.instance_count() - len(claimed)
    denom = tp + fp + fn
    jaccard = 1.0 if denom == 0 else tp / denom
    dice = 1.0 if denom == 0 else 2 * tp / (2 * tp + fp + fn)
    return CentroidStats(tp, fp, fn, jaccard, dice)


# ---------------------------------------------------------------------------
# class-balanced cross entropy


class DegenerateClassError(ValueError):
    """A class mask with no foreground (or no background) voxels."""


_EPS = 1e-7


def _class_weights(yt: np.ndarray, index: int) -> tuple[float, float]:
    n_fg = float(yt.sum())
    n_bg = float(yt.size - n_fg)
    if n_fg == 0.0:
        raise DegenerateClassError(f"class {index} has no foreground voxels")
    if n_bg == 0.0:
        raise DegenerateClassError(f"class {index} has no background voxels")
    return 1.0 / n_fg, 1.0 / n_bg


def _check_binary(yt: ScalarVolume, index: int) -> np.ndarray:
    arr = yt.data
    if not (((arr == 0.0) | (arr == 1.0)).all()):
        raise ValueError(f"class {index} target is not binary")
    return arr.astype(np.float64)


def weighted_bce_class_losses(
    y_true: Sequence[ScalarVolume], y_pred: Sequence[ScalarVolume]
) -> list[float]:
    """Per-class balanced cross entropy.

    For each class the foreground weight is the reciprocal foreground
    count and the background weight the reciprocal background count, so
    sparse classes are not drowned out.  Predictions are clamped to
    [1e-7, 1 - 1e-7] before the logs.
    """
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred must pair up class by class")
    if not y_true:
        raise ValueError("at least one class is required")
    losses = []
    for i, (yt_vol, yp_vol) in enumerate(zip(y_true, y_pred)):
        if yt_vol.dims != yp_vol.dims:
            raise ValueError(f"class {i}: dims mismatch")
        yt = _check_binary(yt_vol, i)
        w_fg, w_bg = _class_weights(yt, i)
        yp = np.clip(yp_vol.data.astype(np.float64), _EPS, 1.0 - _EPS)
        bce = -(yt * np.log(yp) + (1.0 - yt) * np.log(1.0 - yp))
        w = w_fg * yt + w_bg * (1.0 - yt)
        losses.append(float(np.mean(w * bce)))
    return losses


def weighted_bce_loss(
    y_true: Sequence[ScalarVolume], y_pred: Sequence[ScalarVolume]
) -> float:
    """Mean over classes of the per-class balanced cross entropy."""
    losses = weighted_bce_class_losses(y_true, y_pred)
    return float(np.mean(losses))


def weighted_bce_grad(y_true: ScalarVolume, y_pred: ScalarVolume) -> np.ndarray:
    """Gradient of one class's balanced cross entropy w.r.t. y_pred.

    Voxels pushed outside the clamp interval have zero gradient because
    the clamp flattens the loss there.
    """
    if y_true.dims != y_pred.dims:
        raise ValueError("dims mismatch")
    yt = _check_binary(y_true, 0)
    w_fg, w_bg = _class_weights(yt, 0)
    raw = y_pred.data.astype(np.float64)
    yp = np.clip(raw, _EPS, 1.0 - _EPS)
    w = w_fg * yt + w_bg * (1.0 - yt)
    grad = w * (-(yt / yp) + (1.0 - yt) / (1.0 - yp)) / yt.size
    grad[(raw < _EPS) | (raw > 1.0 - _EPS)] = 0.0
    return grad


# ---------------------------------------------------------------------------
# binary-mask overlap (distinct from the detection-count scores above)


def mask_jaccard(a: BinaryVolume, b: BinaryVolume) -> float:
    """Voxel-set Jaccard of two binary masks; 1.0 when both are empty."""
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims!r} vs {b.dims!r}")
    inter = int((a.data & b.data).sum())
    union = int((a.data | b.data).sum())
    return 1.0 if union == 0 else inter / union


def mask_dice(a: BinaryVolume, b: BinaryVolume) -> float:
    """Voxel-set Dice of two binary masks; 1.0 when both are empty."""
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims!r} vs {b.dims!r}")
    inter = int((a.data & b.data).sum())
    total = a.count_true() + b.count_true()
    return 1.0 if total == 0 else 2.0 * inter / total


# ---------------------------------------------------------------------------
# report


@dataclass
class EvaluationReport:
    """Bundle of every score for one (gt, pred) pair.

    centroid_stats is present only when centroid components were supplied;
    its jaccard/dice are detection-count based, not voxel overlaps.
    """

    aji: float
    adsc: float
    boundary_precision: float
    boundary_recall: float
    boundary_f1: float
    per_layer: list[LayerScore]
    centroid_stats: Optional[CentroidStats] = None

    def to_dict(self) -> dict:
        out = {
            "aji": self.aji,
            "adsc": self.adsc,
            "boundary_precision": self.boundary_precision,
            "boundary_recall": self.boundary_recall,
            "boundary_f1": self.boundary_f1,
            "per_layer": [
                {"z": r.z, "aji": r.aji, "bf1": r.bf1} for r in self.per_layer
            ],
        }
        if self.centroid_stats is not None:
            c = self.centroid_stats
            out["centroid_detection"] = {
                "true_positive": c.true_positive,
                "false_positive": c.false_positive,
                "false_negative": c.false_negative,
                "jaccard": c.jaccard,
                "dice": c.dice,
                "basis": "detection counts",
            }
        return out

    def write_json(self, path: Union[str, os.PathLike]) -> None:
        with open(path, "w", encoding="ascii") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_layer_csv(self, path: Union[str, os.PathLike]) -> None:
        """One `z,aji,bf1` row per scored layer."""
        with open(path, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["z", "aji", "bf1"])
            for r in self.per_layer:
                writer.writerow([r.z, repr(r.aji), repr(r.bf1)])


def evaluate(
    gt: LabelVolume,
    pred: LabelVolume,
    centroid_labels: Optional[LabelVolume] = None,
    radius: int = 2,
    window: int = 5,
    threads: int = 1,
) -> EvaluationReport:
    """Compute the full report for a predicted labeling."""
    b = boundary_scores(gt, pred, radius)
    report = EvaluationReport(
        aji=aggregated_jaccard(gt, pred),
        adsc=aggregated_dice(gt, pred),
        boundary_precision=b.precision,
        boundary_recall=b.recall,
        boundary_f1=b.f1,
        per_layer=depth_profiles(gt, pred, window=window, radius=radius, threads=threads),
    )
    if centroid_labels is not None:
        report.centroid_stats = centroid_detection(centroid_labels, gt)
    return report
