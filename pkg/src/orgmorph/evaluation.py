"""Detection-quality scoring: IoU matching and mAP over IoU thresholds.

AP at one threshold is TP / (TP + FP + FN) under greedy one-to-one IoU
matching (the cell-segmentation benchmark convention; pipeline outputs
carry no confidence scores, so a PR-curve AP is undefined here). mAP
averages AP over thresholds 0.50, 0.55, ..., 0.95.
"""

from __future__ import annotations

from dataclasses import dataclass

from .postprocess import InstanceMask

# COCO-style threshold grid; exact decimal doubles so inclusive >= matching
# is stable at boundary IoU values such as 0.6.
IOU_THRESHOLDS = tuple((50 + 5 * i) / 100 for i in range(10))


@dataclass(frozen=True)
class DetectionMatch:
    pred_id: str
    gt_id: str
    iou: float


@dataclass(frozen=True)
class ApResult:
    threshold: float
    true_positives: int
    false_positives: int
    false_negatives: int
    ap: float


def iou(a: frozenset, b: frozenset) -> float:
    """|a n b| / |a u b|; 0 when both sets are empty."""
    if not a and not b:
        return 0.0
    inter = len(a & b)
    if inter == 0:
        return 0.0
    return inter / (len(a) + len(b) - inter)


def match_instances(
    pred: list[InstanceMask], gt: list[InstanceMask], threshold: float
) -> list[DetectionMatch]:
    """Greedy one-to-one matching in descending IoU order.

    Pairs below the threshold never match; IoU ties break lexicographically
    by (pred_id, gt_id).
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    candidates = []
    for p in pred:
        for g in gt:
            overlap = iou(p.pixels, g.pixels)
            if overlap >= threshold:
                candidates.append((overlap, p.global_id, g.global_id))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    matched_pred: set[str] = set()
    matched_gt: set[str] = set()
    matches = []
    for overlap, pid, gid in candidates:
        if pid in matched_pred or gid in matched_gt:
            continue
        matched_pred.add(pid)
        matched_gt.add(gid)
        matches.append(DetectionMatch(pred_id=pid, gt_id=gid, iou=overlap))
    return matches


def average_precision_at(
    pred: list[InstanceMask], gt: list[InstanceMask], threshold: float
) -> ApResult:
    matches = match_instances(pred, gt, threshold)
    tp = len(matches)
    fp = len(pred) - tp
    fn = len(gt) - tp
    denom = tp + fp + fn
    ap = tp / denom if denom > 0 else 1.0
    return ApResult(
        threshold=threshold,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        ap=ap,
    )


def mean_average_precision(pred: list[InstanceMask], gt: list[InstanceMask]) -> float:
    results = [average_precision_at(pred, gt, t) for t in IOU_THRESHOLDS]
    return sum(r.ap for r in results) / len(results)


def globalized(instances: list[InstanceMask], origin_x: int, origin_y: int) -> list[InstanceMask]:
    """Shift instances into slide-global pixel coordinates so detections
    from different tiles cannot collide during matching."""
    out = []
    for inst in instances:
        min_x, min_y, max_x, max_y = inst.bbox
        out.append(
            InstanceMask(
                global_id=inst.global_id,
                tile_id=inst.tile_id,
                local_label=inst.local_label,
                bbox=(min_x + origin_x, min_y + origin_y, max_x + origin_x, max_y + origin_y),
                pixels=frozenset((x + origin_x, y + origin_y) for x, y in inst.pixels),
            )
        )
    return out
