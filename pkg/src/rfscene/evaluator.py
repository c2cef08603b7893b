"""Detection scoring: IoU, per-class AP, mAP50, mAP50-95, confusion matrix.

AP uses 101-point interpolation over the confidence-sorted PR sweep and
the IoU grid 0.50:0.05:0.95. Matching for AP is per class and greedy by
descending confidence; the confusion matrix instead matches boxes across
classes so misclassifications land off the diagonal, with a background
row/column collecting misses and false alarms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset_io import BBox, LabelParseError, read_label_file

IOU_GRID = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))
_RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass
class Detection:
    """One predicted box with class and confidence."""

    class_id: int
    confidence: float
    box: BBox


@dataclass
class EvalReport:
    """Per-class AP at each IoU threshold plus summary metrics and counts."""

    iou_thresholds: tuple[float, ...]
    per_class_ap: dict[int, dict[float, float | None]]
    map50: float
    map50_95: float
    counts: dict[int, dict[str, int]]          # TP/FP/FN at IoU 0.50
    confusion: np.ndarray                      # (C+1)x(C+1) raw counts
    confusion_normalized: np.ndarray
    confusion_conf_thr: float
    confusion_iou_thr: float
    class_names: list[str] | None = None

    def to_json(self) -> str:
        data = {
            "map50": self.map50,
            "map50_95": self.map50_95,
            "iou_thresholds": list(self.iou_thresholds),
            "per_class_ap": {
                str(c): {f"{t:.2f}": ap for t, ap in by_thr.items()}
                for c, by_thr in self.per_class_ap.items()
            },
            "counts": {str(c): v for c, v in self.counts.items()},
            "confusion": self.confusion.tolist(),
            "confusion_normalized": self.confusion_normalized.tolist(),
            "confusion_conf_thr": self.confusion_conf_thr,
            "confusion_iou_thr": self.confusion_iou_thr,
            "class_names": self.class_names,
        }
        return json.dumps(data, indent=2) + "\n"


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two center-format XYWH boxes."""
    al, at, ar, ab = a.corners()
    bl, bt, br, bb = b.corners()
    iw = min(ar, br) - max(al, bl)
    ih = min(ab, bb) - max(at, bt)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area() + b.area() - inter
    if union <= 0:
        return 0.0
    return inter / union


def greedy_match(preds: Sequence[Detection], gts: Sequence[BBox],
                 iou_thr: float) -> list[int]:
    """Match predictions to ground truth per class, best IoU first.

    Predictions are taken in descending-confidence order (stable on ties);
    each matches the unmatched same-class GT with the highest IoU at or
    above the threshold (GT index breaks IoU ties). Returns, for each
    prediction in the original order, the matched GT index or -1.
    """
    order = sorted(range(len(preds)),
                   key=lambda k: (-preds[k].confidence, k))
    matched_gt: set[int] = set()
    result = [-1] * len(preds)
    for k in order:
        pred = preds[k]
        best_iou = 0.0
        best_g = -1
        for g, gt in enumerate(gts):
            if g in matched_gt or gt.class_id != pred.class_id:
                continue
            v = iou(pred.box, gt)
            if v >= iou_thr and v > best_iou:
                best_iou = v
                best_g = g
        if best_g >= 0:
            matched_gt.add(best_g)
            result[k] = best_g
    return result


def average_precision(tp_flags: Sequence[bool], n_gt: int) -> float | None:
    """101-point interpolated AP from confidence-ordered TP/FP flags.

    Returns None when the class has no ground truth (undefined, excluded
    from class means).
    """
    if n_gt == 0:
        return None
    if len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(tp_flags, dtype=np.float64))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # Highest precision at recall >= r, via a reversed running maximum.
    prec_desc = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_GRID, side="left")
    ap = 0.0
    for i in idx:
        if i < len(prec_desc):
            ap += prec_desc[i]
    return ap / len(_RECALL_GRID)


def read_prediction_file(path: Path) -> list[Detection]:
    """Parse `class_id confidence x y w h` lines."""
    out = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(),
                                   start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise LabelParseError(path, line_no,
                                  f"expected 6 fields, got {len(parts)}")
        try:
            out.append(Detection(
                class_id=int(parts[0]),
                confidence=float(parts[1]),
                box=BBox(class_id=int(parts[0]), x=float(parts[2]),
                         y=float(parts[3]), w=float(parts[4]),
                         h=float(parts[5]))))
        except ValueError:
            raise LabelParseError(path, line_no, "malformed number") from None
    return out


def load_eval_pair(pred_dir: Path | str, gt_dir: Path | str,
                   ) -> dict[str, tuple[list[Detection], list[BBox]]]:
    """Load per-image (predictions, ground truth) keyed by file stem.

    Every stem present in either directory is included; a missing
    prediction file means zero predictions for that image.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    stems = sorted({p.stem for p in gt_dir.glob("*.txt")}
                   | {p.stem for p in pred_dir.glob("*.txt")})
    out = {}
    for stem in stems:
        gt_path = gt_dir / f"{stem}.txt"
        pred_path = pred_dir / f"{stem}.txt"
        gts = read_label_file(gt_path) if gt_path.exists() else []
        preds = read_prediction_file(pred_path) if pred_path.exists() else []
        out[stem] = (preds, gts)
    return out


def _class_ids(images: dict[str, tuple[list[Detection], list[BBox]]],
               num_classes: int | None) -> list[int]:
    if num_classes is not None:
        return list(range(num_classes))
    ids: set[int] = set()
    for preds, gts in images.values():
        ids.update(p.class_id for p in preds)
        ids.update(g.class_id for g in gts)
    return sorted(ids)


def _ap_by_class(images: dict[str, tuple[list[Detection], list[BBox]]],
                 classes: Iterable[int], iou_thr: float,
                 ) -> tuple[dict[int, float | None], dict[int, dict[str, int]]]:
    per_class: dict[int, float | None] = {}
    counts: dict[int, dict[str, int]] = {}
    for c in classes:
        records: list[tuple[float, str, int, bool]] = []
        n_gt = 0
        for stem in sorted(images):
            preds, gts = images[stem]
            cls_idx = [k for k, p in enumerate(preds) if p.class_id == c]
            cls_preds = [preds[k] for k in cls_idx]
            cls_gts = [g for g in gts if g.class_id == c]
            n_gt += len(cls_gts)
            matches = greedy_match(cls_preds, cls_gts, iou_thr)
            for k, m in enumerate(matches):
                records.append((cls_preds[k].confidence, stem, k, m >= 0))
        records.sort(key=lambda r: (-r[0], r[1], r[2]))
        flags = [r[3] for r in records]
        per_class[c] = average_precision(flags, n_gt)
        tp = sum(flags)
        counts[c] = {"tp": tp, "fp": len(flags) - tp, "fn": n_gt - tp}
    return per_class, counts


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def confusion_matrix(images: dict[str, tuple[list[Detection], list[BBox]]],
                     num_classes: int, conf_thr: float = 0.25,
                     iou_thr: float = 0.45) -> np.ndarray:
    """Class-agnostic greedy box matching folded into a (C+1)^2 matrix.

    Rows are predicted classes, columns ground-truth classes, index C is
    background: unmatched GTs land on (background, gt_class), unmatched
    predictions above the confidence threshold on (pred_class, background).
    """
    m = np.zeros((num_classes + 1, num_classes + 1), dtype=np.int64)
    bg = num_classes
    for preds, gts in images.values():
        strong = [p for p in preds if p.confidence >= conf_thr]
        order = sorted(range(len(strong)),
                       key=lambda k: (-strong[k].confidence, k))
        matched_gt: set[int] = set()
        matched_pred: set[int] = set()
        for k in order:
            best_iou, best_g = 0.0, -1
            for g, gt in enumerate(gts):
                if g in matched_gt:
                    continue
                v = iou(strong[k].box, gt)
                if v >= iou_thr and v > best_iou:
                    best_iou, best_g = v, g
            if best_g >= 0:
                matched_gt.add(best_g)
                matched_pred.add(k)
                m[strong[k].class_id, gts[best_g].class_id] += 1
        for g, gt in enumerate(gts):
            if g not in matched_gt:
                m[bg, gt.class_id] += 1
        for k, p in enumerate(strong):
            if k not in matched_pred:
                m[p.class_id, bg] += 1
    return m


def normalize_confusion(m: np.ndarray) -> np.ndarray:
    """Divide each column by its sum; all-zero columns stay zero."""
    m = m.astype(np.float64)
    sums = m.sum(axis=0, keepdims=True)
    out = np.divide(m, sums, out=np.zeros_like(m), where=sums > 0)
    return out


def map_metrics(pred_dir: Path | str, gt_dir: Path | str,
                num_classes: int | None = None,
                class_names: list[str] | None = None,
                conf_thr: float = 0.25,
                confusion_iou_thr: float = 0.45) -> EvalReport:
    """Score a prediction directory against a label directory."""
    images = load_eval_pair(pred_dir, gt_dir)
    if class_names is not None and num_classes is None:
        num_classes = len(class_names)
    classes = _class_ids(images, num_classes)

    per_class_ap: dict[int, dict[float, float | None]] = {c: {} for c in classes}
    counts: dict[int, dict[str, int]] = {}
    per_thr_map: list[float] = []
    for thr in IOU_GRID:
        ap_by_c, counts_by_c = _ap_by_class(images, classes, thr)
        for c in classes:
            per_class_ap[c][thr] = ap_by_c[c]
        per_thr_map.append(_mean([v for v in ap_by_c.values()
                                  if v is not None]))
        if thr == 0.50:
            counts = counts_by_c

    n_conf = (num_classes if num_classes is not None
              else (max(classes) + 1 if classes else 0))
    raw = confusion_matrix(images, n_conf, conf_thr, confusion_iou_thr)
    return EvalReport(
        iou_thresholds=IOU_GRID,
        per_class_ap=per_class_ap,
        map50=per_thr_map[0] if per_thr_map else 0.0,
        map50_95=_mean(per_thr_map),
        counts=counts,
        confusion=raw,
        confusion_normalized=normalize_confusion(raw),
        confusion_conf_thr=conf_thr,
        confusion_iou_thr=confusion_iou_thr,
        class_names=class_names,
    )
