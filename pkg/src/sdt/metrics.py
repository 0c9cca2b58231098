"""Object-level evaluation: instance F1, object Dice, object Hausdorff and
split/merge counts.

Object Dice and Hausdorff use the symmetric area-weighted scheme: every
ground-truth instance is scored against the prediction it overlaps most (and
vice versa), weighted by its share of the total area, and the two directions
are averaged.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import contour, squared_distance_to
from .raster import LabelMap, RasterError

CSV_SCHEMA = "eval-v1"
CSV_COLUMNS = (
    "image", "f1", "obj_dice", "obj_hausdorff",
    "true_pos", "false_pos", "false_neg", "splits", "merges", "flags",
)
METADATA = {
    "schema": CSV_SCHEMA,
    "iou_threshold": 0.5,
    "matching": "greedy by descending IoU, IoU > threshold counts as a hit",
    "hausdorff_boundary": "instance pixels with an 8-neighbour outside the instance (grid exterior included)",
    "hausdorff_unmatched": "instance without overlap is paired with the opposing instance of smallest Hausdorff distance",
    "hausdorff_empty_opposite": "paired with the image frame",
    "split_merge_floor": 0.1,
}


def _check(pred: LabelMap, gt: LabelMap) -> None:
    if pred.shape != gt.shape:
        raise RasterError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")


def overlap_table(pred: LabelMap, gt: LabelMap) -> dict[tuple[int, int], int]:
    """{(pred_id, gt_id): shared pixel count} for every overlapping pair."""
    _check(pred, gt)
    p, g = pred.labels.ravel(), gt.labels.ravel()
    both = (p > 0) & (g > 0)
    base = int(g.max(initial=0)) + 1
    keys, counts = np.unique(p[both] * base + g[both], return_counts=True)
    return {(int(k // base), int(k % base)): int(n) for k, n in zip(keys, counts)}


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int, float], ...]  # (pred_id, gt_id, iou)
    n_pred: int
    n_gt: int

    @property
    def true_pos(self) -> int:
        return len(self.pairs)

    @property
    def false_pos(self) -> int:
        return self.n_pred - self.true_pos

    @property
    def false_neg(self) -> int:
        return self.n_gt - self.true_pos


def iou_table(pred: LabelMap, gt: LabelMap) -> dict[tuple[int, int], float]:
    ps, gs = pred.sizes(), gt.sizes()
    return {(a, b): n / (ps[a] + gs[b] - n) for (a, b), n in overlap_table(pred, gt).items()}


def match_instances(pred: LabelMap, gt: LabelMap, iou_thresh: float = 0.5) -> Matching:
    ious = iou_table(pred, gt)
    order = sorted(ious.items(), key=lambda kv: (-kv[1], kv[0][1], kv[0][0]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs = []
    for (a, b), iou in order:
        if iou <= iou_thresh:
            break
        if a in used_p or b in used_g:
            continue
        used_p.add(a)
        used_g.add(b)
        pairs.append((a, b, iou))
    return Matching(tuple(pairs), len(pred), len(gt))


def f1_score(m: Matching) -> float:
    tp, fp, fn = m.true_pos, m.false_pos, m.false_neg
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def best_ious(pred: LabelMap, gt: LabelMap) -> dict[int, float]:
    """For every ground-truth instance, its highest IoU with any prediction."""
    best = {g: 0.0 for g in gt.ids}
    for (_, b), iou in iou_table(pred, gt).items():
        best[b] = max(best[b], iou)
    return best


def _partners(a: LabelMap, b: LabelMap) -> dict[int, int]:
    """For each instance of ``a``, the instance of ``b`` it overlaps most (0 if none)."""
    best: dict[int, tuple[int, int]] = {}
    for (i, j), n in overlap_table(a, b).items():
        cur = best.get(i)
        if cur is None or n > cur[0] or (n == cur[0] and j < cur[1]):
            best[i] = (n, j)
    return {i: best[i][1] if i in best else 0 for i in a.ids}


def _one_way_dice(a: LabelMap, b: LabelMap) -> float:
    sizes_a, sizes_b = a.sizes(), b.sizes()
    total = sum(sizes_a.values())
    if total == 0:
        return 0.0
    ov = overlap_table(a, b)
    acc = 0.0
    for i, j in _partners(a, b).items():
        if j:
            acc += sizes_a[i] * (2 * ov[(i, j)] / (sizes_a[i] + sizes_b[j]))
    return acc / total


def object_dice(pred: LabelMap, gt: LabelMap) -> float:
    _check(pred, gt)
    if not len(pred) and not len(gt):
        return 1.0
    return 0.5 * (_one_way_dice(gt, pred) + _one_way_dice(pred, gt))


class _Contours:
    """Contour pixels and distance-to-contour fields, computed on demand."""

    def __init__(self, labels: LabelMap):
        self.labels = labels
        self._pts: dict[int, np.ndarray] = {}
        self._dist: dict[int, np.ndarray] = {}

    def mask(self, i: int) -> np.ndarray:
        if i == 0:
            frame = np.zeros(self.labels.shape, dtype=bool)
            frame[0], frame[-1], frame[:, 0], frame[:, -1] = True, True, True, True
            return frame
        return contour(self.labels.labels == i)

    def points(self, i: int) -> np.ndarray:
        if i not in self._pts:
            self._pts[i] = self.mask(i)
        return self._pts[i]

    def distance(self, i: int) -> np.ndarray:
        if i not in self._dist:
            self._dist[i] = np.sqrt(squared_distance_to(self.points(i)))
        return self._dist[i]


def _hausdorff(ca: _Contours, i: int, cb: _Contours, j: int) -> float:
    ab = ca.distance(i)[cb.points(j)].max()
    ba = cb.distance(j)[ca.points(i)].max()
    return float(max(ab, ba))


def _one_way_hausdorff(a: LabelMap, b: LabelMap, ca: _Contours, cb: _Contours, flags: list[str]) -> float:
    sizes = a.sizes()
    total = sum(sizes.values())
    if total == 0:
        return 0.0
    b_ids = b.ids
    acc = 0.0
    for i, j in _partners(a, b).items():
        if j:
            h = _hausdorff(ca, i, cb, j)
        elif b_ids:
            h = min(_hausdorff(ca, i, cb, k) for k in b_ids)
        else:
            h = _hausdorff(ca, i, cb, 0)
            if "hausdorff_vs_frame" not in flags:
                flags.append("hausdorff_vs_frame")
        acc += sizes[i] * h
    return acc / total


def object_hausdorff(pred: LabelMap, gt: LabelMap, flags: list[str] | None = None) -> float:
    _check(pred, gt)
    flags = [] if flags is None else flags
    if not len(pred) and not len(gt):
        flags.append("both_empty")
        return 0.0
    cp, cg = _Contours(pred), _Contours(gt)
    return 0.5 * (
        _one_way_hausdorff(gt, pred, cg, cp, flags) + _one_way_hausdorff(pred, gt, cp, cg, flags)
    )


def split_merge_counts(pred: LabelMap, gt: LabelMap, floor: float = 0.1) -> tuple[int, int]:
    """(splits, merges), ignoring overlaps below ``floor`` of the gt area."""
    gs = gt.sizes()
    by_pred: dict[int, int] = {}
    by_gt: dict[int, int] = {}
    for (p, g), n in overlap_table(pred, gt).items():
        if n >= floor * gs[g]:
            by_pred[p] = by_pred.get(p, 0) + 1
            by_gt[g] = by_gt.get(g, 0) + 1
    splits = sum(1 for n in by_gt.values() if n >= 2)
    merges = sum(1 for n in by_pred.values() if n >= 2)
    return splits, merges


@dataclass(frozen=True)
class EvalReport:
    f1: float
    obj_dice: float
    obj_hausdorff: float
    true_pos: int
    false_pos: int
    false_neg: int
    splits: int
    merges: int
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        tp, fp, fn = self.true_pos, self.false_pos, self.false_neg
        expect = 1.0 if tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)
        if abs(self.f1 - expect) > 1e-12:
            raise ValueError(f"f1={self.f1} inconsistent with TP={tp} FP={fp} FN={fn}")

    def row(self, image: str) -> dict:
        d = asdict(self)
        d["flags"] = ";".join(self.flags)
        return {"image": image, **d}


def evaluate(pred: LabelMap, gt: LabelMap, iou_thresh: float = 0.5) -> EvalReport:
    m = match_instances(pred, gt, iou_thresh)
    flags: list[str] = []
    dice = object_dice(pred, gt)
    haus = object_hausdorff(pred, gt, flags)
    if "both_empty" in flags:
        flags.append("dice_both_empty")
    splits, merges = split_merge_counts(pred, gt)
    return EvalReport(
        f1=f1_score(m),
        obj_dice=dice,
        obj_hausdorff=haus,
        true_pos=m.true_pos,
        false_pos=m.false_pos,
        false_neg=m.false_neg,
        splits=splits,
        merges=merges,
        flags=tuple(flags),
    )


def aggregate(reports: list[EvalReport]) -> EvalReport:
    """Pooled counts, F1 from the pooled counts, mean Dice and Hausdorff."""
    if not reports:
        return EvalReport(1.0, 1.0, 0.0, 0, 0, 0, 0, 0, ("empty",))
    tp = sum(r.true_pos for r in reports)
    fp = sum(r.false_pos for r in reports)
    fn = sum(r.false_neg for r in reports)
    f1 = 1.0 if tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)
    return EvalReport(
        f1=f1,
        obj_dice=float(np.mean([r.obj_dice for r in reports])),
        obj_hausdorff=float(np.mean([r.obj_hausdorff for r in reports])),
        true_pos=tp,
        false_pos=fp,
        false_neg=fn,
        splits=sum(r.splits for r in reports),
        merges=sum(r.merges for r in reports),
    )


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def write_report_csv(rows: list[tuple[str, EvalReport]], path) -> None:
    """One row per image plus a final ``ALL`` aggregate row; metadata goes to
    a JSON file next to the CSV."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for name, rep in rows + [("ALL", aggregate([r for _, r in rows]))]:
            d = rep.row(name)
            w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    path.with_suffix(".json").write_text(json.dumps(METADATA, indent=2) + "\n", encoding="utf-8")


def summary_line(rep: EvalReport) -> str:
    return f"{_fmt(rep.f1)},{_fmt(rep.obj_dice)},{_fmt(rep.obj_hausdorff)}"
