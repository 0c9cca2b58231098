"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the package under test, except for the plain data
classes needed to hand values across.
"""

from __future__ import annotations

from collections import deque

import numpy as np

N8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
N4 = [(-1, 0), (0, -1), (0, 1), (1, 0)]


def brute_distance(source: np.ndarray) -> np.ndarray:
    """Distance from every pixel to the nearest True pixel, all pairs."""
    h, w = source.shape
    src = np.argwhere(source).astype(np.float64)
    rr, cc = np.mgrid[0:h, 0:w]
    q = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64)
    out = np.empty(len(q))
    for lo in range(0, len(q), 512):
        d2 = ((q[lo:lo + 512, None, :] - src[None, :, :]) ** 2).sum(-1)
        out[lo:lo + 512] = np.sqrt(d2.min(axis=1))
    return out.reshape(h, w)


def flood_components(bits: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """BFS labelling, labels assigned in row-major order of first pixel."""
    nb = N8 if connectivity == 8 else N4
    h, w = bits.shape
    out = np.zeros((h, w), dtype=np.int64)
    n = 0
    for r in range(h):
        for c in range(w):
            if bits[r, c] and not out[r, c]:
                n += 1
                out[r, c] = n
                q = deque([(r, c)])
                while q:
                    y, x = q.popleft()
                    for dy, dx in nb:
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w and bits[yy, xx] and not out[yy, xx]:
                            out[yy, xx] = n
                            q.append((yy, xx))
    return out


def n_components(bits: np.ndarray, connectivity: int) -> int:
    return int(flood_components(bits, connectivity).max())


def scan_boundary(labels: np.ndarray, iid: int, exterior_counts: bool) -> set[tuple[int, int]]:
    """Pixels of ``iid`` with an 8-neighbour of another id (optionally: or off-grid)."""
    h, w = labels.shape
    out = set()
    for r in range(h):
        for c in range(w):
            if labels[r, c] != iid:
                continue
            for dy, dx in N8:
                y, x = r + dy, c + dx
                if not (0 <= y < h and 0 <= x < w):
                    if exterior_counts:
                        out.add((r, c))
                        break
                    continue
                if labels[y, x] != iid:
                    out.add((r, c))
                    break
    return out


def hole_count(bits: np.ndarray) -> int:
    """4-connected background components of the zero-padded mask, minus the outside."""
    return n_components(~np.pad(bits, 1), 4) - 1


def _hd(a: np.ndarray, b: np.ndarray) -> float:
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def _points(labels: np.ndarray, iid: int) -> np.ndarray:
    if iid == 0:
        h, w = labels.shape
        pts = [(r, c) for r in range(h) for c in range(w) if r in (0, h - 1) or c in (0, w - 1)]
    else:
        pts = sorted(scan_boundary(labels, iid, exterior_counts=True))
    return np.array(pts, dtype=np.float64)


def _largest_overlap(a: np.ndarray, i: int, b: np.ndarray) -> int:
    ids, counts = np.unique(b[(a == i) & (b > 0)], return_counts=True)
    if not len(ids):
        return 0
    best = counts.max()
    return int(ids[counts == best].min())


def _one_way(a: np.ndarray, b: np.ndarray) -> float:
    a_ids = [int(i) for i in np.unique(a) if i > 0]
    b_ids = [int(i) for i in np.unique(b) if i > 0]
    total = sum(int((a == i).sum()) for i in a_ids)
    acc = 0.0
    for i in a_ids:
        pi = _points(a, i)
        j = _largest_overlap(a, i, b)
        if j:
            h = _hd(pi, _points(b, j))
        elif b_ids:
            h = min(_hd(pi, _points(b, k)) for k in b_ids)
        else:
            h = _hd(pi, _points(b, 0))
        acc += (a == i).sum() / total * h
    return acc


def object_hausdorff(pred: np.ndarray, gt: np.ndarray) -> float:
    if not pred.any() and not gt.any():
        return 0.0
    return 0.5 * (_one_way(gt, pred) + _one_way(pred, gt))


def object_dice(pred: np.ndarray, gt: np.ndarray) -> float:
    def one(a, b):
        a_ids = [int(i) for i in np.unique(a) if i > 0]
        total = sum(int((a == i).sum()) for i in a_ids)
        acc = 0.0
        for i in a_ids:
            j = _largest_overlap(a, i, b)
            if j:
                ai, bj = a == i, b == j
                acc += ai.sum() / total * 2 * (ai & bj).sum() / (ai.sum() + bj.sum())
        return acc

    if not pred.any() and not gt.any():
        return 1.0
    return 0.5 * (one(gt, pred) + one(pred, gt))


def is_simple(nb: np.ndarray) -> bool:
    """3x3 neighbourhood: does deleting the centre keep 8-fg / 4-bg topology locally?"""
    fg = nb.astype(bool).copy()
    fg[1, 1] = False
    # foreground: the centre's 8-neighbours must form exactly one 8-component
    if n_components(fg, 8) != 1:
        return False
    # background: exactly one 4-component of background among 4-adjacent ring pixels
    bg = ~nb.astype(bool)
    bg[1, 1] = False
    lab = flood_components(bg, 4)
    touching = {lab[r, c] for r, c in [(0, 1), (1, 0), (1, 2), (2, 1)] if bg[r, c]}
    return len(touching) == 1
