"""Variance-normalized multiscale cascade detection and hit grouping.

Window evaluation semantics (shared by every code path):

* scaled window ``round(s*W) x round(s*H)``, area ``A``; every feature rect
  coordinate is scaled independently as ``round(s*v)`` (round half up);
* ``mean = S/A``, ``var = Sq/A - mean*mean`` from the upright tables;
  ``nu = sqrt(var)`` if ``var > 1`` else ``1``. The product ``nu*A`` is
  evaluated as ``sqrt(A*Sq - S*S)`` (when that integer exceeds ``A*A``) so
  it is exact and unchanged by adding a constant to every pixel;
* feature ``f = sum(weight_i * rectsum_i)`` accumulated in rect order,
  normalized ``f / (nu*A)``; stump vote is ``leaf_left`` if below the node
  threshold else ``leaf_right``; a stage passes iff its vote total is
  ``>= stage_threshold``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np

from .._accel import njit, resolve_backend
from .cascade import CascadeModel
from .integral import IntegralImage, integral_image, rect_in_bounds, rect_sum, tilted_extent


class WindowBoundsError(ValueError):
    pass


def round_half_up(v):
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class DetectionParams:
    scale_factor: float = 1.1
    min_neighbors: int = 3
    step_px: int = 1
    min_window_px: int | None = None  # None: the model window width

    def __post_init__(self):
        if not self.scale_factor > 1.0:
            raise ValueError("scale_factor must exceed 1")
        if self.min_neighbors < 0:
            raise ValueError("min_neighbors must be >= 0")
        if self.step_px < 1:
            raise ValueError("step_px must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return replace(cls(), **d)


@dataclass(frozen=True)
class DetectionBox:
    x: int
    y: int
    w: int
    h: int
    neighbors: int = 0

    def to_dict(self):
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h, "neighbors": self.neighbors}


@dataclass(frozen=True)
class WindowResult:
    accepted: bool
    exit_stage: int


# ---------------------------------------------------------------- packing


@dataclass(frozen=True, eq=False)
class _ScaledCascade:
    win_w: int
    win_h: int
    rects: np.ndarray  # (R, 5) int64: x, y, w, h, tilted
    weights: np.ndarray  # (R,)
    feat_start: np.ndarray  # (F + 1,)
    weak_feat: np.ndarray
    weak_thr: np.ndarray
    leaf_left: np.ndarray
    leaf_right: np.ndarray
    stage_start: np.ndarray  # (S + 1,)
    stage_thr: np.ndarray
    lo: tuple  # minimum (dx, dy) of any pixel touched, relative to window origin
    hi: tuple  # maximum (dx, dy)

    @property
    def area(self):
        return self.win_w * self.win_h

    @property
    def n_stages(self):
        return self.stage_thr.size


def _scaled_rect(r, s):
    return round_half_up(s * r.x), round_half_up(s * r.y), round_half_up(s * r.w), round_half_up(s * r.h)


def scale_cascade(model: CascadeModel, scale) -> _ScaledCascade:
    win_w = round_half_up(scale * model.window_w)
    win_h = round_half_up(scale * model.window_h)
    rects, weights, feat_start = [], [], [0]
    x_lo, y_lo, x_hi, y_hi = 0, 0, win_w - 1, win_h - 1
    for f in model.features:
        for r in f.rects:
            x, y, w, h = _scaled_rect(r, scale)
            rects.append((x, y, w, h, int(f.tilted)))
            weights.append(r.weight)
            if w > 0 and h > 0:
                ex = tilted_extent(x, y, w, h) if f.tilted else (x, y, x + w - 1, y + h - 1)
                x_lo, y_lo = min(x_lo, ex[0]), min(y_lo, ex[1])
                x_hi, y_hi = max(x_hi, ex[2]), max(y_hi, ex[3])
        feat_start.append(len(rects))
    weak = [w for st in model.stages for w in st.weak]
    stage_start = np.cumsum([0] + [len(st.weak) for st in model.stages])
    return _ScaledCascade(
        win_w=win_w,
        win_h=win_h,
        rects=np.array(rects, dtype=np.int64).reshape(-1, 5),
        weights=np.array(weights, dtype=np.float64),
        feat_start=np.array(feat_start, dtype=np.int64),
        weak_feat=np.array([w.feature_idx for w in weak], dtype=np.int64),
        weak_thr=np.array([w.threshold for w in weak], dtype=np.float64),
        leaf_left=np.array([w.leaf_left for w in weak], dtype=np.float64),
        leaf_right=np.array([w.leaf_right for w in weak], dtype=np.float64),
        stage_start=stage_start.astype(np.int64),
        stage_thr=np.array([st.threshold for st in model.stages], dtype=np.float64),
        lo=(x_lo, y_lo),
        hi=(x_hi, y_hi),
    )


def _norm_factor(s, sq, area):
    # nu * A with var = (A*Sq - S^2) / A^2, kept in integers until the sqrt
    d = area * sq - s * s
    return math.sqrt(d) if d > area * area else float(area)


# ---------------------------------------------------------------- reference evaluator


def eval_window(model: CascadeModel, ii: IntegralImage, x, y, scale=1.0) -> WindowResult:
    """Run the cascade on one window; scalar reference for the scan kernels."""
    sc = scale_cascade(model, scale)
    if (
        x + sc.lo[0] < 0
        or y + sc.lo[1] < 0
        or x + sc.hi[0] >= ii.width
        or y + sc.hi[1] >= ii.height
    ):
        raise WindowBoundsError(
            f"{sc.win_w}x{sc.win_h} window at ({x}, {y}) scale {scale} leaves the {ii.width}x{ii.height} image"
        )
    s = rect_sum(ii, (x, y, sc.win_w, sc.win_h))
    sq = int(ii.sqsum[y + sc.win_h, x + sc.win_w] - ii.sqsum[y + sc.win_h, x] - ii.sqsum[y, x + sc.win_w] + ii.sqsum[y, x])
    norm = _norm_factor(s, sq, sc.area)
    for st in range(sc.n_stages):
        total = 0.0
        for k in range(sc.stage_start[st], sc.stage_start[st + 1]):
            fi = sc.weak_feat[k]
            f = 0.0
            for r in range(sc.feat_start[fi], sc.feat_start[fi + 1]):
                rx, ry, rw, rh, tilted = (int(v) for v in sc.rects[r])
                f += sc.weights[r] * float(rect_sum(ii, (x + rx, y + ry, rw, rh), bool(tilted)))
            total += sc.leaf_left[k] if f / norm < sc.weak_thr[k] else sc.leaf_right[k]
        if total < sc.stage_thr[st]:
            return WindowResult(False, st)
    return WindowResult(True, sc.n_stages)


# ---------------------------------------------------------------- scan kernels


@njit(cache=True)
def _scan_numba(
    isum, isq, itil, xs, ys, win_w, win_h,
    rects, weights, feat_start, weak_feat, weak_thr, leaf_left, leaf_right, stage_start, stage_thr,
):
    n_st = stage_thr.size
    area = win_w * win_h
    out = np.empty((ys.size, xs.size), dtype=np.int64)
    for iy in range(ys.size):
        y = ys[iy]
        for ix in range(xs.size):
            x = xs[ix]
            s = isum[y + win_h, x + win_w] - isum[y + win_h, x] - isum[y, x + win_w] + isum[y, x]
            sq = isq[y + win_h, x + win_w] - isq[y + win_h, x] - isq[y, x + win_w] + isq[y, x]
            d = area * sq - s * s
            norm = np.sqrt(float(d)) if d > area * area else float(area)
            exit_at = n_st
            for st in range(n_st):
                total = 0.0
                for k in range(stage_start[st], stage_start[st + 1]):
                    fi = weak_feat[k]
                    f = 0.0
                    for r in range(feat_start[fi], feat_start[fi + 1]):
                        rx = x + rects[r, 0]
                        ry = y + rects[r, 1]
                        rw = rects[r, 2]
                        rh = rects[r, 3]
                        if rw == 0 or rh == 0:
                            v = 0
                        elif rects[r, 4] == 0:
                            v = isum[ry + rh, rx + rw] - isum[ry + rh, rx] - isum[ry, rx + rw] + isum[ry, rx]
                        else:
                            v = (
                                itil[ry + rw + rh, rx - rh + rw + 1]
                                - itil[ry + rh, rx - rh + 1]
                                - itil[ry + rw, rx + rw + 1]
                                + itil[ry, rx + 1]
                            )
                        f += weights[r] * float(v)
                    if f / norm < weak_thr[k]:
                        total += leaf_left[k]
                    else:
                        total += leaf_right[k]
                if total < stage_thr[st]:
                    exit_at = st
                    break
            out[iy, ix] = exit_at
    return out


def _box_sums(table, X, Y, w, h):
    return table[Y + h, X + w] - table[Y + h, X] - table[Y, X + w] + table[Y, X]


def _scan_numpy(ii: IntegralImage, xs, ys, sc: _ScaledCascade):
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    area = sc.area
    s = _box_sums(ii.sum, X, Y, sc.win_w, sc.win_h)
    sq = _box_sums(ii.sqsum, X, Y, sc.win_w, sc.win_h)
    d = area * sq - s * s
    norm = np.where(d > area * area, np.sqrt(np.maximum(d, 0).astype(np.float64)), float(area))

    feats = []
    for fi in range(sc.feat_start.size - 1):
        f = np.zeros(X.shape)
        for r in range(sc.feat_start[fi], sc.feat_start[fi + 1]):
            rx, ry, rw, rh, tilted = (int(v) for v in sc.rects[r])
            if rw == 0 or rh == 0:
                v = np.zeros(X.shape, dtype=np.int64)
            elif not tilted:
                v = _box_sums(ii.sum, X + rx, Y + ry, rw, rh)
            else:
                t = ii.tilted
                xx, yy = X + rx, Y + ry
                v = t[yy + rw + rh, xx - rh + rw + 1] - t[yy + rh, xx - rh + 1] - t[yy + rw, xx + rw + 1] + t[yy, xx + 1]
            f += sc.weights[r] * v.astype(np.float64)
        feats.append(f / norm)

    exit_at = np.full(X.shape, sc.n_stages, dtype=np.int64)
    alive = np.ones(X.shape, dtype=bool)
    for st in range(sc.n_stages):
        total = np.zeros(X.shape)
        for k in range(sc.stage_start[st], sc.stage_start[st + 1]):
            total += np.where(feats[sc.weak_feat[k]] < sc.weak_thr[k], sc.leaf_left[k], sc.leaf_right[k])
        fail = alive & (total < sc.stage_thr[st])
        exit_at[fail] = st
        alive &= ~fail
    return exit_at


# ---------------------------------------------------------------- multiscale


def _needs_tilted(model):
    return any(f.tilted for f in model.features)


@lru_cache(maxsize=64)
def _scan_plan(model: CascadeModel, width, height, scale_factor, min_window_px, step):
    """Per-scale packed cascades and window origins for one image size."""
    min_px = model.window_w if min_window_px is None else min_window_px
    if min_px < model.window_w:
        raise ValueError(f"min_window_px {min_px} below model window {model.window_w}")
    base = min_px / model.window_w
    plan = []
    k = 0
    while True:
        scale = base * scale_factor**k
        sc = scale_cascade(model, scale)
        if sc.win_w > width or sc.win_h > height:
            break
        xs = np.arange(-sc.lo[0] if sc.lo[0] < 0 else 0, width - sc.hi[0], step, dtype=np.int64)
        ys = np.arange(-sc.lo[1] if sc.lo[1] < 0 else 0, height - sc.hi[1], step, dtype=np.int64)
        if xs.size and ys.size:
            plan.append((scale, sc, xs, ys))
        k += 1
    return tuple(plan)


def _as_image_array(img):
    return np.asarray(getattr(img, "pixels", img))


def scan_exit_stages(model, ii, sc, xs, ys, backend=None):
    if resolve_backend(backend) == "numba":
        til = ii.tilted if ii.tilted is not None else np.zeros((1, 1), dtype=np.int64)
        return _scan_numba(
            ii.sum, ii.sqsum, til, xs, ys, sc.win_w, sc.win_h,
            sc.rects, sc.weights, sc.feat_start, sc.weak_feat, sc.weak_thr,
            sc.leaf_left, sc.leaf_right, sc.stage_start, sc.stage_thr,
        )
    return _scan_numpy(ii, xs, ys, sc)


def detect_raw(model: CascadeModel, img, params: DetectionParams | None = None, backend=None):
    """Ungrouped accepted windows, ordered by scale, then y, then x."""
    params = params or DetectionParams()
    a = _as_image_array(img)
    h, w = a.shape
    ii = integral_image(a, with_rotated=_needs_tilted(model), backend=backend)
    hits = []
    for _, sc, xs, ys in _scan_plan(model, w, h, params.scale_factor, params.min_window_px, params.step_px):
        exits = scan_exit_stages(model, ii, sc, xs, ys, backend)
        iy, ix = np.nonzero(exits == sc.n_stages)
        hits.extend(DetectionBox(int(xs[j]), int(ys[i]), sc.win_w, sc.win_h) for i, j in zip(iy, ix))
    return hits


def _similar(a: DetectionBox, b: DetectionBox):
    tol = 0.2 * min(a.w, b.w)
    ratio = a.w / b.w
    return abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol and 0.8 <= ratio <= 1.25


def _mean_half_up(total, count):
    return (2 * total + count) // (2 * count)


def _similar_to(xs, ys, ws, i, cand):
    # vectorized _similar(box i, box j) for every j in cand; same float arithmetic
    w = ws[cand]
    tol = 0.2 * np.minimum(ws[i], w)
    ratio = ws[i] / w
    return (np.abs(xs[cand] - xs[i]) <= tol) & (np.abs(ys[cand] - ys[i]) <= tol) & (ratio >= 0.8) & (ratio <= 1.25)


def group_detections(raw, min_neighbors=3):
    """Cluster similar boxes (transitive closure); clusters need > min_neighbors members.

    Components are found breadth-first with vectorized similarity tests, so
    the cost stays quadratic in numpy rather than in Python.
    """
    raw = list(raw)
    n = len(raw)
    xs = np.array([b.x for b in raw], dtype=np.float64)
    ys = np.array([b.y for b in raw], dtype=np.float64)
    ws = np.array([b.w for b in raw], dtype=np.float64)
    label = np.full(n, -1, dtype=np.int64)
    for seed in range(n):
        if label[seed] >= 0:
            continue
        label[seed] = seed
        frontier = [seed]
        while frontier:
            nxt = []
            for i in frontier:
                open_idx = np.flatnonzero(label < 0)
                if open_idx.size == 0:
                    break
                hit = open_idx[_similar_to(xs, ys, ws, i, open_idx)]
                label[hit] = seed
                nxt.extend(hit.tolist())
            frontier = nxt

    clusters = {}
    for i, b in enumerate(raw):
        clusters.setdefault(int(label[i]), []).append(b)
    out = []
    for members in clusters.values():
        n = len(members)
        if n <= min_neighbors:
            continue
        out.append(
            DetectionBox(
                _mean_half_up(sum(b.x for b in members), n),
                _mean_half_up(sum(b.y for b in members), n),
                _mean_half_up(sum(b.w for b in members), n),
                _mean_half_up(sum(b.h for b in members), n),
                n,
            )
        )
    out.sort(key=lambda b: (b.w * b.h, b.y, b.x, b.w, b.neighbors))
    return out


def detect_multiscale(model: CascadeModel, img, params: DetectionParams | None = None, roi=None, backend=None):
    """Scan all scales and positions, then group the raw hits.

    ``roi`` is an optional ``(x, y, w, h)`` restricting the scan; returned
    boxes stay in full-image coordinates.
    """
    params = params or DetectionParams()
    a = _as_image_array(img)
    ox = oy = 0
    if roi is not None:
        ox, oy, rw, rh = roi
        if not rect_in_bounds((ox, oy, rw, rh), False, a.shape[1], a.shape[0]) or rw < 1 or rh < 1:
            raise WindowBoundsError(f"roi {roi} outside {a.shape[1]}x{a.shape[0]} image")
        a = a[oy : oy + rh, ox : ox + rw]
    boxes = group_detections(detect_raw(model, a, params, backend), params.min_neighbors)
    if roi is not None:
        boxes = [replace(b, x=b.x + ox, y=b.y + oy) for b in boxes]
    H, W = _as_image_array(img).shape
    return [replace(b, w=min(b.w, W - b.x), h=min(b.h, H - b.y)) for b in boxes]


# ---------------------------------------------------------------- per-frame series


@dataclass(frozen=True)
class FrameSmile:
    idx: int
    count: int
    present: bool
    boxes: tuple = ()


@dataclass(frozen=True)
class SmileSeries:
    frames: tuple
    smile_ratio: float
    mean_count: float

    def __len__(self):
        return len(self.frames)

    def to_json(self):
        """Detection dump: one ``{"idx", "boxes"}`` object per frame."""
        return [{"idx": f.idx, "boxes": [b.to_dict() for b in f.boxes]} for f in self.frames]


def smile_presence_series(model, frames, params: DetectionParams | None = None, roi=None, backend=None) -> SmileSeries:
    recs = []
    for i, fr in enumerate(frames.frames if hasattr(frames, "frames") else frames):
        boxes = tuple(detect_multiscale(model, fr, params, roi=roi, backend=backend))
        recs.append(FrameSmile(i, len(boxes), len(boxes) >= 1, boxes))
    n = len(recs)
    ratio = sum(r.present for r in recs) / n if n else 0.0
    mean_count = sum(r.count for r in recs) / n if n else 0.0
    return SmileSeries(tuple(recs), ratio, mean_count)
