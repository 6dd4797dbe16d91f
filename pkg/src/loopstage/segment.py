"""Graph-cut foreground segmentation for tracked actors.

Per frame we solve an exact min-cut over the 8-connected pixel grid.  The
foreground unary blends a box-center spatial prior with temporal seam
consistency (the previous mask warped through backward optical flow); the
pairwise seam cost is low where the image matches the static background, so
cuts hide there.  User scribbles become hard constraints, and everything
outside the dilated bounding box is hard background.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import maximum_flow

from .assets import OrientedBox

BOX_DILATION = 8
HARD_COST = 1.0e5  # marker unary for scribbles / outside-box pixels
# the solver casts capacities to int32, so quantization picks the largest
# scale keeping the total finite capacity below 2^30 (capped for sanity)
_MAX_FLOW_SCALE = float(1 << 24)


@dataclass
class SegmentationParams:
    seg_alpha: float = 0.35     # temporal vs spatial blend
    sigma_s: Optional[float] = None  # spatial falloff; None -> half box diagonal
    # just above the worst in-box FG cost (0.5 spatial at the box corner
    # + 0.35 * 0.5 frame-0 temporal), so the box interior prefers FG
    bg_unary: float = 0.55
    pairwise_weight: float = 1.0
    dilation: float = BOX_DILATION

    def __post_init__(self):
        if not 0.0 <= self.seg_alpha <= 1.0:
            raise ValueError("seg_alpha must be in [0, 1]")


@dataclass
class ScribbleSet:
    """User corrections for one frame: pixels forced FG / BG."""

    fg: np.ndarray  # (H, W) bool
    bg: np.ndarray  # (H, W) bool

    def __post_init__(self):
        if np.any(self.fg & self.bg):
            raise ValueError("a pixel cannot be scribbled both FG and BG")

    @classmethod
    def empty(cls, height: int, width: int) -> "ScribbleSet":
        return cls(np.zeros((height, width), bool), np.zeros((height, width), bool))

    @classmethod
    def from_coords(cls, height: int, width: int, fg=(), bg=()) -> "ScribbleSet":
        s = cls.empty(height, width)
        for y, x in fg:
            s.fg[y, x] = True
        for y, x in bg:
            s.bg[y, x] = True
        if np.any(s.fg & s.bg):
            raise ValueError("a pixel cannot be scribbled both FG and BG")
        return s


def rle_encode(mask: np.ndarray) -> list[int]:
    """Run lengths of a flattened boolean mask, starting with a False run."""
    flat = mask.ravel()
    if flat.size == 0:
        return []
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return runs


def rle_decode(runs: list[int], shape) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), bool)
    pos, value = 0, False
    for run in runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape(shape)


def bilinear_sample(image: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup with coordinates clamped to the image bounds."""
    h, w = image.shape
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    img = image.astype(np.float64)
    return ((img[y0, x0] * (1 - fy) + img[y1, x0] * fy) * (1 - fx)
            + (img[y0, x1] * (1 - fy) + img[y1, x1] * fy) * fx)


def fg_unary(box: OrientedBox, prev_mask: Optional[np.ndarray],
             flow: Optional[np.ndarray], params: SegmentationParams,
             shape: tuple[int, int]) -> np.ndarray:
    """Per-pixel foreground cost map.

    Spatial term: quadratic box-center prior (the likelihood's negative log),
    zero at the center and clipped to [0, 1].  Temporal term: 1 - previous
    mask sampled at the flow-warped position (0.5 everywhere when there is
    no previous mask).
    """
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sigma = params.sigma_s
    if sigma is None:
        sigma = 0.5 * np.hypot(box.w, box.h)
    r2 = (xs - box.cx) ** 2 + (ys - box.cy) ** 2
    spatial = np.clip(r2 / (2 * sigma * sigma), 0.0, 1.0)

    if prev_mask is None:
        temporal = np.full(shape, 0.5)
    else:
        if flow is None:
            wy, wx = ys, xs
        else:
            wx = xs + flow[..., 0]
            wy = ys + flow[..., 1]
        temporal = 1.0 - bilinear_sample(prev_mask.astype(np.float64), wy, wx)

    a = params.seg_alpha
    return (1 - a) * spatial + a * temporal


def seam_pairwise(frame: np.ndarray, background: np.ndarray,
                  weight: float) -> np.ndarray:
    """Per-pixel half of the seam cost: weight * ||I(s) - B(s)||.

    The cost of cutting between neighbors s, r is the sum of their halves,
    which vanishes where the patch matches the background.
    """
    diff = frame.astype(np.float64) - background.astype(np.float64)
    return weight * np.sqrt(np.sum(diff * diff, axis=-1))


_NEIGHBOR_OFFSETS = [(0, 1), (1, 0), (1, 1), (1, -1)]  # 8-connectivity, undirected


def _unary_maps(frame, box, prev_mask, flow, scribbles, params):
    h, w = frame.shape[:2]
    fg_cost = fg_unary(box, prev_mask, flow, params, (h, w))
    bg_cost = np.full((h, w), params.bg_unary)

    inside = box.rasterize(h, w, dilate=params.dilation)
    fg_cost[~inside] = HARD_COST
    bg_cost[~inside] = 0.0
    if scribbles is not None:
        fg_cost[scribbles.fg] = 0.0
        bg_cost[scribbles.fg] = HARD_COST
        fg_cost[scribbles.bg] = HARD_COST
        bg_cost[scribbles.bg] = 0.0
    return fg_cost, bg_cost


def segment_frame(frame: np.ndarray, box: OrientedBox,
                  prev_mask: Optional[np.ndarray],
                  flow: Optional[np.ndarray],
                  scribbles: Optional[ScribbleSet],
                  background: np.ndarray,
                  params: Optional[SegmentationParams] = None) -> np.ndarray:
    """Exact min-cut FG/BG labeling of one frame; returns (H, W) bool."""
    params = params or SegmentationParams()
    h, w = frame.shape[:2]
    fg_cost, bg_cost = _unary_maps(frame, box, prev_mask, flow, scribbles, params)
    half = seam_pairwise(frame, background, params.pairwise_weight)

    n = h * w
    source, sink = n, n + 1
    idx = np.arange(n).reshape(h, w)

    # shift both unaries per pixel so capacities stay non-negative
    shift = np.maximum(0.0, -np.minimum(fg_cost, bg_cost))
    fg_c = fg_cost + shift
    bg_c = bg_cost + shift

    rows, cols, caps = [], [], []
    # t-links: cutting s->sink pays the FG cost, source->s pays the BG cost
    rows.append(np.full(n, source))
    cols.append(idx.ravel())
    caps.append(bg_c.ravel())
    rows.append(idx.ravel())
    cols.append(np.full(n, sink))
    caps.append(fg_c.ravel())
    # n-links, both directions
    for dy, dx in _NEIGHBOR_OFFSETS:
        ys, ye = max(0, -dy), h - max(0, dy)
        xs, xe = max(0, -dx), w - max(0, dx)
        a = idx[ys:ye, xs:xe].ravel()
        b = idx[ys + dy:ye + dy, xs + dx:xe + dx].ravel()
        cost = (half[ys:ye, xs:xe] + half[ys + dy:ye + dy, xs + dx:xe + dx]).ravel()
        rows += [a, b]
        cols += [b, a]
        caps += [cost, cost]

    cap = np.concatenate(caps)
    hard = cap >= HARD_COST / 2
    finite_total = float(cap[~hard].sum())
    scale = min(_MAX_FLOW_SCALE, float(1 << 30) / max(finite_total, 1.0))
    cap_int = np.round(cap * scale).astype(np.int64)
    # hard edges can never be the cheaper side of any cut
    cap_int[hard] = int(cap_int[~hard].sum()) + 1
    graph = sp.csr_matrix(
        (cap_int, (np.concatenate(rows), np.concatenate(cols))),
        shape=(n + 2, n + 2),
    )
    result = maximum_flow(graph, source, sink)

    # FG = source side of the residual graph
    residual = graph - result.flow
    residual.data = np.maximum(residual.data, 0)
    residual.eliminate_zeros()
    reachable = _reachable_from(residual, source)
    mask = reachable[:n].reshape(h, w)
    return mask


def _reachable_from(residual: sp.csr_matrix, source: int) -> np.ndarray:
    n = residual.shape[0]
    seen = np.zeros(n, bool)
    stack = [source]
    seen[source] = True
    indptr, indices, data = residual.indptr, residual.indices, residual.data
    while stack:
        u = stack.pop()
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if data[k] > 0 and not seen[v]:
                seen[v] = True
                stack.append(v)
    return seen


def labeling_energy(mask: np.ndarray, frame: np.ndarray, box: OrientedBox,
                    prev_mask, flow, scribbles, background,
                    params: Optional[SegmentationParams] = None) -> float:
    """Energy of an arbitrary labeling under the same costs the cut minimizes."""
    params = params or SegmentationParams()
    fg_cost, bg_cost = _unary_maps(frame, box, prev_mask, flow, scribbles, params)
    half = seam_pairwise(frame, background, params.pairwise_weight)
    energy = float(np.sum(np.where(mask, fg_cost, bg_cost)))
    h, w = mask.shape
    for dy, dx in _NEIGHBOR_OFFSETS:
        ys, ye = max(0, -dy), h - max(0, dy)
        xs, xe = max(0, -dx), w - max(0, dx)
        differ = mask[ys:ye, xs:xe] != mask[ys + dy:ye + dy, xs + dx:xe + dx]
        cost = half[ys:ye, xs:xe] + half[ys + dy:ye + dy, xs + dx:xe + dx]
        energy += float(cost[differ].sum())
    return energy


def segment_sequence(frames: np.ndarray, boxes: list[OrientedBox],
                     flow: Optional[np.ndarray], background: np.ndarray,
                     scribbles: Optional[dict[int, ScribbleSet]] = None,
                     params: Optional[SegmentationParams] = None,
                     start: int = 0,
                     prev_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Segment frames sequentially (each frame sees the previous mask)."""
    params = params or SegmentationParams()
    scribbles = scribbles or {}
    masks = []
    for t in range(start, len(frames)):
        flow_t = flow[t] if (flow is not None and t > 0) else None
        mask = segment_frame(frames[t], boxes[t], prev_mask, flow_t,
                             scribbles.get(t), background, params)
        masks.append(mask)
        prev_mask = mask
    return np.stack(masks)
