"""Frame-to-frame distances, the per-actor distance matrix and the jump graph.

Distances are mean squared color differences: channels summed, normalized by
pixel count (full frame area, or the overlap of the two dilated boxes for
tracked actors).  Tracked frames are composited onto the static background
before comparison so tracked and full-frame actors share one metric.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .assets import ActorSequence

BOX_DILATION = 8  # pixels; keeps the soft-shadow halo segmentation retains
SENTINEL_FACTOR = 10.0  # disjoint-box distance = factor * max finite distance


@dataclass
class DistanceMatrix:
    actor_id: str
    values: np.ndarray  # (T, T) float32, symmetric, zero diagonal

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class JumpGraph:
    """Per frame: the natural successor plus the n best jump targets.

    The last frame's successor is its best jump target so playback can loop.
    """

    succ: np.ndarray      # (T,) int32
    targets: np.ndarray   # (T, n) int32, sorted ascending by distance
    dists: np.ndarray     # (T, n) float32

    def __len__(self) -> int:
        return len(self.succ)

    @property
    def n_candidates(self) -> int:
        return self.targets.shape[1]

    def out_edges(self, t: int) -> np.ndarray:
        """Distinct reachable frames from t (successor first)."""
        edges = [int(self.succ[t])]
        for tgt in self.targets[t]:
            if tgt != self.succ[t]:
                edges.append(int(tgt))
        return np.array(edges, dtype=np.int32)

    def median_jump_distance(self) -> float:
        nz = self.dists[self.dists > 0]
        finite = nz[np.isfinite(nz)]
        return float(np.median(finite)) if len(finite) else 1.0


def composite_on_background(actor: ActorSequence, t: int,
                            background: np.ndarray) -> np.ndarray:
    """Place frame t's segmented patch onto the static background."""
    if actor.kind == "full-frame" or actor.masks is None:
        return actor.source.frames[t]
    out = background.copy()
    m = actor.masks[t]
    out[m] = actor.source.frames[t][m]
    return out


def frame_distance(actor: ActorSequence, t: int, t2: int,
                   background: Optional[np.ndarray] = None) -> float:
    """Squared color distance between frames t and t2 of one actor.

    Returns inf when the two (dilated) boxes of a tracked actor do not
    overlap; build_distance_matrix replaces such entries with a finite
    sentinel.
    """
    if t == t2:
        return 0.0
    if actor.kind == "full-frame":
        a = actor.source.frames[t].astype(np.float64)
        b = actor.source.frames[t2].astype(np.float64)
        n_o = a.shape[0] * a.shape[1]
        return float(np.sum((a - b) ** 2) / n_o)

    h, w = actor.source.height, actor.source.width
    box_a = actor.boxes[t].rasterize(h, w, dilate=BOX_DILATION)
    box_b = actor.boxes[t2].rasterize(h, w, dilate=BOX_DILATION)
    n_o = int(np.count_nonzero(box_a & box_b))
    if n_o == 0:
        return float("inf")
    union = box_a | box_b
    a = composite_on_background(actor, t, background).astype(np.float64)
    b = composite_on_background(actor, t2, background).astype(np.float64)
    diff = (a - b) ** 2
    return float(diff[union].sum() / n_o)


def build_distance_matrix(actor: ActorSequence,
                          background: Optional[np.ndarray] = None) -> DistanceMatrix:
    """All-pairs frame distances; disjoint-box pairs get a 10x-max sentinel."""
    n = actor.n_frames
    if actor.kind == "full-frame":
        flat = actor.source.frames.reshape(n, -1).astype(np.float64)
        sq = np.einsum("ij,ij->i", flat, flat)
        gram = flat @ flat.T
        d = sq[:, None] + sq[None, :] - 2 * gram
        d = np.maximum(d, 0) / (actor.source.height * actor.source.width)
    else:
        d = np.zeros((n, n))
        for t in range(n):
            for t2 in range(t + 1, n):
                d[t, t2] = d[t2, t] = frame_distance(actor, t, t2, background)
        finite = d[np.isfinite(d)]
        if np.any(~np.isfinite(d)):
            sentinel = SENTINEL_FACTOR * (finite.max() if finite.size else 1.0)
            d[~np.isfinite(d)] = sentinel
    np.fill_diagonal(d, 0.0)
    d = (d + d.T) / 2  # exact symmetry after float roundoff
    return DistanceMatrix(actor_id=actor.id, values=d.astype(np.float32))


def build_jump_graph(matrix: DistanceMatrix, n: int) -> JumpGraph:
    """Sparsify the matrix to successor + n lowest-distance targets per frame."""
    d = matrix.values
    t_count = len(d)
    n = min(n, t_count - 1)
    # stable argsort on distance: ties resolved toward lower frame index
    order = np.argsort(d, axis=1, kind="stable")
    targets = np.empty((t_count, n), dtype=np.int32)
    dists = np.empty((t_count, n), dtype=np.float32)
    for t in range(t_count):
        cand = order[t][order[t] != t][:n]
        targets[t] = cand
        dists[t] = d[t, cand]
    succ = np.arange(1, t_count + 1, dtype=np.int32)
    succ[-1] = targets[t_count - 1, 0]  # loop: best jump target
    return JumpGraph(succ=succ, targets=targets, dists=dists)


# ---------------------------------------------------------------------------
# cache file: header (magic, actor hash, frame count, candidate count)
# + packed float32 matrix + jump graph arrays

_MAGIC = b"LSDM"


def save_metric_cache(path, actor_hash: str, matrix: DistanceMatrix,
                      graph: JumpGraph):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t, n = graph.targets.shape
    digest = bytes.fromhex(actor_hash)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<B", len(digest)))
        f.write(digest)
        f.write(struct.pack("<II", t, n))
        f.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(graph.succ, dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(graph.targets, dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(graph.dists, dtype="<f4").tobytes())


def load_metric_cache(path, actor_id: str,
                      expected_hash: Optional[str] = None):
    """Returns (DistanceMatrix, JumpGraph) or None on miss/stale hash."""
    path = Path(path)
    if not path.exists():
        return None
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        return None
    off = 4
    (hlen,) = struct.unpack_from("<B", raw, off)
    off += 1
    digest = raw[off:off + hlen].hex()
    off += hlen
    if expected_hash is not None and digest != expected_hash:
        return None
    t, n = struct.unpack_from("<II", raw, off)
    off += 8
    values = np.frombuffer(raw, dtype="<f4", count=t * t, offset=off)
    off += t * t * 4
    succ = np.frombuffer(raw, dtype="<i4", count=t, offset=off)
    off += t * 4
    targets = np.frombuffer(raw, dtype="<i4", count=t * n, offset=off)
    off += t * n * 4
    dists = np.frombuffer(raw, dtype="<f4", count=t * n, offset=off)
    matrix = DistanceMatrix(actor_id=actor_id,
                            values=values.reshape(t, t).copy())
    graph = JumpGraph(succ=succ.copy(), targets=targets.reshape(t, n).copy(),
                      dists=dists.reshape(t, n).copy())
    return matrix, graph
