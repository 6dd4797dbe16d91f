"""Real-time frame-sequence synthesis by per-row dynamic programming.

The output is a D-row by K-column grid; each row is a layer showing one
actor and each cell holds an input frame index.  Rows are solved one at a
time: the action-match and compatibility costs form the unary term, the
transition cost the pairwise term, and an exact DP (restricted to the jump
graph's edges) minimizes their sum.  Compatibility against already-solved
rows is baked into the unary, so a single sweep over the rows suffices for
live use.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .compat import PairCompatibility
from .metric import DistanceMatrix, JumpGraph


@dataclass
class SynthesisParams:
    synth_alpha: float = 0.5   # responsiveness vs looping quality
    beta: float = 0.5          # compatibility vs transition quality
    sigma_a: float = 0.5
    sigma_t: Optional[float] = None  # None -> per-layer median jump distance
    compression: int = 1
    ramp_len: int = 8
    literal_transition: bool = False  # compare t_prev itself, not its successor
    iterations: int = 1

    def __post_init__(self):
        if not 0.0 <= self.synth_alpha <= 1.0:
            raise ValueError("synth_alpha must be in [0, 1]")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if self.compression < 1:
            raise ValueError("compression stride must be >= 1")


# ---------------------------------------------------------------------------
# cost terms


def action_cost(a_vec: np.ndarray, r_vec: np.ndarray, sigma_a: float) -> float:
    """Mismatch between a frame's action vector and the requested one."""
    a_vec = np.asarray(a_vec, dtype=np.float64)
    r_vec = np.asarray(r_vec, dtype=np.float64)
    if a_vec.shape != r_vec.shape:
        raise ValueError(f"length mismatch: {a_vec.shape} vs {r_vec.shape}")
    d = a_vec - r_vec
    return float(d @ d) / (2.0 * sigma_a * sigma_a)


def transition_cost(t_prev: int, t_next: int, matrix: DistanceMatrix,
                    sigma_t: float, literal: bool = False) -> float:
    """Cost of showing t_next right after t_prev.

    By default the natural successor of t_prev is compared against t_next,
    so continuous playback costs exp(0) and freezing is penalized; the
    literal flag compares t_prev itself instead.
    """
    t = len(matrix)
    ref = t_prev if literal else min(t_prev + 1, t - 1)
    d = float(matrix.values[ref, t_next])
    with np.errstate(over="ignore"):
        return float(np.exp(d / (sigma_t * sigma_t)))


def compatibility_cost(pair: PairCompatibility, t_i: int, t_j: int) -> float:
    return pair.chi(t_i, t_j)


def smooth_step(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return 3 * u * u - 2 * u * u * u


def ramp_requests(start_vec: np.ndarray, target: int,
                  ramp_len: int) -> np.ndarray:
    """Smooth-step interpolation from start_vec to one-hot(target).

    Returns (ramp_len + 1, l) rows for u = 0/ramp_len .. ramp_len/ramp_len;
    after the ramp, requests hold at one-hot(target).
    """
    start_vec = np.asarray(start_vec, dtype=np.float64)
    l = len(start_vec)
    end = np.zeros(l)
    end[target] = 1.0
    w = smooth_step(np.arange(ramp_len + 1) / ramp_len)[:, None]
    return (1 - w) * start_vec[None, :] + w * end[None, :]


class RequestTrack:
    """Mutable per-layer request timeline; triggers splice in ramps."""

    def __init__(self, n_actions: int, initial: int = 0):
        self.n_actions = n_actions
        self.hold = np.zeros(n_actions)
        self.hold[initial] = 1.0
        self.values = np.zeros((0, n_actions))

    def ensure(self, length: int):
        if len(self.values) < length:
            pad = np.tile(self.hold, (length - len(self.values), 1))
            self.values = np.vstack([self.values, pad])

    def vector_at(self, column: int) -> np.ndarray:
        if column < len(self.values):
            return self.values[column].copy()
        return self.hold.copy()

    def trigger(self, column: int, target: int, ramp_len: int):
        """Ramp toward `target` starting at `column` (restarts mid-ramp)."""
        start = self.vector_at(column)
        ramp = ramp_requests(start, target, ramp_len)
        self.ensure(column)
        self.values = np.vstack([self.values[:column], ramp])
        self.hold = np.zeros(self.n_actions)
        self.hold[target] = 1.0

    def window(self, start: int, count: int) -> np.ndarray:
        self.ensure(start + count)
        return self.values[start:start + count].copy()


# ---------------------------------------------------------------------------
# DP kernels


@njit(cache=True)
def _dp_backward(edges, pair_cost, unary):
    k_count, t_count = unary.shape
    m = edges.shape[1]
    v = np.empty((k_count, t_count))
    for t in range(t_count):
        v[k_count - 1, t] = unary[k_count - 1, t]
    for k in range(k_count - 2, -1, -1):
        for t in range(t_count):
            best = np.inf
            for j in range(m):
                c = pair_cost[t, j] + v[k + 1, edges[t, j]]
                if c < best:
                    best = c
            v[k, t] = unary[k, t] + best
    return v


@njit(cache=True)
def _dp_forward(edges, pair_cost, v, first_labels, first_costs):
    k_count = v.shape[0]
    m = edges.shape[1]
    out = np.empty(k_count, np.int64)
    best = np.inf
    best_t = -1
    for j in range(first_labels.shape[0]):
        t = first_labels[j]
        c = first_costs[j] + v[0, t]
        if c < best or (c == best and t < best_t):
            best = c
            best_t = t
    out[0] = best_t
    objective = best
    for k in range(1, k_count):
        prev = out[k - 1]
        best = np.inf
        best_t = -1
        for j in range(m):
            t = edges[prev, j]
            c = pair_cost[prev, j] + v[k, t]
            if c < best or (c == best and t < best_t):
                best = c
                best_t = t
        out[k] = best_t
    return out, objective


# ---------------------------------------------------------------------------
# per-layer synthesis state


class LayerSynth:
    """Precomputed DP inputs for one output layer."""

    def __init__(self, actor_id: str, field: np.ndarray,
                 matrix: DistanceMatrix, graph: Optional[JumpGraph] = None,
                 sigma_t: Optional[float] = None,
                 literal_transition: bool = False):
        self.actor_id = actor_id
        self.field = np.asarray(field, dtype=np.float64)
        self.matrix = matrix
        self.graph = graph
        self.literal_transition = literal_transition
        t = len(matrix)
        self.n_frames = t
        d = matrix.values.astype(np.float64)

        if graph is None:
            self.edges = np.tile(np.arange(t, dtype=np.int32), (t, 1))
            self.succ = np.minimum(np.arange(1, t + 1), t - 1).astype(np.int32)
        else:
            self.edges = np.concatenate(
                [graph.succ[:, None], graph.targets], axis=1
            ).astype(np.int32)
            self.succ = graph.succ.astype(np.int32)

        if sigma_t is None:
            # sigma_t^2 lives on the distance scale: median jump distance
            if graph is not None:
                med = graph.median_jump_distance() or 1.0
            else:
                nz = d[d > 0]
                med = float(np.median(nz)) if nz.size else 1.0
            sigma_t = float(np.sqrt(med))
        self.sigma_t = float(sigma_t)

        # cost-side successor: t+1, last frame compares against itself
        cost_succ = np.minimum(np.arange(t) + 1, t - 1)
        ref = np.arange(t) if literal_transition else cost_succ
        with np.errstate(over="ignore"):
            self.trans_raw = np.exp(
                d[ref[:, None], self.edges] / (self.sigma_t ** 2)
            )
        self.current_frame: Optional[int] = None

    def action_unary(self, requests: np.ndarray, sigma_a: float) -> np.ndarray:
        """(K, T) matrix of E_A for every column/frame combination."""
        a = self.field
        r = np.asarray(requests, dtype=np.float64)
        if r.shape[1] != a.shape[1]:
            raise ValueError(
                f"request length {r.shape[1]} != action count {a.shape[1]}"
            )
        sq_a = np.einsum("ij,ij->i", a, a)
        sq_r = np.einsum("ij,ij->i", r, r)
        d2 = sq_r[:, None] + sq_a[None, :] - 2.0 * (r @ a.T)
        return np.maximum(d2, 0.0) / (2.0 * sigma_a * sigma_a)

    def first_column(self, anchor: Optional[int], weight: float):
        """Allowed labels for column 1 plus their incoming transition costs."""
        if anchor is None:
            labels = np.arange(self.n_frames, dtype=np.int32)
            costs = np.zeros(self.n_frames)
        else:
            labels = self.edges[anchor].astype(np.int32)
            costs = weight * self.trans_raw[anchor]
        return labels, np.asarray(costs, dtype=np.float64)


def synthesize_row(layer: LayerSynth, requests: np.ndarray,
                   params: SynthesisParams,
                   compat_unary: Optional[np.ndarray] = None,
                   anchor: Optional[int] = None):
    """Exact minimizer of one row's energy over K columns.

    compat_unary is the (K, T) sum of chi against the fixed partner rows;
    anchor is the frame shown just before column 1.  Returns (indices,
    objective); ties resolve to the lexicographically smallest optimal
    sequence.
    """
    alpha, beta = params.synth_alpha, params.beta
    k_count = len(requests)
    unary = alpha * layer.action_unary(requests, params.sigma_a)
    if compat_unary is not None:
        unary = unary + (1 - alpha) * beta * np.asarray(compat_unary,
                                                        dtype=np.float64)
    w_pair = (1 - alpha) * (1 - beta)
    pair_cost = w_pair * layer.trans_raw
    first_labels, first_costs = layer.first_column(anchor, w_pair)
    v = _dp_backward(layer.edges, pair_cost, unary)
    indices, objective = _dp_forward(layer.edges, pair_cost, v,
                                     first_labels, first_costs)
    return indices, float(objective)


def compress_synthesize(layer: LayerSynth, requests: np.ndarray,
                        params: SynthesisParams,
                        compat_unary: Optional[np.ndarray] = None,
                        anchor: Optional[int] = None):
    """Strided DP: optimize every c-th column over every c-th input frame,
    then fill the gaps with consecutive successors of each anchor frame."""
    c = params.compression
    if c <= 1:
        return synthesize_row(layer, requests, params, compat_unary, anchor)
    k_count = len(requests)
    t = layer.n_frames
    anchor_cols = np.arange(0, k_count, c)
    sub_frames = np.arange(0, t, c)
    s = len(sub_frames)

    # successor advanced c steps along the playback chain
    succ_pow = np.arange(t)
    chain = layer.succ
    for _ in range(c):
        succ_pow = chain[succ_pow]
    d = layer.matrix.values.astype(np.float64)
    ref = sub_frames if params.literal_transition else succ_pow[sub_frames]
    with np.errstate(over="ignore"):
        trans_sub = np.exp(d[np.ix_(ref, sub_frames)] / (layer.sigma_t ** 2))

    alpha, beta = params.synth_alpha, params.beta
    unary_full = alpha * layer.action_unary(requests[anchor_cols],
                                            params.sigma_a)
    if compat_unary is not None:
        unary_full = unary_full + (1 - alpha) * beta * np.asarray(
            compat_unary, dtype=np.float64)[anchor_cols]
    unary_sub = np.ascontiguousarray(unary_full[:, sub_frames])

    w_pair = (1 - alpha) * (1 - beta)
    pair_cost = w_pair * trans_sub
    edges_sub = np.tile(np.arange(s, dtype=np.int32), (s, 1))
    if anchor is None:
        first_labels = np.arange(s, dtype=np.int32)
        first_costs = np.zeros(s)
    else:
        ref0 = anchor if params.literal_transition else int(layer.succ[anchor])
        first_labels = np.arange(s, dtype=np.int32)
        with np.errstate(over="ignore"):
            first_costs = w_pair * np.exp(
                d[ref0, sub_frames] / (layer.sigma_t ** 2))
    v = _dp_backward(edges_sub, pair_cost, unary_sub)
    sub_idx, objective = _dp_forward(edges_sub, pair_cost, v,
                                     first_labels,
                                     np.asarray(first_costs, np.float64))

    out = np.empty(k_count, dtype=np.int64)
    for i, k in enumerate(anchor_cols):
        frame = int(sub_frames[sub_idx[i]])
        out[k] = frame
        for fill in range(k + 1, min(k + c, k_count)):
            frame = int(chain[frame])
            out[fill] = frame
    return out, float(objective)


# ---------------------------------------------------------------------------
# multi-row engine


class CompatLookup:
    """Oriented chi access over a set of per-pair compatibility models."""

    def __init__(self, pairs: Optional[list[PairCompatibility]] = None):
        self.pairs: dict[tuple[str, str], PairCompatibility] = {}
        for p in pairs or []:
            self.add(p)

    def add(self, pair: PairCompatibility):
        self.pairs[(pair.actor_i, pair.actor_j)] = pair

    def get(self, actor_a: str, actor_b: str):
        """Returns (pair, flipped) or None; flipped means actor_a is side j."""
        if (actor_a, actor_b) in self.pairs:
            return self.pairs[(actor_a, actor_b)], False
        if (actor_b, actor_a) in self.pairs:
            return self.pairs[(actor_b, actor_a)], True
        return None

    def chi(self, actor_a: str, t_a: int, actor_b: str, t_b: int) -> float:
        found = self.get(actor_a, actor_b)
        if found is None:
            return 1.0
        pair, flipped = found
        return pair.chi(t_b, t_a) if flipped else pair.chi(t_a, t_b)

    def chi_column(self, actor_a: str, actor_b: str, t_b: int) -> np.ndarray:
        """chi(t, t_b) for all frames t of actor_a; None if no model."""
        found = self.get(actor_a, actor_b)
        if found is None:
            return None
        pair, flipped = found
        if flipped:
            return pair.side_j.memberships @ (
                pair.b.T @ pair.side_i.memberships[t_b])
        return pair.chi_column(t_b)


class SynthesisEngine:
    """Owns per-layer synthesis state; appends blocks of output columns."""

    def __init__(self, layers: list[LayerSynth], params: SynthesisParams,
                 compat: Optional[CompatLookup] = None):
        self.layers = layers
        self.params = params
        self.compat = compat or CompatLookup()

    def _compat_unary(self, d: int, k_count: int,
                      fixed: dict[int, np.ndarray]) -> Optional[np.ndarray]:
        layer = self.layers[d]
        total = None
        for j, row in fixed.items():
            partner = self.layers[j]
            contrib = np.empty((k_count, layer.n_frames))
            for k in range(k_count):
                col = self.compat.chi_column(layer.actor_id,
                                             partner.actor_id, int(row[k]))
                contrib[k] = 1.0 if col is None else col
            total = contrib if total is None else total + contrib
        return total

    def synthesize_block(self, requests: list[np.ndarray]) -> np.ndarray:
        """Solve all rows for one block; returns (D, K) frame indices.

        Rows are solved in layer-definition order, each seeing the rows
        already solved in this sweep as fixed.  Extra refinement sweeps
        (params.iterations > 1) see all other rows fixed.
        """
        d_count = len(self.layers)
        if len(requests) != d_count:
            raise ValueError("one request window per layer required")
        k_count = len(requests[0])
        rows: dict[int, np.ndarray] = {}
        solve = (compress_synthesize if self.params.compression > 1
                 else synthesize_row)
        for it in range(max(1, self.params.iterations)):
            for d, layer in enumerate(self.layers):
                fixed = {j: r for j, r in rows.items() if j != d}
                compat_unary = self._compat_unary(d, k_count, fixed)
                rows[d], _ = solve(layer, requests[d], self.params,
                                   compat_unary, layer.current_frame)
        for d, layer in enumerate(self.layers):
            layer.current_frame = int(rows[d][-1])
        return np.stack([rows[d] for d in range(d_count)])


# ---------------------------------------------------------------------------
# independent energy re-summation (used for the identity check and for
# comparing live vs offline runs)


def row_energy(layer: LayerSynth, indices: np.ndarray, requests: np.ndarray,
               params: SynthesisParams,
               compat_unary: Optional[np.ndarray] = None,
               anchor: Optional[int] = None) -> float:
    """Re-sum one row's objective term by term."""
    alpha, beta = params.synth_alpha, params.beta
    total = 0.0
    prev = anchor
    for k, t in enumerate(indices):
        t = int(t)
        total += alpha * action_cost(layer.field[t], requests[k],
                                     params.sigma_a)
        if compat_unary is not None:
            total += (1 - alpha) * beta * float(compat_unary[k, t])
        if prev is not None:
            total += (1 - alpha) * (1 - beta) * transition_cost(
                prev, t, layer.matrix, layer.sigma_t,
                literal=params.literal_transition)
        prev = t
    return total


def timeline_energy(layers: list[LayerSynth], rows: np.ndarray,
                    requests: list[np.ndarray], params: SynthesisParams,
                    compat: Optional[CompatLookup] = None,
                    anchors: Optional[list] = None) -> float:
    """Total energy of a (D, K) timeline: action, compatibility and
    transition terms summed over every row and column."""
    compat = compat or CompatLookup()
    alpha, beta = params.synth_alpha, params.beta
    d_count, k_count = rows.shape
    total = 0.0
    for d, layer in enumerate(layers):
        prev = anchors[d] if anchors is not None else None
        for k in range(k_count):
            t = int(rows[d, k])
            total += alpha * action_cost(layer.field[t], requests[d][k],
                                         params.sigma_a)
            e_c = 0.0
            for j in range(d_count):
                if j != d:
                    e_c += compat.chi(layer.actor_id, t,
                                      layers[j].actor_id, int(rows[j, k]))
            total += (1 - alpha) * beta * e_c
            if prev is not None:
                total += (1 - alpha) * (1 - beta) * transition_cost(
                    prev, t, layer.matrix, layer.sigma_t,
                    literal=params.literal_transition)
            prev = t
    return total
