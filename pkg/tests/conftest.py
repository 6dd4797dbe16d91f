"""Shared builders: synthetic actors, toy projects and brute-force oracles."""

import itertools

import numpy as np
import pytest

from loopstage.assets import (ActionDef, ActorSequence, FrameSequence,
                              OrientedBox)
from loopstage.compat import ClusterSide, PairCompatibility
from loopstage.metric import DistanceMatrix, JumpGraph, build_jump_graph


# ---------------------------------------------------------------------------
# synthetic actors


def random_frames(t, h, w, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(t, h, w, 3), dtype=np.uint8)


def full_frame_actor(frames, actions=None, frame_rate=30.0, actor_id="a"):
    return ActorSequence(
        id=actor_id,
        source=FrameSequence(np.asarray(frames, dtype=np.uint8), frame_rate),
        kind="full-frame",
        actions=actions or [],
    )


def circle_metric(t, period=60, scale=40.0, seed=0, noise=0.0):
    """Distance matrix of a looping synthetic actor.

    Frames live on a circle traversed once per `period` frames, so
    consecutive frames are close and frames one period apart coincide.
    """
    rng = np.random.default_rng(seed)
    theta = 2 * np.pi * (np.arange(t) % period) / period
    feat = np.stack([np.cos(theta), np.sin(theta)], axis=1) * scale
    if noise:
        feat = feat + rng.normal(0, noise, feat.shape)
    d = np.sum((feat[:, None, :] - feat[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(actor_id="circle", values=d.astype(np.float32))


def circle_field(t, period=60, n_actions=3):
    """Soft action vectors for the circle actor: one action per arc sector."""
    theta = 2 * np.pi * (np.arange(t) % period) / period
    centers = 2 * np.pi * np.arange(n_actions) / n_actions
    diff = np.abs(theta[:, None] - centers[None, :])
    diff = np.minimum(diff, 2 * np.pi - diff)
    weights = np.exp(-(diff ** 2) / (2 * (np.pi / n_actions) ** 2))
    return weights / weights.sum(axis=1, keepdims=True)


def two_cluster_matrix(n_per=5, inner=1.0, outer=100.0):
    """Two tight frame clusters far apart; frames 0..n-1 then n..2n-1."""
    n = 2 * n_per
    d = np.full((n, n), outer)
    d[:n_per, :n_per] = inner
    d[n_per:, n_per:] = inner
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(actor_id="clusters", values=d.astype(np.float32))


# ---------------------------------------------------------------------------
# on-disk toy projects


def circle_frames(t, period=None, h=6, w=8):
    """Frames whose constant color walks a circle once per `period` frames."""
    period = period or t
    theta = 2 * np.pi * (np.arange(t) % period) / period
    colors = np.stack([
        128 + 100 * np.cos(theta),
        128 + 100 * np.sin(theta),
        np.full(t, 128.0),
    ], axis=1)
    frames = np.clip(np.round(colors), 0, 255).astype(np.uint8)
    return np.broadcast_to(frames[:, None, None, :], (t, h, w, 3)).copy()


def write_toy_project(root, n_actors=1, n_layers=None, t=24, n_actions=2,
                      frame_rate=30, parameters=None, compatibility=None,
                      name="toy"):
    """Write a loadable project of constant-color circle actors."""
    import json as _json
    from pathlib import Path

    from loopstage.assets import save_png_dir

    root = Path(root)
    doc = {"name": name, "frame_rate": frame_rate, "actors": [], "layers": []}
    if parameters:
        doc["parameters"] = parameters
    if compatibility:
        doc["compatibility"] = compatibility
    for i in range(n_actors):
        aid = f"actor{i}"
        save_png_dir(root / aid / "frames", circle_frames(t))
        doc["actors"].append({
            "id": aid, "frames": f"{aid}/frames", "kind": "full-frame",
            "actions": [
                {"id": f"a{j}", "key": str(j),
                 "examples": [round(j * t / n_actions) % t]}
                for j in range(n_actions)
            ],
        })
    for d in range(n_layers if n_layers is not None else n_actors):
        doc["layers"].append({
            "id": f"L{d}", "actor": f"actor{d % n_actors}",
            "initial_action": "a0",
        })
    manifest = root / "project.json"
    manifest.write_text(_json.dumps(doc))
    return manifest


# ---------------------------------------------------------------------------
# compatibility helpers


def make_side(memberships, distances=None, examples=None):
    memberships = np.asarray(memberships, dtype=np.float64)
    t = len(memberships)
    if distances is None:
        distances = np.ones((t, t)) - np.eye(t)
    return ClusterSide(distances=np.asarray(distances, dtype=np.float64),
                       examples=dict(examples or {}),
                       memberships=memberships)


def make_pair(mem_i, mem_j, b, actor_i="i", actor_j="j",
              dist_i=None, dist_j=None, examples_i=None, examples_j=None):
    pair = PairCompatibility.__new__(PairCompatibility)
    pair.actor_i = actor_i
    pair.actor_j = actor_j
    pair.side_i = make_side(mem_i, dist_i, examples_i)
    pair.side_j = make_side(mem_j, dist_j, examples_j)
    pair.b = np.asarray(b, dtype=np.float64)
    return pair


# ---------------------------------------------------------------------------
# brute-force synthesis oracle


def oracle_row(unary, pairwise, first_costs=None):
    """Exhaustive minimizer of sum_k unary[k][t_k] + pairwise[t_{k-1}, t_k].

    first_costs (len T) is the cost of entering each label at column 1
    (transition from an anchor frame), or zeros.  Sequences are enumerated
    in lexicographic order and only strictly better energies replace the
    incumbent, so ties resolve to the lexicographically smallest optimum,
    matching the DP's tie-breaking.
    """
    k_count, t_count = unary.shape
    if first_costs is None:
        first_costs = np.zeros(t_count)
    best_seq, best_e = None, np.inf
    for seq in itertools.product(range(t_count), repeat=k_count):
        e = first_costs[seq[0]]
        prev = None
        for k, t in enumerate(seq):
            e += unary[k, t]
            if prev is not None:
                e += pairwise[prev, t]
            prev = t
        if e < best_e:
            best_e = e
            best_seq = seq
    return np.array(best_seq), float(best_e)


def dense_pairwise(layer, params):
    """Independent reconstruction of the DP's pairwise cost matrix."""
    t = layer.n_frames
    d = layer.matrix.values.astype(np.float64)
    if params.literal_transition:
        ref = np.arange(t)
    else:
        ref = np.minimum(np.arange(t) + 1, t - 1)
    w = (1 - params.synth_alpha) * (1 - params.beta)
    with np.errstate(over="ignore"):
        return w * np.exp(d[ref][:, np.arange(t)] / layer.sigma_t ** 2)


def dense_unary(layer, requests, params, compat_unary=None):
    alpha = params.synth_alpha
    k_count = len(requests)
    unary = np.empty((k_count, layer.n_frames))
    for k in range(k_count):
        for t in range(layer.n_frames):
            diff = layer.field[t] - requests[k]
            unary[k, t] = alpha * float(diff @ diff) / (2 * params.sigma_a ** 2)
            if compat_unary is not None:
                unary[k, t] += (1 - alpha) * params.beta * compat_unary[k, t]
    return unary


# ---------------------------------------------------------------------------
# small random instances for DP-oracle comparisons


def random_instance(rng, t_max=8, k_max=6, n_actions=2):
    t = int(rng.integers(3, t_max + 1))
    k = int(rng.integers(2, k_max + 1))
    values = rng.uniform(0, 4, (t, t))
    values = (values + values.T) / 2
    np.fill_diagonal(values, 0.0)
    matrix = DistanceMatrix(actor_id="rand", values=values.astype(np.float32))
    field = rng.uniform(0, 1, (t, n_actions))
    field /= field.sum(axis=1, keepdims=True)
    requests = rng.uniform(0, 1, (k, n_actions))
    requests /= requests.sum(axis=1, keepdims=True)
    return matrix, field, requests
