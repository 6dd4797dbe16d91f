"""Soft per-frame action assignment by semi-supervised label propagation.

A handful of user-tagged example frames per action are spread to all frames
through a harmonic solve on the affinity graph built from the actor's
distance matrix.  The same machinery also powers the compatibility-cluster
memberships.
"""

import warnings
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .metric import DistanceMatrix

DEFAULT_KNN = 30
CG_RTOL = 1e-8


class PropagationError(Exception):
    pass


def knn_affinity(distances: np.ndarray, sigma: Optional[float] = None,
                 knn: int = DEFAULT_KNN) -> sp.csr_matrix:
    """Symmetrized k-nearest-neighbor affinity W(t,t') = exp(-D(t,t')/sigma^2)."""
    n = len(distances)
    k = min(knn, n - 1)
    order = np.argsort(distances, axis=1, kind="stable")
    rows, cols, dvals = [], [], []
    for t in range(n):
        neigh = order[t][order[t] != t][:k]
        rows.append(np.full(k, t))
        cols.append(neigh)
        dvals.append(distances[t, neigh])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    dvals = np.concatenate(dvals).astype(np.float64)
    if sigma is None:
        nz = dvals[dvals > 0]
        sigma = float(np.sqrt(np.median(nz))) if nz.size else 1.0
    w = np.exp(-dvals / (sigma * sigma))
    m = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
    return m.maximum(m.T)


def propagate_labels(distances: np.ndarray, examples: dict[int, int],
                     n_labels: int, sigma: Optional[float] = None,
                     knn: int = DEFAULT_KNN) -> np.ndarray:
    """Harmonic label propagation over a distance matrix.

    examples maps frame index -> label index; labeled frames are clamped to
    binary vectors, the rest get the harmonic solution (one linear solve per
    label, right-hand sides from the labeled boundary).  Frames with no
    affinity to anything fall back to the uniform vector with a warning.
    Returns (T, n_labels) rows summing to 1.
    """
    n = len(distances)
    if not examples:
        raise PropagationError("label propagation needs at least one example")
    for frame, label in examples.items():
        if not 0 <= frame < n:
            raise PropagationError(f"example frame {frame} out of range")
        if not 0 <= label < n_labels:
            raise PropagationError(f"example label {label} out of range")

    out = np.zeros((n, n_labels))
    labeled = np.array(sorted(examples), dtype=np.intp)
    fl = np.zeros((len(labeled), n_labels))
    for i, frame in enumerate(labeled):
        fl[i, examples[int(frame)]] = 1.0
    out[labeled] = fl

    unlabeled = np.setdiff1d(np.arange(n), labeled)
    if len(unlabeled) == 0:
        return out

    w = knn_affinity(distances, sigma=sigma, knn=knn)
    w_uu = w[unlabeled][:, unlabeled]
    w_ul = w[unlabeled][:, labeled]
    degree = np.asarray(w_uu.sum(axis=1)).ravel() + \
        np.asarray(w_ul.sum(axis=1)).ravel()

    isolated = degree <= 0
    if np.any(isolated):
        warnings.warn(
            f"{int(isolated.sum())} frame(s) have no affinity to any other "
            f"frame; assigning the uniform action vector",
            stacklevel=2,
        )
    solve_idx = np.flatnonzero(~isolated)
    out[unlabeled[isolated]] = 1.0 / n_labels

    if len(solve_idx):
        lap = sp.diags(degree[solve_idx]) - w_uu[solve_idx][:, solve_idx]
        rhs = w_ul[solve_idx] @ fl
        fu = np.empty((len(solve_idx), n_labels))
        for m in range(n_labels):
            x, info = cg(lap.tocsr(), rhs[:, m], rtol=CG_RTOL,
                         maxiter=20 * len(solve_idx) + 100)
            if info != 0:
                # fall back to a direct solve when CG stalls
                x = sp.linalg.spsolve(lap.tocsc(), rhs[:, m])
            fu[:, m] = x
        fu = np.clip(fu, 0.0, None)
        sums = fu.sum(axis=1)
        degenerate = sums <= 0
        if np.any(degenerate):
            fu[degenerate] = 1.0 / n_labels
            sums[degenerate] = 1.0
        out[unlabeled[solve_idx]] = fu / sums[:, None]
    return out


class ActionModel:
    """Editable action examples for one actor plus the propagated field."""

    def __init__(self, action_ids: list[str], matrix: DistanceMatrix,
                 examples: Optional[dict[int, str]] = None,
                 sigma: Optional[float] = None, knn: int = DEFAULT_KNN):
        if not action_ids:
            raise PropagationError("an actor needs at least one action")
        if len(set(action_ids)) != len(action_ids):
            raise PropagationError("action ids must be unique")
        self.action_ids = list(action_ids)
        self.matrix = matrix
        self.sigma = sigma
        self.knn = knn
        self.examples: dict[int, str] = dict(examples or {})
        self.field: Optional[np.ndarray] = None

    @property
    def n_actions(self) -> int:
        return len(self.action_ids)

    def _check_coverage(self, examples: dict[int, str]):
        covered = set(examples.values())
        missing = [a for a in self.action_ids if a not in covered]
        if missing:
            raise PropagationError(
                f"every action needs at least one example; missing: {missing}"
            )

    def propagate(self) -> np.ndarray:
        self._check_coverage(self.examples)
        index = {a: i for i, a in enumerate(self.action_ids)}
        idx_examples = {f: index[a] for f, a in self.examples.items()}
        self.field = propagate_labels(
            self.matrix.values.astype(np.float64), idx_examples,
            self.n_actions, sigma=self.sigma, knn=self.knn,
        )
        return self.field

    def add_example(self, frame: int, action_id: str) -> np.ndarray:
        if action_id not in self.action_ids:
            raise PropagationError(f"unknown action {action_id!r}")
        if not 0 <= frame < len(self.matrix):
            raise PropagationError(f"frame {frame} out of range")
        self.examples[frame] = action_id
        return self.propagate()

    def remove_example(self, frame: int) -> np.ndarray:
        if frame not in self.examples:
            raise PropagationError(f"frame {frame} is not an example")
        action = self.examples[frame]
        remaining = {f: a for f, a in self.examples.items() if f != frame}
        if action not in remaining.values():
            raise PropagationError(
                f"cannot remove the only example of action {action!r}"
            )
        self.examples = remaining
        return self.propagate()
