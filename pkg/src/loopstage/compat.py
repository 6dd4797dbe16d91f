"""Frame-pair compatibility between two actors.

Each ordered direction of an actor pair carries its own soft clustering of
frames (initialized from the action vectors) plus a cluster-pair matrix B
whose entries are 1 (compatible) or 100 (incompatible).  The expected cost
chi of showing two frames together is the membership-weighted sum over B.
Tagging a frame pair either specializes (new cluster seeded by the tagged
frame) or refines (tagged frame becomes an extra example of its current
cluster); both re-run label propagation.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .actions import ActionModel, propagate_labels

COMPATIBLE = 1.0
INCOMPATIBLE = 100.0


class TagError(Exception):
    pass


@dataclass
class ClusterSide:
    """Clusters of one actor with respect to one partner (one direction)."""

    distances: np.ndarray          # the actor's (T, T) distance matrix
    examples: dict[int, int]       # frame -> cluster index
    memberships: np.ndarray        # (T, n_clusters), rows sum to 1
    sigma: Optional[float] = None
    knn: int = 30

    @property
    def n_clusters(self) -> int:
        return self.memberships.shape[1]

    def repropagate(self):
        self.memberships = propagate_labels(
            self.distances, self.examples, self.n_clusters,
            sigma=self.sigma, knn=self.knn,
        )

    def specialize(self, frame: int) -> int:
        """Seed a new cluster with `frame` as its example; returns its index."""
        new = self.n_clusters
        self.examples[frame] = new
        self.memberships = np.pad(self.memberships, ((0, 0), (0, 1)))
        self.repropagate()
        return new

    def refine(self, frame: int) -> int:
        """Add `frame` as an example of its current most-likely cluster."""
        cluster = int(np.argmax(self.memberships[frame]))
        self.examples[frame] = cluster
        self.repropagate()
        return cluster


def side_from_action_model(model: ActionModel) -> ClusterSide:
    """Initial clustering c = a^t: one cluster per action, same examples."""
    if model.field is None:
        model.propagate()
    index = {a: i for i, a in enumerate(model.action_ids)}
    return ClusterSide(
        distances=model.matrix.values.astype(np.float64),
        examples={f: index[a] for f, a in model.examples.items()},
        memberships=model.field.copy(),
        sigma=model.sigma,
        knn=model.knn,
    )


class PairCompatibility:
    """Compatibility state for one unordered actor pair."""

    def __init__(self, actor_i: str, actor_j: str,
                 side_i: ClusterSide, side_j: ClusterSide):
        self.actor_i = actor_i
        self.actor_j = actor_j
        self.side_i = side_i
        self.side_j = side_j
        # all cluster pairs start compatible
        self.b = np.full((side_i.n_clusters, side_j.n_clusters), COMPATIBLE)

    @classmethod
    def from_action_models(cls, model_i: ActionModel, model_j: ActionModel,
                           actor_i: str, actor_j: str) -> "PairCompatibility":
        return cls(actor_i, actor_j,
                   side_from_action_model(model_i),
                   side_from_action_model(model_j))

    def chi(self, t_i: int, t_j: int) -> float:
        c_i = self.side_i.memberships[t_i]
        c_j = self.side_j.memberships[t_j]
        return float(c_i @ self.b @ c_j)

    def chi_column(self, t_j: int) -> np.ndarray:
        """chi(t, t_j) for every frame t of actor i at once."""
        return self.side_i.memberships @ (self.b @ self.side_j.memberships[t_j])

    def _current_verdict(self, t_i: int, t_j: int) -> str:
        m = int(np.argmax(self.side_i.memberships[t_i]))
        n = int(np.argmax(self.side_j.memberships[t_j]))
        return "incompatible" if self.b[m, n] == INCOMPATIBLE else "compatible"

    def tag(self, t_i: int, t_j: int, verdict: str,
            mode_i: Optional[str] = None, mode_j: Optional[str] = None):
        """Record a user verdict on the pair (t_i, t_j).

        Mode per side: "specialize" grows a new cluster from the tagged
        frame, "refine" reinforces the frame's current cluster.  When no
        mode is given and the tag flips the pair's current verdict,
        specialize is assumed; otherwise the caller must decide.
        """
        if verdict not in ("compatible", "incompatible"):
            raise TagError(f"bad verdict {verdict!r}")
        if mode_i is None or mode_j is None:
            if self._current_verdict(t_i, t_j) != verdict:
                mode_i = mode_i or "specialize"
                mode_j = mode_j or "specialize"
            else:
                raise TagError(
                    "tag does not change the current verdict; choose "
                    "specialize or refine explicitly for each side"
                )
        for mode in (mode_i, mode_j):
            if mode not in ("specialize", "refine"):
                raise TagError(f"bad mode {mode!r}")

        if mode_i == "specialize":
            m = self.side_i.specialize(t_i)
            self.b = np.pad(self.b, ((0, 1), (0, 0)), constant_values=COMPATIBLE)
        else:
            m = self.side_i.refine(t_i)
        if mode_j == "specialize":
            n = self.side_j.specialize(t_j)
            self.b = np.pad(self.b, ((0, 0), (0, 1)), constant_values=COMPATIBLE)
        else:
            n = self.side_j.refine(t_j)

        self.b[m, n] = INCOMPATIBLE if verdict == "incompatible" else COMPATIBLE

    # -- persistence -------------------------------------------------------

    def to_arrays(self) -> dict:
        def pack(side: ClusterSide, prefix: str) -> dict:
            frames = np.array(sorted(side.examples), dtype=np.int64)
            labels = np.array([side.examples[int(f)] for f in frames],
                              dtype=np.int64)
            return {
                f"{prefix}_frames": frames,
                f"{prefix}_labels": labels,
                f"{prefix}_memberships": side.memberships,
            }
        out = {"b": self.b}
        out.update(pack(self.side_i, "i"))
        out.update(pack(self.side_j, "j"))
        return out

    @classmethod
    def from_arrays(cls, actor_i: str, actor_j: str,
                    dist_i: np.ndarray, dist_j: np.ndarray,
                    arrays: dict, sigma=None, knn: int = 30):
        def unpack(prefix, distances):
            frames = arrays[f"{prefix}_frames"]
            labels = arrays[f"{prefix}_labels"]
            return ClusterSide(
                distances=distances,
                examples={int(f): int(l) for f, l in zip(frames, labels)},
                memberships=arrays[f"{prefix}_memberships"],
                sigma=sigma, knn=knn,
            )
        pair = cls.__new__(cls)
        pair.actor_i = actor_i
        pair.actor_j = actor_j
        pair.side_i = unpack("i", dist_i)
        pair.side_j = unpack("j", dist_j)
        pair.b = arrays["b"]
        return pair

    def export_text(self) -> str:
        """Compact audit listing of cluster examples and B cells."""
        lines = [f"pair {self.actor_i} <-> {self.actor_j}"]
        for name, side in ((self.actor_i, self.side_i),
                           (self.actor_j, self.side_j)):
            for cluster in range(side.n_clusters):
                frames = sorted(f for f, c in side.examples.items()
                                if c == cluster)
                lines.append(f"  {name} cluster {cluster}: examples {frames}")
        for m in range(self.b.shape[0]):
            for n in range(self.b.shape[1]):
                if self.b[m, n] == INCOMPATIBLE:
                    lines.append(f"  B[{m},{n}] = incompatible")
        return "\n".join(lines)
