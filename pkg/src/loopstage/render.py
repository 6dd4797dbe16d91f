"""Final-frame compositing: seamless cloning and per-pixel occlusion.

Patches are placed on the static background.  In final quality each patch
is first gradient-domain cloned (Poisson) so illumination drift disappears
at the seam; overlapping patches are then resolved per pixel by whichever
patch differs most from the background.  The live path skips cloning.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg
from PIL import Image

from .assets import ActorSequence

# an order below the 1e-4 residual bound, leaving quantization headroom
POISSON_RTOL = 1e-6


def seamless_clone_float(patch: np.ndarray, mask: np.ndarray,
                         background: np.ndarray) -> np.ndarray:
    """Clone `patch` into `background` over `mask` in the gradient domain.

    Solves the discrete Poisson equation per channel on the mask interior
    with the patch's gradients as guidance and background values on the
    boundary.  Returns the full composited image as float64 (unclipped, so
    the solver residual can be verified).
    """
    mask = np.asarray(mask, bool)
    if not mask.any():
        return background.astype(np.float64)
    h, w = mask.shape
    idx = -np.ones((h, w), dtype=np.int64)
    ys, xs = np.nonzero(mask)
    n = len(ys)
    idx[ys, xs] = np.arange(n)

    pat = patch.astype(np.float64)
    bg = background.astype(np.float64)

    rows, cols, vals = [], [], []
    rhs = np.zeros((n, 3))
    diag = np.zeros(n)
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ny, nx = ys + dy, xs + dx
        valid = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        diag += valid
        vy, vx = ny[valid], nx[valid]
        p = np.nonzero(valid)[0]
        # guidance: the patch's own gradient along this edge
        rhs[p] += pat[ys[p], xs[p]] - pat[vy, vx]
        inside = idx[vy, vx] >= 0
        rows.append(p[inside])
        cols.append(idx[vy[inside], vx[inside]])
        vals.append(np.full(int(inside.sum()), -1.0))
        out = ~inside
        rhs[p[out]] += bg[vy[out], vx[out]]

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    lap = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )

    out = bg.copy()
    maxiter = 10 * n
    for ch in range(3):
        b = rhs[:, ch]
        x0 = pat[ys, xs, ch]
        x, _ = cg(lap, b, x0=x0, rtol=POISSON_RTOL, atol=0.0, maxiter=maxiter)
        out[ys, xs, ch] = x
    return out


def seamless_clone(patch: np.ndarray, mask: np.ndarray,
                   background: np.ndarray) -> np.ndarray:
    """uint8 version of seamless_clone_float for display and file output."""
    out = seamless_clone_float(patch, mask, background)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def poisson_residual(patch, mask, background, result) -> float:
    """Max over channels of the relative residual of the cloned result."""
    mask = np.asarray(mask, bool)
    h, w = mask.shape
    res = 0.0
    pat = patch.astype(np.float64)
    bg = background.astype(np.float64)
    sol = result.astype(np.float64)
    ys, xs = np.nonzero(mask)
    for ch in range(3):
        lhs = np.zeros(len(ys))
        rhs = np.zeros(len(ys))
        for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ny, nx = ys + dy, xs + dx
            valid = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
            vy, vx = ny[valid], nx[valid]
            p = np.nonzero(valid)[0]
            lhs[p] += sol[ys[p], xs[p], ch]
            rhs[p] += pat[ys[p], xs[p], ch] - pat[vy, vx, ch]
            inside = mask[vy, vx]
            lhs[p[inside]] -= sol[vy[inside], vx[inside], ch]
            rhs[p[~inside]] += bg[vy[~inside], vx[~inside], ch]
        norm = np.linalg.norm(rhs) or 1.0
        res = max(res, float(np.linalg.norm(lhs - rhs) / norm))
    return res


def resolve_occlusion(colors: list[np.ndarray], background_color: np.ndarray) -> int:
    """Index of the candidate most likely to be foreground at one pixel:
    largest squared color difference to the background; ties go to the
    lowest layer index."""
    best, best_d = 0, -1.0
    bg = background_color.astype(np.float64)
    for i, c in enumerate(colors):
        d = float(np.sum((c.astype(np.float64) - bg) ** 2))
        if d > best_d:
            best, best_d = i, d
    return best


def composite(background: np.ndarray,
              patches: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Layer (image, mask) patches over the background; every overlap pixel
    is taken from exactly one source via the background-difference rule."""
    out = background.copy()
    bg = background.astype(np.float64)
    best = np.full(background.shape[:2], -1.0)
    for img, mask in patches:
        diff = np.sum((img.astype(np.float64) - bg) ** 2, axis=-1)
        win = np.asarray(mask, bool) & (diff > best)
        out[win] = img[win]
        best[win] = diff[win]
    return out


@dataclass
class RenderJob:
    rows: np.ndarray                  # (D, K) chosen frame indices
    layer_actors: list[ActorSequence]  # one per row
    background: np.ndarray
    quality: str = "final"            # "final" clones patches, "live" skips
    _clone_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.quality not in ("live", "final"):
            raise ValueError(f"unknown quality {self.quality!r}")
        if len(self.layer_actors) != len(self.rows):
            raise ValueError("one actor per timeline row required")

    def _patch(self, d: int, frame: int) -> tuple[np.ndarray, np.ndarray]:
        actor = self.layer_actors[d]
        mask = actor.masks[frame]
        if self.quality == "final":
            key = (d, frame)
            if key not in self._clone_cache:
                self._clone_cache[key] = seamless_clone(
                    actor.source.frames[frame], mask, self.background)
            return self._clone_cache[key], mask
        return actor.source.frames[frame], mask

    def render_frame(self, k: int) -> np.ndarray:
        if not 0 <= k < self.rows.shape[1]:
            raise IndexError(f"column {k} outside timeline")
        patches = []
        for d, actor in enumerate(self.layer_actors):
            frame = int(self.rows[d, k])
            if actor.kind == "full-frame" or actor.masks is None:
                # whole-frame actors replace the canvas outright
                return actor.source.frames[frame].copy()
            patches.append(self._patch(d, frame))
        return composite(self.background, patches)


def render_sequence(job: RenderJob, out_dir,
                    columns: Optional[range] = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = columns if columns is not None else range(job.rows.shape[1])
    paths = []
    for k in columns:
        img = job.render_frame(k)
        p = out_dir / f"{k:06d}.png"
        Image.fromarray(img).save(p)
        paths.append(p)
    return paths
