"""Synthetic specimen generator for end-to-end verification.

Builds a known ground truth (a Voronoi partition of an ellipsoid over
well-spread seed points) together with the three probability maps a
perfect classifier would emit for it, then optionally degrades the maps
with depth fade, Gaussian noise, and per-interface membrane dropout.
Degradations touch only the probability maps; gt stays exact, so
segmentation quality can be measured against it.

Randomness comes from numpy's counter-based Philox generator keyed by
rng_seed; identical configs reproduce identical volumes bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .volume import Dims, LabelVolume, ScalarVolume

__all__ = [
    "PhantomConfig",
    "PhantomError",
    "PhantomResult",
    "generate",
    "interface_face_counts",
    "inject_interior_ridge",
    "sidecar_dict",
]

_DROPOUT_VALUE = 0.3
_CENTROID_BALL_RADIUS = 2
_BEST_CANDIDATES = 32
_SEED_REGION_SCALE = 0.8  # seeds stay inside this fraction of the ellipsoid


class PhantomError(RuntimeError):
    """Raised when a phantom cannot be generated as configured."""


@dataclass(frozen=True)
class PhantomConfig:
    """Recipe for one synthetic specimen.

    specimen gives the ellipsoid semi-axes in voxels; when omitted the
    specimen fills most of the field of view (semi-axes 0.62 of each
    extent, clipped by the volume), as real acquisitions usually do.
    dropout_interfaces lists gt label pairs whose shared membrane is
    suppressed to a probability below the usual detection threshold.
    """

    dims: Dims
    n_cells: int
    rng_seed: int
    membrane_halfwidth: int = 1
    specimen: Optional[tuple[float, float, float]] = None
    fade: float = 0.0
    noise_sigma: float = 0.0
    dropout_interfaces: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.n_cells < 1:
            raise ValueError(f"n_cells must be >= 1, got {self.n_cells}")
        if self.membrane_halfwidth < 1:
            raise ValueError(
                f"membrane_halfwidth must be >= 1, got {self.membrane_halfwidth}"
            )
        if not 0.0 <= self.fade < 1.0:
            raise ValueError(f"fade must lie in [0, 1), got {self.fade}")
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.specimen is not None and any(s <= 0 for s in self.specimen):
            raise ValueError(f"specimen semi-axes must be positive: {self.specimen}")

    def semi_axes(self) -> tuple[float, float, float]:
        if self.specimen is not None:
            return self.specimen
        d = self.dims
        return (0.62 * d.nx, 0.62 * d.ny, 0.62 * d.nz)


@dataclass(frozen=True)
class PhantomResult:
    """Generated volumes plus the seed points the cells grew from."""

    gt: LabelVolume
    centroid_prob: ScalarVolume
    membrane_prob: ScalarVolume
    background_prob: ScalarVolume
    seeds: tuple[tuple[int, int, int], ...]
    config: PhantomConfig


def _place_seeds(cfg: PhantomConfig, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    """Spread n_cells integer seed points inside the scaled ellipsoid.

    Uses best-candidate sampling: each new seed is the candidate farthest
    from the existing ones, subject to the hard floor of 4 * halfwidth
    pairwise distance.
    """
    d = cfg.dims
    center = np.array([(d.nx - 1) / 2, (d.ny - 1) / 2, (d.nz - 1) / 2])
    semi = np.array(cfg.semi_axes()) * _SEED_REGION_SCALE
    min_dist2 = (4 * cfg.membrane_halfwidth) ** 2

    def draw() -> Optional[np.ndarray]:
        for _ in range(256):
            u = rng.uniform(-1.0, 1.0, size=3)
            if (u * u).sum() > 1.0:
                continue
            pt = np.floor(center + u * semi + 0.5).astype(np.int64)
            if d.contains(int(pt[0]), int(pt[1]), int(pt[2])):
                return pt
        return None

    seeds: list[np.ndarray] = []
    for _ in range(cfg.n_cells):
        best = None
        best_d2 = -1.0
        for _ in range(_BEST_CANDIDATES):
            cand = draw()
            if cand is None:
                continue
            if seeds:
                d2 = min(float(((cand - s) ** 2).sum()) for s in seeds)
            else:
                d2 = float("inf")
            if d2 > best_d2 and all((cand != s).any() for s in seeds):
                best, best_d2 = cand, d2
        if best is None or best_d2 < min_dist2:
            raise PhantomError(
                f"cannot place {cfg.n_cells} seeds at pairwise distance "
                f">= {4 * cfg.membrane_halfwidth} inside {d!r}"
            )
        seeds.append(best)
    return [(int(s[0]), int(s[1]), int(s[2])) for s in seeds]


def _different_neighbor_mask(
    gt_arr: np.ndarray, halfwidth: int, pair: Optional[tuple[int, int]] = None
) -> np.ndarray:
    """Voxels with a differently-labeled voxel within Euclidean halfwidth.

    With pair given, only faces between exactly those two labels count.
    """
    out = np.zeros(gt_arr.shape, dtype=bool)
    r = halfwidth
    for dz in range(-r, r + 1):
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if (dx, dy, dz) == (0, 0, 0):
                    continue
                if dx * dx + dy * dy + dz * dz > r * r:
                    continue
                here, there = _aligned(gt_arr.shape, dx, dy, dz)
                a, b = gt_arr[here], gt_arr[there]
                if pair is None:
                    hit = a != b
                else:
                    lo, hi = min(pair), max(pair)
                    hit = ((a == lo) & (b == hi)) | ((a == hi) & (b == lo))
                out[here] |= hit
    return out


def _aligned(shape, dx: int, dy: int, dz: int):
    here = []
    there = []
    for n, d in zip(shape, (dz, dy, dx)):
        if d >= 0:
            here.append(slice(0, n - d))
            there.append(slice(d, n))
        else:
            here.append(slice(-d, n))
            there.append(slice(0, n + d))
    return tuple(here), tuple(there)


def generate(cfg: PhantomConfig) -> PhantomResult:
    """Build gt and the three probability maps for one phantom."""
    d = cfg.dims
    rng = np.random.Generator(np.random.Philox(key=cfg.rng_seed))
    seeds = _place_seeds(cfg, rng)

    zz, yy, xx = np.ogrid[0 : d.nz, 0 : d.ny, 0 : d.nx]
    center = ((d.nx - 1) / 2, (d.ny - 1) / 2, (d.nz - 1) / 2)
    sa = cfg.semi_axes()
    inside = (
        ((xx - center[0]) / sa[0]) ** 2
        + ((yy - center[1]) / sa[1]) ** 2
        + ((zz - center[2]) / sa[2]) ** 2
    ) <= 1.0

    best_d2 = np.full(d.shape, np.iinfo(np.int64).max, dtype=np.int64)
    labels = np.zeros(d.shape, dtype=np.uint32)
    for i, (sx, sy, sz) in enumerate(seeds, start=1):
        d2 = (xx - sx) ** 2 + (yy - sy) ** 2 + (zz - sz) ** 2
        closer = d2 < best_d2  # strict: ties stay with the smaller label
        labels[closer] = i
        np.minimum(best_d2, d2, out=best_d2)
    labels[~inside] = 0
    gt = LabelVolume(d, labels)

    centroid = np.zeros(d.shape, dtype=np.float64)
    r = _CENTROID_BALL_RADIUS
    for sx, sy, sz in seeds:
        z0, z1 = max(0, sz - r), min(d.nz, sz + r + 1)
        y0, y1 = max(0, sy - r), min(d.ny, sy + r + 1)
        x0, x1 = max(0, sx - r), min(d.nx, sx + r + 1)
        lz, ly, lx = np.ogrid[z0:z1, y0:y1, x0:x1]
        ball = (lx - sx) ** 2 + (ly - sy) ** 2 + (lz - sz) ** 2 <= r * r
        centroid[z0:z1, y0:y1, x0:x1][ball] = 1.0

    membrane = _different_neighbor_mask(labels, cfg.membrane_halfwidth).astype(np.float64)
    background = (~inside).astype(np.float64)

    if cfg.fade > 0.0:
        # signal confidence decays with depth
        scale = 1.0 - cfg.fade * (np.arange(d.nz) / d.nz)
        scale = scale.reshape(-1, 1, 1)
        centroid *= scale
        membrane *= scale

    if cfg.noise_sigma > 0.0:
        for arr in (centroid, membrane, background):
            arr += rng.normal(0.0, cfg.noise_sigma, size=d.shape)
            np.clip(arr, 0.0, 1.0, out=arr)

    for pair in cfg.dropout_interfaces:
        a, b = int(pair[0]), int(pair[1])
        if not (0 < a <= cfg.n_cells and 0 < b <= cfg.n_cells) or a == b:
            raise PhantomError(f"dropout pair {pair} does not name two distinct cells")
        zone = _different_neighbor_mask(labels, cfg.membrane_halfwidth, (a, b))
        if not zone.any():
            raise PhantomError(f"cells {a} and {b} share no interface to drop")
        membrane[zone] = _DROPOUT_VALUE

    return PhantomResult(
        gt=gt,
        centroid_prob=ScalarVolume(d, centroid.astype(np.float32)),
        membrane_prob=ScalarVolume(d, membrane.astype(np.float32)),
        background_prob=ScalarVolume(d, background.astype(np.float32)),
        seeds=tuple(seeds),
        config=cfg,
    )


def interface_face_counts(gt: LabelVolume) -> dict[tuple[int, int], int]:
    """Count shared faces between each pair of adjacent cell labels."""
    arr = gt.data.astype(np.int64)
    counts: dict[tuple[int, int], int] = {}
    for axis in range(3):
        a = [slice(None)] * 3
        b = [slice(None)] * 3
        a[axis] = slice(0, -1)
        b[axis] = slice(1, None)
        la, lb = arr[tuple(a)], arr[tuple(b)]
        touching = (la != lb) & (la != 0) & (lb != 0)
        if not touching.any():
            continue
        lo = np.minimum(la[touching], lb[touching])
        hi = np.maximum(la[touching], lb[touching])
        keys, n = np.unique((lo << 32) | hi, return_counts=True)
        for k, c in zip(keys, n):
            pair = (int(k >> 32), int(k & 0xFFFFFFFF))
            counts[pair] = counts.get(pair, 0) + int(c)
    return counts


def inject_interior_ridge(
    membrane_prob: ScalarVolume,
    gt: LabelVolume,
    cell_label: int,
    offset: int = 3,
    value: float = 0.9,
) -> ScalarVolume:
    """Paint a spurious membrane plane through one cell's interior.

    The plane x = (cell centroid x + offset), restricted to the cell's
    voxels, gets probability at least ``value``.  Emulates a bright
    intracellular structure misread as membrane; useful for provoking
    over-segmentation in boundary-evidence strategies.
    """
    if membrane_prob.dims != gt.dims:
        raise ValueError("dims mismatch")
    mask = gt.data == np.uint32(cell_label)
    if not mask.any():
        raise ValueError(f"gt has no voxels labeled {cell_label}")
    xs = np.nonzero(mask)[2]
    x_plane = int(np.floor(xs.mean() + 0.5)) + offset
    if not 0 <= x_plane < gt.dims.nx:
        raise ValueError(f"ridge plane x={x_plane} falls outside the volume")
    ridge = mask & (np.arange(gt.dims.nx)[None, None, :] == x_plane)
    if not ridge.any():
        raise ValueError(f"cell {cell_label} has no voxels at x={x_plane}")
    out = membrane_prob.data.copy()
    out[ridge] = np.maximum(out[ridge], np.float32(value))
    return ScalarVolume(membrane_prob.dims, out)


def sidecar_dict(result: PhantomResult) -> dict:
    """JSON-ready record of how a phantom was generated."""
    cfg = result.config
    return {
        "dims": [cfg.dims.nx, cfg.dims.ny, cfg.dims.nz],
        "n_cells": cfg.n_cells,
        "rng_seed": cfg.rng_seed,
        "rng": "numpy Philox",
        "membrane_halfwidth": cfg.membrane_halfwidth,
        "semi_axes": list(cfg.semi_axes()),
        "fade": cfg.fade,
        "noise_sigma": cfg.noise_sigma,
        "dropout_interfaces": [list(p) for p in cfg.dropout_interfaces],
        "dropout_value": _DROPOUT_VALUE,
        "seeds": [list(s) for s in result.seeds],
    }
