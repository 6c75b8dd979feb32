"""Binary morphology and connected component labeling.

Out-of-bounds voxels are treated as false everywhere, so dilation never
reaches outside the grid and erosion eats into the border.  Connected
component labels are assigned in ascending order of each component's
minimum flat index, which makes labelings reproducible across runs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import BinaryVolume, LabelVolume

__all__ = [
    "Connectivity",
    "StructuringElement",
    "ball_element",
    "connectivity_offsets",
    "dilate",
    "erode",
    "closing",
    "connected_components",
    "remove_small_objects",
    "mask_subtract",
]


class Connectivity(enum.Enum):
    """Voxel adjacency: 6 face neighbors or all 26 cube neighbors."""

    FACE6 = 6
    VERTEX26 = 26


def connectivity_offsets(conn: Connectivity) -> tuple[tuple[int, int, int], ...]:
    """Neighbor offsets (dx, dy, dz) in a fixed canonical order.

    The order is the (dz, dy, dx) loop order; algorithms that break ties by
    insertion sequence depend on it staying fixed.
    """
    offs = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if (dx, dy, dz) == (0, 0, 0):
                    continue
                if conn is Connectivity.FACE6 and abs(dx) + abs(dy) + abs(dz) != 1:
                    continue
                offs.append((dx, dy, dz))
    return tuple(offs)


def _scipy_structure(conn: Connectivity) -> np.ndarray:
    return ndimage.generate_binary_structure(3, 1 if conn is Connectivity.FACE6 else 3)


@dataclass(frozen=True)
class StructuringElement:
    """Symmetric set of integer offsets (dx, dy, dz) including the origin."""

    offsets: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        seen = set(self.offsets)
        if len(seen) != len(self.offsets):
            raise ValueError("structuring element offsets must be distinct")
        if (0, 0, 0) not in seen:
            raise ValueError("structuring element must contain the origin")
        for dx, dy, dz in self.offsets:
            if (-dx, -dy, -dz) not in seen:
                raise ValueError(
                    f"structuring element must be symmetric, missing {(-dx, -dy, -dz)}"
                )

    def __len__(self) -> int:
        return len(self.offsets)


def ball_element(diameter: int) -> StructuringElement:
    """Discrete ball inscribed in a cube of odd side ``diameter``.

    Offsets are those with Euclidean norm at most ``(diameter - 1) / 2``,
    so diameter 1 gives just the origin, 3 gives the 7-offset face cross,
    and 5 gives a 33-offset ball of radius 2.
    """
    if diameter < 1 or diameter % 2 == 0:
        raise ValueError(f"diameter must be odd and positive, got {diameter}")
    r = (diameter - 1) // 2
    offs = []
    for dz in range(-r, r + 1):
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if dx * dx + dy * dy + dz * dz <= r * r:
                    offs.append((dx, dy, dz))
    return StructuringElement(tuple(offs))


def _shifted_views(shape, dx: int, dy: int, dz: int):
    """Index pairs (dst, src) so that dst voxels v correspond to src voxels v - o."""
    dst = []
    src = []
    for n, d in zip(shape, (dz, dy, dx)):
        if d >= 0:
            dst.append(slice(d, n))
            src.append(slice(0, n - d))
        else:
            dst.append(slice(0, n + d))
            src.append(slice(-d, n))
    return tuple(dst), tuple(src)


def dilate(mask: BinaryVolume, se: StructuringElement) -> BinaryVolume:
    """Binary dilation: output(v) = OR over offsets o of mask(v - o)."""
    src_arr = mask.data
    out = np.zeros(src_arr.shape, dtype=bool)
    for dx, dy, dz in se.offsets:
        dst, src = _shifted_views(src_arr.shape, dx, dy, dz)
        np.logical_or(out[dst], src_arr[src], out=out[dst])
    return BinaryVolume(mask.dims, out)


def erode(mask: BinaryVolume, se: StructuringElement) -> BinaryVolume:
    """Binary erosion: output(v) = AND over offsets o of mask(v + o).

    Out-of-bounds voxels count as false, so any offset pointing outside
    the grid clears the output voxel.
    """
    src_arr = mask.data
    out = np.ones(src_arr.shape, dtype=bool)
    for dx, dy, dz in se.offsets:
        # v + o in bounds corresponds to the dst/src pair of the negated offset
        dst, src = _shifted_views(src_arr.shape, -dx, -dy, -dz)
        shifted = np.zeros(src_arr.shape, dtype=bool)
        shifted[dst] = src_arr[src]
        np.logical_and(out, shifted, out=out)
    return BinaryVolume(mask.dims, out)


def closing(mask: BinaryVolume, se: StructuringElement) -> BinaryVolume:
    """Dilation followed by erosion; fills gaps smaller than the element."""
    return erode(dilate(mask, se), se)


def connected_components(mask: BinaryVolume, conn: Connectivity) -> LabelVolume:
    """Label connected true-regions 1..k.

    Labels are renumbered so component 1 holds the smallest flat index of
    any component, component 2 the next, and so on.
    """
    labeled, count = ndimage.label(mask.data, structure=_scipy_structure(conn))
    if count == 0:
        return LabelVolume(mask.dims, labeled.astype(np.uint32))
    flat = labeled.ravel()
    present, first_idx = np.unique(flat, return_index=True)
    nz = present != 0
    present, first_idx = present[nz], first_idx[nz]
    # rank components by first occurrence == minimum flat index
    order = np.argsort(first_idx, kind="stable")
    lut = np.zeros(int(present.max()) + 1, dtype=np.uint32)
    lut[present[order]] = np.arange(1, order.size + 1, dtype=np.uint32)
    return LabelVolume(mask.dims, lut[labeled])


def remove_small_objects(
    mask: BinaryVolume, min_size: int, conn: Connectivity
) -> BinaryVolume:
    """Clear every connected component with fewer than min_size voxels."""
    if min_size < 0:
        raise ValueError(f"min_size must be >= 0, got {min_size}")
    if min_size <= 1:
        return mask
    comps = connected_components(mask, conn)
    counts = np.bincount(comps.data.ravel())
    keep = counts >= min_size
    keep[0] = False
    return BinaryVolume(mask.dims, keep[comps.data])


def mask_subtract(a: BinaryVolume, b: BinaryVolume) -> BinaryVolume:
    """Voxels true in a but not in b."""
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims!r} vs {b.dims!r}")
    return BinaryVolume(a.dims, a.data & ~b.data)
