"""Priority-flood watershed and marker extraction.

The flood maintains one global min-priority queue.  Entries are ordered by
priority, then by insertion counter, so plateaus are consumed first-in
first-out and the result is fully determined by the inputs: rerunning the
flood, in any process or thread configuration, reproduces the labeling
bit for bit.  There are no watershed lines; every voxel ends up labeled.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .morphology import Connectivity, connected_components, connectivity_offsets
from .volume import BinaryVolume, LabelVolume, ScalarVolume

__all__ = [
    "NoMarkersError",
    "seeded_watershed",
    "local_minima_markers",
    "marker_watershed",
    "reject_background_segments",
]


class NoMarkersError(RuntimeError):
    """Raised when a watershed is asked to flood from an empty marker set."""


@njit(cache=True, nogil=True, inline="always")
def _heap_less(hp, hc, i, j):
    if hp[i] != hp[j]:
        return hp[i] < hp[j]
    return hc[i] < hc[j]


@njit(cache=True, nogil=True)
def _heap_push(hp, hc, hi, size, prio, counter, idx):
    hp[size] = prio
    hc[size] = counter
    hi[size] = idx
    child = size
    while child > 0:
        parent = (child - 1) >> 1
        if _heap_less(hp, hc, child, parent):
            hp[child], hp[parent] = hp[parent], hp[child]
            hc[child], hc[parent] = hc[parent], hc[child]
            hi[child], hi[parent] = hi[parent], hi[child]
            child = parent
        else:
            break
    return size + 1


@njit(cache=True, nogil=True)
def _heap_pop(hp, hc, hi, size):
    size -= 1
    hp[0], hp[size] = hp[size], hp[0]
    hc[0], hc[size] = hc[size], hc[0]
    hi[0], hi[size] = hi[size], hi[0]
    parent = 0
    while True:
        left = 2 * parent + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _heap_less(hp, hc, right, left):
            best = right
        if _heap_less(hp, hc, best, parent):
            hp[best], hp[parent] = hp[parent], hp[best]
            hc[best], hc[parent] = hc[parent], hc[best]
            hi[best], hi[parent] = hi[parent], hi[best]
            parent = best
        else:
            break
    return size


@njit(cache=True, nogil=True)
def _flood(values, labels, nx, ny, nz, offsets, trace):
    """Flood `labels` in place over flat float32 `values`; fills `trace`
    with the popped priorities in pop order."""
    n = nx * ny * nz
    hp = np.empty(n + 1, np.float64)
    hc = np.empty(n + 1, np.int64)
    hi = np.empty(n + 1, np.int64)
    size = 0
    counter = 0
    for i in range(n):
        if labels[i] != 0:
            size = _heap_push(hp, hc, hi, size, values[i], counter, i)
            counter += 1
    pops = 0
    noffs = offsets.shape[0]
    while size > 0:
        prio = hp[0]
        i = hi[0]
        size = _heap_pop(hp, hc, hi, size)
        trace[pops] = prio
        pops += 1
        lbl = labels[i]
        x = i % nx
        y = (i // nx) % ny
        z = i // (nx * ny)
        for k in range(noffs):
            xx = x + offsets[k, 0]
            yy = y + offsets[k, 1]
            zz = z + offsets[k, 2]
            if xx < 0 or xx >= nx or yy < 0 or yy >= ny or zz < 0 or zz >= nz:
                continue
            j = xx + nx * (yy + ny * zz)
            if labels[j] == 0:
                labels[j] = lbl
                p = values[j]
                if prio > p:
                    p = prio
                size = _heap_push(hp, hc, hi, size, p, counter, j)
                counter += 1
    return pops


def _offset_array(conn: Connectivity) -> np.ndarray:
    return np.asarray(connectivity_offsets(conn), dtype=np.int64)


def seeded_watershed(
    landscape: ScalarVolume,
    markers: LabelVolume,
    conn: Connectivity = Connectivity.FACE6,
    return_pop_trace: bool = False,
):
    """Grow marker regions over the landscape until every voxel is labeled.

    The queue starts with all marker voxels at their landscape values.  The
    minimum entry is popped and its label spreads to unlabeled neighbors,
    each queued at max(its landscape value, the popped priority), which
    makes the popped priority sequence non-decreasing.

    Parameters
    ----------
    landscape : ScalarVolume
        Flooding surface; lower values flood first.
    markers : LabelVolume
        Nonzero voxels keep their label and start the flood.
    conn : Connectivity
        Neighborhood used for spreading.
    return_pop_trace : bool
        When true, also return the float64 array of popped priorities in
        pop order (one entry per voxel).

    Returns
    -------
    LabelVolume, or (LabelVolume, np.ndarray) with the trace.
    """
    if landscape.dims != markers.dims:
        raise ValueError(f"dims mismatch: {landscape.dims!r} vs {markers.dims!r}")
    if not markers.data.any():
        raise NoMarkersError("marker volume has no nonzero voxel")
    d = landscape.dims
    labels = markers.data.astype(np.int64).ravel()
    trace = np.empty(d.voxel_count(), dtype=np.float64)
    _flood(
        landscape.data.ravel(),
        labels,
        d.nx,
        d.ny,
        d.nz,
        _offset_array(conn),
        trace,
    )
    out = LabelVolume(d, labels.reshape(d.shape).astype(np.uint32))
    if return_pop_trace:
        return out, trace
    return out


def _aligned_views(shape, dx: int, dy: int, dz: int):
    """Slice pairs (here, there) so there-voxels sit at offset o from here-voxels."""
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


def local_minima_markers(
    volume: ScalarVolume, conn: Connectivity = Connectivity.FACE6
) -> LabelVolume:
    """Label the regional minima plateaus of a scalar volume.

    A voxel is a candidate when no in-bounds neighbor has a strictly
    smaller value.  Adjacent candidates always share one value, so the
    connected components of the candidate mask are constant plateaus.  A
    plateau becomes a marker when some border neighbor is strictly greater
    than it, or when it covers the whole volume (constant input gives one
    marker).  Markers are numbered 1..k by ascending minimum flat index.
    """
    arr = volume.data
    shape = arr.shape
    neighbor_min = np.full(shape, np.inf, dtype=np.float32)
    for dx, dy, dz in connectivity_offsets(conn):
        here, there = _aligned_views(shape, dx, dy, dz)
        np.minimum(neighbor_min[here], arr[there], out=neighbor_min[here])
    candidates = arr <= neighbor_min

    regions = connected_components(BinaryVolume(volume.dims, candidates), conn)
    count = regions.instance_count()
    if count == 0:
        return regions

    has_greater = np.zeros(count + 1, dtype=bool)
    lbl = regions.data
    for dx, dy, dz in connectivity_offsets(conn):
        here, there = _aligned_views(shape, dx, dy, dz)
        rising = (lbl[here] > 0) & (arr[there] > arr[here])
        if rising.any():
            has_greater[np.unique(lbl[here][rising])] = True

    sizes = np.bincount(lbl.ravel(), minlength=count + 1)
    keep = has_greater.copy()
    keep[1:] |= sizes[1:] == volume.dims.voxel_count()
    keep[0] = False

    # renumber kept plateaus, preserving min-flat-index order
    lut = np.zeros(count + 1, dtype=np.uint32)
    lut[keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.uint32)
    return LabelVolume(volume.dims, lut[lbl])


def marker_watershed(
    prob: ScalarVolume, t: float, conn: Connectivity = Connectivity.FACE6
) -> LabelVolume:
    """Flood a probability map from the components of its sub-threshold set.

    Markers are the connected components of {v : prob(v) < t}; note the
    strict inequality, unlike threshold().  Raises NoMarkersError when no
    voxel lies below t.
    """
    below = prob.data < np.float32(t)
    if not below.any():
        raise NoMarkersError(f"no voxel below threshold {t}")
    markers = connected_components(BinaryVolume(prob.dims, below), conn)
    return seeded_watershed(prob, markers, conn)


def reject_background_segments(
    labels: LabelVolume, background_bin: BinaryVolume, frac: float = 0.5
) -> LabelVolume:
    """Zero out every label lying mostly inside the background mask.

    A label is removed when strictly more than ``frac`` of its voxels
    overlap background_bin; a label exactly at the fraction is kept.
    Surviving labels keep their ids.
    """
    if labels.dims != background_bin.dims:
        raise ValueError(f"dims mismatch: {labels.dims!r} vs {background_bin.dims!r}")
    if not 0.0 <= frac <= 1.0:
        raise ValueError(f"frac must lie in [0, 1], got {frac}")
    flat = labels.data.ravel()
    total = np.bincount(flat)
    in_bg = np.bincount(flat[background_bin.data.ravel()], minlength=total.size)
    drop = in_bg > frac * total
    drop[0] = False
    keep_lut = np.where(drop, 0, np.arange(total.size, dtype=np.uint32))
    return LabelVolume(labels.dims, keep_lut[labels.data].astype(np.uint32))
