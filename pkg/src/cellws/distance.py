"""Exact Euclidean distance transforms and the watershed landscape.

Squared distances are computed exactly in integer arithmetic: a scan
along x gives per-line distances, then lower-envelope passes along y and
z minimize f(i) + (j - i)^2 over each column.  The float distance is the
square root of that integer, so edt(mask)**2 is always a sum of three
squares.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .volume import BinaryVolume, ScalarVolume

__all__ = ["edt", "edt_squared", "build_landscape"]

# Larger than any representable in-volume squared distance, safe to add
# grid-sized squares to without overflowing int64.
_INF = np.int64(1) << 50


@njit(cache=True, nogil=True)
def _dist_pass_x(mask, out):
    """Per-(z,y) line: squared distance along x to the nearest true voxel."""
    nz, ny, nx = mask.shape
    for z in range(nz):
        for y in range(ny):
            d = _INF
            for x in range(nx):
                if mask[z, y, x]:
                    d = 0
                elif d < _INF:
                    d += 1
                out[z, y, x] = d
            d = _INF
            for x in range(nx - 1, -1, -1):
                if mask[z, y, x]:
                    d = 0
                elif d < _INF:
                    d += 1
                if d < out[z, y, x]:
                    out[z, y, x] = d
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                g = out[z, y, x]
                if g < _INF:
                    out[z, y, x] = g * g
                else:
                    out[z, y, x] = _INF


@njit(cache=True, nogil=True)
def _envelope_pass(f, out, v, zbound):
    """Lower envelope of parabolas for one column: out[j] = min_i f[i] + (j-i)^2."""
    n = f.shape[0]
    k = 0
    v[0] = 0
    zbound[0] = -_INF
    zbound[1] = _INF
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) // (2 * q - 2 * v[k])
        while s <= zbound[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) // (2 * q - 2 * v[k])
        k += 1
        v[k] = q
        zbound[k] = s
        zbound[k + 1] = _INF
    k = 0
    for q in range(n):
        while zbound[k + 1] < q:
            k += 1
        d = q - v[k]
        out[q] = f[v[k]] + d * d


@njit(cache=True, nogil=True)
def _envelope_y(arr):
    nz, ny, nx = arr.shape
    f = np.empty(ny, np.int64)
    out = np.empty(ny, np.int64)
    v = np.empty(ny, np.int64)
    zb = np.empty(ny + 1, np.int64)
    for z in range(nz):
        for x in range(nx):
            for y in range(ny):
                f[y] = arr[z, y, x]
            _envelope_pass(f, out, v, zb)
            for y in range(ny):
                arr[z, y, x] = out[y]


@njit(cache=True, nogil=True)
def _envelope_z(arr):
    nz, ny, nx = arr.shape
    f = np.empty(nz, np.int64)
    out = np.empty(nz, np.int64)
    v = np.empty(nz, np.int64)
    zb = np.empty(nz + 1, np.int64)
    for y in range(ny):
        for x in range(nx):
            for z in range(nz):
                f[z] = arr[z, y, x]
            _envelope_pass(f, out, v, zb)
            for z in range(nz):
                arr[z, y, x] = out[z]


def edt_squared(mask: BinaryVolume) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest true voxel.

    Returns an int64 array shaped like the volume.  True voxels map to 0.
    If the mask has no true voxel at all, every entry is the sentinel
    (nx + ny + nz)**2 so that edt() reports nx + ny + nz.
    """
    d = mask.dims
    if not mask.data.any():
        sentinel = np.int64(d.nx + d.ny + d.nz)
        return np.full(d.shape, sentinel * sentinel, dtype=np.int64)
    work = np.empty(d.shape, dtype=np.int64)
    _dist_pass_x(mask.data.view(np.uint8), work)
    _envelope_y(work)
    _envelope_z(work)
    return work


def edt(mask: BinaryVolume) -> ScalarVolume:
    """Euclidean distance map, float32, exact up to the final square root."""
    sq = edt_squared(mask)
    return ScalarVolume(mask.dims, np.sqrt(sq.astype(np.float64)).astype(np.float32))


def build_landscape(
    membrane_prob: ScalarVolume,
    membrane_bin: BinaryVolume,
    background_bin: BinaryVolume,
) -> ScalarVolume:
    """Flooding surface for the seed-driven watershed.

    Interiors sit in basins carved by the negated distance to the nearest
    membrane voxel, raw membrane probability re-raises the ridges, and the
    whole surface is zeroed wherever the background mask is set:

        L(v) = (-edt(membrane_bin)(v) + membrane_prob(v)) * (1 - background(v))
    """
    dims = membrane_prob.dims
    if membrane_bin.dims != dims or background_bin.dims != dims:
        raise ValueError("landscape inputs must share dims")
    membrane_prob.validate_probability_map("membrane_prob")
    dist = edt(membrane_bin)
    surface = (membrane_prob.data - dist.data) * (~background_bin.data)
    return ScalarVolume(dims, surface)
