"""Dense volumetric containers and index arithmetic.

Every volume is a dense 3D grid stored as a numpy array indexed ``[z, y, x]``
in C order, so the flat index of voxel ``(x, y, z)`` is
``x + nx * (y + ny * z)`` and x varies fastest in memory.  Volumes are
immutable after construction: the wrapped array is marked read-only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dims",
    "ScalarVolume",
    "BinaryVolume",
    "LabelVolume",
    "threshold",
]


@dataclass(frozen=True, order=True)
class Dims:
    """Grid extents along x, y, z."""

    nx: int
    ny: int
    nz: int

    def __post_init__(self) -> None:
        for name, n in (("nx", self.nx), ("ny", self.ny), ("nz", self.nz)):
            if not isinstance(n, (int, np.integer)) or n <= 0:
                raise ValueError(f"{name} must be a positive integer, got {n!r}")
        if self.voxel_count() > np.iinfo(np.intp).max:
            raise ValueError(f"volume of {self!r} exceeds addressable size")

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape in ``(nz, ny, nx)`` order."""
        return (self.nz, self.ny, self.nx)

    @classmethod
    def from_shape(cls, shape: tuple[int, int, int]) -> "Dims":
        nz, ny, nx = shape
        return cls(int(nx), int(ny), int(nz))

    def voxel_count(self) -> int:
        return self.nx * self.ny * self.nz

    def contains(self, x: int, y: int, z: int) -> bool:
        return 0 <= x < self.nx and 0 <= y < self.ny and 0 <= z < self.nz

    def flatten(self, x: int, y: int, z: int) -> int:
        """Flat index of voxel (x, y, z); raises if out of bounds."""
        if not self.contains(x, y, z):
            raise IndexError(f"voxel ({x}, {y}, {z}) outside {self!r}")
        return x + self.nx * (y + self.ny * z)

    def unflatten(self, index: int) -> tuple[int, int, int]:
        """Inverse of :meth:`flatten`."""
        if not 0 <= index < self.voxel_count():
            raise IndexError(f"flat index {index} outside {self!r}")
        x = index % self.nx
        y = (index // self.nx) % self.ny
        z = index // (self.nx * self.ny)
        return (x, y, z)


class _Volume:
    """Shared plumbing for the three concrete volume kinds."""

    __slots__ = ("dims", "data")

    _dtype: np.dtype

    def __init__(self, dims: Dims, data: np.ndarray):
        if not isinstance(dims, Dims):
            raise TypeError(f"dims must be Dims, got {type(dims).__name__}")
        if data.shape != dims.shape:
            raise ValueError(f"data shape {data.shape} does not match {dims!r}")
        arr = np.asarray(data)
        # Copy unless the source is already a frozen array of the right layout;
        # freezing a caller-owned writable array in place would be a surprise.
        if arr.dtype != self._dtype or not arr.flags.c_contiguous or arr.flags.writeable:
            arr = np.array(arr, dtype=self._dtype, order="C")
            arr.setflags(write=False)
        self._validate(arr)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def _validate(self, arr: np.ndarray) -> None:
        pass

    @classmethod
    def from_array(cls, array: np.ndarray) -> "_Volume":
        """Wrap a ``[z, y, x]``-indexed array, copying and casting as needed."""
        arr = np.asarray(array)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3D array, got ndim={arr.ndim}")
        return cls(Dims.from_shape(arr.shape), arr)

    @classmethod
    def zeros(cls, dims: Dims) -> "_Volume":
        return cls(dims, np.zeros(dims.shape, dtype=cls._dtype))

    @classmethod
    def full(cls, dims: Dims, value) -> "_Volume":
        return cls(dims, np.full(dims.shape, value, dtype=cls._dtype))

    def at(self, x: int, y: int, z: int):
        """Value at voxel (x, y, z)."""
        if not self.dims.contains(x, y, z):
            raise IndexError(f"voxel ({x}, {y}, {z}) outside {self.dims!r}")
        return self.data[z, y, x]

    def identical(self, other: "_Volume") -> bool:
        return (
            type(self) is type(other)
            and self.dims == other.dims
            and bool(np.array_equal(self.data, other.data))
        )

    def __repr__(self) -> str:
        d = self.dims
        return f"{type(self).__name__}(nx={d.nx}, ny={d.ny}, nz={d.nz})"


class ScalarVolume(_Volume):
    """Float32 volume; every value must be finite.

    Used both for probability maps (values in [0, 1]) and for signed
    watershed landscapes.  Callers that require a probability map should
    invoke :meth:`validate_probability_map` at their boundary.
    """

    _dtype = np.dtype(np.float32)

    def _validate(self, arr: np.ndarray) -> None:
        if not np.isfinite(arr).all():
            raise ValueError("ScalarVolume values must all be finite")

    def validate_probability_map(self, name: str = "volume") -> "ScalarVolume":
        """Raise ValueError unless all values lie inside [0, 1]."""
        lo = float(self.data.min(initial=0.0))
        hi = float(self.data.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise ValueError(
                f"{name} is not a probability map: values span [{lo}, {hi}]"
            )
        return self


class BinaryVolume(_Volume):
    """Boolean mask volume."""

    _dtype = np.dtype(bool)

    def count_true(self) -> int:
        return int(self.data.sum())


class LabelVolume(_Volume):
    """Instance labeling; 0 is background, labels need not be contiguous."""

    _dtype = np.dtype(np.uint32)

    def labels(self) -> np.ndarray:
        """Sorted array of distinct nonzero labels."""
        u = np.unique(self.data)
        return u[u != 0]

    def instance_count(self) -> int:
        return int(self.labels().size)


def threshold(volume: ScalarVolume, t: float) -> BinaryVolume:
    """Binarize a scalar volume: voxels with value >= t become true.

    The >= convention means a voxel exactly at the threshold counts as
    foreground.
    """
    if not isinstance(volume, ScalarVolume):
        raise TypeError("threshold expects a ScalarVolume")
    return BinaryVolume(volume.dims, volume.data >= np.float32(t))
