"""Reader and writer for a minimal raw NRRD subset.

Only what the toolchain needs: 3D volumes, raw little-endian payloads, and
the three voxel types float32 / uint8 / uint32.  The header is ASCII lines
terminated by a blank line; the payload follows with x varying fastest.
Compressed encodings and detached headers are out of scope.
"""
from __future__ import annotations

import os
from typing import Union

import numpy as np

from .volume import BinaryVolume, Dims, LabelVolume, ScalarVolume

__all__ = ["NrrdFormatError", "read_volume", "write_volume"]

MAGIC = "NRRD0004"

Volume = Union[ScalarVolume, BinaryVolume, LabelVolume]

# NRRD type word <-> (numpy little-endian dtype, volume class)
_TYPES = {
    "float": (np.dtype("<f4"), ScalarVolume),
    "uint8": (np.dtype("u1"), BinaryVolume),
    "uint32": (np.dtype("<u4"), LabelVolume),
}
_CLASS_TO_TYPE = {ScalarVolume: "float", BinaryVolume: "uint8", LabelVolume: "uint32"}


class NrrdFormatError(ValueError):
    """Raised for malformed headers or payloads."""


def _read_header(fh) -> dict[str, str]:
    magic = fh.readline()
    if not magic.startswith(MAGIC.encode("ascii")):
        raise NrrdFormatError(f"bad magic line {magic!r}, expected {MAGIC!r}")
    fields: dict[str, str] = {}
    while True:
        raw = fh.readline()
        if raw in (b"\n", b""):
            if raw == b"":
                raise NrrdFormatError("header not terminated by a blank line")
            return fields
        try:
            line = raw.decode("ascii").rstrip("\n")
        except UnicodeDecodeError as exc:
            raise NrrdFormatError(f"non-ASCII header line {raw!r}") from exc
        if line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise NrrdFormatError(f"malformed header line {line!r}")
        fields[key.strip().lower()] = value.strip()


def _require(fields: dict[str, str], key: str) -> str:
    if key not in fields:
        raise NrrdFormatError(f"missing required header field {key!r}")
    return fields[key]


def read_volume(path: Union[str, os.PathLike]) -> Volume:
    """Read a volume file, dispatching on its declared type.

    Returns a ScalarVolume for "float", a BinaryVolume for "uint8" (any
    nonzero byte counts as true), or a LabelVolume for "uint32".
    """
    with open(path, "rb") as fh:
        fields = _read_header(fh)
        payload = fh.read()

    type_word = _require(fields, "type")
    if type_word not in _TYPES:
        raise NrrdFormatError(f"unsupported type {type_word!r}")
    dtype, cls = _TYPES[type_word]

    if _require(fields, "dimension") != "3":
        raise NrrdFormatError(
            f"unsupported dimension {fields['dimension']!r}, only 3 is supported"
        )
    encoding = _require(fields, "encoding")
    if encoding != "raw":
        raise NrrdFormatError(f"unsupported encoding {encoding!r}")
    endian = _require(fields, "endian")
    if endian != "little":
        raise NrrdFormatError(f"unsupported endian {endian!r}, expected 'little'")

    sizes = _require(fields, "sizes").split()
    if len(sizes) != 3:
        raise NrrdFormatError(f"sizes must list 3 extents, got {fields['sizes']!r}")
    try:
        nx, ny, nz = (int(s) for s in sizes)
        dims = Dims(nx, ny, nz)
    except ValueError as exc:
        raise NrrdFormatError(f"bad sizes {fields['sizes']!r}: {exc}") from exc

    expected = dims.voxel_count() * dtype.itemsize
    if len(payload) != expected:
        raise NrrdFormatError(
            f"payload length {len(payload)} does not match "
            f"sizes {nx} {ny} {nz} ({expected} bytes expected)"
        )

    flat = np.frombuffer(payload, dtype=dtype)
    arr = flat.reshape(dims.shape)  # (nz, ny, nx): x fastest in the flat payload
    if cls is BinaryVolume:
        arr = arr != 0
    return cls(dims, arr)


def write_volume(volume: Volume, path: Union[str, os.PathLike]) -> None:
    """Write a volume as a raw little-endian file readable by read_volume."""
    type_word = _CLASS_TO_TYPE.get(type(volume))
    if type_word is None:
        raise TypeError(f"cannot write {type(volume).__name__}")
    dtype, _ = _TYPES[type_word]
    d = volume.dims
    header = (
        f"{MAGIC}\n"
        f"type: {type_word}\n"
        "dimension: 3\n"
        f"sizes: {d.nx} {d.ny} {d.nz}\n"
        "encoding: raw\n"
        "endian: little\n"
        "\n"
    )
    payload = np.ascontiguousarray(volume.data.astype(dtype, copy=False))
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload.tobytes())
