"""MetaImage (.mhd + .raw) volume I/O.

Only the 3-D little-endian subset this project writes is supported:
``MET_FLOAT`` (32-bit float images) and ``MET_UCHAR`` (8-bit label maps).
The header's ``DimSize`` lists the array dimensions (H, W, T) with the first
listed dimension varying fastest in the raw payload, the usual MetaImage
layout. Round trips are bit-exact.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

_DTYPE_TO_MET = {np.dtype(np.float32): "MET_FLOAT", np.dtype(np.uint8): "MET_UCHAR"}
_MET_TO_DTYPE = {v: k for k, v in _DTYPE_TO_MET.items()}


class MhdFormatError(ValueError):
    """Raised for malformed headers, payload size mismatches or unsupported types."""


def write_mhd(volume: np.ndarray, spacing: Sequence[float], path: Path | str) -> None:
    """Write ``volume`` as ``path`` (.mhd header) plus a sibling .raw payload."""
    volume = np.asarray(volume)
    if volume.ndim != 3:
        raise MhdFormatError(f"only 3-D volumes supported, got shape {volume.shape}")
    met_type = _DTYPE_TO_MET.get(volume.dtype)
    if met_type is None:
        raise MhdFormatError(
            f"unsupported dtype {volume.dtype}; use float32 or uint8"
        )
    path = Path(path)
    if path.suffix != ".mhd":
        raise MhdFormatError(f"header path must end in .mhd, got {path.name}")
    raw_name = path.with_suffix(".raw").name
    header = "".join(
        [
            "ObjectType = Image\n",
            "NDims = 3\n",
            "BinaryData = True\n",
            "BinaryDataByteOrderMSB = False\n",
            "CompressedData = False\n",
            f"DimSize = {volume.shape[0]} {volume.shape[1]} {volume.shape[2]}\n",
            f"ElementSpacing = {spacing[0]:g} {spacing[1]:g} {spacing[2]:g}\n",
            f"ElementType = {met_type}\n",
            f"ElementDataFile = {raw_name}\n",
        ]
    )
    path.write_text(header)
    # first listed dimension varies fastest in the payload
    (path.parent / raw_name).write_bytes(
        np.ascontiguousarray(volume, dtype=volume.dtype.newbyteorder("<")).tobytes(order="F")
    )


def read_mhd(path: Path | str) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a .mhd/.raw pair; returns (volume, spacing)."""
    path = Path(path)
    fields: dict[str, str] = {}
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise MhdFormatError(f"{path}: malformed header line {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()

    if fields.get("NDims") != "3":
        raise MhdFormatError(f"{path}: NDims must be 3, got {fields.get('NDims')!r}")
    if fields.get("BinaryDataByteOrderMSB", "False") == "True":
        raise MhdFormatError(f"{path}: big-endian payloads are not supported")
    if fields.get("CompressedData", "False") == "True":
        raise MhdFormatError(f"{path}: compressed payloads are not supported")
    met_type = fields.get("ElementType")
    dtype = _MET_TO_DTYPE.get(met_type or "")
    if dtype is None:
        raise MhdFormatError(
            f"{path}: unsupported ElementType {met_type!r} "
            f"(supported: {sorted(_MET_TO_DTYPE)})"
        )
    try:
        dims = tuple(int(v) for v in fields["DimSize"].split())
        spacing = tuple(float(v) for v in fields["ElementSpacing"].split())
    except (KeyError, ValueError) as exc:
        raise MhdFormatError(f"{path}: bad or missing DimSize/ElementSpacing") from exc
    if len(dims) != 3 or len(spacing) != 3:
        raise MhdFormatError(
            f"{path}: DimSize/ElementSpacing must have 3 entries, "
            f"got {len(dims)}/{len(spacing)}"
        )
    data_file = fields.get("ElementDataFile")
    if not data_file or data_file.upper() == "LOCAL":
        raise MhdFormatError(
            f"{path}: ElementDataFile must name a separate raw file, got {data_file!r}"
        )

    raw_path = path.parent / data_file
    payload = raw_path.read_bytes()
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(payload) != expected:
        raise MhdFormatError(
            f"{raw_path}: payload holds {len(payload)} bytes, "
            f"expected {expected} for DimSize {dims} x {dtype.itemsize} bytes"
        )
    volume = np.frombuffer(payload, dtype=dtype.newbyteorder("<")).reshape(dims, order="F")
    return volume.astype(dtype, copy=True), (spacing[0], spacing[1], spacing[2])
