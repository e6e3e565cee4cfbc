"""Single-band height rasters (nDSM) with NaN as the only NoData value.

Two on-disk formats are understood:

* ESRI ASCII Grid (``ncols``/``nrows``/... header, cells row-major from the
  top row). ``NODATA_value`` cells become NaN.
* ``HGR1`` raw binary: 16-byte header made of the magic ``b"HGR1"``, width and
  height as little-endian uint32, and 4 reserved zero bytes, followed by
  ``width * height`` little-endian float32 cells, row-major.

Georeferencing keys are parsed and kept on the raster but otherwise unused.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Tuple

import numpy as np

from .errors import DimensionMismatch, HeaderMismatch, NonFiniteHeader, UnknownFormat
from .geometry import BinaryMask

HGR_MAGIC = b"HGR1"
HGR_HEADER = struct.Struct("<4sII4x")
RASTER_SUFFIXES = (".asc", ".hgr")

_ASC_INT_KEYS = ("ncols", "nrows")
_ASC_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter",
             "cellsize", "nodata_value")


@dataclass(frozen=True, eq=False)
class HeightRaster:
    values: np.ndarray
    georef: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("raster values must be 2-D (height, width)")
        if np.isinf(values).any():
            raise ValueError("raster values must be finite or NaN")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def same_as(self, other: "HeightRaster") -> bool:
        """NaN-aware equality of dimensions and cells."""
        return (self.values.shape == other.values.shape
                and bool(np.array_equal(self.values, other.values, equal_nan=True)))


def _parse_asc_header(tokens, path) -> Tuple[Dict[str, float], int]:
    header: Dict[str, float] = {}
    i = 0
    while i + 1 < len(tokens) and tokens[i].lower() in _ASC_KEYS:
        key = tokens[i].lower()
        try:
            val = float(tokens[i + 1])
        except ValueError:
            raise UnknownFormat(f"{path}: bad header value for {key!r}: {tokens[i + 1]!r}")
        if not math.isfinite(val):
            raise NonFiniteHeader(f"{path}: header field {key} is {tokens[i + 1]}")
        header[key] = val
        i += 2
    for key in _ASC_INT_KEYS:
        if key not in header:
            raise UnknownFormat(f"{path}: ASCII grid header lacks {key}")
        if header[key] != int(header[key]) or header[key] <= 0:
            raise HeaderMismatch(f"{path}: {key} must be a positive integer, got {header[key]}")
    return header, i


def _read_asc(data: bytes, path) -> HeightRaster:
    tokens = data.decode("ascii", errors="strict").split()
    header, start = _parse_asc_header(tokens, path)
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    cells = tokens[start:]
    if len(cells) != ncols * nrows:
        raise HeaderMismatch(
            f"{path}: header declares {ncols}x{nrows}={ncols * nrows} cells, payload has {len(cells)}")
    try:
        values = np.array(cells, dtype=np.float64).reshape(nrows, ncols)
    except ValueError as exc:
        raise UnknownFormat(f"{path}: non-numeric cell value ({exc})")
    if "nodata_value" in header:
        values[values == header["nodata_value"]] = np.nan
    values[np.isinf(values)] = np.nan
    georef = {k: v for k, v in header.items() if k not in _ASC_INT_KEYS}
    return HeightRaster(values, georef)


def _read_hgr(data: bytes, path) -> HeightRaster:
    if len(data) < HGR_HEADER.size:
        raise HeaderMismatch(f"{path}: truncated HGR1 header")
    _, width, height = HGR_HEADER.unpack_from(data)
    payload = len(data) - HGR_HEADER.size
    if payload != width * height * 4:
        raise HeaderMismatch(
            f"{path}: header declares {width}x{height} cells, payload holds {payload / 4:g}")
    values = np.frombuffer(data, dtype="<f4", offset=HGR_HEADER.size).astype(np.float64)
    values = values.reshape(height, width)
    values[np.isinf(values)] = np.nan
    return HeightRaster(values)


def _looks_like_asc(data: bytes) -> bool:
    head = data[:64].lstrip().lower()
    return head.startswith(b"ncols") or head.startswith(b"nrows")


# Format adapters: (sniffer, reader). A GeoTIFF reader can be appended here.
READERS: list[Tuple[Callable[[bytes], bool], Callable[[bytes, object], HeightRaster]]] = [
    (lambda d: d[:4] == HGR_MAGIC, _read_hgr),
    (_looks_like_asc, _read_asc),
]


def read_raster(path) -> HeightRaster:
    data = Path(path).read_bytes()
    for sniff, reader in READERS:
        if sniff(data):
            return reader(data, path)
    raise UnknownFormat(f"{path}: not an ESRI ASCII grid or HGR1 raster")


def read_raster_shape(path) -> Tuple[int, int]:
    """Return ``(width, height)`` from the header without decoding cells."""
    with open(path, "rb") as fh:
        head = fh.read(4096)
    if head[:4] == HGR_MAGIC:
        if len(head) < HGR_HEADER.size:
            raise HeaderMismatch(f"{path}: truncated HGR1 header")
        _, width, height = HGR_HEADER.unpack_from(head)
        return width, height
    if _looks_like_asc(head):
        tokens = head.decode("ascii", errors="replace").split()
        header, _ = _parse_asc_header(tokens[:40], path)
        return int(header["ncols"]), int(header["nrows"])
    raise UnknownFormat(f"{path}: not an ESRI ASCII grid or HGR1 raster")


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_hgr(raster: HeightRaster, path) -> None:
    header = HGR_HEADER.pack(HGR_MAGIC, raster.width, raster.height)
    _atomic_write(path, header + raster.values.astype("<f4").tobytes())


def write_asc(raster: HeightRaster, path, nodata: float = -9999.0) -> None:
    lines = [f"ncols {raster.width}", f"nrows {raster.height}",
             f"xllcorner {raster.georef.get('xllcorner', 0.0):g}",
             f"yllcorner {raster.georef.get('yllcorner', 0.0):g}",
             f"cellsize {raster.georef.get('cellsize', 1.0):g}",
             f"NODATA_value {nodata:g}"]
    for row in raster.values:
        lines.append(" ".join(f"{nodata:g}" if np.isnan(v) else repr(float(v)) for v in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def sample_under_mask(raster: HeightRaster, mask: BinaryMask) -> np.ndarray:
    """Heights under every set mask pixel, row-major, NaN kept."""
    if raster.values.shape != mask.bits.shape:
        raise DimensionMismatch(
            f"raster is {raster.width}x{raster.height}, mask is {mask.width}x{mask.height}")
    return raster.values[mask.bits]


def find_raster(raster_dir, stem: str):
    """Raster in ``raster_dir`` whose file stem equals ``stem``, or None."""
    for suffix in RASTER_SUFFIXES:
        cand = Path(raster_dir) / f"{stem}{suffix}"
        if cand.is_file():
            return cand
    return None
