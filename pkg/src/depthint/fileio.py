"""Depth map storage: PFM (float32) and KITTI-style 16-bit PNG (raw / 256)."""

from __future__ import annotations

import re
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DepthOutOfRange, MalformedHeader
from .grid import DepthGrid, SparseObservation

PNG16_SCALE = 256.0
PNG16_MAX_DEPTH = 65535 / PNG16_SCALE


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return "pfm"
    if suffix == ".png":
        return "png16"
    raise ValueError(f"cannot infer depth format from {path!r} (use .pfm or .png)")


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        tag = fh.readline().rstrip()
        if tag != b"Pf":
            raise MalformedHeader(f"{path}: expected single-channel 'Pf' tag, got {tag!r}")
        dims = re.fullmatch(rb"\s*(\d+)\s+(\d+)\s*", fh.readline())
        if not dims:
            raise MalformedHeader(f"{path}: bad dimension line")
        width, height = int(dims.group(1)), int(dims.group(2))
        try:
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise MalformedHeader(f"{path}: bad scale line") from exc
        if scale == 0:
            raise MalformedHeader(f"{path}: zero scale")
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(), dtype=dtype)
    if data.size != width * height:
        raise MalformedHeader(f"{path}: expected {width * height} floats, found {data.size}")
    # PFM stores rows bottom to top
    return np.flipud(data.reshape(height, width)).astype(np.float64)


def write_pfm(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float32)
    height, width = values.shape
    endian = -1.0 if sys.byteorder == "little" else 1.0
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{width} {height}\n".encode())
        fh.write(f"{endian}\n".encode())
        fh.write(np.ascontiguousarray(np.flipud(values)).tobytes())


def read_png16(path) -> np.ndarray:
    with Image.open(path) as img:
        raw = np.array(img)
    if raw.ndim != 2:
        raise MalformedHeader(f"{path}: expected a single-channel 16-bit PNG")
    return raw.astype(np.float64) / PNG16_SCALE


def write_png16(path, values: np.ndarray, valid: np.ndarray) -> None:
    v = np.where(valid, values, 0.0)
    raw = np.rint(v * PNG16_SCALE)
    if np.any(raw[valid] > 65535):
        raise DepthOutOfRange(f"depth above {PNG16_MAX_DEPTH:.3f} cannot be stored in PNG16")
    if np.any(raw[valid] < 1):
        raise DepthOutOfRange("depth below 1/512 would round to the invalid marker")
    Image.fromarray(raw.astype(np.uint16)).save(path, format="PNG")


def read_depth(path, fmt: str | None = None) -> DepthGrid:
    """Load a linear depth map; zero, negative and NaN pixels are invalid."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    fmt = fmt or infer_format(path)
    values = read_pfm(path) if fmt == "pfm" else read_png16(path)
    valid = np.isfinite(values) & (values > 0)
    return DepthGrid(np.where(valid, values, 0.0), valid)


def write_depth(grid: DepthGrid, path, fmt: str | None = None) -> None:
    fmt = fmt or infer_format(path)
    if grid.space != "linear":
        raise ValueError("only linear depth grids can be written")
    if fmt == "pfm":
        write_pfm(path, np.where(grid.valid, grid.values, 0.0))
    else:
        write_png16(path, grid.values, grid.valid)


def read_sparse(path, fmt: str | None = None) -> SparseObservation:
    grid = read_depth(path, fmt)
    return SparseObservation(grid.masked(0.0), grid.valid)


def write_sparse(obs: SparseObservation, path, fmt: str | None = None) -> None:
    fmt = fmt or infer_format(path)
    if fmt == "pfm":
        write_pfm(path, obs.values)
    else:
        write_png16(path, obs.values, obs.mask)


def read_image(path) -> np.ndarray:
    """RGB or grayscale image as float64 in [0, 1]."""
    with Image.open(path) as img:
        arr = np.array(img.convert("RGB") if img.mode not in ("L", "I;16", "I", "F") else img)
    arr = arr.astype(np.float64)
    return arr / (65535.0 if arr.max() > 255 else 255.0)
