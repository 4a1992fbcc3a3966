"""Reading and writing tensors, models, traces, images and frame sequences.

Binary tensor files (``.t3``) are a 4-byte magic ``b"T3D1"``, three
little-endian uint64 extents ``I, J, K`` and ``I*J*K`` little-endian float64
values in vec order.
"""
from __future__ import annotations

import csv
import os
import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionError, FormatError, InputError, LengthError, SizeError
from .kruskal import KruskalModel, reconstruct
from .tensor import DenseTensor3

__all__ = [
    "save_tensor",
    "load_tensor",
    "image_to_tensor",
    "tensor_to_image",
    "frames_to_tensor",
    "tensor_to_frames",
    "split_background_foreground",
    "foreground_display",
    "write_trace_csv",
    "read_trace_csv",
    "write_factors",
    "read_factors",
    "TRACE_COLUMNS",
]

MAGIC = b"T3D1"
_HEADER = struct.Struct("<4sQQQ")
# refuse headers whose payload could not be addressed
MAX_ENTRIES = 2**60 // 8

LUMA = (0.299, 0.587, 0.114)
IMAGE_SUFFIXES = {".png", ".bmp", ".gif", ".jpg", ".jpeg", ".pgm", ".ppm", ".tif", ".tiff"}

TRACE_COLUMNS = (
    "iter", "psi", "residual", "residual_sq", "relative",
    "nnz_alpha", "beta_k", "q_alpha", "step_norm_sq",
)


def save_tensor(t: DenseTensor3, path) -> None:
    i, j, k = t.dims
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, i, j, k))
        fh.write(t.vec().astype("<f8").tobytes())


def load_tensor(path) -> DenseTensor3:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < 4 or head[:4] != MAGIC:
            raise FormatError(f"{path}: bad magic {head[:4]!r}, expected {MAGIC!r}")
        if len(head) < _HEADER.size:
            raise LengthError(f"{path}: truncated header")
        _, i, j, k = _HEADER.unpack(head)
        if min(i, j, k) < 1:
            raise FormatError(f"{path}: extents must be positive, got {(i, j, k)}")
        if i * j * k > MAX_ENTRIES:
            raise SizeError(f"{path}: {i}x{j}x{k} is too large to load")
        n = i * j * k
        payload = fh.read(8 * n + 1)
    if len(payload) != 8 * n:
        raise LengthError(
            f"{path}: header promises {n} values, payload holds {len(payload) / 8:g}"
        )
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    try:
        return DenseTensor3(data, (i, j, k))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _open_image(path):
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError) as exc:
        raise FormatError(f"{path}: cannot read image ({exc})") from None
    return img


def image_to_tensor(path) -> DenseTensor3:
    """8-bit RGB image as an ``H x W x 3`` tensor with values ``v / 255``."""
    img = _open_image(path)
    if img.mode != "RGB":
        raise FormatError(f"{path}: expected an 8-bit RGB image, got mode {img.mode}")
    return DenseTensor3(np.asarray(img, dtype=np.float64) / 255.0)


def _to_uint8(values):
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def tensor_to_image(t: DenseTensor3, path) -> None:
    if t.dims[2] != 3:
        raise DimensionError(f"RGB export needs K = 3, got dims {t.dims}")
    Image.fromarray(_to_uint8(t.data), mode="RGB").save(path)


def _frame_values(img):
    if img.mode in ("L", "I;16", "I", "F") and img.mode != "L":
        raise FormatError(f"{img.filename}: only 8-bit frames are supported (mode {img.mode})")
    if img.mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    return (LUMA[0] * rgb[..., 0] + LUMA[1] * rgb[..., 1] + LUMA[2] * rgb[..., 2]) / 255.0


def frames_to_tensor(directory) -> DenseTensor3:
    """Stack the images in ``directory`` (sorted by name) as frontal slices.

    Colour frames are reduced to BT.601 luma.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")
    names = sorted(
        p.name for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not names:
        raise InputError(f"{directory}: no image frames found")
    frames = []
    for name in names:
        f = _frame_values(_open_image(directory / name))
        if frames and f.shape != frames[0].shape:
            raise DimensionError(
                f"{name}: frame size {f.shape} differs from {frames[0].shape}"
            )
        frames.append(f)
    return DenseTensor3(np.stack(frames, axis=2))


def tensor_to_frames(t: DenseTensor3, directory, prefix="frame") -> list:
    """Write each frontal slice as an 8-bit grayscale PNG; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    k = t.dims[2]
    width = max(4, len(str(k - 1)))
    paths = []
    for idx in range(k):
        p = directory / f"{prefix}_{idx:0{width}d}.png"
        Image.fromarray(_to_uint8(t.data[:, :, idx]), mode="L").save(p)
        paths.append(p)
    return paths


def split_background_foreground(x: DenseTensor3, m: KruskalModel):
    """Background is the low-rank reconstruction, foreground the signed residual."""
    if x.dims != m.dims:
        raise DimensionError(f"tensor {x.dims} vs model {m.dims}")
    background = reconstruct(m)
    foreground = DenseTensor3(x.data - background.data)
    return background, foreground


def foreground_display(foreground: DenseTensor3) -> DenseTensor3:
    """``|foreground|`` rescaled so that its maximum is one."""
    mag = np.abs(foreground.data)
    peak = mag.max()
    return DenseTensor3(mag / peak if peak > 0 else mag)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in trace:
            w.writerow([_fmt(getattr(rec, c)) for c in TRACE_COLUMNS])


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({
            c: int(row[c]) if c in ("iter", "nnz_alpha") else float(row[c])
            for c in TRACE_COLUMNS
        })
    return out


def _write_matrix(m, path):
    with open(path, "w", newline="") as fh:
        for row in np.asarray(m):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_matrix(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    rows = [[float(v) for v in line.split(",")] if line else [] for line in lines]
    if not rows:
        raise FormatError(f"{path}: empty factor file")
    ncol = len(rows[0])
    if any(len(r) != ncol for r in rows):
        raise FormatError(f"{path}: ragged rows")
    return np.array(rows, dtype=np.float64).reshape(len(rows), ncol)


def write_factors(m: KruskalModel, directory) -> None:
    """Write ``A.csv``, ``B.csv``, ``C.csv`` (one matrix row per line) and ``alpha.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("A", "B", "C"):
        _write_matrix(getattr(m, name), directory / f"{name}.csv")
    with open(directory / "alpha.csv", "w", newline="") as fh:
        fh.writelines(repr(float(v)) + "\n" for v in m.alpha)


def read_factors(directory) -> KruskalModel:
    directory = Path(directory)
    try:
        A, B, C = (_read_matrix(directory / f"{n}.csv") for n in ("A", "B", "C"))
        with open(directory / "alpha.csv") as fh:
            alpha = np.array([float(v) for v in fh.read().split()], dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{directory}: cannot read factors ({exc})") from None
    R = alpha.size
    A, B, C = (f.reshape(f.shape[0], R) if f.size == 0 else f for f in (A, B, C))
    return KruskalModel(A, B, C, alpha)
