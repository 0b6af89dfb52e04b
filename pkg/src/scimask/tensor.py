"""Data cubes, vectorization, quality metrics and file I/O.

Layout convention used everywhere in the package: a cube ``X`` of shape
``(n1, n2, B)`` is flattened frame by frame, and each frame is flattened
column by column.  Entry ``(r, c, b)`` therefore lands at index
``r + n1*c + n*b`` with ``n = n1*n2``, i.e. a Fortran-order reshape.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rng import substream

__all__ = [
    "DataCube",
    "FrameImage",
    "QualityReport",
    "FormatError",
    "vectorize",
    "devectorize",
    "psnr",
    "psnr_per_frame",
    "save_tensor",
    "load_tensor",
    "read_scit",
    "write_scit",
    "load_pgm_frames",
    "write_pgm",
    "synth_video",
]

SCIT_MAGIC = b"SCIT"
SCIT_VERSION = 1
DTYPE_F32 = 0
DTYPE_U8 = 1
_HEADER = struct.Struct("<4sIIIIB")


class FormatError(ValueError):
    """Malformed or unsupported tensor / image file."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DataCube:
    """A real ``n1 x n2 x B`` signal with amplitude budget ``|v| <= rho/2``."""

    array: np.ndarray
    rho: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.array)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or min(a.shape) < 1:
            raise ValueError(f"cube must be 3-D with positive dims, got shape {a.shape}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        a = _frozen(a)
        if not np.all(np.isfinite(a)):
            raise ValueError("cube values must be finite")
        peak = float(np.max(np.abs(a)))
        if peak > self.rho / 2:
            raise ValueError(f"amplitude {peak:g} exceeds rho/2 = {self.rho / 2:g}")
        object.__setattr__(self, "array", a)

    @property
    def n1(self) -> int:
        return self.array.shape[0]

    @property
    def n2(self) -> int:
        return self.array.shape[1]

    @property
    def B(self) -> int:
        return self.array.shape[2]

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.array.shape

    @property
    def values(self) -> np.ndarray:
        return vectorize(self)

    def frame(self, b: int) -> np.ndarray:
        return self.array[:, :, b]

    def mean_frame(self) -> np.ndarray:
        return self.array.mean(axis=2)


@dataclass(frozen=True, eq=False)
class FrameImage:
    """One ``n1 x n2`` frame, e.g. a snapshot measurement ``Y`` or a noise frame."""

    array: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.array)
        if a.ndim == 3 and a.shape[2] == 1:
            a = a[:, :, 0]
        if a.ndim != 2 or min(a.shape) < 1:
            raise ValueError(f"frame must be 2-D, got shape {a.shape}")
        object.__setattr__(self, "array", _frozen(a))

    @property
    def n1(self) -> int:
        return self.array.shape[0]

    @property
    def n2(self) -> int:
        return self.array.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.array.reshape(-1, order="F")

    @classmethod
    def from_vector(cls, v, n1: int, n2: int) -> "FrameImage":
        v = np.asarray(v, dtype=np.float64)
        if v.size != n1 * n2:
            raise ValueError(f"length {v.size} does not match {n1}x{n2}")
        return cls(v.reshape((n1, n2), order="F"))


@dataclass(frozen=True)
class QualityReport:
    mse: float
    psnr_db: float
    peak: float
    per_frame_psnr: tuple = field(default=())

    @property
    def is_exact(self) -> bool:
        return self.mse == 0.0


def vectorize(cube: DataCube) -> np.ndarray:
    return cube.array.reshape(-1, order="F")


def devectorize(v, n1: int, n2: int, B: int, rho: float | None = None) -> DataCube:
    """Inverse of :func:`vectorize`.

    ``rho`` defaults to the smallest budget that admits ``v`` (minimum 1.0).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != n1 * n2 * B:
        raise ValueError(f"length {v.size} does not match dims {n1}x{n2}x{B}")
    if rho is None:
        rho = max(1.0, 2.0 * float(np.max(np.abs(v))) if v.size else 1.0)
    return DataCube(v.reshape((n1, n2, B), order="F"), rho=rho)


def _psnr_from_mse(mse: float, peak: float) -> float:
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr(reference: DataCube, estimate: DataCube, peak: float | None = None) -> QualityReport:
    """Cube-level MSE ``(1/nB)||x - x_hat||^2`` and PSNR.

    ``peak`` defaults to the reference's dynamic range ``rho``.  A zero MSE
    gives ``psnr_db = inf``.
    """
    if reference.shape != estimate.shape:
        raise ValueError(f"dimension mismatch: {reference.shape} vs {estimate.shape}")
    peak = reference.rho if peak is None else float(peak)
    if not peak > 0:
        raise ValueError("peak must be positive")
    diff = reference.array - estimate.array
    mse = float(np.mean(diff * diff))
    per_frame = tuple(
        _psnr_from_mse(float(np.mean(diff[:, :, b] ** 2)), peak) for b in range(reference.B)
    )
    return QualityReport(mse=mse, psnr_db=_psnr_from_mse(mse, peak), peak=peak, per_frame_psnr=per_frame)


def psnr_per_frame(reference: DataCube, estimate: DataCube, peak: float | None = None) -> float:
    """Average of per-frame PSNRs (the other common SCI convention)."""
    vals = psnr(reference, estimate, peak).per_frame_psnr
    return float(np.mean(vals))


# --- SCIT tensor files ------------------------------------------------------

def write_scit(path, array: np.ndarray, dtype: int) -> None:
    a = np.asarray(array)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError("SCIT payload must be 2-D or 3-D")
    n1, n2, B = a.shape
    if dtype == DTYPE_F32:
        payload = a.reshape(-1, order="F").astype("<f4")
    elif dtype == DTYPE_U8:
        flat = a.reshape(-1, order="F")
        if np.any((flat < 0) | (flat > 255) | (flat != np.round(flat))):
            raise ValueError("u8 payload needs integer values in [0, 255]")
        payload = flat.astype(np.uint8)
    else:
        raise ValueError(f"unknown SCIT dtype code {dtype}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SCIT_MAGIC, SCIT_VERSION, n1, n2, B, dtype))
        fh.write(payload.tobytes())


def read_scit(path) -> tuple[np.ndarray, int]:
    """Return ``(array of shape (n1, n2, B), dtype code)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated SCIT header")
    magic, version, n1, n2, B, dtype = _HEADER.unpack_from(raw)
    if magic != SCIT_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != SCIT_VERSION:
        raise FormatError(f"unsupported SCIT version {version}")
    count = n1 * n2 * B
    if dtype == DTYPE_F32:
        np_dtype, width = np.dtype("<f4"), 4
    elif dtype == DTYPE_U8:
        np_dtype, width = np.dtype(np.uint8), 1
    else:
        raise FormatError(f"unknown dtype code {dtype}")
    body = raw[_HEADER.size:]
    if len(body) != count * width:
        raise FormatError(f"payload has {len(body)} bytes, expected {count * width}")
    flat = np.frombuffer(body, dtype=np_dtype)
    return flat.reshape((n1, n2, B), order="F").copy(), dtype


def save_tensor(path, obj) -> None:
    """Write a cube, frame or raw array as SCIT.

    Float data is stored as little-endian f32 (values are rounded to the
    nearest f32); ``uint8`` arrays are stored as u8.
    """
    if isinstance(obj, (DataCube, FrameImage)):
        write_scit(path, obj.array, DTYPE_F32)
        return
    a = np.asarray(obj)
    write_scit(path, a, DTYPE_U8 if a.dtype == np.uint8 else DTYPE_F32)


def load_tensor(path, rho: float | None = None, as_frame: bool = False):
    """Read a SCIT file.

    u8 payloads come back as a ``uint8`` array of shape ``(n1, n2, B)``; f32
    payloads as a :class:`DataCube` (or :class:`FrameImage` with ``as_frame``).
    """
    a, dtype = read_scit(path)
    if dtype == DTYPE_U8:
        return a
    a = a.astype(np.float64)
    if as_frame:
        if a.shape[2] != 1:
            raise FormatError(f"expected a single frame, file has B={a.shape[2]}")
        return FrameImage(a[:, :, 0])
    if rho is None:
        peak = float(np.max(np.abs(a))) if a.size else 0.0
        rho = 2.0 * peak if peak > 0 else 1.0
    return DataCube(a, rho=rho)


# --- PGM ----------------------------------------------------------------------

def _pgm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(raw[start:pos])
    return tokens, pos + 1  # single whitespace byte ends the header


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: not a binary P5 PGM")
    (magic, w, h, maxval), pos = _pgm_tokens(raw, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    body = raw[pos:pos + w * h]
    if len(body) != w * h:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    img = np.clip(np.round(img), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())


def load_pgm_frames(paths: Sequence, rho: float = 1.0) -> DataCube:
    """Stack 8-bit P5 frames (in the given order) into a cube scaled to ``[0, rho/2]``."""
    if not paths:
        raise ValueError("no frames given")
    frames = [read_pgm(p) for p in paths]
    shape = frames[0].shape
    for p, f in zip(paths, frames):
        if f.shape != shape:
            raise FormatError(f"{os.fspath(p)}: dims {f.shape} differ from {shape}")
    stack = np.stack(frames, axis=2).astype(np.float64)
    return DataCube(stack / 255.0 * (rho / 2.0), rho=rho)


# --- synthetic videos ---------------------------------------------------------

def _background(n1: int, n2: int, rng: np.random.Generator) -> np.ndarray:
    """Static piecewise-smooth scene: gradient plus a few flat rectangles."""
    r = np.linspace(0.0, 1.0, n1)[:, None]
    c = np.linspace(0.0, 1.0, n2)[None, :]
    bg = 0.15 + 0.15 * (0.6 * r + 0.4 * c)
    for _ in range(6):
        h = int(rng.integers(max(1, n1 // 8), max(2, n1 // 2)))
        w = int(rng.integers(max(1, n2 // 8), max(2, n2 // 2)))
        r0 = int(rng.integers(0, max(1, n1 - h + 1)))
        c0 = int(rng.integers(0, max(1, n2 - w + 1)))
        bg[r0:r0 + h, c0:c0 + w] = rng.uniform(0.1, 0.6)
    return bg


def synth_video(kind: str, n1: int, n2: int, B: int, seed: int = 0, rho: float = 1.0,
                step: int = 2) -> DataCube:
    """Deterministic test video: a bright object sliding over a static scene.

    ``moving_square`` pastes a flat square, ``moving_gaussian`` adds a Gaussian
    blob; either way the object moves by ``step`` pixels per frame along one
    seeded axis direction and all values stay inside ``[0, rho/2]``.
    """
    if min(n1, n2, B) < 1:
        raise ValueError("dims must be positive")
    if kind not in ("moving_square", "moving_gaussian"):
        raise ValueError(f"unknown synthetic kind {kind!r}")
    rng = substream(seed, "synth", kind)
    bg = _background(n1, n2, rng)
    direction = [(0, 1), (0, -1), (1, 0), (-1, 0)][int(rng.integers(4))]
    dr, dc = direction[0] * step, direction[1] * step
    side = max(2, min(n1, n2) // 4)
    travel_r, travel_c = abs(dr) * (B - 1), abs(dc) * (B - 1)
    r0 = int(rng.integers(0, max(1, n1 - side - travel_r + 1)))
    c0 = int(rng.integers(0, max(1, n2 - side - travel_c + 1)))
    if dr < 0:
        r0 += travel_r
    if dc < 0:
        c0 += travel_c
    frames = np.empty((n1, n2, B))
    rows = np.arange(n1)[:, None]
    cols = np.arange(n2)[None, :]
    sigma = side / 2.5
    for b in range(B):
        f = bg.copy()
        rb, cb = r0 + dr * b, c0 + dc * b
        if kind == "moving_square":
            f[max(rb, 0):max(rb + side, 0), max(cb, 0):max(cb + side, 0)] = 0.95
        else:
            rc, cc = rb + (side - 1) / 2, cb + (side - 1) / 2
            blob = np.exp(-((rows - rc) ** 2 + (cols - cc) ** 2) / (2 * sigma * sigma))
            f = f + (0.95 - f) * blob
        frames[:, :, b] = f
    return DataCube(np.clip(frames, 0.0, 1.0) * (rho / 2.0), rho=rho)
