"""Matrix-free SCI sensing operator ``H = [D_1, ..., D_B]``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import MaskCube
from .rng import substream
from .tensor import DataCube, FrameImage, vectorize

__all__ = ["SensingOperator", "Measurement", "measure", "add_noise", "build_explicit_H"]

EXPLICIT_LIMIT = 1 << 22


class SensingOperator:
    """Applies ``y = sum_i D_i x_i`` and its adjoint without forming ``H``.

    The frame sum runs in fixed order ``i = 1..B`` so results do not depend on
    how the pixel axis is partitioned.
    """

    def __init__(self, mask: MaskCube):
        self.mask = mask
        self._d = np.ascontiguousarray(mask.diagonals())

    @property
    def n(self) -> int:
        return self.mask.n

    @property
    def B(self) -> int:
        return self.mask.B

    @property
    def shape(self) -> tuple[int, int]:
        return self.n, self.n * self.B

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.mask.shape

    def apply(self, x) -> np.ndarray:
        if isinstance(x, DataCube):
            x = vectorize(x)
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n * self.B,):
            raise ValueError(f"expected vector of length {self.n * self.B}, got {x.shape}")
        xb = x.reshape(self.B, self.n)
        y = self._d[0] * xb[0]
        for i in range(1, self.B):
            y = y + self._d[i] * xb[i]
        return y

    def adjoint(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=np.float64)
        if e.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {e.shape}")
        return (self._d * e[None, :]).reshape(-1)

    def row_sums(self) -> np.ndarray:
        """Diagonal of ``H H^T``."""
        return (self._d * self._d).sum(axis=0)

    __matmul__ = apply


@dataclass(frozen=True)
class Measurement:
    frame: FrameImage
    noise_sigma: float = 0.0

    @property
    def y(self) -> np.ndarray:
        return self.frame.values


def measure(op: SensingOperator, x) -> Measurement:
    """Noise-free snapshot of ``x``."""
    n1, n2, _ = op.dims
    return Measurement(FrameImage.from_vector(op.apply(x), n1, n2))


def add_noise(meas: Measurement, sigma: float, seed: int) -> Measurement:
    """Add i.i.d. N(0, sigma^2) noise; independent noise adds in quadrature to ``noise_sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return meas
    a = meas.frame.array
    z = substream(seed, "noise").normal(0.0, sigma, size=a.size).reshape(a.shape, order="F")
    total = float(np.hypot(meas.noise_sigma, sigma))
    return Measurement(FrameImage(a + z), noise_sigma=total)


def build_explicit_H(mask: MaskCube) -> np.ndarray:
    """Dense ``n x nB`` matrix; a test oracle for tiny masks only."""
    n, B = mask.n, mask.B
    if n * n * B > EXPLICIT_LIMIT:
        raise ValueError(f"explicit H would have {n * n * B} entries (limit {EXPLICIT_LIMIT})")
    d = mask.diagonals()
    return np.hstack([np.diag(d[i]) for i in range(B)])
