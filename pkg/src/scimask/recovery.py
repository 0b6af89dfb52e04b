"""Compression-based projected gradient descent and its oracles.

One PGD iteration (x^0 = 0)::

    e^t     = y - H x^t
    s^{t+1} = x^t + mu H^T e^t
    x^{t+1} = project(s^{t+1})

``project`` is either nearest-codeword search in a finite codebook or a
total-variation denoiser standing in for a compression code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .forward import Measurement, SensingOperator
from .tensor import DataCube, devectorize, vectorize

__all__ = [
    "Codebook", "ScalarQuantizerCodebook", "build_quantizer_codebook",
    "CodebookProjector", "TvProjector", "PgdConfig", "RecoveryResult",
    "pgd_recover", "csp_exhaustive", "default_mu", "tv_denoise", "anisotropic_tv",
    "tv_objective", "monotone_until",
]

EXHAUSTIVE_LIMIT = 1 << 20


class Codebook:
    """Explicit finite codebook; rows of ``codewords`` are vectors of length ``nB``."""

    def __init__(self, codewords, B: int, rho: float, distortion_delta: float = 0.0):
        c = np.atleast_2d(np.asarray(codewords, dtype=np.float64))
        if c.shape[0] < 1:
            raise ValueError("empty codebook")
        if c.shape[1] % B:
            raise ValueError("codeword length is not a multiple of B")
        if np.max(np.abs(c)) > rho / 2:
            raise ValueError("codeword exceeds the amplitude budget rho/2")
        self.codewords = c
        self.B = B
        self.rho = rho
        self.distortion_delta = float(distortion_delta)

    def __len__(self) -> int:
        return self.codewords.shape[0]

    @property
    def size(self) -> int:
        return len(self)

    @property
    def rate_r(self) -> float:
        """Smallest r with ``|C| <= 2^(B r)``."""
        return math.log2(len(self)) / self.B

    def project(self, s) -> np.ndarray:
        """Nearest codeword (Euclidean); ties go to the lowest index."""
        s = np.asarray(s, dtype=np.float64)
        d2 = ((self.codewords - s[None, :]) ** 2).sum(axis=1)
        return self.codewords[int(np.argmin(d2))].copy()

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.any(np.all(np.abs(self.codewords - x[None, :]) <= atol, axis=1)))


class ScalarQuantizerCodebook:
    """Product code of a uniform ``levels``-cell quantizer on ``[-rho/2, rho/2]``.

    Cell ``k`` is ``[-rho/2 + k w, -rho/2 + (k+1) w)`` (the last cell closed)
    with ``w = rho/levels``; it reproduces to its midpoint.  Codewords are
    indexed in mixed radix with coordinate 0 as the least significant digit.
    The worst-case per-coordinate squared error is ``(rho/(2 levels))^2``,
    which is the code's distortion ``delta``.
    """

    def __init__(self, n1: int, n2: int, B: int, levels: int, rho: float = 1.0):
        if int(levels) != levels or levels < 2:
            raise ValueError("levels must be an integer >= 2")
        if not rho > 0:
            raise ValueError("rho must be positive")
        self.n1, self.n2, self.B = n1, n2, B
        self.levels = int(levels)
        self.rho = float(rho)
        self.width = self.rho / self.levels
        self.points = -self.rho / 2 + self.width * (np.arange(self.levels) + 0.5)

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def length(self) -> int:
        return self.n * self.B

    @property
    def size(self) -> int:
        return self.levels ** self.length

    def __len__(self) -> int:
        return self.size

    @property
    def rate_r(self) -> float:
        """``log2 |C| / B = n log2(levels)``."""
        return self.n * math.log2(self.levels)

    @property
    def distortion_delta(self) -> float:
        return (self.rho / (2 * self.levels)) ** 2

    def cell_index(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        k = np.floor((s + self.rho / 2) / self.width).astype(np.int64)
        return np.clip(k, 0, self.levels - 1)

    def project(self, s) -> np.ndarray:
        """Coordinatewise quantization, which is the nearest codeword."""
        return self.points[self.cell_index(s)]

    def codeword(self, index: int) -> np.ndarray:
        digits = np.empty(self.length, dtype=np.int64)
        for i in range(self.length):
            index, digits[i] = divmod(index, self.levels)
        return self.points[digits]

    def index_of(self, x) -> int:
        digits = self.cell_index(x)
        return int(sum(int(d) * self.levels ** i for i, d in enumerate(digits)))

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(np.abs(self.project(x) - x) <= atol))

    @property
    def codewords(self) -> np.ndarray:
        if self.size > EXHAUSTIVE_LIMIT:
            raise ValueError(f"codebook has {self.size} words; too many to enumerate")
        digits = np.array(list(product(range(self.levels), repeat=self.length)))[:, ::-1]
        return self.points[digits]

    def to_explicit(self) -> Codebook:
        return Codebook(self.codewords, self.B, self.rho, self.distortion_delta)


def build_quantizer_codebook(n1: int, n2: int, B: int, levels: int, rho: float = 1.0) -> ScalarQuantizerCodebook:
    return ScalarQuantizerCodebook(n1, n2, B, levels, rho)


# --- total variation ----------------------------------------------------------------

def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1] = u[1:] - u[:-1]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def _grad_adjoint(px, py):
    """Adjoint of :func:`_grad` (negative divergence)."""
    out = np.zeros_like(px)
    out[:-1] -= px[:-1]
    out[1:] += px[:-1]
    out[:, :-1] -= py[:, :-1]
    out[:, 1:] += py[:, :-1]
    return out


def anisotropic_tv(u) -> float:
    """Sum over frames of ``|horizontal diffs|_1 + |vertical diffs|_1``."""
    gx, gy = _grad(np.asarray(u, dtype=np.float64))
    return float(np.abs(gx).sum() + np.abs(gy).sum())


def tv_objective(u, s, weight: float) -> float:
    u = np.asarray(u, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    return 0.5 * float(((u - s) ** 2).sum()) + weight * anisotropic_tv(u)


def tv_denoise(s, weight: float, inner_iterations: int = 10, rho: float | None = None):
    """Approximate ``argmin_u 1/2 |u - s|^2 + weight TV(u)``, frame by frame.

    Anisotropic 2-D TV, solved by fast projected gradient on the dual with a
    fixed iteration count.  ``s`` may be a :class:`DataCube` or an array of
    shape ``(n1, n2)`` / ``(n1, n2, B)``; with ``rho`` the output is clamped to
    ``[-rho/2, rho/2]`` (a cube input supplies its own ``rho``).
    """
    cube = s if isinstance(s, DataCube) else None
    a = cube.array if cube is not None else np.asarray(s, dtype=np.float64)
    if cube is not None and rho is None:
        rho = cube.rho
    if weight < 0:
        raise ValueError("weight must be nonnegative")
    u = a.copy()
    if weight > 0:
        step = 1.0 / (8.0 * weight)
        px = np.zeros_like(a)
        py = np.zeros_like(a)
        rx, ry = px, py
        t = 1.0
        for _ in range(inner_iterations):
            gx, gy = _grad(a - weight * _grad_adjoint(rx, ry))
            nx = np.clip(rx + step * gx, -1.0, 1.0)
            ny = np.clip(ry + step * gy, -1.0, 1.0)
            t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
            mom = (t - 1.0) / t_next
            rx, ry = nx + mom * (nx - px), ny + mom * (ny - py)
            px, py, t = nx, ny, t_next
        u = a - weight * _grad_adjoint(px, py)
    if rho is not None:
        u = np.clip(u, -rho / 2, rho / 2)
    if cube is not None:
        return DataCube(u, rho=cube.rho)
    return u


# --- projectors -------------------------------------------------------------------------

@dataclass(frozen=True)
class TvProjector:
    """Heuristic projector: TV denoising of each frame, clamped to ``[-rho/2, rho/2]``."""

    weight: float
    inner_iterations: int = 10
    rho: float = 1.0

    def __call__(self, s: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
        n1, n2, B = dims
        a = s.reshape((n1, n2, B), order="F")
        return tv_denoise(a, self.weight, self.inner_iterations, self.rho).reshape(-1, order="F")


@dataclass(frozen=True)
class CodebookProjector:
    codebook: Codebook | ScalarQuantizerCodebook

    def __call__(self, s: np.ndarray, dims=None) -> np.ndarray:
        return self.codebook.project(s)


# --- PGD --------------------------------------------------------------------------------

def default_mu(p: float) -> float:
    """Step size ``1/(p - p^2)``."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"step size 1/(p-p^2) needs p in (0, 1), got {p}")
    return 1.0 / (p - p * p)


@dataclass(frozen=True)
class PgdConfig:
    """PGD settings.

    ``normalize`` scales the residual pixel-wise by ``1/diag(H H^T)`` before the
    adjoint (the GAP-style step, ``s = x + mu H^T (H H^T)^-1 e``).  Off by
    default; the plain step is ``s = x + mu H^T e``.
    """

    mu: float
    max_iter: int = 60
    tol: float = 1e-6
    record_trace: bool = True
    normalize: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")

    @classmethod
    def for_p(cls, p: float, **kw) -> "PgdConfig":
        return cls(mu=default_mu(p), **kw)


@dataclass
class RecoveryResult:
    x_hat: DataCube
    residual_trace: list = field(default_factory=list)
    error_trace: list | None = None
    iterations_run: int = 0

    @property
    def final_residual(self) -> float:
        return self.residual_trace[-1] if self.residual_trace else math.nan


def _as_vector(y) -> np.ndarray:
    if isinstance(y, Measurement):
        return y.y
    return np.asarray(y, dtype=np.float64).reshape(-1, order="F")


def pgd_recover(y, op: SensingOperator, projector, cfg: PgdConfig,
                ground_truth: DataCube | None = None, rho: float | None = None) -> RecoveryResult:
    """Run PGD from ``x^0 = 0``.

    Stops after ``cfg.max_iter`` iterations or once the relative change of the
    residual norm ``|y - H x^t|`` falls below ``cfg.tol``.  Traces hold one
    entry per iteration, measured at the new iterate; the error trace is
    ``|x_true - x^t| / sqrt(nB)``.
    """
    yv = _as_vector(y)
    n1, n2, B = op.dims
    if yv.shape != (op.n,):
        raise ValueError(f"measurement has {yv.size} entries, operator expects {op.n}")
    truth = None
    if ground_truth is not None:
        if ground_truth.shape != (n1, n2, B):
            raise ValueError(f"ground truth dims {ground_truth.shape} != {(n1, n2, B)}")
        truth = vectorize(ground_truth)
    if rho is None:
        rho = getattr(projector, "rho", None) or (ground_truth.rho if ground_truth is not None else 1.0)

    x = np.zeros(op.n * B)
    if cfg.normalize:
        # pixels no mask ever opens get weight 1; their residual is fixed anyway
        w = op.row_sums()
        w = 1.0 / np.where(w > 0, w, 1.0)
    res_prev = float(np.linalg.norm(yv))
    residuals, errors = [], ([] if truth is not None else None)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        e = yv - op.apply(x)
        if cfg.normalize:
            e = e * w
        s = x + cfg.mu * op.adjoint(e)
        x = projector(s, (n1, n2, B))
        res = float(np.linalg.norm(yv - op.apply(x)))
        if cfg.record_trace:
            residuals.append(res)
            if truth is not None:
                errors.append(float(np.linalg.norm(truth - x) / math.sqrt(x.size)))
        if abs(res - res_prev) <= cfg.tol * max(res_prev, 1e-300):
            break
        res_prev = res
    if not cfg.record_trace:
        residuals = [res]
        if truth is not None:
            errors = [float(np.linalg.norm(truth - x) / math.sqrt(x.size))]
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    x_hat = devectorize(x, n1, n2, B, rho=max(rho, 2 * peak))
    return RecoveryResult(x_hat, residuals, errors, it)


def csp_exhaustive(y, op: SensingOperator, codebook) -> tuple[np.ndarray, float]:
    """Global minimizer of ``|y - H c|^2`` over the codebook, lowest index on ties.

    Explicit codebooks are scanned in full.  For a scalar-quantizer product
    code the objective splits over pixels, so each pixel's ``levels^B``
    frame combinations are scanned independently; the lowest-index rule then
    holds digit by digit.
    """
    yv = _as_vector(y)
    if isinstance(codebook, ScalarQuantizerCodebook):
        L, B, n = codebook.levels, op.B, op.n
        if L ** B > EXHAUSTIVE_LIMIT:
            raise ValueError("per-pixel enumeration too large")
        # combos[k, i] = level index of frame i in combination k, frame 0 least significant
        combos = np.array(list(product(range(L), repeat=B)))[:, ::-1]
        vals = codebook.points[combos]  # (L^B, B)
        d = op._d  # (B, n)
        pred = vals @ d  # (L^B, n)
        obj = (yv[None, :] - pred) ** 2
        best = np.argmin(obj, axis=0)  # smallest combo index wins ties
        c = vals[best].T.reshape(-1)  # frame-major vector
        return c, float(obj[best, np.arange(n)].sum())
    if len(codebook) > EXHAUSTIVE_LIMIT:
        raise ValueError("codebook too large for exhaustive search")
    words = codebook.codewords
    objs = np.array([float(np.sum((yv - op.apply(w)) ** 2)) for w in words])
    k = int(np.argmin(objs))
    return words[k].copy(), float(objs[k])


def monotone_until(trace, threshold: float, start: int = 1) -> bool:
    """True if ``trace[start:]`` never increases before first dropping to ``threshold``."""
    seq = list(trace)
    for t in range(start, len(seq)):
        if seq[t - 1] <= threshold:
            return True
        if seq[t] > seq[t - 1]:
            return False
    return True
