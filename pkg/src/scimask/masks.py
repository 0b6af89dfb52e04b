"""Stochastic mask models, samplers and Markov statistics.

Five models are supported:

* ``IidBernoulli(p)``: every entry is an independent Bern(p).
* ``InFrameMarkov(q0, q1)``: frames are independent; inside a frame the
  entries follow a stationary two-state chain along the vectorize order.
* ``OutFrameMarkov(q0, q1)``: pixels are independent; at each pixel the
  entries of frames 1..B follow a stationary two-state chain.  Any
  ``q0, q1`` in (0, 1) can be sampled; the out-of-frame bounds additionally
  need ``q0, q1 <= 0.5`` and check it themselves.
* ``SignedIid(p)``: i.i.d. entries in {-1, +1} with Pr(+1) = p.
* ``BoundedIid(p, q)``: i.i.d. entries in [0, 1] with mean p, second moment q.

Transition convention for the chains: ``q0 = Pr(1 | 0)`` and ``q1 = Pr(0 | 1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict
from itertools import product
from pathlib import Path
from typing import Union

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import comb

from .rng import substream
from .tensor import DTYPE_F32, DTYPE_U8, read_scit, write_scit

__all__ = [
    "IidBernoulli", "InFrameMarkov", "OutFrameMarkov", "SignedIid", "BoundedIid",
    "MaskModel", "MaskCube", "MarkovStats", "MaskStats",
    "sample_mask", "stationary_p", "theta1_closed_form", "theta1_bruteforce",
    "theta1_sup_audit", "lambda_matrix", "eigen_extrema", "gershgorin_bounds",
    "gershgorin_radius", "mixing_bound", "markov_stats", "empirical_stats",
    "k_step_one_given_one", "transition_matrix_power", "save_mask", "load_mask",
    "model_from_dict",
]


def _check_prob(name, v):
    if not 0.0 < v < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class IidBernoulli:
    p: float
    name = "iid"

    def __post_init__(self):
        _check_prob("p", self.p)

    @property
    def marginal_p(self) -> float:
        return self.p


@dataclass(frozen=True)
class InFrameMarkov:
    q0: float
    q1: float
    name = "inframe"

    def __post_init__(self):
        _check_prob("q0", self.q0)
        _check_prob("q1", self.q1)

    @property
    def marginal_p(self) -> float:
        return stationary_p(self.q0, self.q1)

    @property
    def alpha(self) -> float:
        return 1.0 - self.q0 - self.q1


@dataclass(frozen=True)
class OutFrameMarkov:
    q0: float
    q1: float
    name = "outframe"

    def __post_init__(self):
        _check_prob("q0", self.q0)
        _check_prob("q1", self.q1)

    @property
    def marginal_p(self) -> float:
        return stationary_p(self.q0, self.q1)

    @property
    def alpha(self) -> float:
        return 1.0 - self.q0 - self.q1


@dataclass(frozen=True)
class SignedIid:
    p: float
    name = "signed"

    def __post_init__(self):
        _check_prob("p", self.p)

    @property
    def marginal_p(self) -> float:
        return self.p


@dataclass(frozen=True)
class BoundedIid:
    """[0, 1]-valued entries matched to ``E[D] = p`` and ``E[D^2] = q``.

    ``two_point`` draws from {0, q/p} with Pr(q/p) = p^2/q.  ``uniform_scaled``
    mixes a point mass at 0 with Uniform[0, 3q/(2p)]; it only exists for
    ``4p^2/3 <= q <= 2p/3``.
    """

    p: float
    q: float
    distribution: str = "two_point"
    name = "bounded"

    def __post_init__(self):
        _check_prob("p", self.p)
        if not (self.p ** 2 <= self.q <= self.p):
            raise ValueError(f"need p^2 <= q <= p, got p={self.p}, q={self.q}")
        if self.distribution == "two_point":
            if self.q == self.p ** 2:
                raise ValueError("q = p^2 is a constant mask (zero variance)")
        elif self.distribution == "uniform_scaled":
            if not (4 * self.p ** 2 / 3 <= self.q <= 2 * self.p / 3):
                raise ValueError("uniform_scaled needs 4p^2/3 <= q <= 2p/3")
        else:
            raise ValueError(f"unknown distribution {self.distribution!r}")

    @property
    def marginal_p(self) -> float:
        return self.p

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Atoms and weights of the two-point law."""
        if self.distribution != "two_point":
            raise ValueError("only the two-point law has finite support")
        w = self.p ** 2 / self.q
        return np.array([0.0, self.q / self.p]), np.array([1.0 - w, w])


MaskModel = Union[IidBernoulli, InFrameMarkov, OutFrameMarkov, SignedIid, BoundedIid]

_MODELS = {m.name: m for m in (IidBernoulli, InFrameMarkov, OutFrameMarkov, SignedIid, BoundedIid)}


def model_from_dict(d: dict) -> MaskModel:
    d = dict(d)
    cls = _MODELS[d.pop("model")]
    fields = cls.__dataclass_fields__
    kw = {k: (v if k == "distribution" else float(v)) for k, v in d.items() if k in fields}
    return cls(**kw)


def model_to_dict(model: MaskModel) -> dict:
    return {"model": model.name, **asdict(model)}


@dataclass(frozen=True, eq=False)
class MaskCube:
    """A sampled mask ``C`` of shape ``(n1, n2, B)``."""

    values: np.ndarray
    model: MaskModel | None = None
    seed: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"mask must be 3-D with positive dims, got {v.shape}")
        v = np.array(v, dtype=np.float64, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n1(self) -> int:
        return self.shape[0]

    @property
    def n2(self) -> int:
        return self.shape[1]

    @property
    def B(self) -> int:
        return self.shape[2]

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    def diagonals(self) -> np.ndarray:
        """``(B, n)`` array; row ``i`` is the diagonal of ``D_i`` in vectorize order."""
        return self.values.reshape((self.n, self.B), order="F").T

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0) | (self.values == 1)))

    @classmethod
    def from_diagonals(cls, d: np.ndarray, n1: int, n2: int, **kw) -> "MaskCube":
        d = np.asarray(d)
        return cls(d.T.reshape((n1, n2, d.shape[0]), order="F"), **kw)


# --- sampling -----------------------------------------------------------------

def _markov_chain(rng: np.random.Generator, length: int, q0: float, q1: float) -> np.ndarray:
    """Stationary two-state chain of ``length`` steps, built from geometric sojourns."""
    state = int(rng.random() < q0 / (q0 + q1))
    k = int(length / (1.0 / q0 + 1.0 / q1) * 1.25) + 8
    chunks, total = [], 0
    while total < length:
        stay0 = rng.geometric(q0, size=k)
        stay1 = rng.geometric(q1, size=k)
        pair = (stay0, stay1) if state == 0 else (stay1, stay0)
        runs = np.column_stack(pair).ravel()
        chunks.append(runs)
        total += int(runs.sum())
    runs = np.concatenate(chunks)
    states = (state + np.arange(runs.size)) % 2
    return np.repeat(states.astype(np.uint8), runs)[:length]


def sample_mask(model: MaskModel, n1: int, n2: int, B: int, seed: int) -> MaskCube:
    """Draw a mask cube.  Output depends only on ``(model, dims, seed)``.

    Substreams: in-frame chains and i.i.d. frames use one substream per frame;
    the out-of-frame sampler uses one substream per frame step, shared by all
    pixel chains (each pixel still reads its own coordinate).
    """
    if min(n1, n2, B) < 1:
        raise ValueError("dims must be positive")
    n = n1 * n2
    d = np.empty((B, n))
    if isinstance(model, (IidBernoulli, SignedIid)):
        for i in range(B):
            u = substream(seed, "mask", i).random(n)
            d[i] = u < model.p
        if isinstance(model, SignedIid):
            d = 2.0 * d - 1.0
    elif isinstance(model, InFrameMarkov):
        for i in range(B):
            d[i] = _markov_chain(substream(seed, "mask", i), n, model.q0, model.q1)
    elif isinstance(model, OutFrameMarkov):
        p = model.marginal_p
        state = substream(seed, "mask", 0).random(n) < p
        d[0] = state
        for i in range(1, B):
            u = substream(seed, "mask", i).random(n)
            state = np.where(state, u >= model.q1, u < model.q0)
            d[i] = state
    elif isinstance(model, BoundedIid):
        for i in range(B):
            rng = substream(seed, "mask", i)
            if model.distribution == "two_point":
                atoms, w = model.support()
                d[i] = np.where(rng.random(n) < w[1], atoms[1], atoms[0])
            else:
                top = 1.5 * model.q / model.p
                w = 4.0 * model.p ** 2 / (3.0 * model.q)
                active = rng.random(n) < w
                d[i] = np.where(active, rng.random(n) * top, 0.0)
    else:
        raise TypeError(f"not a mask model: {model!r}")
    return MaskCube.from_diagonals(d, n1, n2, model=model, seed=seed)


# --- Markov statistics ----------------------------------------------------------

def stationary_p(q0: float, q1: float) -> float:
    return q0 / (q0 + q1)


def transition_matrix_power(q0: float, q1: float, k: int) -> np.ndarray:
    """k-step kernel of the two-state chain via its spectral split (states 0, 1)."""
    s = q0 + q1
    alpha = 1.0 - s
    stat = np.array([[q1, q0], [q1, q0]]) / s
    trans = np.array([[q0, -q0], [-q1, q1]]) / s
    return stat + alpha ** k * trans


def k_step_one_given_one(q0: float, q1: float, k: int) -> float:
    """``Pr(D_{i+k} = 1 | D_i = 1) = p + (1 - p) alpha^k``."""
    p = stationary_p(q0, q1)
    return p + (1.0 - p) * (1.0 - q0 - q1) ** k


def _chain_rows(q0: float, q1: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Rows ``p(.|0)`` and ``p(.|1)`` of the two-state kernel.

    The second row is written as the first shifted by ``alpha = 1 - q0 - q1``,
    so ``q0 + q1 = 1`` yields bit-identical rows.
    """
    a = 1.0 - q0 - q1
    return (1.0 - q0, q0), (1.0 - q0 - a, q0 + a)


def theta1_closed_form(q0: float, q1: float, B: int) -> float:
    """TV distance between the frame-stacked kernels at all-zeros and all-ones.

    Sum over the number ``k`` of zeros in the next state of
    ``C(B,k) |(1-q0)^k q0^(B-k) - q1^k (1-q1)^(B-k)| / 2``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    (z0, z1), (o0, o1) = _chain_rows(q0, q1)
    k = np.arange(B + 1)
    terms = comb(B, k, exact=False) * np.abs(z0 ** k * z1 ** (B - k) - o0 ** k * o1 ** (B - k))
    return float(0.5 * terms.sum())


def _stacked_kernel(q0: float, q1: float, B: int) -> np.ndarray:
    """``K[a, b] = p(b | a)`` over all states of {0,1}^B (a, b as bit tuples)."""
    states = np.array(list(product((0, 1), repeat=B)), dtype=np.int8)
    step = np.array(_chain_rows(q0, q1))  # step[from, to]
    # per-coordinate factors, multiplied over coordinates
    K = np.ones((len(states), len(states)))
    for i in range(B):
        K *= step[states[:, i][:, None], states[:, i][None, :]]
    return K


def theta1_sup_audit(q0: float, q1: float, B: int) -> tuple[float, bool]:
    """Supremum of the kernel TV distance over every pair of current states.

    Returns ``(sup, attained_at_extremes)``, the second flag telling whether
    the all-zeros / all-ones pair reaches the supremum (to 1e-12).
    """
    if B > 8:
        raise ValueError("pairwise audit limited to B <= 8")
    K = _stacked_kernel(q0, q1, B)
    sup = 0.0
    for a in range(K.shape[0]):
        sup = max(sup, 0.5 * float(np.abs(K[a] - K).sum(axis=1).max()))
    extreme = 0.5 * float(np.abs(K[0] - K[-1]).sum())
    return sup, bool(extreme >= sup - 1e-12)


def theta1_bruteforce(q0: float, q1: float, B: int, audit: bool = True) -> float:
    """All-zeros vs all-ones kernel TV by enumerating all 2^B next states.

    Independent of the binomial closed form.  With ``audit`` (and B <= 8) the
    supremum over every pair of current states is enumerated too; if some
    pair beats the all-zeros/all-ones value a ``RuntimeWarning`` reports it.
    The return value is always the all-zeros/all-ones distance; use
    :func:`theta1_sup_audit` for the supremum itself.
    """
    if B > 16:
        raise ValueError("enumeration limited to B <= 16")
    states = np.array(list(product((0, 1), repeat=B)), dtype=np.int64)
    ones = states.sum(axis=1)
    zeros = B - ones
    (z0, z1), (o0, o1) = _chain_rows(q0, q1)
    from_zero = z0 ** zeros * z1 ** ones
    from_one = o0 ** zeros * o1 ** ones
    value = 0.5 * float(np.abs(from_zero - from_one).sum())
    if audit and B <= 8:
        sup, ok = theta1_sup_audit(q0, q1, B)
        if not ok:
            warnings.warn(
                f"TV supremum {sup!r} exceeds the all-zeros/all-ones value {value!r} "
                f"at q0={q0}, q1={q1}, B={B}",
                RuntimeWarning,
            )
    return value


def lambda_matrix(alpha: float, B: int) -> np.ndarray:
    """``B x B`` Toeplitz matrix with entries ``alpha^|i-j|``."""
    if not abs(alpha) < 1:
        raise ValueError("need |alpha| < 1")
    return toeplitz(alpha ** np.arange(B))


def eigen_extrema(matrix) -> tuple[float, float]:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if m.shape[0] > 64:
        raise ValueError("dense eigensolve limited to B <= 64")
    if not np.allclose(m, m.T, rtol=0, atol=1e-14 * max(1.0, np.abs(m).max())):
        raise ValueError("matrix is not symmetric")
    w = np.linalg.eigvalsh(m)
    return float(w[0]), float(w[-1])


def gershgorin_radius(alpha: float, B: int) -> float:
    """Largest off-diagonal row sum of the Toeplitz matrix (exact, finite B)."""
    row = alpha ** np.arange(B)
    return max(float(row[1:i + 1].sum() + row[1:B - i].sum()) for i in range(B))


def gershgorin_bounds(alpha: float, B: int | None = None) -> tuple[float, float, bool]:
    """``((1-3a)/(1-a), (1+a)/(1-a), a < 1/3)``, valid for every ``B``."""
    if not 0 <= alpha < 1:
        raise ValueError("need 0 <= alpha < 1")
    lo = (1 - 3 * alpha) / (1 - alpha)
    hi = (1 + alpha) / (1 - alpha)
    return lo, hi, alpha < 1.0 / 3.0


def mixing_bound(theta1: float, n: int | None = None) -> float:
    """``M_n = (1 - theta^n)/(1 - theta)``; ``n=None`` gives the limit ``1/(1-theta)``."""
    if not 0 <= theta1 < 1:
        raise ValueError("need 0 <= theta1 < 1")
    if n is None:
        return 1.0 / (1.0 - theta1)
    return (1.0 - theta1 ** n) / (1.0 - theta1)


@dataclass(frozen=True)
class MarkovStats:
    alpha: float
    stationary_p: float
    theta1: float
    lambda_matrix: np.ndarray
    lambda_min: float
    lambda_max: float
    gershgorin_lo: float
    gershgorin_hi: float
    gershgorin_valid: bool
    M_n_bound: float
    lipschitz_c: float


def markov_stats(q0: float, q1: float, B: int, rho: float = 1.0) -> MarkovStats:
    alpha = 1.0 - q0 - q1
    lam = lambda_matrix(alpha, B)
    lmin, lmax = eigen_extrema(lam)
    if alpha >= 0:
        lo, hi, valid = gershgorin_bounds(alpha)
    else:
        lo, hi, valid = math.nan, math.nan, False
    th = theta1_closed_form(q0, q1, B)
    return MarkovStats(
        alpha=alpha,
        stationary_p=stationary_p(q0, q1),
        theta1=th,
        lambda_matrix=lam,
        lambda_min=lmin,
        lambda_max=lmax,
        gershgorin_lo=lo,
        gershgorin_hi=hi,
        gershgorin_valid=valid,
        M_n_bound=mixing_bound(th) if th < 1 else math.inf,
        lipschitz_c=2.0 * B * rho ** 2,
    )


# --- empirical checks -----------------------------------------------------------

@dataclass(frozen=True)
class MaskStats:
    one_fraction: float
    transition_freq_01: float
    transition_freq_10: float
    scan_axis: str
    count_from0: int
    count_from1: int


def _scan_rows(mask: MaskCube) -> tuple[np.ndarray, str]:
    d = mask.diagonals()
    if isinstance(mask.model, OutFrameMarkov):
        return d.T, "i"  # one row per pixel, scanning across frames
    return d, "j"


def empirical_stats(mask: MaskCube) -> MaskStats:
    """One-fraction and transition frequencies along the model's scan axis."""
    if not mask.is_binary:
        raise ValueError("empirical_stats needs a {0,1} mask")
    rows, axis = _scan_rows(mask)
    prev, nxt = rows[:, :-1], rows[:, 1:]
    from0 = prev == 0
    from1 = ~from0
    c0, c1 = int(from0.sum()), int(from1.sum())
    f01 = float((nxt[from0] == 1).sum() / c0) if c0 else math.nan
    f10 = float((nxt[from1] == 0).sum() / c1) if c1 else math.nan
    return MaskStats(
        one_fraction=float(rows.mean()),
        transition_freq_01=f01,
        transition_freq_10=f10,
        scan_axis=axis,
        count_from0=c0,
        count_from1=c1,
    )


def conditional_one_freq(mask: MaskCube, k: int) -> tuple[float, int]:
    """Empirical ``Pr(D_{t+k} = 1 | D_t = 1)`` along the scan axis, with its count."""
    rows, _ = _scan_rows(mask)
    if k >= rows.shape[1]:
        raise ValueError("lag longer than the scan axis")
    prev, nxt = rows[:, :-k], rows[:, k:]
    sel = prev == 1
    count = int(sel.sum())
    return (float(nxt[sel].mean()) if count else math.nan), count


# --- persistence ----------------------------------------------------------------

def _meta_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def save_mask(path, mask: MaskCube) -> Path:
    """Write ``path`` (SCIT) plus a ``key=value`` sidecar next to it; returns the sidecar path."""
    meta = {}
    if mask.model is not None:
        meta.update(model_to_dict(mask.model))
    if mask.seed is not None:
        meta["seed"] = mask.seed
    v = mask.values
    if isinstance(mask.model, SignedIid) or (np.all(np.abs(v) == 1) and np.any(v < 0)):
        write_scit(path, ((v + 1) / 2).astype(np.uint8), DTYPE_U8)
        meta["signed"] = 1
    elif mask.is_binary:
        write_scit(path, v.astype(np.uint8), DTYPE_U8)
        meta["signed"] = 0
    else:
        write_scit(path, v, DTYPE_F32)
    mp = _meta_path(path)
    mp.write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    return mp


def read_meta(path) -> dict:
    out = {}
    mp = _meta_path(path)
    if not mp.exists():
        return out
    for line in mp.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def load_mask(path) -> MaskCube:
    a, dtype = read_scit(path)
    meta = read_meta(path)
    v = a.astype(np.float64)
    if dtype == DTYPE_U8 and meta.get("signed") == "1":
        v = 2 * v - 1
    model = None
    if "model" in meta:
        model = model_from_dict({k: meta[k] for k in meta if k not in ("seed", "signed")})
    seed = int(meta["seed"]) if "seed" in meta else None
    return MaskCube(v, model=model, seed=seed)
