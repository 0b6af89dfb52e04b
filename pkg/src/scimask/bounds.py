"""Closed-form error bounds and success probabilities for SCI recovery.

Every evaluator returns a :class:`BoundReport` whose ``bound_value`` is the sum
of a distortion term (driven by the code distortion ``delta``) and a
fluctuation term (driven by ``epsilon`` or ``eta``).  Failure probabilities are
accumulated in log space, so astronomically large union-bound factors such as
``2**(4nBr)`` never overflow; when the failure mass reaches 1 the report is
marked ``vacuous`` and the success probability is 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "BoundParams", "BoundReport", "ProbabilityBound", "InapplicableTheoremError",
    "thm1_bound", "thm1_u", "thm1_u_prime", "thm1_epsilon", "optimal_p_star",
    "grid_argmin_p", "cor42_max_B", "cor1_signed_bound", "cor12_bounded_bound",
    "thm2_bound", "thm3_bound", "cor4_bound", "pgd_contraction", "pgd_floor",
    "pgd_limit_bound", "thm5_success_probability", "lambda_for_contraction",
    "check_outframe_assumption",
]

LN2 = math.log(2.0)

THM2_NORMALIZATION_NOTE = (
    "distortion term uses delta/(nB), while thm1_bound uses delta"
)


class InapplicableTheoremError(ValueError):
    """A theorem's hypothesis fails (e.g. lambda_min <= 0, alpha >= 1/3)."""


@dataclass(frozen=True)
class BoundParams:
    n: int
    B: int
    r: float = 1.0
    delta: float = 0.01
    rho: float = 1.0
    eta: float = 1.0
    epsilon: float | None = None
    kappa: float = 1.0
    lambda_free: float | None = None
    p: float = 0.4
    q0: float | None = None
    q1: float | None = None
    q: float | None = None

    def __post_init__(self):
        if self.n < 1 or self.B < 1:
            raise ValueError("n and B must be positive")
        if not self.r > 0 or not self.rho > 0 or not self.eta > 0:
            raise ValueError("r, rho and eta must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.lambda_free is not None and not self.lambda_free > 0:
            raise ValueError("lambda must be positive")

    def with_(self, **kw) -> "BoundParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class ProbabilityBound:
    value: float
    log_failure: float
    vacuous: bool

    @classmethod
    def from_log_failure(cls, log_failure: float) -> "ProbabilityBound":
        if log_failure >= 0:
            return cls(0.0, float(log_failure), True)
        return cls(float(-math.expm1(log_failure)), float(log_failure), False)


@dataclass(frozen=True)
class BoundReport:
    theorem: str
    term_distortion: float
    term_fluctuation: float
    success_probability_lower: float
    log_failure: float
    vacuous: bool
    convention: str
    notes: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def bound_value(self) -> float:
        return self.term_distortion + self.term_fluctuation


def _report(theorem, dist, fluct, log_fail, convention, notes="", **extras) -> BoundReport:
    pb = ProbabilityBound.from_log_failure(log_fail)
    return BoundReport(theorem, float(dist), float(fluct), pb.value, pb.log_failure,
                       pb.vacuous, convention, notes, extras)


def _check_p(p):
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")


def _log_union(*log_terms) -> float:
    return float(logsumexp(np.array(log_terms, dtype=np.float64)))


def _log_codebook_plus_one(bits: float) -> float:
    """``log(2**bits + 1)``."""
    return float(np.logaddexp(bits * LN2, 0.0))


def _eps(params: BoundParams, epsilon):
    eps = params.epsilon if epsilon is None else epsilon
    if eps is None or not eps > 0:
        raise ValueError("this bound needs a positive epsilon")
    return float(eps)


# --- i.i.d. binary masks -----------------------------------------------------------

def thm1_epsilon(params: BoundParams) -> float:
    """Automatic epsilon ``sqrt((2 ln2 Br + 2 eta r)/n)`` used with ``eta``."""
    return math.sqrt((2 * LN2 * params.B * params.r + 2 * params.eta * params.r) / params.n)


def thm1_bound(p: float, params: BoundParams, convention: str = "eta") -> BoundReport:
    """Error bound for i.i.d. Bern(p) masks.

    ``convention="eta"`` gives ``(1 + Bp/(1-p)) delta + rho^2 B sqrt(2r(B+eta)/n)/(p-p^2)``
    with success probability ``1 - 2 exp(-eta r)``.  ``convention="epsilon"``
    keeps epsilon free: fluctuation ``rho^2 B eps/(p-p^2)`` and success
    probability ``1 - (2^(Br)+1) exp(-n eps^2/2)``.
    """
    _check_p(p)
    n, B, r, rho, delta = params.n, params.B, params.r, params.rho, params.delta
    dist = (1.0 + B * p / (1.0 - p)) * delta
    if convention == "eta":
        fluct = rho ** 2 * B * math.sqrt(2 * r * (B + params.eta) / n) / (p - p * p)
        log_fail = LN2 - params.eta * r
    elif convention == "epsilon":
        eps = _eps(params, None)
        fluct = rho ** 2 * B * eps / (p - p * p)
        log_fail = _log_codebook_plus_one(B * r) - n * eps ** 2 / 2
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return _report("1", dist, fluct, log_fail, convention, p=p)


def _thm1_a(params: BoundParams) -> float:
    return params.B * params.rho ** 2 * math.sqrt(2 * params.r * (params.B + params.eta) / params.n)


def thm1_u(p: float, params: BoundParams) -> float:
    return (1 + params.B * p / (1 - p)) * params.delta + _thm1_a(params) / (p - p * p)


def thm1_u_prime(p: float, params: BoundParams) -> float:
    """``u'(p) = B delta/(1-p)^2 + a (1/(1-p)^2 - 1/p^2)``."""
    a = _thm1_a(params)
    return params.B * params.delta / (1 - p) ** 2 + a * (1 / (1 - p) ** 2 - 1 / p ** 2)


def optimal_p_star(params: BoundParams, check: bool = True) -> float:
    """Minimizer of :func:`thm1_bound` over ``p``.

    ``p* = 1 / (1 + sqrt(1 + (delta/rho^2) sqrt(n / (2r(B+eta)))))``; with
    ``check`` the stationarity ``u'(p*) = 0`` is confirmed relative to the
    size of the derivative's terms.
    """
    ratio = params.delta / params.rho ** 2 * math.sqrt(params.n / (2 * params.r * (params.B + params.eta)))
    p_star = 1.0 / (1.0 + math.sqrt(1.0 + ratio))
    if check:
        a = _thm1_a(params)
        scale = (params.B * params.delta + a) / (1 - p_star) ** 2 + a / p_star ** 2
        if abs(thm1_u_prime(p_star, params)) > 1e-9 * scale:
            raise ArithmeticError(f"u'(p*) does not vanish at p*={p_star}")
    return p_star


def grid_argmin_p(fn, step: float = 1e-3) -> tuple[float, float]:
    """Brute-force argmin of ``fn`` over ``p = step, 2 step, ..., 1 - step``."""
    m = int(round(1.0 / step))
    grid = np.arange(1, m) * step
    vals = np.array([fn(float(p)) for p in grid])
    k = int(np.argmin(vals))
    return float(grid[k]), float(vals[k])


def cor42_max_B(params: BoundParams, p: float | None = None) -> tuple[int, float]:
    """Largest ``B`` with ``B <= (kappa delta/rho^2)^(2/3) (n/r)^(1/3)``.

    Also returns the bound ``(1 + Bp/(1-p) + 2 kappa/(p-p^2)) delta`` at that B.
    """
    p = params.p if p is None else p
    _check_p(p)
    base = params.kappa * params.delta / params.rho ** 2
    cube = base ** 2 * params.n / params.r  # B_max^3
    b = int(math.floor(cube ** (1.0 / 3.0)))
    # guard the floating cube root against off-by-one at exact cubes
    while (b + 1) ** 3 <= cube * (1 + 1e-12):
        b += 1
    while b > 0 and b ** 3 > cube * (1 + 1e-12):
        b -= 1
    bound = (1 + b * p / (1 - p) + 2 * params.kappa / (p - p * p)) * params.delta
    return b, float(bound)


def cor1_signed_bound(p: float, epsilon: float | None, params: BoundParams) -> BoundReport:
    """{-1,+1} masks: ``(1 - B + B/(4(p-p^2))) delta + rho^2 B eps/(4(p-p^2))``."""
    _check_p(p)
    eps = _eps(params, epsilon)
    B, v = params.B, 4 * (p - p * p)
    dist = (1 - B + B / v) * params.delta
    fluct = params.rho ** 2 * B * eps / v
    log_fail = (B * params.r + 1) * LN2 - params.n * eps ** 2 / 2
    return _report("c1", dist, fluct, log_fail, "epsilon", p=p)


def cor12_bounded_bound(p: float, q: float, epsilon: float | None, params: BoundParams) -> BoundReport:
    """[0,1]-valued masks with mean p and second moment q.

    ``(1 + B p^2/(q-p^2)) delta + rho^2 B eps/(q-p^2)``; decreasing in ``q``,
    so over feasible ``q <= p`` it is smallest at the binary case ``q = p``.
    """
    _check_p(p)
    if not q > p * p:
        raise ValueError(f"need q > p^2 (nondegenerate variance), got q={q}, p^2={p * p}")
    eps = _eps(params, epsilon)
    v = q - p * p
    dist = (1 + params.B * p * p / v) * params.delta
    fluct = params.rho ** 2 * params.B * eps / v
    log_fail = (params.B * params.r + 1) * LN2 - params.n * eps ** 2 / 2
    notes = "decreasing in q; minimized at q = p (binary)"
    if q > p:
        notes += "; q > p is infeasible for [0,1]-valued entries"
    return _report("c12", dist, fluct, log_fail, "epsilon", notes, p=p, q=q)


# --- Markov masks -------------------------------------------------------------------

def thm2_bound(p: float, epsilon: float | None, theta1: float, params: BoundParams) -> BoundReport:
    """In-frame Markov masks.

    ``(1 + Bp/(1-p)) delta/(nB) + rho^2 eps/(p(1-p))`` with success probability
    ``1 - (2^(Br)+1) exp(-(n eps^2/32)(1-theta1)^2)``.  theta1 = 1 makes the
    probability vacuous (reported, not raised).
    """
    _check_p(p)
    if not 0.0 <= theta1 <= 1.0:
        raise ValueError("theta1 must lie in [0, 1]")
    eps = _eps(params, epsilon)
    n, B = params.n, params.B
    dist = (1 + B * p / (1 - p)) * params.delta / (n * B)
    fluct = params.rho ** 2 * eps / (p * (1 - p))
    log_fail = _log_codebook_plus_one(B * params.r) - n * eps ** 2 / 32 * (1 - theta1) ** 2
    return _report("2", dist, fluct, log_fail, "epsilon", THM2_NORMALIZATION_NOTE,
                   p=p, theta1=theta1)


def check_outframe_assumption(q0: float | None, q1: float | None) -> None:
    """Out-of-frame bounds assume ``q0, q1 <= 0.5`` (so ``alpha >= 0``); unset values pass."""
    for name, v in (("q0", q0), ("q1", q1)):
        if v is not None and v > 0.5:
            raise InapplicableTheoremError(f"{name} = {v} > 0.5; out-of-frame bound assumes q0, q1 <= 0.5")


def thm3_bound(p: float, epsilon: float | None, lambda_min: float, lambda_max: float,
               params: BoundParams) -> BoundReport:
    """Out-of-frame Markov masks, using the eigen-extrema of the correlation matrix.

    ``(lmax(1-p) + pB)/(lmin(1-p)) delta/(nB) + rho^2 eps/(lmin p(1-p))`` with
    success probability ``1 - 2^(Br+1) exp(-n eps^2/(2B^2))``.
    """
    _check_p(p)
    check_outframe_assumption(params.q0, params.q1)
    if not lambda_min > 0:
        raise InapplicableTheoremError(f"lambda_min = {lambda_min} <= 0; theorem does not apply")
    eps = _eps(params, epsilon)
    n, B = params.n, params.B
    dist = (lambda_max * (1 - p) + p * B) / (lambda_min * (1 - p)) * params.delta / (n * B)
    fluct = params.rho ** 2 * eps / (lambda_min * p * (1 - p))
    log_fail = (B * params.r + 1) * LN2 - n * eps ** 2 / (2 * B * B)
    return _report("3", dist, fluct, log_fail, "epsilon", THM2_NORMALIZATION_NOTE,
                   p=p, lambda_min=lambda_min, lambda_max=lambda_max)


def cor4_bound(p: float, epsilon: float | None, alpha: float, params: BoundParams) -> BoundReport:
    """Out-of-frame bound with Gershgorin surrogates for the eigen-extrema (``0 <= alpha < 1/3``).

    ``((1+a)(1-p) + pB)/((1-3a)(1-p)) delta/(nB) + rho^2 eps/((1-3a) p(1-p))``.
    """
    _check_p(p)
    check_outframe_assumption(params.q0, params.q1)
    if not 0 <= alpha < 1.0 / 3.0:
        raise InapplicableTheoremError(f"alpha = {alpha} outside [0, 1/3)")
    eps = _eps(params, epsilon)
    n, B = params.n, params.B
    g = 1 - 3 * alpha
    dist = ((1 + alpha) * (1 - p) + p * B) / (g * (1 - p)) * params.delta / (n * B)
    fluct = params.rho ** 2 * eps / (g * p * (1 - p))
    log_fail = (B * params.r + 1) * LN2 - n * eps ** 2 / (2 * B * B)
    return _report("c4", dist, fluct, log_fail, "epsilon", THM2_NORMALIZATION_NOTE,
                   p=p, alpha=alpha)


# --- projected gradient descent -------------------------------------------------------

def pgd_contraction(lambda_free: float, p: float) -> float:
    """Per-iteration error contraction ``2 lambda/(p - p^2)``."""
    _check_p(p)
    return 2.0 * lambda_free / (p - p * p)


def lambda_for_contraction(contraction: float, p: float) -> float:
    """``lambda = c p(1-p)/2``, the inverse of :func:`pgd_contraction`."""
    return contraction * p * (1 - p) / 2.0


def pgd_floor(p: float, B: int, delta: float) -> float:
    """Additive term ``2(p + (B-1)p^2 + 1) sqrt(delta)/(p - p^2)`` of one PGD step."""
    _check_p(p)
    return 2.0 * (p + (B - 1) * p * p + 1) * math.sqrt(delta) / (p - p * p)


def pgd_limit_bound(p: float, B: int, delta: float, contraction: float) -> float:
    """Fixed point of the error recursion, ``floor/(1 - contraction)``.

    Returns ``inf`` with a ``RuntimeWarning`` when ``contraction >= 1``.
    """
    if contraction >= 1:
        warnings.warn(f"contraction {contraction} >= 1: PGD error recursion has no limit",
                      RuntimeWarning)
        return math.inf
    return pgd_floor(p, B, delta) / (1.0 - contraction)


def thm5_success_probability(n: int, B: int, r: float, delta: float, rho: float,
                             lambda_free: float) -> ProbabilityBound:
    """``1 - 2^(4nBr) e^(-2n lam^2 delta^2/(B^2 rho^4)) - (2^(2nBr)+1) e^(-2n delta^2/(B^2 rho^4))``."""
    s = 2.0 * n * delta ** 2 / (B ** 2 * rho ** 4)
    t1 = 4 * n * B * r * LN2 - s * lambda_free ** 2
    t2 = _log_codebook_plus_one(2 * n * B * r) - s
    return ProbabilityBound.from_log_failure(_log_union(t1, t2))
