"""Brute-force and Monte-Carlo checks of the mask expectation and tail formulas.

``U_j = (sum_i D_ij mu_ij)^2`` is the squared measurement of the difference
column ``mu_j = x_j - c_j`` at pixel ``j``.  Closed forms for ``E[U_j]`` are
compared with exact enumeration over all mask columns, and the empirical upper
tail of ``(1/n) sum_j U_j`` is compared with the Hoeffding / Markov-chain
concentration bounds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, asdict
from itertools import product
from pathlib import Path

import numpy as np

from .masks import (BoundedIid, IidBernoulli, InFrameMarkov, OutFrameMarkov, SignedIid,
                    lambda_matrix, model_to_dict, sample_mask, theta1_closed_form)
from .rng import derive_seed, substream
from .tensor import DataCube

__all__ = [
    "McReport", "MeanEstimatorReport", "expected_Uj_iid", "expected_Uj_outframe",
    "expected_Uj", "bruteforce_EUj", "tail_bound", "mc_concentration",
    "mean_estimator_check", "write_mc_csv", "random_mu_field",
]

BRUTE_LIMIT = 16


@dataclass(frozen=True)
class McReport:
    trials: int
    empirical_mean: float
    analytic_mean: float
    empirical_tail_prob: float
    bound_tail_prob: float
    passed: bool
    seed: int
    vacuous: bool = False
    mean_tolerance: float = 0.0
    slack: float = 0.0
    model: str = ""
    params: str = ""
    n: int = 0
    B: int = 0
    epsilon: float = math.nan

    @property
    def mean_ok(self) -> bool:
        return abs(self.empirical_mean - self.analytic_mean) <= self.mean_tolerance

    @property
    def tail_ok(self) -> bool:
        return self.empirical_tail_prob <= self.bound_tail_prob + self.slack


@dataclass(frozen=True)
class MeanEstimatorReport:
    """Accuracy of ``y/(Bp)`` averaged over ``trials`` masks as an estimate of the mean frame."""

    trials: int
    p: float
    rms_error: float
    predicted_rms: float
    passed: bool
    seed: int


# --- closed forms ---------------------------------------------------------------

def expected_Uj_iid(mu_col, p: float) -> float:
    """``p^2 (sum mu)^2 + (p - p^2) sum mu^2``."""
    mu = np.asarray(mu_col, dtype=np.float64)
    s = float(mu.sum())
    return p * p * s * s + (p - p * p) * float(mu @ mu)


def expected_Uj_outframe(mu_col, p: float, alpha: float) -> float:
    """``p^2 (sum mu)^2 + p(1-p) mu^T Lambda mu`` with ``Lambda_ik = alpha^|i-k|``."""
    if not abs(alpha) < 1:
        raise ValueError("need |alpha| < 1")
    mu = np.asarray(mu_col, dtype=np.float64)
    s = float(mu.sum())
    lam = lambda_matrix(alpha, mu.size)
    return p * p * s * s + p * (1 - p) * float(mu @ lam @ mu)


def expected_Uj(mu_col, model) -> float:
    """Closed-form ``E[U_j]`` for any supported model."""
    mu = np.asarray(mu_col, dtype=np.float64)
    s, ss = float(mu.sum()), float(mu @ mu)
    if isinstance(model, (IidBernoulli, InFrameMarkov)):
        # in-frame chains run across pixels, so a single column is still i.i.d.
        return expected_Uj_iid(mu, model.marginal_p)
    if isinstance(model, OutFrameMarkov):
        return expected_Uj_outframe(mu, model.marginal_p, model.alpha)
    if isinstance(model, SignedIid):
        m = 2 * model.p - 1
        return m * m * s * s + 4 * (model.p - model.p ** 2) * ss
    if isinstance(model, BoundedIid):
        p, q = model.p, model.q
        return p * p * s * s + (q - p * p) * ss
    raise TypeError(f"not a mask model: {model!r}")


# --- enumeration oracle -----------------------------------------------------------

def _column_law(model, B: int) -> tuple[np.ndarray, np.ndarray]:
    """All mask columns of length ``B`` with their exact probabilities."""
    if isinstance(model, OutFrameMarkov):
        cols = np.array(list(product((0, 1), repeat=B)), dtype=np.float64)
        p, q0, q1 = model.marginal_p, model.q0, model.q1
        step = np.array([[1 - q0, q0], [q1, 1 - q1]])
        c = cols.astype(int)
        prob = np.where(c[:, 0] == 1, p, 1 - p)
        for i in range(1, B):
            prob = prob * step[c[:, i - 1], c[:, i]]
        return cols, prob
    if isinstance(model, (IidBernoulli, InFrameMarkov)):
        atoms, w = np.array([0.0, 1.0]), np.array([1 - model.marginal_p, model.marginal_p])
    elif isinstance(model, SignedIid):
        atoms, w = np.array([-1.0, 1.0]), np.array([1 - model.p, model.p])
    elif isinstance(model, BoundedIid):
        atoms, w = model.support()
    else:
        raise TypeError(f"not a mask model: {model!r}")
    idx = np.array(list(product(range(atoms.size), repeat=B)))
    return atoms[idx], np.prod(w[idx], axis=1)


def bruteforce_EUj(mu_col, model) -> float:
    """Exact ``E[U_j]`` by enumerating every mask column (``B <= 16``)."""
    mu = np.asarray(mu_col, dtype=np.float64)
    if mu.size > BRUTE_LIMIT:
        raise ValueError(f"enumeration limited to B <= {BRUTE_LIMIT}")
    cols, prob = _column_law(model, mu.size)
    return float(prob @ (cols @ mu) ** 2)


# --- concentration ------------------------------------------------------------------

def _entry_max(model) -> float:
    if isinstance(model, BoundedIid):
        return 1.5 * model.q / model.p if model.distribution == "uniform_scaled" else model.q / model.p
    return 1.0


def tail_bound(model, n: int, B: int, epsilon: float, rho: float = 1.0) -> float:
    """Bound on ``Pr((1/n) sum U_j - E >= B rho^2 eps)``.

    Independent columns use Hoeffding with ``0 <= U_j <= (B rho dmax)^2``, which is
    ``exp(-2 n eps^2 / B^2)`` for masks in {0,1} or {-1,1}.  In-frame chains use
    the bounded-difference bound with Lipschitz constant ``c = 2 B rho^2``:
    ``exp(-(n B^2 rho^4 eps^2 / (2 c^2)) (1 - theta1)^2)``.
    """
    if isinstance(model, InFrameMarkov):
        c = 2 * B * rho * rho
        th = theta1_closed_form(model.q0, model.q1, B)
        return math.exp(-(n * B * B * rho ** 4 * epsilon ** 2 / (2 * c * c)) * (1 - th) ** 2)
    hi = (B * rho * _entry_max(model)) ** 2
    t = B * rho * rho * epsilon
    return math.exp(-2 * n * t * t / (hi * hi))


def random_mu_field(n: int, B: int, seed: int, rho: float = 1.0) -> np.ndarray:
    """Difference field ``(n, B)`` uniform in ``[-rho, rho]``, like ``x - c``."""
    return substream(seed, "mu-field").uniform(-rho, rho, size=(n, B))


def mc_concentration(model, mu_field, n: int, trials: int, epsilon: float, seed: int,
                     rho: float = 1.0) -> McReport:
    """Empirical upper-tail frequency of ``(1/n) sum_j U_j`` against :func:`tail_bound`.

    Trial ``t`` draws its mask from seed ``derive_seed(seed, "mc", t)``.  The pass
    rule is ``empirical <= bound + 3 sqrt(bound (1-bound)/trials) + 1/trials``
    plus agreement of the empirical mean with the closed form within five
    standard errors.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    mu = np.asarray(mu_field, dtype=np.float64)
    if mu.ndim != 2 or mu.shape[0] != n:
        raise ValueError(f"mu_field must have shape (n, B) with n={n}, got {mu.shape}")
    B = mu.shape[1]
    analytic = float(np.mean([expected_Uj(mu[j], model) for j in range(n)]))
    means = np.empty(trials)
    for t in range(trials):
        d = sample_mask(model, n, 1, B, derive_seed(seed, "mc", t)).diagonals()  # (B, n)
        u = np.einsum("ij,ji->j", d, mu) ** 2
        means[t] = u.mean()
    emp_tail = float(np.mean(means - analytic >= B * rho * rho * epsilon))
    bound = tail_bound(model, n, B, epsilon, rho)
    b = min(bound, 1.0)
    slack = 3 * math.sqrt(b * (1 - b) / trials) + 1.0 / trials
    se = float(means.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    tol = 5 * se + 1e-12 * max(1.0, abs(analytic))
    emp_mean = float(means.mean())
    ok = abs(emp_mean - analytic) <= tol and emp_tail <= bound + slack
    params = ";".join(f"{k}={v}" for k, v in model_to_dict(model).items() if k != "model")
    return McReport(trials, emp_mean, analytic, emp_tail, bound, bool(ok), int(seed),
                    vacuous=bound >= 1.0, mean_tolerance=tol, slack=slack,
                    model=model.name, params=params, n=n, B=B, epsilon=epsilon)


# --- mean estimator -------------------------------------------------------------------

def _pixel_variance(x: np.ndarray, model) -> np.ndarray:
    """``Var(sum_i D_ij x_ij)`` per pixel for a binary model; ``x`` is ``(n, B)``."""
    p = model.marginal_p
    if isinstance(model, OutFrameMarkov):
        lam = lambda_matrix(model.alpha, x.shape[1])
        return p * (1 - p) * np.einsum("ji,ik,jk->j", x, lam, x)
    return p * (1 - p) * (x * x).sum(axis=1)


def mean_estimator_check(x: DataCube, model, trials: int, seed: int) -> MeanEstimatorReport:
    """Average ``y/(Bp)`` over ``trials`` seeded masks and compare with the mean frame.

    ``model`` is a binary mask model or a plain marginal ``p``; ``p = 1`` is the
    all-open mask, where ``y/B`` is exact.  Passes when the RMS error is within
    three times the RMS predicted from the per-pixel variance.
    """
    if isinstance(model, (SignedIid, BoundedIid)):
        raise ValueError("mean estimator check needs a binary mask model")
    arr = x.array
    n1, n2, B = arr.shape
    cols = arr.reshape(n1 * n2, B, order="F")
    truth = cols.mean(axis=1)
    if not hasattr(model, "marginal_p"):
        p = float(model)
        if p == 1.0:
            err = float(np.sqrt(np.mean((cols.sum(axis=1) / B - truth) ** 2)))
            return MeanEstimatorReport(trials, 1.0, err, 0.0, err <= 1e-12, int(seed))
        model = IidBernoulli(p)
    p = model.marginal_p
    if trials < 1:
        raise ValueError("trials must be >= 1")
    acc = np.zeros(n1 * n2)
    for t in range(trials):
        d = sample_mask(model, n1, n2, B, derive_seed(seed, "mean", t)).diagonals()
        acc += np.einsum("ij,ji->j", d, cols)
    est = acc / (trials * B * p)
    rms = float(np.sqrt(np.mean((est - truth) ** 2)))
    pred = float(np.sqrt(np.mean(_pixel_variance(cols, model)) / trials) / (B * p))
    return MeanEstimatorReport(trials, p, rms, pred, rms <= 3 * pred + 1e-12, int(seed))


# --- output ---------------------------------------------------------------------------

MC_COLUMNS = ["model", "params", "n", "B", "epsilon", "empirical_tail", "bound_tail",
              "vacuous_flag", "pass"]


def write_mc_csv(path, reports, append: bool = True, header_lines=()) -> Path:
    """Append McReport rows; the header row is written when the file is new."""
    path = Path(path)
    new = not path.exists() or not append
    with open(path, "a" if append else "w", newline="") as fh:
        if new:
            for line in header_lines:
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(MC_COLUMNS)
        for r in reports:
            w.writerow([r.model, r.params, r.n, r.B, repr(r.epsilon), repr(r.empirical_tail_prob),
                        repr(r.bound_tail_prob), int(r.vacuous), int(r.passed)])
    return path
