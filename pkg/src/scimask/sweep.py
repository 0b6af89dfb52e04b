"""Parameter sweeps over mask settings, CSV output and a small SVG line chart."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .bounds import BoundParams, cor4_bound, thm1_bound, thm2_bound
from .forward import SensingOperator, measure
from .masks import IidBernoulli, InFrameMarkov, OutFrameMarkov, sample_mask, theta1_closed_form
from .recovery import PgdConfig, TvProjector, default_mu, pgd_recover
from .rng import derive_seed
from .tensor import psnr, synth_video

__all__ = [
    "AXES", "METRICS", "SweepSpec", "SweepRow", "SweepResult", "run_sweep",
    "write_sweep_csv", "emit_svg_linechart", "markov_pair_for", "DEFAULT_TV_WEIGHT",
]

AXES = ("p", "q0q1_pair", "B", "alpha")
METRICS = ("psnr", "bound_value", "mse_split")

# TV weight per unit rho; chosen as the PSNR maximizer of i.i.d. p=0.4 recoveries
# of the default synthetic video
DEFAULT_TV_WEIGHT = 0.015


def markov_pair_for(p: float, alpha: float) -> tuple[float, float]:
    """Transition pair ``(q0, q1)`` with stationary marginal ``p`` and ``1 - q0 - q1 = alpha``."""
    return p * (1 - alpha), (1 - p) * (1 - alpha)


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: an axis, its grid, and everything held fixed.

    ``model`` picks the mask family for the ``p`` and ``alpha`` axes
    (``iid`` / ``inframe`` / ``outframe``; ``alpha`` defaults to out-of-frame).
    ``step`` is ``gap`` for the pixel-normalized PGD step with ``mu = 1`` or
    ``plain`` for ``mu = 1/(p - p^2)`` unless ``mu`` is given.
    """

    axis: str
    grid: tuple
    metric: str = "psnr"
    trials: int = 5
    base_seed: int = 0
    model: str = "iid"
    p: float = 0.4
    alpha: float = 0.0
    dims: tuple = (64, 64, 8)
    kind: str = "moving_square"
    video_seed: int = 0
    rho: float = 1.0
    tv_weight: float | None = None
    inner_iterations: int = 10
    max_iter: int = 60
    tol: float = 0.0
    step: str = "gap"
    mu: float | None = None
    theorem: str = "1"
    bound: BoundParams = field(default_factory=lambda: BoundParams(n=4096, B=8))

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if len(self.grid) == 0:
            raise ValueError("grid must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.step not in ("gap", "plain"):
            raise ValueError("step must be 'gap' or 'plain'")
        if self.axis == "q0q1_pair":
            grid = tuple(tuple(float(v) for v in g) for g in self.grid)
            if any(len(g) != 2 for g in grid):
                raise ValueError("q0q1_pair grid entries must be (q0, q1) pairs")
        else:
            grid = tuple(sorted(float(g) if self.axis != "B" else int(g) for g in self.grid))
        object.__setattr__(self, "grid", grid)

    def config(self) -> dict:
        d = asdict(self)
        d.pop("bound")
        d.update({f"bound.{k}": v for k, v in asdict(self.bound).items()})
        d["grid"] = " ".join(_label(g) for g in self.grid)
        d["dims"] = "x".join(str(v) for v in self.dims)
        return d


@dataclass(frozen=True)
class SweepRow:
    axis_value: object
    mean: float
    std: float
    trials: int
    extra: dict = field(default_factory=dict)


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list
    seeds: dict

    def column(self, name: str = "mean") -> np.ndarray:
        if name in ("mean", "std"):
            return np.array([getattr(r, name) for r in self.rows])
        return np.array([r.extra[name] for r in self.rows])

    def axis_values(self) -> list:
        return [r.axis_value for r in self.rows]


def _label(v) -> str:
    if isinstance(v, tuple):
        return ":".join(repr(x) for x in v)
    return repr(v)


def _model_at(spec: SweepSpec, value):
    if spec.axis == "q0q1_pair":
        q0, q1 = value
        return (OutFrameMarkov if spec.model == "outframe" else InFrameMarkov)(q0, q1)
    if spec.axis == "alpha":
        q0, q1 = markov_pair_for(spec.p, value)
        return (InFrameMarkov if spec.model == "inframe" else OutFrameMarkov)(q0, q1)
    p = value if spec.axis == "p" else spec.p
    if spec.model == "iid" or spec.axis == "B":
        return IidBernoulli(p)
    q0, q1 = markov_pair_for(p, spec.alpha)
    return (InFrameMarkov if spec.model == "inframe" else OutFrameMarkov)(q0, q1)


def _frames_at(spec: SweepSpec, value) -> int:
    return int(value) if spec.axis == "B" else int(spec.dims[2])


def _pgd_config(spec: SweepSpec, p: float) -> PgdConfig:
    if spec.step == "gap":
        return PgdConfig(mu=spec.mu or 1.0, max_iter=spec.max_iter, tol=spec.tol,
                         record_trace=False, normalize=True)
    return PgdConfig(mu=spec.mu or default_mu(p), max_iter=spec.max_iter, tol=spec.tol,
                     record_trace=False)


def _trial(spec: SweepSpec, value, seed: int) -> tuple:
    """One recovery; returns (psnr_db, (1-p) e, p ebar)."""
    n1, n2, _ = spec.dims
    B = _frames_at(spec, value)
    x = synth_video(spec.kind, n1, n2, B, seed=spec.video_seed, rho=spec.rho)
    model = _model_at(spec, value)
    op = SensingOperator(sample_mask(model, n1, n2, B, seed))
    weight = (DEFAULT_TV_WEIGHT if spec.tv_weight is None else spec.tv_weight) * spec.rho
    proj = TvProjector(weight, spec.inner_iterations, spec.rho)
    p = model.marginal_p
    res = pgd_recover(measure(op, x), op, proj, _pgd_config(spec, p))
    d = res.x_hat.array - x.array
    e = float(np.mean(d * d))
    ebar = float(np.mean(d.mean(axis=2) ** 2))
    return psnr(x, res.x_hat).psnr_db, (1 - p) * e, p * ebar


def _bound_at(spec: SweepSpec, value) -> float:
    bp = spec.bound
    if spec.axis == "B":
        bp = bp.with_(B=int(value))
    model = _model_at(spec, value)
    p = model.marginal_p
    if spec.theorem == "1":
        return thm1_bound(p, bp).bound_value
    if spec.theorem == "2":
        th = theta1_closed_form(model.q0, model.q1, bp.B) if hasattr(model, "q0") else 0.0
        return thm2_bound(p, None, th, bp).bound_value
    if spec.theorem == "c4":
        a = model.alpha if hasattr(model, "alpha") else 0.0
        return cor4_bound(p, None, a, bp.with_(q0=getattr(model, "q0", None),
                                                 q1=getattr(model, "q1", None))).bound_value
    raise ValueError(f"bound_value sweeps support theorems 1, 2, c4; got {spec.theorem!r}")


def _run_point(args):
    spec, value, seeds = args
    return [_trial(spec, value, s) for s in seeds]


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Evaluate ``spec.metric`` at every grid point.

    Trial ``k`` at grid value ``v`` uses mask seed
    ``derive_seed(base_seed, repr(v), k)``, so results do not depend on the
    order or process in which trials run.
    """
    seeds = {_label(v): [derive_seed(spec.base_seed, _label(v), k) for k in range(spec.trials)]
             for v in spec.grid}
    rows = []
    if spec.metric == "bound_value":
        for v in spec.grid:
            rows.append(SweepRow(v, float(_bound_at(spec, v)), 0.0, 1))
        return SweepResult(spec, rows, {})
    jobs = [(spec, v, seeds[_label(v)]) for v in spec.grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_run_point, jobs))
    else:
        outs = [_run_point(j) for j in jobs]
    for v, out in zip(spec.grid, outs):
        a = np.array(out)  # (trials, 3)
        sd = a.std(axis=0, ddof=1) if len(a) > 1 else np.zeros(3)
        if spec.metric == "psnr":
            rows.append(SweepRow(v, float(a[:, 0].mean()), float(sd[0]), len(a)))
        else:
            tot = a[:, 1] + a[:, 2]
            rows.append(SweepRow(v, float(tot.mean()), float(tot.std(ddof=1)) if len(a) > 1 else 0.0,
                                 len(a), {"e_term": float(a[:, 1].mean()), "e_term_std": float(sd[1]),
                                          "ebar_term": float(a[:, 2].mean()),
                                          "ebar_term_std": float(sd[2])}))
    return SweepResult(spec, rows, seeds)


def write_sweep_csv(path, result: SweepResult, provenance: dict | None = None) -> Path:
    """CSV with ``# key=value`` provenance lines, then a header row and one row per grid point."""
    path = Path(path)
    cfg = dict(provenance or {})
    cfg.update(result.spec.config())
    extra_cols = sorted(result.rows[0].extra) if result.rows else []
    with open(path, "w", newline="") as fh:
        for k in sorted(cfg):
            fh.write(f"# {k}={cfg[k]}\n")
        for k, s in result.seeds.items():
            fh.write(f"# seeds[{k}]={' '.join(str(v) for v in s)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis", "value", "mean", "std", "trials", *extra_cols])
        for r in result.rows:
            w.writerow([result.spec.axis, _label(r.axis_value), repr(r.mean), repr(r.std), r.trials,
                        *(repr(r.extra[c]) for c in extra_cols)])
    return path


# --- SVG -------------------------------------------------------------------------------

_W, _H = 800, 600
_LEFT, _RIGHT, _TOP, _BOTTOM = 80, 40, 40, 70
_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.4g}"


def _range(vals) -> tuple[float, float]:
    lo, hi = min(vals), max(vals)
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def emit_svg_linechart(series, labels, path=None, title: str = "", xlabel: str = "",
                       ylabel: str = "") -> str:
    """Line chart of one or more ``[(x, y), ...]`` series; returns the SVG text.

    Fixed 800x600 viewBox with 10 ticks per axis.  Non-finite points are
    dropped.  Output bytes depend only on the inputs.
    """
    series = [[(float(x), float(y)) for x, y in s if math.isfinite(x) and math.isfinite(y)]
              for s in series]
    if not series or not any(series):
        raise ValueError("no data to plot")
    if len(labels) != len(series):
        raise ValueError("need one label per series")
    xs = [x for s in series for x, _ in s]
    ys = [y for s in series for _, y in s]
    x0, x1 = _range(xs)
    y0, y1 = _range(ys)
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def sx(x):
        return _LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return _TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" '
           f'width="{_W}" height="{_H}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>']
    if title:
        out.append(f'<text x="{_W / 2}" y="24" text-anchor="middle" font-size="16">{_esc(title)}</text>')
    out.append(f'<line x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}" stroke="black"/>')
    out.append(f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}" stroke="black"/>')
    for k in range(11):
        xv = x0 + (x1 - x0) * k / 10
        yv = y0 + (y1 - y0) * k / 10
        px, py = _fmt(sx(xv)), _fmt(sy(yv))
        out.append(f'<line x1="{px}" y1="{_TOP + ph}" x2="{px}" y2="{_TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px}" y="{_TOP + ph + 20}" text-anchor="middle">{_tick(xv)}</text>')
        out.append(f'<line x1="{_LEFT - 5}" y1="{py}" x2="{_LEFT}" y2="{py}" stroke="black"/>')
        out.append(f'<text x="{_LEFT - 8}" y="{py}" text-anchor="end" dominant-baseline="middle">'
                   f'{_tick(yv)}</text>')
    if xlabel:
        out.append(f'<text x="{_LEFT + pw / 2}" y="{_H - 20}" text-anchor="middle">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="20" y="{_TOP + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 20 {_TOP + ph / 2})">{_esc(ylabel)}</text>')
    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in s)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
    lx, ly = _LEFT + pw - 160, _TOP + 10
    for i, lab in enumerate(labels):
        color = _COLORS[i % len(_COLORS)]
        y = ly + 18 * i
        out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{y}" dominant-baseline="middle" class="legend">{_esc(lab)}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
