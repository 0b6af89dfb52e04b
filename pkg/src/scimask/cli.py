"""``scimask`` command line: masks, snapshots, recovery, bounds, checks and sweeps.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 a bound that does
not apply to the given parameters.  Every command accepts ``--config FILE``
with ``key = value`` lines; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (BoundParams, InapplicableTheoremError, cor1_signed_bound, cor12_bounded_bound,
                     cor42_max_B, cor4_bound, optimal_p_star, pgd_contraction, pgd_floor,
                     pgd_limit_bound, thm1_bound, thm1_epsilon, thm2_bound, thm3_bound,
                     thm5_success_probability)
from .forward import SensingOperator, add_noise, measure
from .masks import (BoundedIid, IidBernoulli, InFrameMarkov, OutFrameMarkov, SignedIid,
                    eigen_extrema, lambda_matrix, load_mask, sample_mask, save_mask,
                    theta1_closed_form)
from .recovery import (CodebookProjector, PgdConfig, TvProjector, build_quantizer_codebook,
                       default_mu, pgd_recover)
from .sweep import DEFAULT_TV_WEIGHT, SweepSpec, emit_svg_linechart, markov_pair_for, run_sweep, write_sweep_csv
from .tensor import (DataCube, FormatError, FrameImage, load_pgm_frames, load_tensor, psnr,
                     save_tensor, synth_video)
from .verify import (bruteforce_EUj, expected_Uj, mc_concentration, mean_estimator_check,
                     random_mu_field, write_mc_csv)

log = logging.getLogger("scimask")

EXIT_USAGE, EXIT_DATA, EXIT_INAPPLICABLE = 1, 2, 3

BOUND_COLUMNS = ["theorem", "p", "q0", "q1", "alpha", "theta1", "bound", "term_distortion",
                 "term_fluctuation", "prob_lower", "convention", "argmin"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- parsing helpers ---------------------------------------------------------------------

def parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    try:
        dims = tuple(int(v) for v in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}, expected N1xN2xB")
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}, expected N1xN2xB")
    return dims


def parse_range(text: str) -> list[float]:
    """``lo:hi:step`` inclusive of ``hi`` (to rounding), or a comma list."""
    if "," in text or text.count(":") != 2:
        return [float(v) for v in text.split(",") if v.strip()]
    lo, hi, step = (float(v) for v in text.split(":"))
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    k = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 12) for i in range(k + 1)]


def parse_grid(text: str, axis: str) -> list:
    if axis == "q0q1_pair":
        out = []
        for item in text.split(","):
            a, _, b = item.partition(":")
            out.append((float(a), float(b)))
        return out
    if axis == "B":
        return [int(v) for v in text.split(",")]
    return parse_range(text)


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Keys may use dashes or underscores."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}")
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{no}: expected key = value")
        k, _, v = line.partition("=")
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _provenance(args) -> dict:
    skip = {"func", "config_values"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_prov_sidecar(path, args, extra=None):
    """``key=value`` provenance next to a SCIT output; ``#`` lines hold the resolved config."""
    mp = Path(path).with_suffix(".meta")
    lines = [f"{k}={v}\n" for k, v in (extra or {}).items()]
    lines += [f"# {k}={v}\n" for k, v in _provenance(args).items()]
    with open(mp, "a") as fh:
        fh.writelines(lines)


def _csv_header(fh, args):
    for k, v in _provenance(args).items():
        fh.write(f"# {k}={v}\n")


def _model_from_args(args):
    try:
        return _build_model(args)
    except ValueError as exc:
        raise UsageError(str(exc))


def _build_model(args):
    m = args.model
    if m == "iid":
        return IidBernoulli(args.p)
    if m == "signed":
        return SignedIid(args.p)
    if m == "bounded":
        if args.q is None:
            raise UsageError("--q is required for the bounded model")
        return BoundedIid(args.p, args.q, args.distribution)
    q0, q1 = args.q0, args.q1
    if q0 is None or q1 is None:
        if args.alpha is None:
            raise UsageError(f"model {m} needs --q0 and --q1 (or --p with --alpha)")
        q0, q1 = markov_pair_for(args.p, args.alpha)
    return (InFrameMarkov if m == "inframe" else OutFrameMarkov)(q0, q1)


def _load_cube(paths, rho):
    paths = list(paths)
    if len(paths) == 1 and not str(paths[0]).lower().endswith(".pgm"):
        cube = load_tensor(paths[0], rho=rho)
        if not isinstance(cube, DataCube):
            raise FormatError(f"{paths[0]} does not hold a float data cube")
        return cube
    return load_pgm_frames(paths, rho=rho if rho is not None else 1.0)


# --- commands -----------------------------------------------------------------------------

def cmd_synth(args) -> int:
    n1, n2, B = args.dims
    cube = synth_video(args.kind, n1, n2, B, seed=args.seed, rho=args.rho)
    save_tensor(args.output, cube)
    _write_prov_sidecar(args.output, args, {"rho": args.rho})
    log.info("wrote %s (%dx%dx%d)", args.output, n1, n2, B)
    return 0


def cmd_mask(args) -> int:
    model = _model_from_args(args)
    n1, n2, B = args.dims
    mask = sample_mask(model, n1, n2, B, args.seed)
    save_mask(args.output, mask)
    _write_prov_sidecar(args.output, args)
    log.info("wrote %s, open fraction %.4f", args.output, float(np.mean(mask.values != 0)))
    return 0


def cmd_forward(args) -> int:
    mask = load_mask(args.mask)
    cube = _load_cube(args.input, args.rho)
    if cube.shape != mask.shape:
        raise FormatError(f"cube dims {cube.shape} != mask dims {mask.shape}")
    meas = measure(SensingOperator(mask), cube)
    if args.noise_sigma:
        meas = add_noise(meas, args.noise_sigma, args.seed)
    save_tensor(args.output, meas.frame)
    _write_prov_sidecar(args.output, args, {"noise_sigma": meas.noise_sigma})
    return 0


def _mask_p(mask) -> float:
    if mask.model is not None:
        return mask.model.marginal_p
    return float(np.mean(mask.values != 0))


def cmd_recover(args) -> int:
    mask = load_mask(args.mask)
    y = load_tensor(args.measurement, as_frame=True)
    if not isinstance(y, FrameImage):
        raise FormatError(f"{args.measurement} is not a single frame")
    n1, n2, B = mask.shape
    if y.array.shape != (n1, n2):
        raise FormatError(f"measurement dims {y.array.shape} != mask frame dims {(n1, n2)}")
    truth = _load_cube([args.truth], args.rho) if args.truth else None
    if truth is not None and truth.shape != mask.shape:
        raise FormatError(f"ground truth dims {truth.shape} != mask dims {mask.shape}")
    rho = args.rho if args.rho is not None else (truth.rho if truth is not None else 1.0)
    op = SensingOperator(mask)
    if args.projector == "tv":
        weight = args.tv_weight if args.tv_weight is not None else DEFAULT_TV_WEIGHT * rho
        proj = TvProjector(weight, args.inner_iterations, rho)
    else:
        proj = CodebookProjector(build_quantizer_codebook(n1, n2, B, args.levels, rho))
    normalize = args.step == "gap"
    if args.mu == "auto":
        mu = 1.0 if normalize else default_mu(_mask_p(mask))
    else:
        try:
            mu = float(args.mu)
        except ValueError:
            raise UsageError(f"--mu must be 'auto' or a number, got {args.mu!r}")
    cfg = PgdConfig(mu=mu, max_iter=args.max_iter, tol=args.tol, record_trace=True,
                    normalize=normalize)
    res = pgd_recover(y.values, op, proj, cfg, ground_truth=truth, rho=rho)
    save_tensor(args.output, res.x_hat)
    extra = {"iterations": res.iterations_run, "mu": mu}
    if truth is not None:
        extra["psnr_db"] = psnr(truth, res.x_hat).psnr_db
        log.info("PSNR %.3f dB", extra["psnr_db"])
    _write_prov_sidecar(args.output, args, extra)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            _csv_header(fh, args)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "residual_l2", "error_rms"])
            for t, r in enumerate(res.residual_trace, 1):
                err = res.error_trace[t - 1] if res.error_trace is not None else ""
                w.writerow([t, repr(r), repr(err) if err != "" else ""])
    return 0


def _bound_params(args) -> BoundParams:
    bp = BoundParams(n=args.n, B=args.B, r=args.r, delta=args.delta, rho=args.rho_bound,
                     eta=args.eta, epsilon=args.epsilon, kappa=args.kappa,
                     lambda_free=args.lambda_free, p=args.p, q0=args.q0, q1=args.q1, q=args.q)
    if bp.epsilon is None:
        # same automatic epsilon as the eta form of the i.i.d. bound
        args.epsilon = thm1_epsilon(bp)
        bp = bp.with_(epsilon=args.epsilon)
    return bp


def _bound_row(theorem: str, p: float, bp: BoundParams, args) -> dict:
    row = {"theorem": theorem, "p": p, "q0": "", "q1": "", "alpha": "", "theta1": "",
           "convention": "epsilon"}
    if theorem in ("2", "3", "c4"):
        if args.alpha is not None and (args.sweep_p or args.q0 is None):
            q0, q1 = markov_pair_for(p, args.alpha)
        elif args.q0 is not None and args.q1 is not None:
            q0, q1 = args.q0, args.q1
            p = q0 / (q0 + q1)
        else:
            raise UsageError(f"theorem {theorem} needs --q0/--q1 or --alpha")
        alpha = 1 - q0 - q1
        row.update(p=p, q0=q0, q1=q1, alpha=alpha)
        bp = bp.with_(q0=q0, q1=q1)
    if theorem == "1":
        rep = thm1_bound(p, bp, convention=args.convention)
    elif theorem == "c1":
        rep = cor1_signed_bound(p, None, bp)
    elif theorem == "c12":
        if args.q is None:
            raise UsageError("theorem c12 needs --q")
        rep = cor12_bounded_bound(p, args.q, None, bp)
    elif theorem == "2":
        th = theta1_closed_form(row["q0"], row["q1"], bp.B)
        row["theta1"] = th
        rep = thm2_bound(p, None, th, bp)
    elif theorem == "3":
        if row["alpha"] >= 1 or row["alpha"] <= -1:
            raise InapplicableTheoremError("|alpha| must be < 1")
        lmin, lmax = eigen_extrema(lambda_matrix(row["alpha"], bp.B))
        rep = thm3_bound(p, None, lmin, lmax, bp)
    elif theorem == "c4":
        rep = cor4_bound(p, None, row["alpha"], bp)
    elif theorem == "c42":
        bmax, val = cor42_max_B(bp, p)
        row.update(bound=val, term_distortion=val, term_fluctuation=0.0,
                   prob_lower=max(0.0, 1 - math.exp(-bp.r)), convention="kappa", B_max=bmax)
        return row
    elif theorem == "pgd":
        if args.lambda_free is None:
            raise UsageError("theorem pgd needs --lambda-free")
        c = pgd_contraction(args.lambda_free, p)
        val = pgd_limit_bound(p, bp.B, bp.delta, c)
        pb = thm5_success_probability(bp.n, bp.B, bp.r, bp.delta, bp.rho, args.lambda_free)
        row.update(bound=val, term_distortion=pgd_floor(p, bp.B, bp.delta), term_fluctuation=c,
                   prob_lower=pb.value, convention="recursion")
        return row
    else:
        raise UsageError(f"unknown theorem {theorem!r}")
    row.update(bound=rep.bound_value, term_distortion=rep.term_distortion,
               term_fluctuation=rep.term_fluctuation, prob_lower=rep.success_probability_lower,
               convention=rep.convention)
    return row


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, int, np.integer)):
        return str(int(v))
    return repr(float(v))


def cmd_bounds(args) -> int:
    bp = _bound_params(args)
    ps = parse_range(args.sweep_p) if args.sweep_p else [args.p]
    rows = [_bound_row(args.theorem, p, bp, args) for p in ps]
    vals = [r["bound"] for r in rows]
    best = int(np.argmin(vals)) if len(rows) > 1 else 0
    for i, r in enumerate(rows):
        r["argmin"] = int(i == best and len(rows) > 1)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        _csv_header(out, args)
        if args.theorem == "1" and args.convention == "eta":
            out.write(f"# p_star={optimal_p_star(bp, check=False)!r}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(BOUND_COLUMNS)
        for r in rows:
            w.writerow([_cell(r[c]) for c in BOUND_COLUMNS])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_verify(args) -> int:
    if args.check == "mean-estimator":
        n1, n2, B = args.dims
        x = synth_video(args.kind, n1, n2, B, seed=args.video_seed, rho=1.0)
        model = _model_from_args(args)
        rows = []
        for t in args.trials_list:
            rep = mean_estimator_check(x, model, t, args.seed)
            rows.append(rep)
            print(f"trials={t} rms={rep.rms_error:.6g} predicted={rep.predicted_rms:.6g} "
                  f"pass={rep.passed}")
        if args.output:
            with open(args.output, "w", newline="") as fh:
                _csv_header(fh, args)
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["trials", "p", "rms_error", "predicted_rms", "pass"])
                for r in rows:
                    w.writerow([r.trials, repr(r.p), repr(r.rms_error), repr(r.predicted_rms),
                                int(r.passed)])
        return 0 if all(r.passed for r in rows) else 4
    model = _model_from_args(args)
    if args.check == "euj":
        rng = np.random.default_rng(args.seed)
        worst = 0.0
        for _ in range(args.columns):
            mu = rng.uniform(-args.rho, args.rho, size=args.B)
            a, b = expected_Uj(mu, model), bruteforce_EUj(mu, model)
            worst = max(worst, abs(a - b) / max(1.0, abs(b)))
        print(f"model={model.name} B={args.B} columns={args.columns} max_rel_diff={worst:.3e}")
        return 0 if worst <= 1e-12 else 4
    mu = random_mu_field(args.n, args.B, args.seed, args.rho)
    rep = mc_concentration(model, mu, args.n, args.trials, args.epsilon, args.seed, args.rho)
    print(f"model={rep.model} n={rep.n} B={rep.B} eps={rep.epsilon} "
          f"empirical_tail={rep.empirical_tail_prob:.4g} bound_tail={rep.bound_tail_prob:.4g} "
          f"vacuous={rep.vacuous} pass={rep.passed}")
    if args.output:
        write_mc_csv(args.output, [rep], header_lines=[f"{k}={v}" for k, v in _provenance(args).items()])
    return 0 if rep.passed else 4


def cmd_sweep(args) -> int:
    grid = parse_grid(args.grid, args.axis)
    bp = BoundParams(n=args.n, B=args.dims[2], r=args.r, delta=args.delta, rho=args.rho, eta=args.eta)
    spec = SweepSpec(axis=args.axis, grid=tuple(grid), metric=args.metric, trials=args.trials,
                     base_seed=args.seed, model=args.model, p=args.p,
                     alpha=args.alpha if args.alpha is not None else 0.0, dims=args.dims,
                     kind=args.kind, video_seed=args.video_seed, rho=args.rho,
                     tv_weight=args.tv_weight, inner_iterations=args.inner_iterations,
                     max_iter=args.max_iter, tol=args.tol, step=args.step,
                     mu=None if args.mu == "auto" else float(args.mu),
                     theorem=args.theorem, bound=bp)
    res = run_sweep(spec, workers=args.workers)
    prov = _provenance(args)
    if args.output:
        write_sweep_csv(args.output, res, prov)
    for r in res.rows:
        extra = " ".join(f"{k}={v:.4g}" for k, v in r.extra.items())
        print(f"{args.axis}={r.axis_value} mean={r.mean:.4f} std={r.std:.4f} {extra}".rstrip())
    if args.plot:
        xs = [r.axis_value if not isinstance(r.axis_value, tuple) else i
              for i, r in enumerate(res.rows)]
        if args.metric == "mse_split":
            series = [list(zip(xs, res.column("e_term"))), list(zip(xs, res.column("ebar_term")))]
            labels = ["(1-p) e", "p ebar"]
        else:
            series, labels = [list(zip(xs, res.column("mean")))], [args.metric]
        emit_svg_linechart(series, labels, args.plot, title=f"{args.metric} vs {args.axis}",
                           xlabel=args.axis, ylabel=args.metric)
    return 0


# --- parser ---------------------------------------------------------------------------------

def _add_model_flags(sp, default_model="iid"):
    sp.add_argument("--model", choices=["iid", "inframe", "outframe", "signed", "bounded"],
                    default=default_model)
    sp.add_argument("--p", type=float, default=0.4, help="marginal Pr(D=1)")
    sp.add_argument("--q0", type=float, default=None, help="Pr(1|0)")
    sp.add_argument("--q1", type=float, default=None, help="Pr(0|1)")
    sp.add_argument("--alpha", type=float, default=None,
                    help="chain memory 1-q0-q1, used with --p when q0/q1 are unset")
    sp.add_argument("--q", type=float, default=None, help="second moment for bounded masks")
    sp.add_argument("--distribution", choices=["two_point", "uniform_scaled"], default="two_point")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="scimask", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", default=None, help="key = value file; flags override it")
        sp.add_argument("-v", "--verbose", action="store_true")
        sp.set_defaults(func=func)
        return sp

    sp = add("synth", cmd_synth, "write a synthetic video cube")
    sp.add_argument("--kind", choices=["moving_square", "moving_gaussian"], default="moving_square")
    sp.add_argument("--dims", type=parse_dims, default=(64, 64, 8))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("-o", "--output", required=True)

    sp = add("mask", cmd_mask, "sample a mask cube")
    _add_model_flags(sp)
    sp.add_argument("--dims", type=parse_dims, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", required=True)

    sp = add("forward", cmd_forward, "form the snapshot y = H x")
    sp.add_argument("--mask", required=True)
    sp.add_argument("--input", nargs="+", required=True, help="SCIT cube or one PGM per frame")
    sp.add_argument("--rho", type=float, default=None)
    sp.add_argument("--noise-sigma", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", required=True)

    sp = add("recover", cmd_recover, "projected gradient recovery from a snapshot")
    sp.add_argument("--mask", required=True)
    sp.add_argument("--measurement", required=True)
    sp.add_argument("--truth", default=None, help="ground-truth cube for error traces and PSNR")
    sp.add_argument("--projector", choices=["tv", "codebook"], default="tv")
    sp.add_argument("--mu", default="auto")
    sp.add_argument("--step", choices=["plain", "gap"], default="plain",
                    help="plain: s = x + mu H^T e; gap: residual divided by diag(H H^T)")
    sp.add_argument("--max-iter", type=int, default=60)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--tv-weight", type=float, default=None)
    sp.add_argument("--inner-iterations", type=int, default=10)
    sp.add_argument("--levels", type=int, default=2, help="quantizer levels for --projector codebook")
    sp.add_argument("--rho", type=float, default=None)
    sp.add_argument("--trace", default=None, help="CSV of iter,residual_l2,error_rms")
    sp.add_argument("-o", "--output", required=True)

    sp = add("bounds", cmd_bounds, "evaluate a recovery bound")
    sp.add_argument("--theorem", choices=["1", "2", "3", "c1", "c12", "c4", "c42", "pgd"], default="1")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--B", type=int, required=True)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--delta", type=float, default=0.01)
    sp.add_argument("--rho", dest="rho_bound", type=float, default=1.0)
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--kappa", type=float, default=1.0)
    sp.add_argument("--lambda-free", type=float, default=None)
    sp.add_argument("--p", type=float, default=0.4)
    sp.add_argument("--q0", type=float, default=None)
    sp.add_argument("--q1", type=float, default=None)
    sp.add_argument("--q", type=float, default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--convention", choices=["eta", "epsilon"], default="eta")
    sp.add_argument("--sweep-p", default=None, help="lo:hi:step")
    sp.add_argument("-o", "--output", default=None)

    sp = add("verify", cmd_verify, "Monte-Carlo and enumeration checks")
    sp.add_argument("check", choices=["concentration", "euj", "mean-estimator"])
    _add_model_flags(sp)
    sp.add_argument("--n", type=int, default=4096)
    sp.add_argument("--B", type=int, default=4)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--trials", type=int, default=2000)
    sp.add_argument("--trials-list", type=lambda s: [int(v) for v in s.split(",")], default=[100, 400])
    sp.add_argument("--columns", type=int, default=20)
    sp.add_argument("--epsilon", type=float, default=0.05)
    sp.add_argument("--dims", type=parse_dims, default=(64, 64, 8))
    sp.add_argument("--kind", default="moving_square")
    sp.add_argument("--video-seed", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", default=None)

    sp = add("sweep", cmd_sweep, "PSNR / bound / error-split sweeps")
    sp.add_argument("--axis", choices=["p", "q0q1_pair", "B", "alpha"], required=True)
    sp.add_argument("--grid", required=True, help="lo:hi:step, comma list, or q0:q1 pairs")
    sp.add_argument("--metric", choices=["psnr", "bound_value", "mse_split"], default="psnr")
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--model", choices=["iid", "inframe", "outframe"], default="iid")
    sp.add_argument("--p", type=float, default=0.4)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--dims", type=parse_dims, default=(64, 64, 8))
    sp.add_argument("--kind", choices=["moving_square", "moving_gaussian"], default="moving_square")
    sp.add_argument("--video-seed", type=int, default=0)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--tv-weight", type=float, default=None)
    sp.add_argument("--inner-iterations", type=int, default=10)
    sp.add_argument("--max-iter", type=int, default=60)
    sp.add_argument("--tol", type=float, default=0.0)
    sp.add_argument("--step", choices=["plain", "gap"], default="gap")
    sp.add_argument("--mu", default="auto")
    sp.add_argument("--theorem", choices=["1", "2", "c4"], default="1")
    sp.add_argument("--n", type=int, default=4096)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--delta", type=float, default=0.01)
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--plot", default=None, help="SVG output path")
    sp.add_argument("-o", "--output", default=None)
    return ap


def _scan_config(argv) -> tuple[str | None, str | None]:
    """Subcommand and ``--config`` path, found without running the full parser."""
    command = path = None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            path = next(it, None)
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
        elif command is None and not tok.startswith("-"):
            command = tok
    return command, path


def _apply_config(ap: argparse.ArgumentParser, argv) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    command, path = _scan_config(argv)
    subs = ap._subparsers._group_actions[0].choices if ap._subparsers else {}
    if path is not None and command in subs:
        sub = subs[command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for k, v in read_config(path).items():
            if k not in known or k in ("config", "help", "func"):
                raise UsageError(f"unknown config key {k!r}")
            act = known[k]
            try:
                defaults[k] = act.type(v) if act.type is not None else v
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"bad value for {k}: {exc}")
            if act.choices is not None and defaults[k] not in act.choices:
                raise UsageError(f"bad value for {k}: {v!r}")
            # a required flag may come from the file instead
            act.required = False
        sub.set_defaults(**defaults)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
        if args.command is None:
            ap.print_usage(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InapplicableTheoremError as exc:
        print(f"inapplicable: {exc}", file=sys.stderr)
        return EXIT_INAPPLICABLE
    except (FormatError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
