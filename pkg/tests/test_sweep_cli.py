import csv
import math

import numpy as np
import pytest

from scimask.bounds import BoundParams
from scimask.cli import main
from scimask.masks import load_mask
from scimask.sweep import SweepSpec, emit_svg_linechart, markov_pair_for, run_sweep, write_sweep_csv
from scimask.tensor import load_tensor

SMALL = dict(dims=(16, 16, 4), trials=2, max_iter=10, base_seed=5)


# --- sweeps -------------------------------------------------------------------------

def test_markov_pair_for():
    q0, q1 = markov_pair_for(0.4, 0.0)
    assert (q0, q1) == (pytest.approx(0.4), pytest.approx(0.6))
    q0, q1 = markov_pair_for(0.4, 0.5)
    assert q0 / (q0 + q1) == pytest.approx(0.4) and 1 - q0 - q1 == pytest.approx(0.5)


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(axis="nope", grid=(0.1,))
    with pytest.raises(ValueError):
        SweepSpec(axis="p", grid=())
    assert SweepSpec(axis="p", grid=(0.5, 0.2)).grid == (0.2, 0.5)


def test_sweep_worker_count_does_not_change_results():
    spec = SweepSpec(axis="p", grid=(0.3, 0.5), **SMALL)
    a = run_sweep(spec, workers=1)
    b = run_sweep(spec, workers=2)
    assert np.array_equal(a.column("mean"), b.column("mean"))
    assert a.seeds == b.seeds


def test_sweep_mse_split_columns():
    res = run_sweep(SweepSpec(axis="p", grid=(0.4,), metric="mse_split", **SMALL))
    row = res.rows[0]
    assert {"e_term", "ebar_term"} <= set(row.extra)
    assert row.extra["e_term"] > 0 and row.extra["ebar_term"] > 0


def test_sweep_bound_metric_matches_thm1():
    from scimask.bounds import thm1_bound
    bp = BoundParams(n=4096, B=8)
    res = run_sweep(SweepSpec(axis="p", grid=(0.3, 0.4), metric="bound_value", bound=bp, trials=1))
    assert res.column("mean")[1] == pytest.approx(thm1_bound(0.4, bp).bound_value, rel=1e-15)


def test_sweep_csv(tmp_path):
    res = run_sweep(SweepSpec(axis="p", grid=(0.3, 0.5), **SMALL))
    path = write_sweep_csv(tmp_path / "s.csv", res, {"tool": "test"})
    lines = path.read_text().splitlines()
    assert "# tool=test" in lines
    assert any(line.startswith("# seeds[") for line in lines)
    body = [l for l in lines if not l.startswith("#")]
    assert body[0].split(",")[:5] == ["axis", "value", "mean", "std", "trials"]
    assert len(body) == 3


def test_svg_single_series():
    svg = emit_svg_linechart([[(k / 10, k * k) for k in range(1, 10)]], ["psnr"])
    assert svg.count("<polyline") == 1
    pts = svg.split('points="')[1].split('"')[0].split()
    assert len(pts) == 9


def test_svg_legend_and_determinism(tmp_path):
    s = [[(1, 2), (2, 3)], [(1, 1), (2, 5)]]
    a = emit_svg_linechart(s, ["a", "b"], tmp_path / "a.svg")
    b = emit_svg_linechart(s, ["a", "b"], tmp_path / "b.svg")
    assert a.count('class="legend"') == 2
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    with pytest.raises(ValueError):
        emit_svg_linechart([], [])
    with pytest.raises(ValueError):
        emit_svg_linechart(s, ["only one"])


# --- CLI ------------------------------------------------------------------------------

def test_cli_pipeline(tmp_path, capsys):
    d = tmp_path
    assert main(["synth", "--dims", "16x16x4", "--seed", "1", "-o", str(d / "x.scit")]) == 0
    assert main(["mask", "--model", "iid", "--p", "0.4", "--dims", "16x16x4", "--seed", "7",
                 "-o", str(d / "m.scit")]) == 0
    assert (d / "m.meta").exists()
    assert load_mask(d / "m.scit").values.shape == (16, 16, 4)
    assert main(["forward", "--mask", str(d / "m.scit"), "--input", str(d / "x.scit"),
                 "-o", str(d / "y.scit")]) == 0
    rc = main(["recover", "--mask", str(d / "m.scit"), "--measurement", str(d / "y.scit"),
               "--truth", str(d / "x.scit"), "--step", "gap", "--max-iter", "20",
               "--trace", str(d / "trace.csv"), "-o", str(d / "xh.scit")])
    assert rc == 0
    xh = load_tensor(d / "xh.scit", rho=1.0)
    assert xh.shape == (16, 16, 4)
    rows = list(csv.reader(l for l in (d / "trace.csv").read_text().splitlines() if not l.startswith("#")))
    assert rows[0] == ["iter", "residual_l2", "error_rms"] and len(rows) == 21


def test_cli_mask_example(tmp_path):
    assert main(["mask", "--model", "iid", "--p", "0.4", "--dims", "32x32x8", "--seed", "7",
                 "-o", str(tmp_path / "m.scit")]) == 0
    assert (tmp_path / "m.scit").exists() and (tmp_path / "m.meta").exists()


def test_cli_bounds_sweep(tmp_path):
    out = tmp_path / "b.csv"
    rc = main(["bounds", "--theorem", "1", "--n", "65536", "--B", "8", "--r", "1", "--delta", "0.01",
               "--rho", "1", "--eta", "1", "--sweep-p", "0.05:0.95:0.05", "-o", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    rows = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    assert len(rows) == 19
    flagged = [r for r in rows if r["argmin"] == "1"]
    assert len(flagged) == 1 and float(flagged[0]["p"]) < 0.5
    assert any(l.startswith("# p_star=") for l in lines)


def test_cli_recover_dim_mismatch_exit_2(tmp_path):
    d = tmp_path
    main(["mask", "--dims", "8x8x4", "-o", str(d / "m.scit")])
    main(["mask", "--dims", "16x16x4", "-o", str(d / "m2.scit")])
    main(["synth", "--dims", "16x16x4", "-o", str(d / "x.scit")])
    main(["forward", "--mask", str(d / "m2.scit"), "--input", str(d / "x.scit"), "-o", str(d / "y.scit")])
    assert main(["recover", "--projector", "tv", "--mu", "auto", "--mask", str(d / "m.scit"),
                 "--measurement", str(d / "y.scit"), "-o", str(d / "out.scit")]) == 2


def test_cli_usage_errors():
    assert main([]) == 1
    assert main(["bounds", "--n", "100"]) == 1
    assert main(["mask", "--dims", "8x8", "-o", "x"]) == 1
    assert main(["mask", "--model", "iid", "--p", "1.5", "--dims", "8x8x2", "-o", "x"]) == 1


def test_cli_missing_file_exit_2(tmp_path):
    assert main(["forward", "--mask", str(tmp_path / "none.scit"), "--input", str(tmp_path / "x.scit"),
                 "-o", str(tmp_path / "y.scit")]) == 2


def test_cli_inapplicable_exit_3():
    assert main(["bounds", "--theorem", "c4", "--n", "4096", "--B", "8", "--alpha", "0.4",
                 "--epsilon", "0.05"]) == 3
    assert main(["bounds", "--theorem", "3", "--n", "4096", "--B", "8", "--q0", "0.4", "--q1", "0.6",
                 "--epsilon", "0.05"]) == 3


def test_cli_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# bounds settings\nn = 65536\nB = 8\ntheorem = 1\ndelta = 0.01\n")
    assert main(["bounds", "--config", str(cfg), "--p", "0.4"]) == 0
    out = capsys.readouterr().out
    assert "0.6157605" in out
    cfg.write_text("bogus_key = 3\n")
    assert main(["bounds", "--config", str(cfg), "--n", "10", "--B", "2"]) == 1


def test_cli_sweep_writes_csv_and_svg(tmp_path):
    rc = main(["sweep", "--axis", "p", "--grid", "0.3,0.5", "--dims", "16x16x4", "--trials", "1",
               "--max-iter", "5", "-o", str(tmp_path / "s.csv"), "--plot", str(tmp_path / "s.svg")])
    assert rc == 0
    assert (tmp_path / "s.svg").read_text().count("<polyline") == 1
    assert "axis,value,mean" in (tmp_path / "s.csv").read_text()


def test_cli_verify_euj(tmp_path):
    assert main(["verify", "euj", "--B", "3", "--columns", "5", "--seed", "1"]) == 0
