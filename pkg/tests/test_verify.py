import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scimask.masks import BoundedIid, IidBernoulli, InFrameMarkov, OutFrameMarkov, SignedIid
from scimask.rng import substream
from scimask.tensor import DataCube, synth_video
from scimask.verify import (bruteforce_EUj, expected_Uj, expected_Uj_iid, expected_Uj_outframe,
                            mc_concentration, mean_estimator_check, random_mu_field, tail_bound,
                            write_mc_csv)


def test_expected_iid_examples():
    assert expected_Uj_iid([1, 1], 0.5) == 1.5
    assert expected_Uj_iid([0, 0, 0], 0.3) == 0
    assert expected_Uj_iid([0.2, -0.5, 0.7], 1.0) == pytest.approx(0.4 ** 2, rel=1e-15)


def test_expected_outframe_examples():
    mu = substream(0, "mu").uniform(-1, 1, 4)
    assert expected_Uj_outframe(mu, 0.4, 0.0) == pytest.approx(expected_Uj_iid(mu, 0.4), rel=1e-14)
    assert expected_Uj_outframe([1, -1], 0.5, 0.5) == pytest.approx(0.25, rel=1e-15)
    # the same number by enumerating the symmetric chain q0 = q1 = 0.25
    assert bruteforce_EUj([1, -1], OutFrameMarkov(0.25, 0.25)) == pytest.approx(0.25, rel=1e-14)


def test_bruteforce_examples():
    assert bruteforce_EUj([1, 1], IidBernoulli(0.5)) == 1.5
    mu = [0.3, -0.2, 0.9]
    assert bruteforce_EUj(mu, OutFrameMarkov(0.5, 0.5)) == pytest.approx(
        bruteforce_EUj(mu, IidBernoulli(0.5)), rel=1e-14)
    assert bruteforce_EUj([1, 1], SignedIid(0.5)) == pytest.approx(2.0, rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=5), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_closed_forms_match_enumeration(mu, q0, q1):
    mu = np.array(mu)
    scale = max(1.0, float(np.sum(np.abs(mu))) ** 2)
    for model in (IidBernoulli(q0), OutFrameMarkov(q0, q1), InFrameMarkov(q0, q1), SignedIid(q0)):
        assert abs(expected_Uj(mu, model) - bruteforce_EUj(mu, model)) <= 1e-12 * scale
    p = q0
    model = BoundedIid(p, p * p + (p - p * p) * q1)
    assert abs(expected_Uj(mu, model) - bruteforce_EUj(mu, model)) <= 1e-12 * scale


def test_tail_bound_shapes():
    assert tail_bound(IidBernoulli(0.4), 4096, 4, 0.05) == pytest.approx(
        math.exp(-2 * 4096 * 0.05 ** 2 / 16), rel=1e-14)
    # independent columns (theta1 = 0) beat a sticky chain
    assert tail_bound(InFrameMarkov(0.4, 0.6), 4096, 4, 0.1) < tail_bound(InFrameMarkov(0.1, 0.1), 4096, 4, 0.1)


def test_mc_concentration_deterministic_and_passes():
    mu = random_mu_field(1024, 4, seed=3)
    a = mc_concentration(IidBernoulli(0.4), mu, 1024, 200, 0.2, seed=3)
    b = mc_concentration(IidBernoulli(0.4), mu, 1024, 200, 0.2, seed=3)
    assert a == b
    assert a.passed and a.mean_ok and a.tail_ok


def test_mc_tight_bound_means_rare_tail():
    mu = random_mu_field(2048, 4, seed=4)
    rep = mc_concentration(IidBernoulli(0.4), mu, 2048, 300, 0.15, seed=4)
    assert rep.bound_tail_prob < 0.01
    assert rep.empirical_tail_prob < 0.02 and not rep.vacuous


def test_mc_tiny_epsilon_gives_near_trivial_bound():
    mu = random_mu_field(64, 4, seed=5)
    rep = mc_concentration(IidBernoulli(0.4), mu, 64, 50, 0.01, seed=5)
    # one-sided Hoeffding never reaches 1 exactly, so the flag stays off
    assert rep.bound_tail_prob > 0.99 and not rep.vacuous and rep.tail_ok


def test_mean_estimator_constant_and_exact():
    x = DataCube(np.full((8, 8, 4), 0.3))
    rep = mean_estimator_check(x, IidBernoulli(0.4), 400, seed=1)
    assert rep.rms_error < 0.05 and rep.passed
    x = synth_video("moving_square", 16, 16, 4, seed=1)
    rep = mean_estimator_check(x, 1.0, 0, seed=1)
    assert rep.rms_error <= 1e-12 and rep.passed


def test_mean_estimator_outframe_prediction():
    x = synth_video("moving_square", 16, 16, 8, seed=2)
    rep = mean_estimator_check(x, OutFrameMarkov(0.2, 0.3), 200, seed=2)
    assert rep.passed
    with pytest.raises(ValueError):
        mean_estimator_check(x, SignedIid(0.5), 10, seed=2)


def test_write_mc_csv(tmp_path):
    mu = random_mu_field(256, 2, seed=6)
    rep = mc_concentration(IidBernoulli(0.4), mu, 256, 20, 0.3, seed=6)
    path = tmp_path / "mc.csv"
    write_mc_csv(path, [rep], header_lines=["seed=6"])
    write_mc_csv(path, [rep])
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=6"
    assert lines[1].startswith("model,params,n,B,epsilon")
    assert len(lines) == 4
