import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scimask.forward import SensingOperator, measure
from scimask.masks import IidBernoulli, MaskCube, sample_mask
from scimask.recovery import (Codebook, CodebookProjector, PgdConfig, TvProjector,
                              anisotropic_tv, build_quantizer_codebook, csp_exhaustive,
                              default_mu, monotone_until, pgd_recover, tv_denoise, tv_objective)
from scimask.rng import substream
from scimask.tensor import DataCube, devectorize, synth_video, vectorize


def test_default_mu():
    assert default_mu(0.5) == 4
    assert default_mu(0.4) == pytest.approx(1 / 0.24, rel=1e-15)
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            default_mu(bad)


def test_quantizer_two_levels():
    cb = build_quantizer_codebook(1, 1, 2, levels=2, rho=2.0)
    assert cb.points.tolist() == [-0.5, 0.5]
    assert cb.distortion_delta == 0.25
    assert cb.project(np.array([-1.0, -1e-9])).tolist() == [-0.5, -0.5]
    assert cb.project(np.array([0.0, 1.0])).tolist() == [0.5, 0.5]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2**32 - 1))
def test_quantizer_idempotent_and_nearest(levels, seed):
    cb = build_quantizer_codebook(2, 2, 2, levels=levels, rho=1.0)
    s = substream(seed, "q").uniform(-0.7, 0.7, size=8)
    q = cb.project(s)
    assert np.array_equal(cb.project(q), q)
    assert cb.contains(q)
    # coordinatewise nearest point, within the distortion budget inside the range
    inside = np.abs(s) <= 0.5
    assert np.all((q[inside] - s[inside]) ** 2 <= cb.distortion_delta + 1e-15)
    assert cb.index_of(q) < cb.size
    assert np.array_equal(cb.codeword(cb.index_of(q)), q)


def test_quantizer_codewords_order():
    cb = build_quantizer_codebook(1, 1, 2, levels=3, rho=1.0)
    words = cb.codewords
    assert len(words) == 9
    for k in range(9):
        assert np.array_equal(words[k], cb.codeword(k))
    assert cb.rate_r == pytest.approx(np.log2(3))


def test_codebook_checks():
    with pytest.raises(ValueError):
        Codebook(np.zeros((0, 4)), B=2, rho=1.0)
    with pytest.raises(ValueError):
        Codebook(np.ones((1, 4)), B=2, rho=1.0)
    cb = Codebook(np.array([[0.1, 0.2], [0.3, -0.1]]), B=2, rho=1.0)
    assert cb.rate_r == 0.5 and len(cb) == 2


def _toy(seed, n1=2, n2=2, B=2, levels=2, p=0.4):
    cb = build_quantizer_codebook(n1, n2, B, levels=levels)
    x = cb.codeword(int(substream(seed, "word").integers(cb.size)))
    op = SensingOperator(sample_mask(IidBernoulli(p), n1, n2, B, seed))
    return cb, x, op


def test_csp_recovers_truth_between_two_words():
    _, x, op = _toy(3)
    corrupted = x.copy()
    corrupted[0] = -corrupted[0]
    words = np.vstack([corrupted, x])
    c, obj = csp_exhaustive(op.apply(x), op, Codebook(words, B=2, rho=1.0))
    assert obj == 0 and np.array_equal(c, x)


def test_csp_single_word():
    _, x, op = _toy(4)
    w = np.full_like(x, 0.25)
    c, _ = csp_exhaustive(op.apply(x), op, Codebook(w[None, :], B=2, rho=1.0))
    assert np.array_equal(c, w)


@pytest.mark.parametrize("seed", range(8))
def test_csp_separable_matches_full_enumeration(seed):
    cb, x, op = _toy(seed, n1=2, n2=1, B=2, levels=3)
    y = op.apply(x) + substream(seed, "noise").normal(0, 0.05, op.n)
    c_fast, o_fast = csp_exhaustive(y, op, cb)
    c_full, o_full = csp_exhaustive(y, op, cb.to_explicit())
    assert np.array_equal(c_fast, c_full)
    assert o_fast == pytest.approx(o_full, rel=1e-12, abs=1e-15)
    objs = [float(np.sum((y - op.apply(w)) ** 2)) for w in cb.codewords]
    assert o_full <= min(objs) + 1e-15


def test_csp_guard():
    cb = build_quantizer_codebook(1, 1, 21, levels=2)
    with pytest.raises(ValueError):
        csp_exhaustive(np.zeros(1), SensingOperator(MaskCube(np.ones((1, 1, 21)))), cb)
    with pytest.raises(ValueError):
        cb.codewords


def test_tv_denoise_small_weight_is_identity():
    s = substream(0, "tv").uniform(-0.5, 0.5, size=(8, 8, 2))
    assert np.allclose(tv_denoise(s, 1e-12, 20), s, atol=1e-8)


def test_tv_denoise_constant_frame_fixed():
    s = np.full((8, 8, 2), 0.3)
    assert np.allclose(tv_denoise(s, 0.2, 20), s, atol=1e-14)


@pytest.mark.parametrize("seed", range(50))
def test_tv_denoise_decreases_objective(seed):
    rng = substream(seed, "tvobj")
    s = rng.uniform(-0.5, 0.5, size=(8, 8, 2))
    w = float(rng.uniform(0.01, 0.3))
    u = tv_denoise(s, w, 10)
    assert tv_objective(u, s, w) <= tv_objective(s, s, w) + 1e-12
    assert anisotropic_tv(u) <= anisotropic_tv(s) + 1e-12


def test_tv_denoise_clamps_cube():
    cube = DataCube(np.full((4, 4, 1), 0.5), rho=1.0)
    out = tv_denoise(cube, 0.1)
    assert isinstance(out, DataCube) and np.max(np.abs(out.array)) <= 0.5
    with pytest.raises(ValueError):
        tv_denoise(cube.array, -1.0)


def test_pgd_zero_measurement_fixed_point():
    op = SensingOperator(sample_mask(IidBernoulli(0.4), 8, 8, 4, seed=1))
    res = pgd_recover(np.zeros(64), op, TvProjector(0.05), PgdConfig(mu=1.0, max_iter=5, tol=0.0))
    assert not np.any(res.x_hat.array)
    # zero residual change stops the loop after the first iteration
    assert res.residual_trace == [0.0] and res.iterations_run == 1


def test_pgd_dim_mismatch():
    op = SensingOperator(sample_mask(IidBernoulli(0.4), 8, 8, 4, seed=1))
    with pytest.raises(ValueError):
        pgd_recover(np.zeros(10), op, TvProjector(0.05), PgdConfig(mu=1.0))


def test_pgd_tol_stops_early():
    op = SensingOperator(sample_mask(IidBernoulli(0.4), 8, 8, 4, seed=1))
    res = pgd_recover(np.zeros(64), op, TvProjector(0.05), PgdConfig(mu=1.0, max_iter=50, tol=0.5))
    assert res.iterations_run == 1


def test_pgd_gap_step_recovers_video():
    x = synth_video("moving_square", 32, 32, 4, seed=2)
    op = SensingOperator(sample_mask(IidBernoulli(0.5), 32, 32, 4, seed=2))
    res = pgd_recover(measure(op, x), op, TvProjector(0.015), PgdConfig(mu=1.0, max_iter=40, tol=0.0,
                                                                            normalize=True),
                      ground_truth=x)
    assert len(res.error_trace) == res.iterations_run == 40
    assert res.error_trace[-1] < 0.5 * res.error_trace[0]
    assert res.residual_trace[-1] < res.residual_trace[0]


def test_pgd_codebook_iterates_stay_in_codebook():
    cb, x, op = _toy(5, n1=4, n2=4, B=2, levels=2)
    res = pgd_recover(op.apply(x), op, CodebookProjector(cb), PgdConfig.for_p(0.4, max_iter=10, tol=0.0),
                      ground_truth=devectorize(x, 4, 4, 2, rho=1.0))
    assert cb.contains(vectorize(res.x_hat))


def test_monotone_until():
    assert monotone_until([5, 4, 3, 2], 0.0)
    assert not monotone_until([5, 4, 6, 2], 0.0)
    assert monotone_until([5, 1, 3, 2], 1.5)


class _Recorder:
    def __init__(self, inner):
        self.inner, self.calls = inner, []

    def __call__(self, s, dims):
        out = self.inner(s, dims)
        self.calls.append((s.copy(), out.copy()))
        return out


def test_gradient_step_identity_is_exact():
    op = SensingOperator(sample_mask(IidBernoulli(0.4), 8, 8, 3, seed=2))
    x = synth_video("moving_square", 8, 8, 3, seed=2)
    y = op.apply(vectorize(x))
    rec = _Recorder(TvProjector(0.02))
    cfg = PgdConfig.for_p(0.4, max_iter=4, tol=0.0)
    pgd_recover(y, op, rec, cfg)
    prev = np.zeros(op.shape[1])
    for s, out in rec.calls:
        assert np.array_equal(s, prev + cfg.mu * op.adjoint(y - op.apply(prev)))
        assert np.max(np.abs(out)) <= 0.5
        prev = out


@pytest.mark.parametrize("seed", range(10))
def test_codebook_projection_is_nearest_word(seed):
    cb = build_quantizer_codebook(2, 1, 2, levels=3)
    s = substream(seed, "proj").uniform(-0.8, 0.8, size=4)
    words = cb.codewords
    d2 = ((words - s) ** 2).sum(axis=1)
    assert np.array_equal(cb.project(s), words[int(np.argmin(d2))])
    assert np.array_equal(cb.to_explicit().project(s), cb.project(s))


def test_codebook_pgd_residual_reaches_distortion_scale():
    # noise-free codeword instances: residual <= sqrt(n B delta) within 50 iterations
    n1, n2, B, p = 4, 4, 2, 0.4
    cb = build_quantizer_codebook(n1, n2, B, levels=2)
    target = np.sqrt(n1 * n2 * B * cb.distortion_delta)
    hits = 0
    for k in range(200):
        x = cb.codeword(int(substream(k, "word").integers(cb.size)))
        op = SensingOperator(sample_mask(IidBernoulli(p), n1, n2, B, k))
        res = pgd_recover(op.apply(x), op, CodebookProjector(cb), PgdConfig.for_p(p, max_iter=50, tol=0.0))
        hits += min(res.residual_trace) <= target
    assert hits >= 180
