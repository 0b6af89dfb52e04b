import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scimask.forward import SensingOperator, add_noise, build_explicit_H, measure
from scimask.masks import IidBernoulli, MaskCube, SignedIid, sample_mask
from scimask.rng import substream
from scimask.tensor import DataCube, vectorize


def test_all_ones_sums_frames():
    op = SensingOperator(MaskCube(np.ones((1, 2, 2))))
    assert op.apply(np.array([1.0, 2.0, 3.0, 4.0])).tolist() == [4, 6]


def test_all_zeros_gives_zero():
    op = SensingOperator(MaskCube(np.zeros((3, 3, 2))))
    assert not np.any(op.apply(np.ones(18)))


def test_adjoint_all_ones():
    op = SensingOperator(MaskCube(np.ones((1, 2, 2))))
    assert op.adjoint(np.array([1.0, 1.0])).tolist() == [1, 1, 1, 1]


def test_explicit_H_small():
    m = MaskCube(np.array([[[0.3, 0.7]]]))
    assert np.array_equal(build_explicit_H(m), [[0.3, 0.7]])


def test_explicit_H_structure():
    n1, n2, B = 2, 3, 3
    H = build_explicit_H(MaskCube(np.ones((n1, n2, B))))
    n = n1 * n2
    for j in range(n):
        assert np.flatnonzero(H[j]).tolist() == [j + n * i for i in range(B)]


@pytest.mark.parametrize("dims", [(3, 3, 2), (4, 4, 3)])
def test_apply_and_adjoint_match_explicit(dims):
    m = sample_mask(IidBernoulli(0.5), *dims, seed=4)
    op = SensingOperator(m)
    H = build_explicit_H(m)
    rng = substream(0, "fwd")
    x = rng.uniform(-0.5, 0.5, size=op.shape[1])
    e = rng.normal(size=op.n)
    assert np.allclose(op.apply(x), H @ x, rtol=0, atol=1e-14)
    assert np.allclose(op.adjoint(e), H.T @ e, rtol=0, atol=1e-14)
    assert np.allclose(op.row_sums(), np.diag(H @ H.T), rtol=0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1),
       st.booleans())
def test_adjoint_identity_property(n1, n2, B, seed, signed):
    model = SignedIid(0.5) if signed else IidBernoulli(0.4)
    op = SensingOperator(sample_mask(model, n1, n2, B, seed))
    rng = substream(seed, "adj")
    x = rng.normal(size=op.shape[1])
    e = rng.normal(size=op.n)
    lhs, rhs = op.apply(x) @ e, x @ op.adjoint(e)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_measure_accepts_cube_and_checks_length():
    m = sample_mask(IidBernoulli(0.4), 4, 4, 2, seed=1)
    op = SensingOperator(m)
    x = DataCube(substream(1, "x").uniform(-0.5, 0.5, size=(4, 4, 2)))
    meas = measure(op, x)
    assert meas.frame.array.shape == (4, 4)
    assert np.allclose(meas.y, op.apply(vectorize(x)))
    with pytest.raises(ValueError):
        op.apply(np.zeros(5))
    with pytest.raises(ValueError):
        op.adjoint(np.zeros(5))


def test_noise():
    op = SensingOperator(MaskCube(np.ones((200, 500, 1))))
    meas = measure(op, np.zeros(100_000))
    assert add_noise(meas, 0.0, seed=1) is meas
    a = add_noise(meas, 0.2, seed=1)
    b = add_noise(meas, 0.2, seed=1)
    assert np.array_equal(a.y, b.y)
    std = a.y.std()
    assert abs(std - 0.2) <= 3 * 0.2 / np.sqrt(2e5)
    with pytest.raises(ValueError):
        add_noise(meas, -1.0, seed=1)


def test_explicit_guard():
    with pytest.raises(ValueError):
        build_explicit_H(MaskCube(np.ones((128, 128, 1))))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_apply_linear_and_bounded(seed, a, b):
    op = SensingOperator(sample_mask(IidBernoulli(0.5), 5, 4, 3, seed))
    rng = substream(seed, "lin")
    x, x2 = rng.uniform(-0.5, 0.5, size=(2, op.shape[1]))
    lhs = op.apply(a * x + b * x2)
    rhs = a * op.apply(x) + b * op.apply(x2)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
    assert np.max(np.abs(op.apply(x))) <= op.B * 0.5
