import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from markerperm.core import DimensionError, DomainError, Permutation, permutation_to_matrix
from markerperm.sinkhorn import (SinkhornConfig, dsm_residual, sinkhorn, sinkhorn_backward,
                                 sinkhorn_forward)


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_examples():
    np.testing.assert_array_equal(sinkhorn(np.eye(4)), np.eye(4))
    np.testing.assert_allclose(sinkhorn(np.ones((2, 2))), np.full((2, 2), 0.5), atol=0, rtol=0)
    one = sinkhorn(np.array([[2.0, 1.0], [1.0, 2.0]]), SinkhornConfig(iterations=1))
    np.testing.assert_allclose(one, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], rtol=1e-15)


def test_permutation_matrices_are_exact_fixed_points(rng):
    for n in (1, 2, 5, 41):
        for _ in range(20):
            p = permutation_to_matrix(Permutation.random(n, rng))
            assert np.array_equal(sinkhorn(p, SinkhornConfig(iterations=1)), p)


def test_final_step_is_row_normalization(rng):
    d = sinkhorn(rng.uniform(0.01, 0.99, (6, 6)))
    np.testing.assert_allclose(d.sum(axis=1), 1.0, atol=1e-15)


def test_residual_examples():
    assert dsm_residual(np.eye(3)) == 0.0
    assert dsm_residual(np.full((2, 2), 0.5)) == 0.0
    # four sums each off by one: 1 + 1 + 1 + 1
    assert dsm_residual(np.ones((2, 2))) == 4.0
    r = dsm_residual(np.stack([np.eye(2), np.ones((2, 2))]))
    np.testing.assert_array_equal(r, [0.0, 4.0])


def test_residual_monotone_and_small(rng):
    trace = []
    m = rng.uniform(0.01, 0.99, (50, 41, 41))
    d, _ = sinkhorn_forward(m, SinkhornConfig(), trace=trace)
    assert len(trace) == 5
    steps = np.array(trace)
    assert (np.diff(steps, axis=0) <= 0).all()
    assert (steps[-1] < 1e-8).all()
    assert ((d > 0) & (d < 1)).all()


def test_batch_matches_single(rng):
    m = rng.uniform(0.01, 0.99, (4, 5, 5))
    batch = sinkhorn(m)
    for k in range(4):
        np.testing.assert_array_equal(batch[k], sinkhorn(m[k]))


def test_float32_preserved(rng):
    m = rng.uniform(0.01, 0.99, (5, 5)).astype(np.float32)
    assert sinkhorn(m).dtype == np.float32
    assert sinkhorn(m.astype(int) + 1).dtype == np.float64


def test_domain_and_shape_errors():
    with pytest.raises(DomainError):
        sinkhorn(np.array([[1.0, -0.1], [0.2, 0.3]]))
    with pytest.raises(DomainError):
        sinkhorn(np.array([[1.0, np.nan], [0.2, 0.3]]))
    with pytest.raises(DimensionError):
        sinkhorn(np.ones((2, 3)))
    _, tape = sinkhorn_forward(np.ones((3, 3)))
    with pytest.raises(DimensionError):
        sinkhorn_backward(tape, np.ones((2, 2)))
    with pytest.raises(ValueError):
        SinkhornConfig(iterations=0)


def test_zero_column_is_guarded():
    m = np.array([[0.0, 0.5], [0.0, 0.5]])
    d = sinkhorn(m)
    assert np.isfinite(d).all()
    np.testing.assert_array_equal(d[:, 0], 0.0)


def test_backward_zero_upstream(rng):
    _, tape = sinkhorn_forward(rng.uniform(0.1, 0.9, (4, 4)))
    np.testing.assert_array_equal(sinkhorn_backward(tape, np.zeros((4, 4))), 0.0)


def test_backward_matches_finite_differences_3x3(rng):
    m = rng.uniform(0.1, 0.9, (3, 3))
    w = rng.normal(size=(3, 3))
    _, tape = sinkhorn_forward(m)
    g = sinkhorn_backward(tape, w)
    num = fd_grad(lambda x: float((sinkhorn(x) * w).sum()), m)
    np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-9)


def test_backward_matches_finite_differences_5x5(rng):
    for _ in range(20):
        m = rng.uniform(0.05, 0.95, (5, 5))
        w = rng.normal(size=(5, 5))
        _, tape = sinkhorn_forward(m)
        g = sinkhorn_backward(tape, w)
        num = fd_grad(lambda x: float((sinkhorn(x) * w).sum()), m)
        np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-9)


def test_scale_homogeneity_gradient_orthogonal(rng):
    # output is invariant to m -> k m, so the directional derivative along m vanishes
    m = rng.uniform(0.1, 0.9, (4, 4))
    w = rng.normal(size=(4, 4))
    np.testing.assert_allclose(sinkhorn(3.7 * m), sinkhorn(m), rtol=1e-13)
    _, tape = sinkhorn_forward(m)
    g = sinkhorn_backward(tape, w)
    assert abs((g * m).sum()) < 1e-12 * np.abs(g).sum()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_property_row_stochastic_and_monotone(n, seed):
    m = np.random.default_rng(seed).uniform(0.01, 0.99, (n, n))
    trace = []
    d, _ = sinkhorn_forward(m, SinkhornConfig(iterations=8), trace=trace)
    assert ((d > 0) & (d < 1 + 1e-15)).all()
    np.testing.assert_allclose(d.sum(axis=1), 1.0, atol=1e-14)
    assert all(b <= a for a, b in zip(trace, trace[1:]))
