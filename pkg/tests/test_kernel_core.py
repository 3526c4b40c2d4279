import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dppens.errors import DataError, PositiveDefinitenessError
from dppens.kernel_core import (
    ElemSymTable,
    KernelSpec,
    alpha_for_effective_dimension,
    cross_kernel,
    eigendecompose,
    elem_sym,
    elem_sym_loo,
    expected_dpp_size,
    gram,
    loo_ratio,
    marginal_kernel,
    ridge_leverage_scores,
)

from conftest import random_pd


def brute_esym(lam, r):
    return math.fsum(math.prod(c) for c in itertools.combinations(lam, r))


# -- kernels ------------------------------------------------------------------

def test_single_point_gram():
    assert gram(np.array([[0.3, -2.0]]), KernelSpec("gaussian", 0.7)).tolist() == [[1.0]]


def test_identical_points_give_ones():
    k = gram(np.ones((2, 3)), KernelSpec("laplace", 2.0))
    np.testing.assert_array_equal(k, np.ones((2, 2)))


def test_gaussian_hand_value():
    k = gram(np.array([[0.0], [2.0]]), KernelSpec("gaussian", math.sqrt(2.0)))
    assert k[0, 1] == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert k[0, 1] == pytest.approx(0.3679, abs=1e-4)


def test_laplace_hand_value():
    k = gram(np.array([[0.0, 0.0], [3.0, 4.0]]), KernelSpec("laplace", 2.5))
    assert k[0, 1] == pytest.approx(math.exp(-2.0), rel=1e-15)


@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 4)),
              elements=st.floats(-50, 50)),
       st.sampled_from(["gaussian", "laplace"]), st.floats(0.1, 10))
def test_gram_exactly_symmetric_unit_diagonal(x, family, sigma):
    k = gram(x, KernelSpec(family, sigma))
    assert np.array_equal(k, k.T)
    assert np.all(np.diag(k) == 1.0)
    assert not k.flags.writeable


def test_cross_kernel_matches_gram(rng):
    x = rng.standard_normal((7, 3))
    spec = KernelSpec("gaussian", 1.3)
    np.testing.assert_allclose(cross_kernel(x, x, spec), gram(x, spec), atol=1e-15)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_nonfinite_points_rejected(bad):
    x = np.zeros((3, 2))
    x[1, 1] = bad
    with pytest.raises(DataError):
        gram(x, KernelSpec())


@pytest.mark.parametrize("family,bw", [("cosine", 1.0), ("gaussian", 0.0), ("laplace", -1.0),
                                       ("gaussian", float("nan"))])
def test_kernel_spec_validation(family, bw):
    with pytest.raises(ValueError):
        KernelSpec(family, bw)


# -- spectra ------------------------------------------------------------------

def test_identity_spectrum():
    s = eigendecompose(np.eye(3))
    np.testing.assert_allclose(s.eigenvalues, [1, 1, 1])
    np.testing.assert_allclose(s.eigenvectors.T @ s.eigenvectors, np.eye(3), atol=1e-14)


def test_two_by_two_spectrum():
    s = eigendecompose(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(s.eigenvalues, [3.0, 1.0], rtol=1e-14)


def test_reconstruction_n50(rng):
    k = random_pd(50, rng)
    s = eigendecompose(k)
    assert np.linalg.norm(k - s.reconstruct()) / np.linalg.norm(k) <= 1e-10
    assert np.abs(s.eigenvectors.T @ s.eigenvectors - np.eye(50)).max() <= 1e-10
    assert np.all(np.diff(s.eigenvalues) <= 0)
    assert s.eigenvalues[-1] > 0


def test_pd_gate_reports_lambda_min():
    k = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(PositiveDefinitenessError) as info:
        eigendecompose(k)
    assert abs(info.value.lambda_min) < 1e-15
    assert info.value.tolerance == pytest.approx(2e-12)
    s = eigendecompose(k, jitter=1e-6)
    assert s.eigenvalues[-1] == pytest.approx(1e-6, rel=1e-6)


def test_psd_mode_clips_negative_roundoff():
    k = np.array([[1.0, 1.0], [1.0, 1.0]])
    s = eigendecompose(k, require_pd=False)
    assert s.eigenvalues[-1] == 0.0


# -- elementary symmetric polynomials ---------------------------------------------

@pytest.mark.parametrize("lam,r,expected", [
    ((2, 1), 1, 3.0),
    ((2, 1), 2, 2.0),
    ((1, 2, 3), 2, 11.0),
    ((1, 2, 3), 0, 1.0),
    ((1, 2, 3), 3, 6.0),
])
def test_elem_sym_examples(lam, r, expected):
    assert elem_sym(np.array(lam, dtype=float)).e(r) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("exclude,r,expected", [(2, 2, 2.0), (0, 1, 5.0), (1, 0, 1.0), (0, 2, 6.0)])
def test_loo_examples(exclude, r, expected):
    t = elem_sym(np.array([1.0, 2.0, 3.0]))
    assert elem_sym_loo(t, exclude, r) == pytest.approx(expected, rel=1e-15)


def test_negative_input_rejected():
    with pytest.raises(ValueError):
        elem_sym(np.array([1.0, -0.5]))


def test_loo_degree_out_of_range():
    t = elem_sym(np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        elem_sym_loo(t, 0, 3)
    with pytest.raises(IndexError):
        elem_sym_loo(t, 3, 1)


@given(arrays(np.float64, st.integers(1, 9), elements=st.floats(0, 100)))
def test_table_matches_enumeration(lam):
    t = elem_sym(lam)
    for r in range(lam.size + 1):
        exact = brute_esym(lam, r)
        assert t.e(r) == pytest.approx(exact, rel=1e-12, abs=1e-300)


@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(1e-3, 1e3)), st.data())
def test_loo_matches_enumeration(lam, data):
    t = elem_sym(lam)
    ex = data.draw(st.integers(0, lam.size - 1))
    rest = np.delete(lam, ex)
    for r in range(lam.size):
        assert elem_sym_loo(t, ex, r) == pytest.approx(brute_esym(rest, r), rel=1e-11)
    for k in range(1, lam.size):
        expected = brute_esym(rest, k) / brute_esym(rest, k - 1)
        assert loo_ratio(t, ex, k) == pytest.approx(expected, rel=1e-11)
    assert loo_ratio(t, ex, lam.size) == 0.0


def test_table_invariants(rng):
    lam = rng.exponential(size=15)
    t = ElemSymTable(lam)
    for j in range(t.n + 1):
        assert t.value(j, 0) == 1.0
        for r in range(t.max_degree + 1):
            assert t.value(j, r) >= 0.0
    assert t.e(1) == pytest.approx(math.fsum(lam), rel=1e-14)
    assert t.e(15) == pytest.approx(math.prod(lam), rel=1e-13)


def test_inclusion_probabilities_are_probabilities(rng):
    lam = np.sort(rng.exponential(size=12))[::-1]
    q = ElemSymTable(lam, max_degree=5).inclusion_probabilities()
    assert np.all((q >= 0) & (q <= 1))
    for j in range(1, 6):
        assert q[j, j] == 1.0
    # Q[j, r] E[j][r] = lam E[j-1][r-1]
    t = ElemSymTable(lam, max_degree=5)
    assert q[7, 3] == pytest.approx(lam[6] * t.value(6, 2) / t.value(7, 3), rel=1e-13)


@pytest.mark.parametrize("n", [200, 1000, 2000])
def test_wide_spectrum_trace_and_det(n, rng):
    lam = np.sort(10.0 ** rng.uniform(-6, 6, size=n))[::-1]
    t = ElemSymTable(lam)
    assert t.e(1) == pytest.approx(math.fsum(lam), rel=1e-10)
    assert t.log_e(n) == pytest.approx(math.fsum(np.log(lam)), rel=1e-10)
    assert t.e(n) == 0.0 or math.isfinite(t.e(n))


# -- marginal kernel and leverage scores --------------------------------------------

def test_marginal_identity():
    np.testing.assert_allclose(marginal_kernel(eigendecompose(np.eye(4)), 1.0), 0.5 * np.eye(4))


def test_marginal_two_by_two():
    p = marginal_kernel(eigendecompose(np.array([[2.0, 1.0], [1.0, 2.0]])), 1.0)
    np.testing.assert_allclose(np.linalg.eigvalsh(p), [0.5, 0.75], rtol=1e-14)
    s = eigendecompose(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(ridge_leverage_scores(s, 1.0), [5 / 8, 5 / 8], rtol=1e-14)


def test_leverage_sum_is_expected_size(rng):
    k = random_pd(30, rng)
    s = eigendecompose(k)
    for a in (0.01, 1.0, 100.0):
        lev = ridge_leverage_scores(s, a)
        direct = np.trace(k @ np.linalg.inv(k + a * np.eye(30)))
        assert lev.sum() == pytest.approx(direct, rel=1e-10)
        assert expected_dpp_size(s, a) == pytest.approx(direct, rel=1e-10)
        assert np.all((lev > 0) & (lev < 1))
        np.testing.assert_allclose(lev, np.diag(marginal_kernel(s, a)), rtol=1e-12)


@pytest.mark.parametrize("target", [1, 5, 17.5])
def test_alpha_for_effective_dimension(target, rng):
    s = eigendecompose(random_pd(25, rng, spread=3))
    a = alpha_for_effective_dimension(s, target)
    assert expected_dpp_size(s, a) == pytest.approx(target, rel=1e-10)


def test_alpha_for_effective_dimension_rejects_rank():
    s = eigendecompose(np.eye(3))
    with pytest.raises(ValueError):
        alpha_for_effective_dimension(s, 3)
