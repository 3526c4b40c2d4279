"""Oracle checks: closed forms against enumeration, and the oracles against independent code."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dppens.kernel_core import ElemSymTable, eigendecompose
from dppens.oracle import (
    IdentityReport,
    dpp_law,
    elem_sym_matrix,
    expect_dpp_exhaustive,
    expect_kdpp_exhaustive,
    expectation_mc,
    kdpp_expectation_spectral,
    kdpp_law,
    lemma2_check,
    lemma6_check,
    prop5_bound_check,
    random_pd_matrix,
    remark_bound_check,
    sampler_law_check,
    sum_principal_minors,
)

K2 = np.array([[2.0, 1.0], [1.0, 2.0]])


def scatter_inverse(k, c):
    out = np.zeros_like(k)
    if c:
        out[np.ix_(c, c)] = np.linalg.inv(k[np.ix_(c, c)])
    return out


# -- independent brute force -------------------------------------------------------

def test_thm1_two_by_two_by_hand():
    # Pr(empty)=1/8, Pr({i})=2/8, Pr({0,1})=3/8
    lhs = 2 / 8 * scatter_inverse(K2, [0]) + 2 / 8 * scatter_inverse(K2, [1]) + 3 / 8 * np.linalg.inv(K2)
    expected = np.array([[3.0, -1.0], [-1.0, 3.0]]) / 8
    np.testing.assert_allclose(lhs, expected, rtol=1e-14)
    r = expect_dpp_exhaustive(K2, 1.0)
    np.testing.assert_allclose(r.lhs, expected, rtol=1e-10)
    np.testing.assert_allclose(r.rhs, expected, rtol=1e-10)
    law = dpp_law(K2, 1.0)
    assert law[()] == pytest.approx(1 / 8) and law[(0, 1)] == pytest.approx(3 / 8)


@pytest.mark.parametrize("c,alpha", [(0.5, 1.0), (3.0, 0.1)])
def test_thm1_diagonal(c, alpha):
    r = expect_dpp_exhaustive(c * np.eye(4), alpha)
    np.testing.assert_allclose(r.lhs, np.eye(4) / (c + alpha), rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.1, 1.0, 10.0])
def test_thm1_random_n8(alpha, rng):
    assert expect_dpp_exhaustive(random_pd_matrix(8, rng), alpha).rel_error <= 1e-9


def test_kdpp_k_equals_n_is_inverse(rng):
    k = random_pd_matrix(5, rng)
    r = expect_kdpp_exhaustive(k, 5)
    np.testing.assert_allclose(r.lhs, np.linalg.inv(k), rtol=1e-10)
    assert r.rel_error <= 1e-10


@pytest.mark.parametrize("n,k,tol", [(3, 2, 1e-9), (10, 4, 1e-8)])
def test_cor4_examples(n, k, tol, rng):
    assert expect_kdpp_exhaustive(random_pd_matrix(n, rng), k).rel_error <= tol


def test_cor4_spectral_against_independent_enumeration(rng):
    k = random_pd_matrix(5, rng)
    dets = {c: np.linalg.det(k[np.ix_(c, c)]) for c in itertools.combinations(range(5), 3)}
    z = sum(dets.values())
    lhs = sum(d / z * scatter_inverse(k, list(c)) for c, d in dets.items())
    s = eigendecompose(k)
    np.testing.assert_allclose(kdpp_expectation_spectral(s, 3), lhs, rtol=1e-10, atol=1e-12)


def test_lemma2_zero_vectors(rng):
    r = lemma2_check(random_pd_matrix(4, rng), 2, np.zeros(4), np.zeros(4))
    assert r.lhs == 0.0 and r.rhs == 0.0 and r.passed


def test_lemma2_unit_vectors_pick_entries(rng):
    k = random_pd_matrix(5, rng)
    m = kdpp_expectation_spectral(eigendecompose(k), 2)
    for i, j in [(0, 0), (1, 3), (4, 2)]:
        r = lemma2_check(k, 2, np.eye(5)[i], np.eye(5)[j])
        assert r.rhs == pytest.approx(m[i, j], rel=1e-9, abs=1e-12)


def test_lemma2_random_n5(rng):
    k = random_pd_matrix(5, rng)
    r = lemma2_check(k, 2, rng.standard_normal(5), rng.standard_normal(5))
    assert r.rel_error <= 1e-8 and r.passed


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-3, 3)).filter(lambda a: a.shape[0] == a.shape[1]))
def test_elem_sym_matrix_vs_principal_minors(a):
    n = a.shape[0]
    scale = max(1.0, float(np.abs(a).max())) ** n
    for k in range(n + 1):
        assert elem_sym_matrix(a, k) == pytest.approx(sum_principal_minors(a, k), abs=1e-9 * scale * 2**n)


def test_elem_sym_matrix_symmetric_matches_spectrum(rng):
    k = random_pd_matrix(7, rng)
    t = ElemSymTable(eigendecompose(k).eigenvalues)
    for r in range(8):
        assert elem_sym_matrix(k, r) == pytest.approx(t.e(r), rel=1e-12)


def test_prop5_k_equals_n(rng):
    k = random_pd_matrix(6, rng)
    r = prop5_bound_check(k, 6)
    assert r.extra["alpha"] == pytest.approx(np.linalg.eigvalsh(k)[0], rel=1e-10)
    assert r.extra["min_gap_eigenvalue"] >= -1e-8


@pytest.mark.parametrize("k", range(1, 9))
def test_prop5_random_n8(k, rng):
    assert prop5_bound_check(random_pd_matrix(8, rng), k).passed


def brute_ratio(s, k):
    e = lambda r: math.fsum(math.prod(c) for c in itertools.combinations(s, r))
    return e(k + 1) / e(k)


@given(arrays(np.float64, 10, elements=st.floats(1e-3, 1e3)), st.integers(1, 9))
def test_lemma6_scalar(s, k):
    r = lemma6_check(s, k, k)
    srt = np.sort(s)[::-1]
    assert r.lhs == pytest.approx(brute_ratio(srt, k), rel=1e-9)
    assert r.rhs == pytest.approx(math.fsum(srt[k:]), rel=1e-12)
    assert r.passed


def test_lemma6_general_l(rng):
    s = rng.exponential(size=8)
    for k in range(1, 7):
        for l in range(1, k + 1):
            assert lemma6_check(s, k, l).passed


@pytest.mark.parametrize("c", [1e-3, 1.0, 42.0])
@pytest.mark.parametrize("k", [1, 4, 9, 10])
def test_remark_equality_on_constant_spectrum(c, k):
    r = remark_bound_check(np.full(10, c), k)
    expected = c * (10 - k) / k
    assert r.lhs == pytest.approx(expected, rel=1e-10, abs=1e-300)
    assert r.rhs == pytest.approx(expected, rel=1e-10, abs=1e-300)


def test_remark_k_n_minus_one(rng):
    lam = np.sort(rng.uniform(0.1, 5, size=7))[::-1]
    r = remark_bound_check(lam, 6)
    assert r.rhs == pytest.approx(lam[5] * (lam[5] / lam[0]) ** 5 / 6, rel=1e-14)
    assert r.lhs == pytest.approx(math.prod(lam[:6]) / math.fsum(
        math.prod(c) for c in itertools.combinations(lam[:6], 5)), rel=1e-12)
    assert r.passed


@given(arrays(np.float64, 10, elements=st.floats(1e-4, 1e2)))
def test_remark_random(lam):
    for k in range(1, 11):
        assert remark_bound_check(lam, k).passed


def test_identity_report_fields():
    r = IdentityReport("x", np.ones(2), np.ones(2) * 2, tolerance=0.1)
    assert r.abs_error == pytest.approx(math.sqrt(2))
    assert r.rel_error == pytest.approx(0.5)
    assert not r.passed
    d = r.to_dict(include_matrices=True)
    assert d["lhs"] == [1.0, 1.0] and d["passed"] is False


def test_enumeration_caps():
    with pytest.raises(ValueError):
        dpp_law(np.eye(13), 1.0)
    with pytest.raises(ValueError):
        kdpp_law(np.eye(15), 2)


# -- Monte Carlo ---------------------------------------------------------------

def test_mc_n1_exact():
    k = np.array([[2.0]])
    r = expectation_mc(k, np.array([3.0]), 1.0, 1000, np.array([[0.5]]))
    # E = Pr(include) * 0.5 * 3 / 2 with Pr = 2/3, equal to the KRR prediction 0.5 * 3 / 3
    assert r.rhs[0] == pytest.approx(0.5)
    assert r.extra["passed"]


def test_mc_against_krr(rng):
    k = random_pd_matrix(10, rng)
    y = rng.standard_normal(10)
    r = expectation_mc(k, y, 1.0, 20_000, k[:4], seed=3, checkpoints=[1000, 20_000])
    assert r.passed and r.extra["max_z"] <= 4
    cps = r.extra["checkpoints"]
    assert [c["draws"] for c in cps] == [1000, 20_000]


def test_sampler_law_check(rng):
    k = random_pd_matrix(4, rng)
    assert sampler_law_check(k, "kdpp", k=2, draws=40_000).passed
    assert sampler_law_check(k, "dpp", alpha=1.0, draws=40_000).passed
    with pytest.raises(ValueError):
        sampler_law_check(k, "uniform")
