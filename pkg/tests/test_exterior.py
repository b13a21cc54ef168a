from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhessian.exterior import (Multivector, TwoForm, beta, beta_power,
                               cone_membership, hyperhermitian_from_twoform,
                               power, top_coefficient,
                               twoform_from_hyperhermitian, wedge)
from qhessian.quaternion import (HyperhermitianMatrix, elementary_symmetric,
                                 hyperhermitian_eigenvalues)


def e(n, *idx):
    return Multivector.basis(n, *idx)


def int_multivector(draw, n, degree):
    import itertools
    keys = list(itertools.combinations(range(2 * n), degree))
    coeffs = draw(st.lists(st.integers(-4, 4), min_size=len(keys), max_size=len(keys)))
    return Multivector(n, degree, dict(zip(keys, coeffs)))


@st.composite
def graded_pair(draw):
    n = draw(st.integers(1, 3))
    p = draw(st.integers(0, 2 * n))
    q = draw(st.integers(0, 2 * n - p))
    return int_multivector(draw, n, p), int_multivector(draw, n, q)


@st.composite
def graded_triple(draw):
    n = draw(st.integers(1, 3))
    p = draw(st.integers(0, 2 * n))
    q = draw(st.integers(0, 2 * n - p))
    r = draw(st.integers(0, 2 * n - p - q))
    return tuple(int_multivector(draw, n, d) for d in (p, q, r))


def test_basis_wedges():
    assert wedge(e(1, 0), e(1, 1)) == Multivector.volume(1)
    assert wedge(e(1, 1), e(1, 0)) == Multivector.volume(1) * -1
    a, b = e(2, 0, 1), e(2, 2, 3)
    assert wedge(a, b) == wedge(b, a)
    assert wedge(e(2, 0), e(2, 0)) == Multivector(2, 2)


def test_degree_overflow():
    with pytest.raises(ValueError):
        wedge(e(1, 0, 1), e(1, 0))


def test_invalid_keys():
    with pytest.raises(ValueError):
        Multivector(2, 2, {(1, 0): 1})
    with pytest.raises(ValueError):
        Multivector(1, 1, {(2,): 1})


@settings(max_examples=60, deadline=None)
@given(graded_pair())
def test_graded_anticommutativity(pair):
    a, b = pair
    sign = (-1) ** (a.degree * b.degree)
    assert wedge(a, b) == wedge(b, a) * sign


@settings(max_examples=60, deadline=None)
@given(graded_triple())
def test_associativity(triple):
    a, b, c = triple
    assert wedge(wedge(a, b), c) == wedge(a, wedge(b, c))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_beta_power_top(n):
    assert top_coefficient(beta_power(n, n)) == math.factorial(n)


def test_beta_layout():
    c = beta(2).coeffs
    assert c[0, 1] == 1 and c[1, 0] == -1 and c[2, 3] == 1
    assert np.count_nonzero(c) == 4
    assert beta(3).is_real()


def test_power_basics():
    assert power(beta(2) * 3.0, 0) == Multivector.scalar(2)
    a = beta(2) * 1.5
    assert power(a, 2) == wedge(a.to_multivector(exact=True), a.to_multivector(exact=True))


def test_top_coefficient():
    assert top_coefficient(Multivector.volume(3)) == 1
    assert top_coefficient(Multivector.volume(2) * 2) == 2
    with pytest.raises(ValueError):
        top_coefficient(e(2, 0))


def test_cone_examples():
    for n in range(1, 5):
        for m in range(1, n + 1):
            rep = cone_membership(beta(n), m)
            assert rep.member and all(v > 0 for v in rep.densities.values())
            assert not cone_membership(beta(n) * -1, m).member


@pytest.mark.parametrize("n,m", [(2, 1), (2, 2), (3, 1), (3, 2), (3, 3), (4, 2)])
def test_extremal_form_on_cone_boundary(n, m):
    a = 2 * n / m
    mat = HyperhermitianMatrix.diag([2.0] * (n - 1) + [2 - a])
    rep = cone_membership(twoform_from_hyperhermitian(mat), m)
    assert abs(rep.densities[m]) < 1e-12
    for k in range(1, m):
        assert rep.densities[k] > 0
    assert rep.member


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
def test_cone_scale_invariance(seed, t):
    a = twoform_from_hyperhermitian(HyperhermitianMatrix.random(3, np.random.default_rng(seed)))
    for m in (1, 2, 3):
        assert cone_membership(a, m).member == cone_membership(a * t, m).member


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_density_sign_matches_sigma(seed):
    mat = HyperhermitianMatrix.random(3, np.random.default_rng(seed))
    lam = hyperhermitian_eigenvalues(mat)
    dens = cone_membership(twoform_from_hyperhermitian(mat), 3).densities
    for k in (1, 2, 3):
        sig = float(elementary_symmetric(list(lam), k))
        if abs(sig) > 1e-9:
            assert np.sign(dens[k]) == np.sign(sig)


def test_non_real_form_rejected():
    c = np.zeros((2, 2), dtype=complex)
    c[0, 1], c[1, 0] = 1j, -1j
    with pytest.raises(ValueError):
        cone_membership(TwoForm(c), 1)


def test_twoform_bridge():
    assert np.allclose(twoform_from_hyperhermitian(HyperhermitianMatrix.identity(3)).coeffs,
                       2 * beta(3).coeffs)
    back = hyperhermitian_from_twoform(beta(2))
    assert np.allclose(back.entries, HyperhermitianMatrix.identity(2).entries / 2)
    rng = np.random.default_rng(3)
    for n in (1, 2, 3):
        a = HyperhermitianMatrix.random(n, rng)
        again = hyperhermitian_from_twoform(twoform_from_hyperhermitian(a))
        assert np.abs(again.entries - a.entries).max() < 1e-12


def test_antisymmetry_enforced():
    with pytest.raises(ValueError):
        TwoForm(np.ones((2, 2)))
