from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhessian.quaternion import (HyperhermitianMatrix, QPoint, Quaternion,
                                 complex_embedding, elementary_symmetric,
                                 embed_tau, extremal_spectrum,
                                 hyperhermitian_eigenvalues, mixed_discriminant,
                                 moore_det, quat_mul, reduced_sigma,
                                 reduced_sigma_closed_form)

finite = st.floats(-10, 10, allow_nan=False)
quats = st.builds(Quaternion, finite, finite, finite, finite)

I, J, K = Quaternion(0, 1, 0, 0), Quaternion(0, 0, 1, 0), Quaternion(0, 0, 0, 1)


def moore_expansion(a: HyperhermitianMatrix) -> float:
    """Moore's ordered cycle expansion; test-only oracle for small n."""
    n = a.n
    ent = [[Quaternion.from_array(a.entries[i, j]) for j in range(n)] for i in range(n)]
    total = 0.0
    for perm in itertools.permutations(range(n)):
        seen, cycles = set(), []
        for start in range(n):
            if start in seen:
                continue
            cyc, k = [], start
            while k not in seen:
                seen.add(k)
                cyc.append(k)
                k = perm[k]
            cycles.append(cyc)
        # each cycle starts at its smallest element; cycles by decreasing head
        cycles.sort(key=lambda c: -c[0])
        sign = (-1) ** sum(len(c) - 1 for c in cycles)
        prod = Quaternion(1, 0, 0, 0)
        for c in cycles:
            for i, k in enumerate(c):
                prod = prod * ent[k][c[(i + 1) % len(c)]]
        total += sign * prod.x0
    return total


def test_defining_relations():
    one = Quaternion(1, 0, 0, 0)
    q = Quaternion(1.5, -2, 0.25, 3)
    assert one * q == q
    assert I * J == K
    assert J * I == -K
    assert I * I == Quaternion(-1, 0, 0, 0)


@given(quats, quats)
def test_norm_multiplicative(p, q):
    assert abs(quat_mul(p, q).norm() - p.norm() * q.norm()) <= 1e-12 * max(1.0, p.norm() * q.norm())


@given(quats, quats, quats)
def test_associative(p, q, r):
    lhs = ((p * q) * r).as_array()
    rhs = (p * (q * r)).as_array()
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


@given(quats)
def test_conjugation_involution(q):
    assert q.conj().conj() == q


def test_embed_tau_examples():
    assert np.all(embed_tau(QPoint([Quaternion()])) == 0)
    assert np.allclose(embed_tau(QPoint([Quaternion(1, 0, 0, 0)])), np.eye(2))
    assert np.allclose(embed_tau(QPoint([I])), np.diag([-1j, 1j]))


def test_embed_tau_block_layout():
    x = np.arange(8, dtype=float) + 1
    z = embed_tau(QPoint.from_real(x))
    for l in range(2):
        x0, x1, x2, x3 = x[4 * l:4 * l + 4]
        block = np.array([[x0 - 1j * x1, -x2 + 1j * x3], [x2 + 1j * x3, x0 + 1j * x1]])
        assert np.allclose(z[2 * l:2 * l + 2], block)


def test_complex_embedding_examples():
    assert np.allclose(complex_embedding(HyperhermitianMatrix.identity(3)), np.eye(6))
    chi = complex_embedding(HyperhermitianMatrix.diag([2.0, -1.0]))
    assert np.allclose(np.sort(np.linalg.eigvalsh(chi)), [-1, -1, 2, 2])


def test_non_hyperhermitian_rejected():
    e = np.zeros((2, 2, 4))
    e[0, 1] = [1, 2, 0, 0]
    with pytest.raises(ValueError):
        HyperhermitianMatrix(e)
    e = np.zeros((1, 1, 4))
    e[0, 0, 2] = 1.0
    with pytest.raises(ValueError):
        HyperhermitianMatrix(e)


def test_eigenvalues_examples():
    assert np.allclose(hyperhermitian_eigenvalues(HyperhermitianMatrix.identity(3)), 1)
    assert np.allclose(hyperhermitian_eigenvalues(HyperhermitianMatrix.diag([3, -1])), [3, -1])


@pytest.mark.parametrize("n,m", [(2, 1), (2, 2), (3, 1), (3, 2), (4, 3)])
def test_extremal_hessian_spectrum(n, m):
    """2 delta_lk - a q_l conj(q_k) / |q|^2 has spectrum (2, ..., 2, 2 - a)."""
    a = 2 * n / m
    rng = np.random.default_rng(n * 10 + m)
    q = rng.normal(size=(n, 4))
    q2 = float(np.sum(q * q))
    e = np.zeros((n, n, 4))
    for l in range(n):
        for k in range(n):
            prod = Quaternion.from_array(q[l]) * Quaternion.from_array(q[k]).conj()
            e[l, k] = -a * prod.as_array() / q2
        e[l, l, 0] += 2
    mat = HyperhermitianMatrix(e)
    lam = hyperhermitian_eigenvalues(mat)
    assert np.allclose(sorted(lam), sorted([2.0] * (n - 1) + [2 - a]), atol=1e-12)


def test_pairing_failure_raises(monkeypatch):
    import qhessian.quaternion as qmod
    a = HyperhermitianMatrix.random(3, np.random.default_rng(1))
    real = qmod.complex_embedding

    def broken(mat):
        chi = real(mat)
        chi[0, 0] += 1.0
        return chi
    monkeypatch.setattr(qmod, "complex_embedding", broken)
    with pytest.raises(ValueError, match="pair"):
        qmod.hyperhermitian_eigenvalues(a)


def test_moore_det_examples():
    assert moore_det(HyperhermitianMatrix.identity(4)) == pytest.approx(1.0)
    assert moore_det(HyperhermitianMatrix.diag([2, 3, -0.5])) == pytest.approx(-3.0)
    e = np.zeros((2, 2, 4))
    b = np.array([0.5, -1.0, 2.0, 0.25])
    e[0, 0, 0], e[1, 1, 0] = 3.0, 4.0
    e[0, 1] = b
    e[1, 0] = b * [1, -1, -1, -1]
    assert moore_det(HyperhermitianMatrix(e)) == pytest.approx(12.0 - b @ b, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_moore_det_matches_expansion(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(25):
        a = HyperhermitianMatrix.random(n, rng)
        ref = moore_expansion(a)
        assert moore_det(a) == pytest.approx(ref, rel=1e-10, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 5.0))
def test_moore_det_homogeneous(seed, t):
    a = HyperhermitianMatrix.random(3, np.random.default_rng(seed))
    assert moore_det(a * t) == pytest.approx(t ** 3 * moore_det(a), rel=1e-9, abs=1e-9)


def test_mixed_discriminant_examples():
    eye = HyperhermitianMatrix.identity(3)
    assert mixed_discriminant(eye, eye, eye) == pytest.approx(1.0)
    a, b, c, d = 2.0, 3.0, 5.0, 7.0
    val = mixed_discriminant(HyperhermitianMatrix.diag([a, b]), HyperhermitianMatrix.diag([c, d]))
    assert val == pytest.approx((a * d + b * c) / 2)


def test_mixed_discriminant_symmetric_multilinear():
    rng = np.random.default_rng(7)
    mats = [HyperhermitianMatrix.random(3, rng) for _ in range(4)]
    base = mixed_discriminant(*mats[:3])
    for perm in itertools.permutations(range(3)):
        assert mixed_discriminant(*(mats[i] for i in perm)) == pytest.approx(base, abs=1e-12)
    s = mixed_discriminant(mats[0] + mats[3] * 2.0, mats[1], mats[2])
    split = base + 2.0 * mixed_discriminant(mats[3], mats[1], mats[2])
    assert s == pytest.approx(split, rel=1e-10, abs=1e-10)
    assert mixed_discriminant(mats[0], mats[0], mats[0]) == pytest.approx(moore_det(mats[0]),
                                                                           rel=1e-10, abs=1e-10)


def test_elementary_symmetric_exact():
    vals = [Fraction(1), Fraction(2), Fraction(3)]
    assert elementary_symmetric(vals, 0) == 1
    assert elementary_symmetric(vals, 1) == 6
    assert elementary_symmetric(vals, 2) == 11
    assert elementary_symmetric(vals, 3) == 6


def test_reduced_sigma_signs():
    for n in range(1, 7):
        for m in range(1, n + 1):
            for p in range(1, m + 1):
                val = reduced_sigma(n, m, p)
                assert val == reduced_sigma_closed_form(n, m, p)
                if p < m:
                    assert val > 0
            assert reduced_sigma(n, m, m) == 0


def test_extremal_spectrum():
    assert extremal_spectrum(3, 2) == [2, 2, Fraction(-1)]
    assert math.isclose(float(sum(extremal_spectrum(4, 4))), 6.0)
