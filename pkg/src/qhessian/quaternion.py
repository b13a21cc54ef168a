"""Quaternions, hyperhermitian matrices and the Moore determinant.

The Moore determinant is evaluated through the complex 2n x 2n embedding:
a hyperhermitian matrix maps to a Hermitian matrix whose spectrum is the
quaternionic spectrum with every value doubled.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

PAIR_TOL = 1e-8


@dataclass(frozen=True)
class Quaternion:
    x0: float = 0.0
    x1: float = 0.0
    x2: float = 0.0
    x3: float = 0.0

    @classmethod
    def from_array(cls, a) -> "Quaternion":
        return cls(*(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, self.x1, self.x2, self.x3])

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(self.x0 + other.x0, self.x1 + other.x1,
                          self.x2 + other.x2, self.x3 + other.x3)

    def __sub__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(self.x0 - other.x0, self.x1 - other.x1,
                          self.x2 - other.x2, self.x3 - other.x3)

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.x0, -self.x1, -self.x2, -self.x3)

    def __mul__(self, other):
        if isinstance(other, Quaternion):
            return quat_mul(self, other)
        return Quaternion(self.x0 * other, self.x1 * other,
                          self.x2 * other, self.x3 * other)

    __rmul__ = __mul__

    def conj(self) -> "Quaternion":
        return Quaternion(self.x0, -self.x1, -self.x2, -self.x3)

    def norm(self) -> float:
        return math.sqrt(self.x0**2 + self.x1**2 + self.x2**2 + self.x3**2)


def quat_mul(p: Quaternion, q: Quaternion) -> Quaternion:
    """Hamilton product with i*j = k."""
    a0, a1, a2, a3 = p.x0, p.x1, p.x2, p.x3
    b0, b1, b2, b3 = q.x0, q.x1, q.x2, q.x3
    return Quaternion(
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    )


def qmul_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product on arrays whose last axis holds (x0, x1, x2, x3)."""
    a0, a1, a2, a3 = np.moveaxis(a, -1, 0)
    b0, b1, b2, b3 = np.moveaxis(b, -1, 0)
    return np.stack([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ], axis=-1)


def qconj_array(a: np.ndarray) -> np.ndarray:
    return a * np.array([1.0, -1.0, -1.0, -1.0])


class QPoint:
    """A point (q_0, ..., q_{n-1}) of H^n, stored as an (n, 4) real array."""

    def __init__(self, coords):
        arr = np.asarray(
            [c.as_array() if isinstance(c, Quaternion) else c for c in coords],
            dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError("QPoint needs n quaternions")
        self.coords = arr

    @classmethod
    def from_real(cls, x) -> "QPoint":
        x = np.asarray(x, dtype=float)
        return cls(x.reshape(-1, 4))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def real(self) -> np.ndarray:
        return self.coords.reshape(-1)


def embed_tau(p: QPoint) -> np.ndarray:
    """Conjugate embedding H^n -> C^{2n x 2}: rows 2l, 2l+1 hold block l."""
    n = p.n
    z = np.zeros((2 * n, 2), dtype=complex)
    for l in range(n):
        x0, x1, x2, x3 = p.coords[l]
        z[2 * l, 0] = x0 - 1j * x1
        z[2 * l, 1] = -x2 + 1j * x3
        z[2 * l + 1, 0] = x2 + 1j * x3
        z[2 * l + 1, 1] = x0 + 1j * x1
    return z


class HyperhermitianMatrix:
    """n x n quaternionic matrix with A = A*, entries stored as (n, n, 4)."""

    def __init__(self, entries, tol: float = 1e-12):
        arr = np.array(entries, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != arr.shape[1] or arr.shape[2] != 4:
            raise ValueError("expected an (n, n, 4) array of quaternion entries")
        scale = max(1.0, float(np.abs(arr).max()))
        gap = np.abs(arr - qconj_array(np.swapaxes(arr, 0, 1))).max()
        if gap > tol * scale:
            raise ValueError(f"matrix is not hyperhermitian (defect {gap:.3e})")
        self.entries = arr

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, n: int) -> "HyperhermitianMatrix":
        return cls.diag([1.0] * n)

    @classmethod
    def diag(cls, values: Sequence[float]) -> "HyperhermitianMatrix":
        n = len(values)
        e = np.zeros((n, n, 4))
        for l, v in enumerate(values):
            e[l, l, 0] = v
        return cls(e)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator,
               scale: float = 1.0) -> "HyperhermitianMatrix":
        e = rng.normal(scale=scale, size=(n, n, 4))
        e = 0.5 * (e + qconj_array(np.swapaxes(e, 0, 1)))
        return cls(e)

    @classmethod
    def random_positive(cls, n: int, rng: np.random.Generator,
                        shift: float = 0.5) -> "HyperhermitianMatrix":
        """B* B + shift I for a random quaternionic B."""
        b = rng.normal(size=(n, n, 4))
        bstar = qconj_array(np.swapaxes(b, 0, 1))
        e = np.zeros((n, n, 4))
        for i in range(n):
            for j in range(n):
                acc = np.zeros(4)
                for k in range(n):
                    acc += qmul_array(bstar[i, k], b[k, j])
                e[i, j] = acc
        e = 0.5 * (e + qconj_array(np.swapaxes(e, 0, 1)))
        for l in range(n):
            e[l, l, 0] += shift
        return cls(e)

    def __add__(self, other: "HyperhermitianMatrix") -> "HyperhermitianMatrix":
        return HyperhermitianMatrix(self.entries + other.entries)

    def __mul__(self, t: float) -> "HyperhermitianMatrix":
        return HyperhermitianMatrix(self.entries * t)

    __rmul__ = __mul__

    def quadratic_form(self, x) -> float:
        """Re(q^* A q) at the real point x in R^{4n}."""
        q = np.asarray(x, dtype=float).reshape(self.n, 4)
        aq = np.zeros((self.n, 4))
        for l in range(self.n):
            for k in range(self.n):
                aq[l] += qmul_array(self.entries[l, k], q[k])
        return float(sum(qmul_array(qconj_array(q[l]), aq[l])[0]
                         for l in range(self.n)))

    def real_quadratic_matrix(self) -> np.ndarray:
        """Symmetric M with Re(q^* A q) = x^T M x on R^{4n}."""
        d = 4 * self.n
        eye = np.eye(d)
        diag = np.array([self.quadratic_form(eye[a]) for a in range(d)])
        m = np.diag(diag)
        for a in range(d):
            for b in range(a + 1, d):
                v = 0.5 * (self.quadratic_form(eye[a] + eye[b]) - diag[a] - diag[b])
                m[a, b] = m[b, a] = v
        return m


def complex_embedding(a: HyperhermitianMatrix) -> np.ndarray:
    """chi(A) = [[A1, A2], [-conj(A2), conj(A1)]] for A = A1 + A2 j."""
    e = a.entries
    a1 = e[..., 0] + 1j * e[..., 1]
    a2 = e[..., 2] + 1j * e[..., 3]
    return np.block([[a1, a2], [-a2.conj(), a1.conj()]])


def hyperhermitian_eigenvalues(a: HyperhermitianMatrix) -> np.ndarray:
    """The n real eigenvalues, descending; each is a doubled value of chi(A)."""
    chi = complex_embedding(a)
    if np.abs(chi - chi.conj().T).max() > 1e-10 * max(1.0, np.abs(chi).max()):
        raise ValueError("complex embedding is not Hermitian")
    ev = np.linalg.eigvalsh(chi)
    pairs = ev.reshape(-1, 2)
    scale = max(1.0, float(np.abs(ev).max()))
    gap = float(np.abs(pairs[:, 1] - pairs[:, 0]).max())
    if gap > PAIR_TOL * scale:
        raise ValueError(f"eigenvalues fail to pair up (gap {gap:.3e})")
    return pairs.mean(axis=1)[::-1]


def moore_det(a: HyperhermitianMatrix) -> float:
    return float(np.prod(hyperhermitian_eigenvalues(a)))


def mixed_discriminant(*mats: HyperhermitianMatrix) -> float:
    """Polarization of moore_det by inclusion-exclusion over subset sums."""
    n = len(mats)
    if n == 0 or any(m.n != n for m in mats):
        raise ValueError("need exactly n matrices of size n")
    total = 0.0
    for size in range(1, n + 1):
        sign = (-1) ** (n - size)
        for subset in itertools.combinations(range(n), size):
            acc = HyperhermitianMatrix(sum(mats[i].entries for i in subset))
            total += sign * moore_det(acc)
    return total / math.factorial(n)


def elementary_symmetric(values: Sequence, p: int):
    """sigma_p of the given values; exact when the values are Fractions."""
    e = [Fraction(1)] + [Fraction(0)] * p
    for v in values:
        for k in range(p, 0, -1):
            e[k] = e[k] + e[k - 1] * v
    return e[p]


def extremal_spectrum(n: int, m: int) -> list[Fraction]:
    """(2, ..., 2, 2 - a) with a = 2n/m, as exact rationals."""
    a = Fraction(2 * n, m)
    return [Fraction(2)] * (n - 1) + [2 - a]


def reduced_sigma(n: int, m: int, p: int) -> Fraction:
    """sigma_p(2, ..., 2, 2 - 2n/m) / 2^(p-1).

    This is the quantity whose sign decides the Gårding-cone conditions for
    the annulus extremal function; it vanishes for p = m.
    """
    return elementary_symmetric(extremal_spectrum(n, m), p) / 2 ** (p - 1)


def reduced_sigma_closed_form(n: int, m: int, p: int) -> Fraction:
    return (Fraction(2 * math.factorial(n - 1),
                     math.factorial(p - 1) * math.factorial(n - p))
            * (Fraction(n, p) - Fraction(n, m)))
