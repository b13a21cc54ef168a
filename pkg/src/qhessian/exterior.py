"""Sparse exterior algebra over C^{2n}.

A Multivector of degree k is a dict from strictly increasing index tuples to
coefficients.  Coefficients are plain Python numbers, so integer, Fraction
and complex inputs stay exact under wedge products.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .quaternion import HyperhermitianMatrix

CONE_TOL = 1e-10


def _merge_sign(a: tuple, b: tuple) -> int:
    inversions = sum(1 for i in a for j in b if i > j)
    return -1 if inversions % 2 else 1


@dataclass
class Multivector:
    n: int
    degree: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, c in self.terms.items():
            key = tuple(key)
            if len(key) != self.degree:
                raise ValueError(f"key {key} does not have degree {self.degree}")
            if any(b <= a for a, b in zip(key, key[1:])):
                raise ValueError(f"key {key} is not strictly increasing")
            if key and (key[0] < 0 or key[-1] >= 2 * self.n):
                raise ValueError(f"key {key} out of range for n={self.n}")
            if c != 0:
                clean[key] = c
        self.terms = clean

    @classmethod
    def scalar(cls, n: int, c=1) -> "Multivector":
        return cls(n, 0, {(): c})

    @classmethod
    def basis(cls, n: int, *indices: int) -> "Multivector":
        """omega^{i_1} ^ ... ^ omega^{i_k} for arbitrary (unsorted) indices."""
        if len(set(indices)) != len(indices):
            return cls(n, len(indices))
        order = sorted(range(len(indices)), key=lambda t: indices[t])
        sign = 1
        perm = list(order)
        for i in range(len(perm)):
            while perm[i] != i:
                j = perm[i]
                perm[i], perm[j] = perm[j], perm[i]
                sign = -sign
        return cls(n, len(indices), {tuple(sorted(indices)): sign})

    @classmethod
    def volume(cls, n: int) -> "Multivector":
        return cls(n, 2 * n, {tuple(range(2 * n)): 1})

    def __add__(self, other: "Multivector") -> "Multivector":
        self._check_compatible(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return Multivector(self.n, self.degree, out)

    def __sub__(self, other: "Multivector") -> "Multivector":
        return self + other * -1

    def __mul__(self, t) -> "Multivector":
        return Multivector(self.n, self.degree,
                           {k: c * t for k, c in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, Multivector):
            return NotImplemented
        return (self.n, self.degree, self.terms) == (other.n, other.degree, other.terms)

    def _check_compatible(self, other: "Multivector"):
        if self.n != other.n or self.degree != other.degree:
            raise ValueError("multivectors of different dimension or degree")

    def max_abs_diff(self, other: "Multivector") -> float:
        self._check_compatible(other)
        keys = set(self.terms) | set(other.terms)
        return max((abs(self.terms.get(k, 0) - other.terms.get(k, 0)) for k in keys),
                   default=0.0)


def wedge(a: Multivector, b: Multivector) -> Multivector:
    if a.n != b.n:
        raise ValueError("dimension mismatch")
    deg = a.degree + b.degree
    if deg > 2 * a.n:
        raise ValueError(f"degree {deg} exceeds top degree {2 * a.n}")
    out: dict = {}
    for ka, ca in a.terms.items():
        sa = set(ka)
        for kb, cb in b.terms.items():
            if sa.intersection(kb):
                continue
            key = tuple(sorted(ka + kb))
            out[key] = out.get(key, 0) + _merge_sign(ka, kb) * ca * cb
    return Multivector(a.n, deg, out)


def top_coefficient(f: Multivector):
    if f.degree != 2 * f.n:
        raise ValueError(f"degree {f.degree} is not the top degree {2 * f.n}")
    return f.terms.get(tuple(range(2 * f.n)), 0)


class TwoForm:
    """alpha = sum_{i<j} c_ij omega^i ^ omega^j with c antisymmetric."""

    def __init__(self, coeffs, tol: float = 1e-12):
        c = np.array(coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2:
            raise ValueError("expected a square 2n x 2n coefficient matrix")
        if np.abs(c + c.T).max() > tol * max(1.0, np.abs(c).max()):
            raise ValueError("coefficient matrix is not antisymmetric")
        self.coeffs = 0.5 * (c - c.T)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0] // 2

    def __add__(self, other: "TwoForm") -> "TwoForm":
        return TwoForm(self.coeffs + other.coeffs)

    def __sub__(self, other: "TwoForm") -> "TwoForm":
        return TwoForm(self.coeffs - other.coeffs)

    def __mul__(self, t) -> "TwoForm":
        return TwoForm(self.coeffs * t)

    __rmul__ = __mul__

    def __neg__(self) -> "TwoForm":
        return TwoForm(-self.coeffs)

    def to_multivector(self, exact: bool = False) -> Multivector:
        d = self.coeffs.shape[0]
        terms = {}
        for i in range(d):
            for j in range(i + 1, d):
                c = self.coeffs[i, j]
                if exact:
                    c = _exactify(c)
                terms[(i, j)] = c
        return Multivector(self.n, 2, terms)

    def is_real(self, tol: float = 1e-10) -> bool:
        dens = _raw_densities(self, self.n)
        scale = max(1.0, max(abs(v) for v in dens))
        return all(abs(v.imag) <= tol * scale for v in dens)


def _exactify(c: complex):
    re, im = float(c.real), float(c.imag)
    re = int(re) if re.is_integer() else re
    im = int(im) if im.is_integer() else im
    return re if im == 0 else complex(re, im)


def beta(n: int) -> TwoForm:
    c = np.zeros((2 * n, 2 * n), dtype=complex)
    for l in range(n):
        c[2 * l, 2 * l + 1] = 1
        c[2 * l + 1, 2 * l] = -1
    return TwoForm(c)


def power(f, k: int) -> Multivector:
    mv = f.to_multivector(exact=True) if isinstance(f, TwoForm) else f
    if k < 0 or 2 * k > 2 * mv.n:
        raise ValueError(f"power {k} out of range for n={mv.n}")
    out = Multivector.scalar(mv.n)
    for _ in range(k):
        out = wedge(out, mv)
    return out


@functools.lru_cache(maxsize=None)
def beta_power(n: int, k: int) -> Multivector:
    return power(beta(n), k)


def _raw_densities(alpha: TwoForm, m: int) -> list:
    n = alpha.n
    mv = alpha.to_multivector()
    out = []
    acc = Multivector.scalar(n)
    for k in range(1, m + 1):
        acc = wedge(acc, mv)
        out.append(complex(top_coefficient(wedge(acc, beta_power(n, n - k)))))
    return out


@dataclass
class ConeReport:
    densities: dict
    member: bool
    tol: float


def cone_membership(alpha: TwoForm, m: int, tol: float = CONE_TOL) -> ConeReport:
    """Test alpha^k ^ beta^{n-k} >= 0 for k = 1..m.

    Densities are reported relative to beta^n = n! Omega_{2n}; the verdict is
    taken on alpha rescaled so that max |c_ij| = 1.
    """
    n = alpha.n
    if not 1 <= m <= n:
        raise ValueError(f"order m={m} outside 1..{n}")
    scale = float(np.abs(alpha.coeffs).max())
    unit = alpha * (1.0 / scale) if scale > 0 else alpha
    raw = _raw_densities(unit, m)
    big = max(1.0, max(abs(v) for v in raw))
    if any(abs(v.imag) > 1e-9 * big for v in raw):
        raise ValueError("alpha is not a real 2-form")
    nf = math.factorial(n)
    unit_dens = {k + 1: raw[k].real / nf for k in range(m)}
    member = all(v >= -tol for v in unit_dens.values())
    dens = {k: v * scale ** k for k, v in unit_dens.items()}
    return ConeReport(dens, member, tol)


# Bridge between hyperhermitian matrices and 2-forms.  The real Hessian of a
# quadratic q -> Re(q^* A q) is pushed through the Baston coefficient table;
# the normalization is fixed by Hess(|q|^2) = 4 I and Delta(|q|^2) = 8 beta.

def _hessian_of(a: HyperhermitianMatrix) -> np.ndarray:
    return 2.0 * a.real_quadratic_matrix()


def twoform_from_hyperhermitian(a: HyperhermitianMatrix) -> TwoForm:
    from .calculus import baston_from_hessian
    return TwoForm(baston_from_hessian(_hessian_of(a), a.n) / 4.0)


@functools.lru_cache(maxsize=None)
def _bridge_matrix(n: int) -> np.ndarray:
    """Real-linear map from hyperhermitian parameters to (Re c, Im c), i<j."""
    cols = []
    for basis in _hyperhermitian_basis(n):
        c = twoform_from_hyperhermitian(basis).coeffs
        iu = np.triu_indices(2 * n, 1)
        cols.append(np.concatenate([c[iu].real, c[iu].imag]))
    return np.array(cols).T


def _hyperhermitian_basis(n: int):
    for l in range(n):
        e = np.zeros((n, n, 4))
        e[l, l, 0] = 1
        yield HyperhermitianMatrix(e)
    for l in range(n):
        for k in range(l + 1, n):
            for comp in range(4):
                e = np.zeros((n, n, 4))
                e[l, k, comp] = 1
                e[k, l, comp] = 1 if comp == 0 else -1
                yield HyperhermitianMatrix(e)


def hyperhermitian_from_twoform(alpha: TwoForm, tol: float = 1e-9) -> HyperhermitianMatrix:
    n = alpha.n
    mat = _bridge_matrix(n)
    iu = np.triu_indices(2 * n, 1)
    rhs = np.concatenate([alpha.coeffs[iu].real, alpha.coeffs[iu].imag])
    params, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    resid = np.abs(mat @ params - rhs).max()
    if resid > tol * max(1.0, np.abs(rhs).max()):
        raise ValueError(f"2-form is not of hyperhermitian type (residual {resid:.3e})")
    e = np.zeros((n, n, 4))
    for coef, basis in zip(params, _hyperhermitian_basis(n)):
        e += coef * basis.entries
    return HyperhermitianMatrix(e, tol=1e-9)


@functools.lru_cache(maxsize=None)
def density_table(n: int, m: int) -> tuple:
    """Expansion of top(alpha_1 ^ ... ^ alpha_m ^ beta^{n-m}).

    Returns (pairs, weights): pairs is an (T, m, 2) int array of index pairs
    i<j, one per slot, and the top coefficient equals
    sum_t weights[t] * prod_s c^{(s)}[pairs[t, s, 0], pairs[t, s, 1]].
    """
    d = 2 * n
    all_pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    rest = beta_power(n, n - m)
    rows, weights = [], []
    for combo in itertools.product(all_pairs, repeat=m):
        used = [x for p in combo for x in p]
        if len(set(used)) != len(used):
            continue
        head = Multivector.basis(n, *used)
        w = top_coefficient(wedge(head, rest))
        if w:
            rows.append(combo)
            weights.append(w)
    return np.array(rows, dtype=int).reshape(-1, m, 2), np.array(weights, dtype=float)


def mixed_top_density(coeff_arrays) -> np.ndarray:
    """Vectorized top(alpha_1 ^ ... ^ alpha_m ^ beta^{n-m}) over many points.

    Each element of coeff_arrays has shape (..., 2n, 2n).
    """
    m = len(coeff_arrays)
    n = coeff_arrays[0].shape[-1] // 2
    pairs, weights = density_table(n, m)
    out = np.zeros(coeff_arrays[0].shape[:-2], dtype=complex)
    for t in range(len(weights)):
        term = weights[t]
        for s in range(m):
            term = term * coeff_arrays[s][..., pairs[t, s, 0], pairs[t, s, 1]]
        out = out + term
    return out
