"""Finite-difference calculus on R^{4n} and its radial reduction.

Grid operators return arrays over a *core* box: the points at least
``margin`` cells away from every face.  Second-order stencils need one cell,
so the Baston form of a raw field lives at margin 1; every further
first-order operator consumes one more layer.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .exterior import _merge_sign


@functools.lru_cache(maxsize=None)
def nabla_table(n: int) -> np.ndarray:
    """N[j, alpha, a]: nabla_{j alpha} = sum_a N[j, alpha, a] d/dx_a."""
    t = np.zeros((2 * n, 2, 4 * n), dtype=complex)
    for l in range(n):
        x = 4 * l
        t[2 * l, 0, x], t[2 * l, 0, x + 1] = 1, 1j
        t[2 * l, 1, x + 2], t[2 * l, 1, x + 3] = -1, -1j
        t[2 * l + 1, 0, x + 2], t[2 * l + 1, 0, x + 3] = 1, -1j
        t[2 * l + 1, 1, x], t[2 * l + 1, 1, x + 1] = 1, -1j
    return t


@functools.lru_cache(maxsize=None)
def baston_table(n: int) -> np.ndarray:
    """T[i, j, a, b], symmetric in (a, b), with 2 Delta_ij u = sum T d_a d_b u."""
    nt = nabla_table(n)
    t = (np.einsum("ia,jb->ijab", nt[:, 0], nt[:, 1])
         - np.einsum("ia,jb->ijab", nt[:, 1], nt[:, 0]))
    return 0.5 * (t + np.swapaxes(t, 2, 3))


def baston_from_hessian(hess: np.ndarray, n: int) -> np.ndarray:
    """Coefficient matrix c (c_ij = 2 Delta_ij u) from real second partials."""
    return np.einsum("ijab,...ab->...ij", baston_table(n), hess)


@dataclass(frozen=True)
class GridSpec:
    n: int
    L: float
    N: int

    def __post_init__(self):
        if self.N < 5 or self.N % 2 == 0:
            raise ValueError("N must be odd and at least 5")
        if self.n < 1 or self.L <= 0:
            raise ValueError("need n >= 1 and L > 0")

    @property
    def dim(self) -> int:
        return 4 * self.n

    @property
    def h(self) -> float:
        return 2 * self.L / (self.N - 1)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.N)

    def coords(self, margin: int = 0) -> list:
        """Sparse (broadcastable) coordinate arrays of the core box."""
        ax = self.axis[margin:self.N - margin]
        out = []
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = ax.size
            out.append(ax.reshape(shape))
        return out

    def radius(self, margin: int = 0) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords(margin)))

    def sample(self, func) -> "GridField":
        return GridField(self, np.asarray(func(self.coords()), dtype=float)
                         * np.ones((self.N,) * self.dim))

    def core_shape(self, margin: int) -> tuple:
        return (self.N - 2 * margin,) * self.dim


@dataclass
class GridField:
    spec: GridSpec
    values: np.ndarray
    margin: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.spec.N,) * self.spec.dim:
            raise ValueError("values do not match the grid")
        if not np.all(np.isfinite(self.core())):
            raise ValueError("grid field has non-finite values")

    def core(self, margin: int | None = None) -> np.ndarray:
        k = self.margin if margin is None else margin
        return self.values[(slice(k, self.spec.N - k),) * self.spec.dim]

    def __add__(self, other: "GridField") -> "GridField":
        _same_spec(self, other)
        return GridField(self.spec, self.values + other.values,
                         max(self.margin, other.margin))

    def __sub__(self, other: "GridField") -> "GridField":
        return self + other * -1.0

    def __mul__(self, t) -> "GridField":
        if isinstance(t, GridField):
            _same_spec(self, t)
            return GridField(self.spec, self.values * t.values,
                             max(self.margin, t.margin))
        return GridField(self.spec, self.values * t, self.margin)

    __rmul__ = __mul__


def _same_spec(a, b):
    if a.spec != b.spec:
        raise ValueError("fields live on different grids")


def _view(arr: np.ndarray, shrink: int, offsets: dict) -> np.ndarray:
    """Sub-box of ``arr`` shrunk by ``shrink`` cells, shifted by ``offsets``."""
    idx = []
    for a, size in enumerate(arr.shape):
        o = offsets.get(a, 0)
        idx.append(slice(shrink + o, size - shrink + o))
    return arr[tuple(idx)]


def second_partial(arr: np.ndarray, h: float, a: int, b: int) -> np.ndarray:
    """d_a d_b on the box shrunk by one cell (3-point / 4-point cross)."""
    if a == b:
        return (_view(arr, 1, {a: 1}) - 2 * _view(arr, 1, {})
                + _view(arr, 1, {a: -1})) / (h * h)
    return (_view(arr, 1, {a: 1, b: 1}) - _view(arr, 1, {a: 1, b: -1})
            - _view(arr, 1, {a: -1, b: 1}) + _view(arr, 1, {a: -1, b: -1})) / (4 * h * h)


def first_partial(arr: np.ndarray, h: float, a: int) -> np.ndarray:
    return (_view(arr, 1, {a: 1}) - _view(arr, 1, {a: -1})) / (2 * h)


@dataclass
class TwoFormField:
    spec: GridSpec
    coeffs: np.ndarray  # core shape + (2n, 2n)
    margin: int


def baston(u: GridField, margin: int | None = None) -> TwoFormField:
    """Delta u on the core at ``margin`` (default: one layer inside u's)."""
    spec = u.spec
    k = u.margin + 1 if margin is None else margin
    if k < u.margin + 1:
        raise ValueError("Baston form needs one valid layer outside the core")
    src = u.core(k - 1)
    table = baston_table(spec.n)
    d = spec.dim
    out = np.zeros(spec.core_shape(k) + (2 * spec.n, 2 * spec.n), dtype=complex)
    for a in range(d):
        for b in range(a, d):
            w = table[:, :, a, b] * (1 if a == b else 2)
            if not np.any(w):
                continue
            out += second_partial(src, spec.h, a, b)[..., None, None] * w
    return TwoFormField(spec, out, k)


def real_hessian_at(u: GridField, index: tuple) -> np.ndarray:
    """Finite-difference real Hessian at one grid point."""
    spec = u.spec
    d = spec.dim
    box = u.values[tuple(slice(i - 1, i + 2) for i in index)]
    hess = np.zeros((d, d))
    for a in range(d):
        for b in range(a, d):
            hess[a, b] = hess[b, a] = second_partial(box, spec.h, a, b).item()
    return hess


def nabla(u: GridField, j: int, alpha: int) -> np.ndarray:
    """nabla_{j alpha} u on the core one layer inside u's margin."""
    return _nabla_array(u.core(), u.spec.h, u.spec.n, j, alpha)


def _nabla_array(arr, h, n, j, alpha):
    row = nabla_table(n)[j, alpha]
    out = np.zeros(tuple(s - 2 for s in arr.shape), dtype=complex)
    for a in np.nonzero(row)[0]:
        out += row[a] * first_partial(arr, h, a)
    return out


@dataclass
class FormField:
    """sum_I f_I omega^I with grid coefficients on a common core box."""
    spec: GridSpec
    degree: int
    margin: int
    terms: dict = field(default_factory=dict)

    @classmethod
    def from_function(cls, u: GridField) -> "FormField":
        return cls(u.spec, 0, u.margin, {(): u.core().astype(complex)})

    @classmethod
    def from_twoform_field(cls, f: TwoFormField) -> "FormField":
        d = 2 * f.spec.n
        terms = {(i, j): f.coeffs[..., i, j] for i in range(d) for j in range(i + 1, d)}
        return cls(f.spec, 2, f.margin, terms)

    def shrink(self, margin: int) -> "FormField":
        cut = margin - self.margin
        if cut < 0:
            raise ValueError("cannot grow a core box")
        return FormField(self.spec, self.degree, margin,
                         {k: _view(v, cut, {}) for k, v in self.terms.items()})

    def max_abs(self) -> float:
        return max((float(np.abs(v).max()) for v in self.terms.values()), default=0.0)

    def __sub__(self, other: "FormField") -> "FormField":
        k = max(self.margin, other.margin)
        a, b = self.shrink(k), other.shrink(k)
        zero = np.zeros(self.spec.core_shape(k), dtype=complex)
        keys = set(a.terms) | set(b.terms)
        return FormField(self.spec, self.degree, k,
                         {key: a.terms.get(key, zero) - b.terms.get(key, zero)
                          for key in keys})

    def __add__(self, other: "FormField") -> "FormField":
        k = max(self.margin, other.margin)
        a, b = self.shrink(k), other.shrink(k)
        zero = np.zeros(self.spec.core_shape(k), dtype=complex)
        keys = set(a.terms) | set(b.terms)
        return FormField(self.spec, self.degree, k,
                         {key: a.terms.get(key, zero) + b.terms.get(key, zero)
                          for key in keys})


def _d_alpha(f: FormField, alpha: int) -> FormField:
    n, h = f.spec.n, f.spec.h
    out: dict = {}
    for key, arr in f.terms.items():
        for k in range(2 * n):
            if k in key:
                continue
            new = tuple(sorted((k,) + key))
            val = _merge_sign((k,), key) * _nabla_array(arr, h, n, k, alpha)
            out[new] = out[new] + val if new in out else val
    return FormField(f.spec, f.degree + 1, f.margin + 1, out)


def d0(f) -> FormField:
    if isinstance(f, GridField):
        f = FormField.from_function(f)
    return _d_alpha(f, 0)


def d1(f) -> FormField:
    if isinstance(f, GridField):
        f = FormField.from_function(f)
    return _d_alpha(f, 1)


def wedge_fields(a: FormField, b: FormField) -> FormField:
    k = max(a.margin, b.margin)
    a, b = a.shrink(k), b.shrink(k)
    out: dict = {}
    for ka, fa in a.terms.items():
        for kb, fb in b.terms.items():
            if set(ka) & set(kb):
                continue
            key = tuple(sorted(ka + kb))
            val = _merge_sign(ka, kb) * fa * fb
            out[key] = out[key] + val if key in out else val
    return FormField(a.spec, a.degree + b.degree, k, out)


def gamma(u: GridField, v: GridField) -> TwoFormField:
    """gamma(u, v) = (d0 u ^ d1 v - d1 u ^ d0 v) / 2 as a coefficient field."""
    _same_spec(u, v)
    n = u.spec.n
    k = max(u.margin, v.margin)
    u0 = [_nabla_array(u.core(k), u.spec.h, n, j, 0) for j in range(2 * n)]
    u1 = [_nabla_array(u.core(k), u.spec.h, n, j, 1) for j in range(2 * n)]
    v0 = [_nabla_array(v.core(k), v.spec.h, n, j, 0) for j in range(2 * n)]
    v1 = [_nabla_array(v.core(k), v.spec.h, n, j, 1) for j in range(2 * n)]
    c = np.zeros(u.spec.core_shape(k + 1) + (2 * n, 2 * n), dtype=complex)
    for i in range(2 * n):
        for j in range(2 * n):
            if i == j:
                continue
            g_ij = 0.5 * (u0[i] * v1[j] - u1[i] * v0[j])
            c[..., i, j] += g_ij
            c[..., j, i] -= g_ij
    return TwoFormField(u.spec, c, k + 1)


def mollifier_kernel(spec: GridSpec, eps: float) -> np.ndarray:
    r = int(math.floor(eps / spec.h + 1e-12))
    ax = np.arange(-r, r + 1) * spec.h
    grids = np.meshgrid(*([ax] * spec.dim), indexing="ij", sparse=True)
    rho2 = sum(g * g for g in grids) / eps ** 2
    k = np.where(rho2 < 1, (1 - rho2) ** 3, 0.0)
    return k / k.sum()


def mollify(u: GridField, eps: float) -> GridField:
    """Convolution with the normalized bump (1 - r^2/eps^2)^3.

    The result is valid on a core shrunk by the kernel radius.
    """
    spec = u.spec
    if eps < spec.h:
        raise ValueError("mollification radius must be at least one cell")
    r = int(math.floor(eps / spec.h + 1e-12))
    if 2 * (u.margin + r) >= spec.N - 1:
        raise ValueError("mollification radius too large for the grid")
    kernel = mollifier_kernel(spec, eps)
    smooth = fftconvolve(u.values, kernel, mode="same")
    k = u.margin + r
    values = u.values.copy()
    core = (slice(k, spec.N - k),) * spec.dim
    values[core] = smooth[core]
    return GridField(spec, values, k)


# ---------------------------------------------------------------- radial ---

def sphere_area(n: int) -> float:
    """|S^{4n-1}|."""
    return 2 * math.pi ** (2 * n) / math.factorial(2 * n - 1)


@dataclass
class RadialProfile:
    """u sampled at s_k = k ds, k = 0..K, in quaternionic dimension n."""
    n: int
    ds: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 3:
            raise ValueError("radial profile needs at least three samples")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("radial profile has non-finite values")

    @classmethod
    def sample(cls, n: int, R: float, K: int, func) -> "RadialProfile":
        s = np.linspace(0.0, R, K + 1)
        return cls(n, R / K, np.asarray(func(s), dtype=float) * np.ones_like(s))

    @property
    def K(self) -> int:
        return self.values.size - 1

    @property
    def R(self) -> float:
        return self.K * self.ds

    @property
    def s(self) -> np.ndarray:
        return np.arange(self.K + 1) * self.ds

    def with_values(self, values) -> "RadialProfile":
        return RadialProfile(self.n, self.ds, values)


def radial_eigenvalues(p: RadialProfile) -> tuple:
    """Quaternionic Hessian eigenvalues of u(|q|) at s_0..s_{K-1}.

    Radial value (multiplicity 1) is (u'' + 3u'/s)/2, tangential value
    (multiplicity n-1) is 2u'/s; both equal 2u''(0) at the origin.
    Central differences with even extension through s = 0.
    """
    u, ds = p.values, p.ds
    up = np.empty(p.K)
    upp = np.empty(p.K)
    up[0] = 0.0
    upp[0] = 2 * (u[1] - u[0]) / ds ** 2
    up[1:] = (u[2:] - u[:-2]) / (2 * ds)
    upp[1:] = (u[2:] - 2 * u[1:-1] + u[:-2]) / ds ** 2
    s = p.s[:-1]
    lam_tan = np.empty(p.K)
    lam_rad = np.empty(p.K)
    lam_tan[0] = lam_rad[0] = 2 * upp[0]
    lam_tan[1:] = 2 * up[1:] / s[1:]
    lam_rad[1:] = 0.5 * (upp[1:] + 3 * up[1:] / s[1:])
    return lam_rad, lam_tan


def radial_sigma(lam_rad, lam_tan, n: int, m: int):
    """sigma_m of the spectrum (lam_rad, lam_tan repeated n-1 times)."""
    return (math.comb(n - 1, m - 1) * lam_tan ** (m - 1) * lam_rad
            + math.comb(n - 1, m) * lam_tan ** m)


def radial_half_points(p: RadialProfile) -> np.ndarray:
    return (np.arange(p.K) + 0.5) * p.ds


def radial_cell_volumes(p: RadialProfile) -> np.ndarray:
    """Volumes of the dual shells [s_{k-1/2}, s_{k+1/2}] in R^{4n}, k = 0..K."""
    edges = np.concatenate([[0.0], radial_half_points(p), [p.R]])
    d = 4 * p.n
    return sphere_area(p.n) * (edges[1:] ** d - edges[:-1] ** d) / d


def radial_slopes(p: RadialProfile) -> np.ndarray:
    return np.diff(p.values) / p.ds


def radial_flux_constant(n: int, m: int) -> float:
    """Hessian mass inside B(s) equals this times s^{4n-m} u'(s)^m."""
    return sphere_area(n) * 4 ** (m - 1) * math.factorial(n - 1)


def radial_flux(profiles, n: int, m: int | None = None) -> np.ndarray:
    """Mixed flux at half points s_{k+1/2}: const * s^{4n-m} prod_i u_i'."""
    m = len(profiles) if m is None else m
    sh = radial_half_points(profiles[0])
    prod = np.ones_like(sh)
    for p in profiles:
        prod = prod * radial_slopes(p)
    return radial_flux_constant(n, m) * sh ** (4 * n - m) * prod
