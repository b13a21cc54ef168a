"""m-Hessian densities, m-subharmonicity checks and mass integrals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calculus import (GridField, GridSpec, RadialProfile, baston,
                       radial_cell_volumes, radial_eigenvalues, radial_flux,
                       radial_sigma)
from .exterior import mixed_top_density, twoform_from_hyperhermitian
from .quaternion import (HyperhermitianMatrix, elementary_symmetric,
                         hyperhermitian_eigenvalues)

# (Delta u)^m ^ beta^{n-m} = DENSITY * Omega_{2n}; beta^n = n! Omega_{2n}.


def moore_constant(n: int) -> float:
    """c0 with density((Delta u)^n) = c0 * moore_det(quaternionic Hessian)."""
    return 2 ** n * math.factorial(n)


@dataclass
class DensityField:
    spec: GridSpec
    values: np.ndarray
    margin: int

    def coords(self) -> list:
        return self.spec.coords(self.margin)


@dataclass
class MshReport:
    minima: dict
    verdict: bool
    worst_k: int | None
    worst_point: tuple | None
    tol: float
    samples: int


def _density_from_coeffs(coeffs: list) -> np.ndarray:
    return mixed_top_density(coeffs).real


def hessian_density(u: GridField, m: int, margin: int | None = None) -> DensityField:
    n = u.spec.n
    _check_order(n, m)
    f = baston(u, margin)
    return DensityField(u.spec, _density_from_coeffs([f.coeffs] * m), f.margin)


def mixed_hessian_density(*us: GridField, margin: int | None = None) -> DensityField:
    if not us:
        raise ValueError("need at least one function")
    spec = us[0].spec
    if any(u.spec != spec for u in us):
        raise ValueError("fields live on different grids")
    _check_order(spec.n, len(us))
    k = max(u.margin for u in us) + 1 if margin is None else margin
    coeffs = [baston(u, k).coeffs for u in us]
    return DensityField(spec, _density_from_coeffs(coeffs), k)


def density_via_moore(coeffs: np.ndarray, n: int) -> float:
    """m = n fast path: c0 * moore_det of the matrix behind one 2-form."""
    from .exterior import TwoForm, hyperhermitian_from_twoform
    a = hyperhermitian_from_twoform(TwoForm(coeffs))
    # Delta u_A = 4 twoform(A) with Hess(u_A) = 4A, so a is the Hessian itself.
    return moore_constant(n) * float(np.prod(hyperhermitian_eigenvalues(a)))


def _check_order(n: int, m: int):
    if not 1 <= m <= n:
        raise ValueError(f"order m={m} outside 1..{n}")


def cone_densities(coeffs: np.ndarray, n: int, m: int) -> dict:
    """Vectorized alpha^k ^ beta^{n-k} / beta^n for k = 1..m."""
    nf = math.factorial(n)
    return {k: _density_from_coeffs([coeffs] * k) / nf for k in range(1, m + 1)}


def random_cone_forms(n: int, m: int, count: int, rng: np.random.Generator) -> list:
    """Unit-normalized coefficient matrices of random elements of the m-cone.

    Drawn as 2-forms of random hyperhermitian matrices whose spectrum passes
    the sigma_k >= 0 (k <= m) test.
    """
    out = []
    while len(out) < count:
        a = HyperhermitianMatrix.random(n, rng)
        a = a + HyperhermitianMatrix.identity(n) * float(rng.uniform(0.0, 2.0 * n))
        lam = hyperhermitian_eigenvalues(a)
        if all(elementary_symmetric(lam, k) >= 0 for k in range(1, m + 1)):
            c = twoform_from_hyperhermitian(a).coeffs
            out.append(c / np.abs(c).max())
    return out


def is_msh(u: GridField, m: int, tol: float = 1e-8, seed: int = 0,
           samples: int = 8, margin: int | None = None) -> MshReport:
    """Cone test of Delta u at every core point plus sampled m-positivity.

    Densities are normalized by the field-wide max |c_ij| so ``tol`` is
    scale-free.
    """
    n = u.spec.n
    _check_order(n, m)
    f = baston(u, margin)
    scale = float(np.abs(f.coeffs).max())
    c = f.coeffs / scale if scale > 0 else f.coeffs
    minima: dict = {}
    worst = (np.inf, None, None)
    for k, dens in cone_densities(c, n, m).items():
        idx = np.unravel_index(np.argmin(dens), dens.shape)
        minima[k] = float(dens[idx])
        if dens[idx] < worst[0]:
            worst = (float(dens[idx]), k, idx)
    if m >= 2 and samples > 0:
        rng = np.random.default_rng(seed)
        nf = math.factorial(n)
        pos = []
        for _ in range(samples):
            forms = random_cone_forms(n, m, m - 1, rng)
            arrays = [c] + [np.broadcast_to(a, c.shape) for a in forms]
            pos.append(_density_from_coeffs(arrays) / nf)
        dens = np.min(pos, axis=0)
        idx = np.unravel_index(np.argmin(dens), dens.shape)
        minima["sampled"] = float(dens[idx])
        if dens[idx] < worst[0]:
            worst = (float(dens[idx]), "sampled", idx)
    verdict = all(v >= -tol for v in minima.values())
    point = None
    if worst[2] is not None:
        ax = u.spec.axis[f.margin:u.spec.N - f.margin]
        point = tuple(float(ax[i]) for i in worst[2])
    return MshReport(minima, verdict, None if verdict else worst[1], point, tol,
                     samples if m >= 2 else 0)


def total_mass(d: DensityField, region=None) -> float:
    """Midpoint rule sum of density * cell volume over the selected points."""
    vals = d.values
    if region is not None:
        mask = np.broadcast_to(region(d.coords()), vals.shape)
        vals = np.where(mask, vals, 0.0)
    return float(np.sum(vals.ravel())) * d.spec.cell_volume


def _vanishes_near_boundary(u: GridField, layers: int = 2, tol: float = 1e-14) -> bool:
    vals = u.values
    inner = np.zeros(vals.shape, dtype=bool)
    inner[(slice(layers, u.spec.N - layers),) * u.spec.dim] = True
    return bool(np.all(np.abs(vals[~inner]) <= tol * max(1.0, np.abs(vals).max())))


def stokes_check(u: GridField, v: GridField, ws=()) -> tuple:
    """(int v Delta u ^ T, int u Delta v ^ T), T = Delta w_1 ^ ... ^ beta^{n-m}."""
    for f in (u, v):
        if not _vanishes_near_boundary(f):
            raise ValueError("support touches the grid boundary")
    du = mixed_hessian_density(u, *ws, margin=1)
    dv = mixed_hessian_density(v, *ws, margin=1)
    cell = u.spec.cell_volume
    left = float(np.sum((v.core(1) * du.values).ravel())) * cell
    right = float(np.sum((u.core(1) * dv.values).ravel())) * cell
    return left, right


@dataclass
class ComparisonReport:
    mass_u: float
    mass_v: float
    points: int
    violated: bool
    tol: float


def comparison_check(u: GridField, v: GridField, m: int,
                     tol: float = 1e-9) -> ComparisonReport:
    """Masses of (Delta u)^m and (Delta v)^m over {u < v}.

    Requires u >= v on the two outer layers of the grid.
    """
    spec = u.spec
    inner = np.zeros(u.values.shape, dtype=bool)
    inner[(slice(2, spec.N - 2),) * spec.dim] = True
    gap = (u.values - v.values)[~inner]
    if gap.min() < -tol * max(1.0, np.abs(u.values).max()):
        raise ValueError("precondition u >= v near the boundary fails")
    du = hessian_density(u, m, margin=1)
    dv = hessian_density(v, m, margin=1)
    mask = u.core(1) < v.core(1)
    mu = float(np.sum(np.where(mask, du.values, 0.0).ravel())) * spec.cell_volume
    mv = float(np.sum(np.where(mask, dv.values, 0.0).ravel())) * spec.cell_volume
    scale = max(1.0, abs(mu), abs(mv))
    return ComparisonReport(mu, mv, int(mask.sum()), mv > mu + tol * scale, tol)


# ---------------------------------------------------------------- radial ---

def radial_density(*profiles: RadialProfile, m: int | None = None) -> np.ndarray:
    """Conservative (flux-form) mixed density at s_0..s_{K-1}.

    The mass of the dual shell around s_k is F_{k+1/2} - F_{k-1/2}, so the
    discrete integral telescopes to the boundary flux.
    """
    p0 = profiles[0]
    n = p0.n
    m = len(profiles) if m is None else m
    if len(profiles) == 1 and m > 1:
        profiles = profiles * m
    _check_order(n, m)
    flux = radial_flux(list(profiles), n, m)
    jumps = np.diff(np.concatenate([[0.0], flux]))
    return jumps / radial_cell_volumes(p0)[:-1]


def radial_density_eig(p: RadialProfile, m: int) -> np.ndarray:
    """Pointwise density 2^m m! (n-m)! sigma_m(lambda) from central differences."""
    _check_order(p.n, m)
    lam_rad, lam_tan = radial_eigenvalues(p)
    return (2 ** m * math.factorial(m) * math.factorial(p.n - m)
            * radial_sigma(lam_rad, lam_tan, p.n, m))


def radial_total_mass(p: RadialProfile, density: np.ndarray, region=None) -> float:
    w = radial_cell_volumes(p)[:-1]
    vals = density * w
    if region is not None:
        vals = np.where(region(p.s[:-1]), vals, 0.0)
    return float(np.sum(vals))


def radial_is_msh(p: RadialProfile, m: int, tol: float = 1e-10) -> MshReport:
    """Flux-form cone test: u nondecreasing and sigma_k-fluxes nondecreasing."""
    slopes = np.diff(p.values) / p.ds
    scale = max(1e-300, float(np.abs(slopes).max()))
    minima = {"slope": float(slopes.min() / scale)}
    for k in range(1, m + 1):
        d = radial_density(p.with_values(p.values / scale), m=k)
        minima[k] = float(d.min())
    verdict = all(v >= -tol for v in minima.values())
    worst = min(minima, key=minima.get)
    return MshReport(minima, verdict, None if verdict else worst, None, tol, 0)


def radial_comparison_check(u: RadialProfile, v: RadialProfile, m: int,
                            tol: float = 1e-9) -> ComparisonReport:
    if u.values[-1] < v.values[-1] - tol:
        raise ValueError("precondition u >= v at the outer radius fails")
    du = radial_density(u, m=m)
    dv = radial_density(v, m=m)
    mask = u.values[:-1] < v.values[:-1]
    w = radial_cell_volumes(u)[:-1]
    mu = float(np.sum(np.where(mask, du * w, 0.0)))
    mv = float(np.sum(np.where(mask, dv * w, 0.0)))
    scale = max(1.0, abs(mu), abs(mv))
    return ComparisonReport(mu, mv, int(mask.sum()), mv > mu + tol * scale, tol)


def normalization_metadata(n: int, m: int) -> dict:
    return {
        "density_convention": "(Delta u)^m ^ beta^(n-m) = density * Omega_2n",
        "beta_power_top_coefficient": math.factorial(n),
        "quadratic_norm_density": 8 ** m * math.factorial(n),
        "moore_constant": moore_constant(n),
        "n": n,
        "m": m,
    }

