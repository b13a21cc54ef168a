"""p-energies, the Hölder-type inequality and the variational Dirichlet solver."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import fft
from scipy.linalg import solve_banded

from .calculus import (GridField, GridSpec, RadialProfile, radial_cell_volumes,
                       radial_flux_constant, radial_half_points)
from .envelope import ConvergenceError, projection
from .hessian import (hessian_density, mixed_hessian_density, radial_density,
                      radial_is_msh)


def alpha_mp(m: int, p: float) -> float:
    return (p + 2) * ((p + 1) / p) ** (m - 1) - (p + 1)


def holder_constant(m: int, p: float, reading: str = "primary") -> float:
    """D_p of the energy inequality; D_1 = 1.

    "primary" is p^{p alpha/(p-1)}; "alternate" is p^{alpha-1}, the other
    way of parenthesizing the exponent.
    """
    if p == 1:
        return 1.0
    a = alpha_mp(m, p)
    if reading == "primary":
        return p ** (p * a / (p - 1))
    if reading == "alternate":
        return p ** (a - 1)
    raise ValueError(f"unknown reading {reading!r}")


def _check_nonpositive(values: np.ndarray, tol: float = 1e-12):
    if values.max() > tol * max(1.0, np.abs(values).max()):
        raise ValueError("energy needs u <= 0")


# ---------------------------------------------------------------- energy ---

def mutual_energy_p(u0, us, p: float) -> float:
    """int (-u0)^p Delta u_1 ^ ... ^ Delta u_m ^ beta^{n-m}."""
    us = list(us)
    if isinstance(u0, RadialProfile):
        for f in [u0] + us:
            _check_nonpositive(f.values)
            if abs(f.values[-1]) > 1e-12:
                raise ValueError("radial profile must vanish at the outer radius")
        dens = radial_density(*us)
        w = radial_cell_volumes(u0)[:-1]
        return float(np.sum((-u0.values[:-1]) ** p * dens * w))
    for f in [u0] + us:
        _check_nonpositive(f.values)
        if not _zero_on_shell(f):
            raise ValueError("grid function must vanish on the outer layer")
    dens = mixed_hessian_density(*us, margin=1)
    return float(np.sum(((-u0.core(1)) ** p * dens.values).ravel())) * u0.spec.cell_volume


def energy_p(u, m: int, p: float) -> float:
    return mutual_energy_p(u, [u] * m, p)


def _zero_on_shell(u: GridField, tol: float = 1e-12) -> bool:
    inner = np.zeros(u.values.shape, dtype=bool)
    inner[(slice(1, u.spec.N - 1),) * u.spec.dim] = True
    return bool(np.all(np.abs(u.values[~inner]) <= tol))


@dataclass
class EnergyReport:
    p: float
    m: int
    lhs: float
    energies: list
    alpha: float
    bound: float
    bound_alternate: float
    ratio: float
    violated: bool


def holder_check(u0, us, p: float, rtol: float = 1e-6) -> EnergyReport:
    """e_p(u0, ..., um) against D_p e_p(u0)^{p/(m+p)} prod e_p(uj)^{1/(m+p)}."""
    us = list(us)
    m = len(us)
    lhs = mutual_energy_p(u0, us, p)
    energies = [energy_p(f, m, p) for f in [u0] + us]
    prod = energies[0] ** (p / (m + p))
    for e in energies[1:]:
        prod *= e ** (1.0 / (m + p))
    a = alpha_mp(m, p)
    bound = holder_constant(m, p) * prod
    alt = holder_constant(m, p, "alternate") * prod
    ratio = lhs / bound if bound > 0 else (0.0 if lhs <= 0 else np.inf)
    return EnergyReport(p, m, lhs, energies, a, bound, alt, ratio,
                        lhs > bound * (1 + rtol))


def cauchy_schwarz_bound(u0, us, p: float = 1.0) -> tuple:
    """(lhs, prod e(u_j)^{1/(m+1)}) for the p = 1 inequality with D_1 = 1."""
    us = list(us)
    m = len(us)
    lhs = mutual_energy_p(u0, us, p)
    prod = 1.0
    for f in [u0] + us:
        prod *= energy_p(f, m, p) ** (1.0 / (m + 1))
    return lhs, prod


def _weighted_density(u, m: int) -> tuple:
    """(values, density, weights) on the points carrying Hessian mass."""
    if isinstance(u, RadialProfile):
        return u.values[:-1], radial_density(u, m=m), radial_cell_volumes(u)[:-1]
    dens = hessian_density(u, m, margin=1).values
    return u.core(1), dens, np.full(dens.shape, u.spec.cell_volume)


def _shift(u, v, t: float):
    if isinstance(u, RadialProfile):
        return u.with_values(u.values + t * v.values)
    return GridField(u.spec, u.values + t * v.values)


def energy_derivative(u, v, m: int, t: float = 0.0) -> float:
    """Exact discrete d/dt E_1(u + t v): (m+1) int (-v) (Delta u)^m ^ beta^{n-m}.

    Works for radial profiles and grid fields; v must vanish on the boundary.
    """
    w = _shift(u, v, t) if t else u
    _, dens, wts = _weighted_density(w, m)
    vv = v.values[:-1] if isinstance(v, RadialProfile) else v.core(1)
    return float((m + 1) * np.sum(-vv * dens * wts))


def energy_fd_derivative(u, v, m: int, t: float = 1e-4,
                         project: bool = True) -> float:
    """One-sided quotient (E_1(P(u + t v)) - E_1(u)) / t.

    With project=False the projection is skipped, which is only meaningful
    when u + t v stays m-sh.
    """
    w = _shift(u, v, t)
    if project:
        w = projection(w, m)
    return (energy_p(w, m, 1.0) - energy_p(u, m, 1.0)) / t


def capacity_energy_check(phi: RadialProfile, r: float, m: int, p: float,
                          cap: float) -> tuple:
    """(int_{B(r)} Hessian mass of phi, D_p cap^{p/(p+m)} E_p(phi)^{m/(p+m)})."""
    dens = radial_density(phi, m=m)
    vol = radial_cell_volumes(phi)[:-1]
    mask = phi.s[:-1] <= r * (1 + 1e-12)
    lhs = float(np.sum(np.where(mask, dens * vol, 0.0)))
    e = energy_p(phi, m, p)
    rhs = holder_constant(m, p) * cap ** (p / (p + m)) * e ** (m / (p + m))
    return lhs, rhs


# ------------------------------------------------------ variational solve ---

@dataclass
class VariationalProblem:
    """Find u in E_1 with (Delta u)^m ^ beta^{n-m} = mu (mu is a density).

    mode "radial": mu holds values at s_0..s_K.  mode "grid": n = m = 1,
    mu holds values on the full grid (the outer layer is ignored).
    """
    n: int
    m: int
    mu: np.ndarray
    mode: str = "radial"
    R: float = 1.0
    spec: GridSpec | None = None
    tol: float = 1e-10
    max_iter: int = 200
    continuation: tuple = ()
    armijo_c: float = 1e-4
    max_halvings: int = 60

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if not 1 <= self.m <= self.n:
            raise ValueError("need 1 <= m <= n")
        if not np.all(np.isfinite(self.mu)) or self.mu.min() < 0:
            raise ValueError("mu must be a finite nonnegative density")
        if self.mode == "grid":
            if self.spec is None or self.spec.n != 1 or self.m != 1:
                raise ValueError("grid mode supports n = m = 1 only")
            if self.mu.shape != (self.spec.N,) * self.spec.dim:
                raise ValueError("mu must be sampled on the full grid")
        elif self.mode != "radial":
            raise ValueError(f"unknown mode {self.mode!r}")
        elif self.mu.ndim != 1 or self.mu.size < 3:
            raise ValueError("radial mu must be a 1-d array over s_0..s_K")


@dataclass
class SolveReport:
    solution: object
    converged: bool
    iterations: int
    residuals: list
    functional: list
    energy: float
    wall_time: float
    stages: list = field(default_factory=list)


def functional_F(u, prob: VariationalProblem) -> float:
    """F_mu(u) = E_1(u)/(m+1) + int u dmu for an admissible u."""
    vals, dens, wts = _weighted_density(u, prob.m)
    mu = prob.mu[:-1] if prob.mode == "radial" else prob.mu[(slice(1, -1),) * prob.mu.ndim]
    e = float(np.sum(-vals * dens * wts))
    return e / (prob.m + 1) + float(np.sum(vals * mu * wts))


class _Radial:
    def __init__(self, prob: VariationalProblem, mu: np.ndarray):
        self.n, self.m = prob.n, prob.m
        self.K = mu.size - 1
        self.ds = prob.R / self.K
        self.proto = RadialProfile(self.n, self.ds, np.zeros(self.K + 1))
        self.vol = radial_cell_volumes(self.proto)[:-1]
        self.sh = radial_half_points(self.proto)
        self.c = radial_flux_constant(self.n, self.m)
        self.mu = mu[:-1]
        self.mass = float(np.sum(self.mu * self.vol))

    def profile(self, u):
        return self.proto.with_values(u)

    def density(self, u):
        return radial_density(self.profile(u), m=self.m)

    def functional(self, u):
        w = np.diff(u) / self.ds
        e = self.c * self.ds * np.sum(self.sh ** (4 * self.n - self.m) * w ** (self.m + 1))
        return e / (self.m + 1) + float(np.sum(u[:-1] * self.mu * self.vol))

    def gradient(self, u):
        g = np.zeros_like(u)
        g[:-1] = self.vol * (self.mu - self.density(u))
        return g

    def direction(self, u, g):
        w = np.abs(np.diff(u)) / self.ds
        floor = max(1e-8, 1e-3 * float(w.max(initial=0.0)))
        wt = (self.m * self.c * self.sh ** (4 * self.n - self.m)
              * np.maximum(w, floor) ** (self.m - 1) / self.ds)
        K = self.K
        diag = np.zeros(K)
        diag += wt
        diag[1:] += wt[:-1]
        diag += 1e-10 * diag.max() * self.vol / self.vol.max()
        ab = np.zeros((3, K))
        ab[0, 1:] = -wt[:-1]
        ab[1] = diag
        ab[2, :-1] = -wt[:-1]
        d = np.zeros_like(u)
        d[:-1] = solve_banded((1, 1), ab, -g[:-1])
        return d

    def project(self, u):
        p = self.profile(u)
        if radial_is_msh(p, self.m, tol=0.0).verdict:
            return u
        return projection(p, self.m).values

    def residual(self, u):
        return float(np.sum(np.abs(self.density(u) - self.mu) * self.vol)) / self.mass


class _Grid:
    def __init__(self, prob: VariationalProblem, mu: np.ndarray):
        self.spec = prob.spec
        N, dim, h = self.spec.N, self.spec.dim, self.spec.h
        self.core = (slice(1, N - 1),) * dim
        self.mu = mu[self.core]
        self.cell = self.spec.cell_volume
        self.mass = float(self.mu.sum()) * self.cell
        k = np.arange(1, N - 1)
        lam1 = (2 - 2 * np.cos(np.pi * k / (N - 1))) / h ** 2
        lam = sum(np.meshgrid(*([lam1] * dim), indexing="ij", sparse=True))
        self.eig = lam + 1e-3 * lam1.min()

    def field(self, u):
        return GridField(self.spec, u)

    def lap(self, u):
        return hessian_density(self.field(u), 1, margin=1).values

    def functional(self, u):
        c = u[self.core]
        return float(np.sum(0.5 * (-c) * self.lap(u) + c * self.mu)) * self.cell

    def gradient(self, u):
        g = np.zeros_like(u)
        g[self.core] = self.cell * (self.mu - self.lap(u))
        return g

    def direction(self, u, g):
        rhs = -g[self.core] / self.cell
        t = fft.dstn(rhs, type=1)
        d = np.zeros_like(u)
        d[self.core] = fft.idstn(t / self.eig, type=1)
        return d

    def project(self, u):
        lap = self.lap(u)
        if lap.min() >= 0:
            return u
        return projection(self.field(u), 1).values

    def residual(self, u):
        return float(np.sum(np.abs(self.lap(u) - self.mu))) * self.cell / self.mass

    def density(self, u):
        return self.lap(u)


def _descend(model, u, prob: VariationalProblem, residuals, functional):
    F = model.functional(u)
    for it in range(1, prob.max_iter + 1):
        g = model.gradient(u)
        d = model.direction(u, g)
        slope = float(np.sum(g * d))
        if slope >= 0:
            d, slope = -g, -float(np.sum(g * g))
        tau = 1.0
        for _ in range(prob.max_halvings):
            cand = model.project(u + tau * d)
            Fc = model.functional(cand)
            if Fc <= F + prob.armijo_c * tau * slope:
                break
            tau *= 0.5
        else:
            return u, it, False
        u, F = cand, Fc
        functional.append(F)
        residuals.append(model.residual(u))
        if residuals[-1] < prob.tol:
            return u, it, True
    return u, prob.max_iter, False


def variational_solve(prob: VariationalProblem, strict: bool = False) -> SolveReport:
    """Minimize F(u) = E_1(u)/(m+1) + int u mu over discrete m-sh u.

    Each step is a preconditioned descent direction (a Newton step for the
    radial flux energy, a screened Poisson solve on the grid) followed by
    projection onto the m-sh cone and Armijo backtracking, so the
    functional decreases monotonically.
    """
    start = time.perf_counter()
    levels = list(prob.continuation) + [None]
    residuals: list = []
    functional: list = []
    stages = []
    u = None
    total_it = 0
    ok = False
    for level in levels:
        mu = prob.mu if level is None else np.minimum(prob.mu, level)
        model = _Radial(prob, mu) if prob.mode == "radial" else _Grid(prob, mu)
        if u is None:
            u = np.zeros(prob.mu.shape)
        res_stage: list = []
        fun_stage: list = []
        if model.mass <= 0:
            # F >= 0 with equality only at u = 0
            u, it, ok = np.zeros(prob.mu.shape), 0, True
            res_stage.append(0.0)
            fun_stage.append(0.0)
        else:
            u, it, ok = _descend(model, u, prob, res_stage, fun_stage)
        total_it += it
        stages.append({"level": level, "iterations": it, "converged": ok,
                       "residual": res_stage[-1] if res_stage else None})
        residuals += res_stage
        functional += fun_stage
    if prob.mode == "radial":
        sol = model.profile(u)
        energy = energy_p(sol, prob.m, 1.0)
    else:
        sol = model.field(u)
        energy = energy_p(sol, 1, 1.0)
    if strict and not ok:
        raise ConvergenceError(
            f"variational solve stalled after {total_it} iterations "
            f"(residual {residuals[-1] if residuals else float('nan'):.3e})")
    return SolveReport(sol, ok, total_it, residuals, functional, energy,
                       time.perf_counter() - start, stages)


def jacobi_poisson(spec: GridSpec, mu: np.ndarray, tol: float = 1e-10,
                   max_iter: int = 200000) -> GridField:
    """Plain Jacobi relaxation for Lap_h u = mu, u = 0 on the outer layer."""
    N, dim, h = spec.N, spec.dim, spec.h
    core = (slice(1, N - 1),) * dim
    u = np.zeros((N,) * dim)
    rhs = mu[core] * h * h
    for _ in range(max_iter):
        acc = np.zeros(rhs.shape)
        for a in range(dim):
            for o in (-1, 1):
                idx = [slice(1, N - 1)] * dim
                idx[a] = slice(1 + o, N - 1 + o)
                acc += u[tuple(idx)]
        new = (acc - rhs) / (2 * dim)
        change = float(np.abs(new - u[core]).max())
        u[core] = new
        if change < tol:
            return GridField(spec, u)
    raise ConvergenceError("Jacobi relaxation did not converge")


def mp_estimate(mu: np.ndarray, n: int, m: int, p: float, samples: list,
                R: float = 1.0) -> dict:
    """Largest observed int (-phi)^p dmu / E_p(phi)^{p/(p+m)} over radial samples."""
    K = mu.size - 1
    proto = RadialProfile(n, R / K, np.zeros(K + 1))
    vol = radial_cell_volumes(proto)[:-1]
    ratios = []
    for phi in samples:
        if not isinstance(phi, RadialProfile):
            phi = proto.with_values(phi)
        e = energy_p(phi, m, p)
        if e <= 0:
            continue
        num = float(np.sum((-phi.values[:-1]) ** p * mu[:-1] * vol))
        ratios.append(num / e ** (p / (p + m)))
    if not ratios:
        raise ValueError("no sample with positive energy")
    return {"A": max(ratios), "samples": len(ratios), "p": p, "m": m}


def random_msh_profile(n: int, R: float, K: int, rng: np.random.Generator,
                       terms: int = 3) -> RadialProfile:
    """Random smooth radial m-sh profile vanishing at R (any m <= n)."""
    s = np.linspace(0.0, R, K + 1)
    u = np.zeros_like(s)
    for _ in range(terms):
        a = rng.uniform(0.1, 1.0)
        b = rng.uniform(2.0, 6.0)
        u += a * (s ** b - R ** b)
    c = rng.uniform(0.5, 3.0)
    u += rng.uniform(0.0, 1.0) * (np.exp(c * (s * s - R * R)) - 1.0)
    return RadialProfile(n, R / K, u)

