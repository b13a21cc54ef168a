"""Relatively extremal functions, projections and radial Dirichlet solves.

Envelopes are Perron envelopes: every point is raised to the largest value
that keeps the local discrete Hessian in the m-cone, then clipped to the
obstacle.  Radial problems are solved exactly by policy iteration on the
flux-form cone conditions.  Grid problems use red-black projected sweeps,
stopping when the sup-norm change of a full sweep drops below tol.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .calculus import (GridField, GridSpec, RadialProfile, baston,
                       radial_cell_volumes, radial_flux_constant,
                       radial_half_points)
from .exterior import density_table
from .hessian import (hessian_density, radial_density, radial_total_mass,
                      total_mass)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class AnnulusConfig:
    r: float
    R: float
    n: int
    m: int

    def __post_init__(self):
        if not 0 < self.r < self.R:
            raise ValueError("need 0 < r < R")
        if not 1 <= self.m <= self.n:
            raise ValueError("need 1 <= m <= n")

    @property
    def a(self) -> float:
        return 2 * self.n / self.m


def extremal_radial(cfg: AnnulusConfig, K: int) -> RadialProfile:
    """Closed form max((R^{2-2a} - s^{2-2a}) / (r^{2-2a} - R^{2-2a}), -1)."""
    e = 2 - 2 * cfg.a
    s = np.linspace(0.0, cfg.R, K + 1)
    with np.errstate(divide="ignore"):
        v = (cfg.R ** e - s ** e) / (cfg.r ** e - cfg.R ** e)
    v = np.where(s > 0, v, -np.inf)
    return RadialProfile(cfg.n, cfg.R / K, np.maximum(v, -1.0))


def extremal_smooth_branch(cfg: AnnulusConfig, s: np.ndarray) -> np.ndarray:
    e = 2 - 2 * cfg.a
    return (cfg.R ** e - s ** e) / (cfg.r ** e - cfg.R ** e)


def extremal_capacity(cfg: AnnulusConfig) -> float:
    """Hessian mass of the closed-form extremal function (flux at s = R)."""
    e = 2 - 2 * cfg.a
    slope_scale = (2 * cfg.a - 2) / (cfg.r ** e - cfg.R ** e)
    return radial_flux_constant(cfg.n, cfg.m) * slope_scale ** cfg.m


@dataclass
class ObstacleProblem:
    """Envelope sup{u m-sh : u <= 0, u <= -1 on E}.

    mode "radial": domain B(R) sampled at K+1 radii, E = {s <= r} unless
    ``obstacle`` (a predicate on radii) is given.
    mode "grid": n = 1 box grid; ``domain`` and ``obstacle`` are predicates on
    the sparse coordinate arrays.  Points outside the domain hold 0.
    """
    n: int
    m: int
    mode: str = "radial"
    R: float = 1.0
    K: int = 400
    r: float | None = None
    obstacle: Callable | None = None
    spec: GridSpec | None = None
    domain: Callable | None = None
    tol: float = 1e-8
    max_iter: int = 200000
    omega: float | None = None

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise ValueError("need 1 <= m <= n")
        if self.mode not in ("radial", "grid"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "grid":
            if self.spec is None:
                raise ValueError("grid mode needs a GridSpec")
            if self.spec.n != self.n:
                raise ValueError("grid dimension differs from n")
        elif self.obstacle is None and self.r is None:
            raise ValueError("radial mode needs r or an obstacle predicate")

    def radial_obstacle_mask(self) -> np.ndarray:
        s = np.linspace(0.0, self.R, self.K + 1)
        if self.obstacle is not None:
            return np.asarray(self.obstacle(s), dtype=bool)
        return s <= self.r * (1 + 1e-12)

    def grid_masks(self) -> tuple:
        spec = self.spec
        shape = (spec.N,) * spec.dim
        coords = spec.coords()
        inside = np.ones(shape, dtype=bool)
        if self.domain is not None:
            inside &= np.broadcast_to(self.domain(coords), shape)
        inner = np.zeros(shape, dtype=bool)
        inner[(slice(1, spec.N - 1),) * spec.dim] = True
        inside &= inner
        if self.obstacle is None:
            if self.r is None:
                raise ValueError("grid mode needs r or an obstacle predicate")
            e = spec.radius() <= self.r * (1 + 1e-12)
        else:
            e = np.broadcast_to(self.obstacle(coords), shape)
        return inside, np.asarray(e, dtype=bool) & inside


@dataclass
class EnvelopeResult:
    solution: object
    iterations: int
    last_change: float
    converged: bool
    history: list = field(default_factory=list)


# ---------------------------------------------------------------- radial ---

def _radial_ratios(n: int, m: int, K: int) -> np.ndarray:
    """r[j-1, k]: flux sigma_j >= 0 at s_k  <=>  w_{k+1/2} >= r * w_{k-1/2}."""
    sh = (np.arange(K) + 0.5)
    out = np.zeros((m, K))
    for j in range(1, m + 1):
        out[j - 1, 1:] = (sh[:-1] / sh[1:]) ** ((4 * n - j) / j)
    return out


def _radial_bound(u: np.ndarray, ratios: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Largest admissible value at the indices idx (all < K)."""
    up = u[idx + 1]
    bound = up.copy()
    inner = idx > 0
    k = idx[inner]
    lo = u[k - 1]
    for r in ratios[:, k]:
        bound[inner] = np.minimum(bound[inner], (up[inner] + r * lo) / (1 + r))
    return bound


def radial_sweep(upper: np.ndarray, start: np.ndarray, n: int, m: int,
                 tol: float = 1e-8, max_iter: int = 200000) -> EnvelopeResult:
    """Largest radial m-sh profile below ``upper`` with u_K = upper_K.

    The envelope solves u_k = min(upper_k, bound_1(u)_k, ..., bound_m(u)_k)
    where each bound is a weighted neighbour average.  Every branch is a row
    of a tridiagonal M-matrix, so Howard policy iteration applies: fix the
    minimizing branch per point, solve the banded system, repeat until the
    branch choice is stable.  The iterates decrease monotonically.
    """
    from scipy.linalg import solve_banded
    K = upper.size - 1
    upper = np.asarray(upper, dtype=float)
    u = np.minimum(np.array(start, dtype=float), upper)
    u[K] = upper[K]
    ratios = _radial_ratios(n, m, K)
    idx = np.arange(K)
    # branch 0 pins u_k to the obstacle; branch j >= 1 is flux ratio j
    policy = np.zeros(K, dtype=int)
    change = np.inf
    history = []
    for it in range(1, max_iter + 1):
        cand = np.empty((m + 1, K))
        cand[0] = upper[:K]
        cand[1:, 0] = u[1]
        for j in range(m):
            r = ratios[j, 1:]
            cand[j + 1, 1:] = (u[2:] + r * u[:K - 1]) / (1 + r)
        best = cand.min(axis=0)
        # keep the current branch on ties so the iteration terminates
        keep = cand[policy, idx] <= best + 1e-14 * (1 + np.abs(best))
        new_policy = np.where(keep, policy, cand.argmin(axis=0))
        if it > 1 and np.array_equal(new_policy, policy):
            return EnvelopeResult(u, it, change, True, history)
        policy = new_policy
        ab = np.zeros((3, K + 1))
        rhs = np.zeros(K + 1)
        ab[1] = 1.0
        rhs[K] = upper[K]
        pinned = policy == 0
        rhs[:K][pinned] = upper[:K][pinned]
        for j in range(1, m + 1):
            rows = idx[policy == j]
            r = ratios[j - 1, rows]
            r = np.where(rows == 0, 0.0, r)
            ab[1, rows] = 1 + r
            ab[0, rows + 1] = -1.0
            lower = rows[rows > 0]
            ab[2, lower - 1] = -ratios[j - 1, lower]
        new = solve_banded((1, 1), ab, rhs)
        change = float(np.abs(new - u).max())
        history.append(change)
        u = new
    return EnvelopeResult(u, max_iter, change, False, history)


# ------------------------------------------------------------------ grid ---

def _grid_colors(spec: GridSpec) -> np.ndarray:
    idx = np.indices((spec.N,) * spec.dim).sum(axis=0)
    return idx % 2


def _grid_bound(u: np.ndarray, spec: GridSpec, m: int) -> np.ndarray:
    """Largest centre value keeping Delta u in the m-cone, on the margin-1 core.

    The centre value enters Delta u only through pure second differences:
    Delta u(v) = Delta u - (8 (v - u) / h^2) beta, so the admissible centre
    values form a half-line found from the polynomial t -> cone densities of
    Delta u - t beta.
    """
    n, h = spec.n, spec.h
    core = (slice(1, spec.N - 1),) * spec.dim
    if n == 1 and m == 1:
        acc = np.zeros(spec.core_shape(1))
        for a in range(spec.dim):
            for o in (-1, 1):
                idx = [slice(1, spec.N - 1)] * spec.dim
                idx[a] = slice(1 + o, spec.N - 1 + o)
                acc += u[tuple(idx)]
        return acc / (2 * spec.dim)
    coeffs = baston(GridField(spec, u)).coeffs
    tstar = _cone_threshold(coeffs, n, m)
    return u[core] + tstar * h * h / 8.0


def _cone_threshold(coeffs: np.ndarray, n: int, m: int, iters: int = 80) -> np.ndarray:
    """Largest t with coeffs - t*beta in the m-cone, pointwise."""
    from .exterior import mixed_top_density
    nf = math.factorial(n)
    dens = [np.ones(coeffs.shape[:-2])]
    for j in range(1, m + 1):
        dens.append(mixed_top_density([coeffs] * j).real / nf)

    def ok(t):
        good = np.ones(t.shape, dtype=bool)
        for k in range(1, m + 1):
            val = sum(math.comb(k, j) * (-t) ** (k - j) * dens[j] for j in range(k + 1))
            good &= val >= 0
        return good

    hi = dens[1].copy()
    scale = np.abs(coeffs).max(axis=(-2, -1)) + 1.0
    lo = -2.0 * n * scale
    while not np.all(ok(lo)):
        lo = np.where(ok(lo), lo, 2 * lo)
    hi = np.maximum(hi, lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        good = ok(mid)
        lo = np.where(good, mid, lo)
        hi = np.where(good, hi, mid)
    return lo


def grid_sweep(upper: np.ndarray, start: np.ndarray, spec: GridSpec, m: int,
               free: np.ndarray, tol: float = 1e-8, max_iter: int = 20000,
               omega: float | None = None) -> EnvelopeResult:
    """Largest discrete m-sh grid function below ``upper`` on the free points.

    Points outside ``free`` keep their start values (Dirichlet data).
    """
    u = np.array(start, dtype=float)
    u[free] = np.minimum(u[free], upper[free])
    if omega is None:
        omega = 2.0 / (1.0 + math.sin(math.pi / (spec.N - 1))) if m == 1 else 1.0
    core = (slice(1, spec.N - 1),) * spec.dim
    color = _grid_colors(spec)
    masks = [free & (color == c) for c in (0, 1)]
    change = np.inf
    for it in range(1, max_iter + 1):
        change = 0.0
        for mask in masks:
            target = np.full(u.shape, np.nan)
            target[core] = _grid_bound(u, spec, m)
            new = np.minimum(upper[mask], u[mask] + omega * (target[mask] - u[mask]))
            change = max(change, float(np.abs(new - u[mask]).max(initial=0.0)))
            u[mask] = new
        if change < tol:
            return EnvelopeResult(u, it, change, True)
    return EnvelopeResult(u, max_iter, change, False)


# ------------------------------------------------------------ public API ---

def extremal_envelope(problem: ObstacleProblem, strict: bool = True) -> EnvelopeResult:
    if problem.mode == "radial":
        e = problem.radial_obstacle_mask()
        upper = np.where(e, -1.0, 0.0)
        upper[-1] = 0.0
        start = np.full(upper.shape, -1.0)
        start[-1] = 0.0
        res = radial_sweep(upper, start, problem.n, problem.m, problem.tol,
                           problem.max_iter)
        res.solution = RadialProfile(problem.n, problem.R / problem.K, res.solution)
    else:
        spec = problem.spec
        free, e = problem.grid_masks()
        upper = np.where(e, -1.0, 0.0)
        start = np.where(free, -1.0, 0.0)
        res = grid_sweep(upper, start, spec, problem.m, free, problem.tol,
                         problem.max_iter, problem.omega)
        res.solution = GridField(spec, res.solution)
    if strict and not res.converged:
        raise ConvergenceError(
            f"envelope sweep did not converge in {res.iterations} sweeps "
            f"(last change {res.last_change:.3e})")
    return res


@dataclass
class CapacityResult:
    capacity: float
    eps: float
    h: float
    envelope: EnvelopeResult


def capacity(problem: ObstacleProblem, eps: float = 0.0,
             envelope: EnvelopeResult | None = None) -> CapacityResult:
    """Total Hessian mass of the converged envelope over the domain.

    eps > 0 mollifies the grid envelope first; the radial envelope is
    integrated in flux form, which telescopes to the boundary flux.
    """
    env = envelope if envelope is not None else extremal_envelope(problem)
    if problem.mode == "radial":
        prof = env.solution
        mass = radial_total_mass(prof, radial_density(prof, m=problem.m))
        return CapacityResult(mass, 0.0, prof.ds, env)
    from .calculus import mollify
    field_ = env.solution
    if eps > 0:
        field_ = mollify(field_, eps)
    free, _ = problem.grid_masks()
    dens = hessian_density(field_, problem.m, margin=max(1, field_.margin + 1))
    k = dens.margin
    sub = free[(slice(k, problem.spec.N - k),) * problem.spec.dim]
    mass = total_mass(dens, region=lambda c: sub)
    return CapacityResult(mass, eps, problem.spec.h, env)


def projection(target, m: int, tol: float = 1e-10, max_iter: int = 200000,
               free: np.ndarray | None = None) -> object:
    """Largest discrete m-sh function below ``target`` with its boundary data.

    Radial targets keep u_K; grid targets keep the outer layer (and every
    point outside ``free``).
    """
    if isinstance(target, RadialProfile):
        res = radial_sweep(target.values, target.values, target.n, m, tol, max_iter)
        if not res.converged:
            raise ConvergenceError("projection sweep did not converge")
        return target.with_values(res.solution)
    spec = target.spec
    if free is None:
        free = np.zeros(target.values.shape, dtype=bool)
        free[(slice(1, spec.N - 1),) * spec.dim] = True
    res = grid_sweep(target.values, target.values, spec, m, free, tol,
                     max_iter)
    if not res.converged:
        raise ConvergenceError("projection sweep did not converge")
    return GridField(spec, res.solution)


@dataclass
class DirichletResult:
    profile: RadialProfile
    residual: float


def dirichlet_radial(f, n: int, m: int, R: float, K: int) -> DirichletResult:
    """Radial m-sh solution of (Delta u)^m ^ beta^{n-m} = f dV, u(R) = 0.

    The flux-form equation integrates once in closed form: the Hessian mass
    of B(s) fixes s^{4n-m} u'(s)^m, so the slopes follow by cumulative
    quadrature and u by summation inward from u(R) = 0.
    """
    s = np.linspace(0.0, R, K + 1)
    vals = np.asarray(f(s) if callable(f) else f, dtype=float)
    vals = vals * np.ones_like(s)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("right-hand side must be a finite nonnegative density")
    proto = RadialProfile(n, R / K, np.zeros(K + 1))
    mass = np.cumsum(vals[:-1] * radial_cell_volumes(proto)[:-1])
    sh = radial_half_points(proto)
    slopes = (mass / (radial_flux_constant(n, m) * sh ** (4 * n - m))) ** (1.0 / m)
    u = np.zeros(K + 1)
    u[:-1] = -np.cumsum((slopes * proto.ds)[::-1])[::-1]
    prof = RadialProfile(n, R / K, u)
    dens = radial_density(prof, m=m)
    w = radial_cell_volumes(prof)[:-1]
    total = float(np.sum(vals[:-1] * w))
    resid = float(np.sum(np.abs(dens - vals[:-1]) * w)) / total if total > 0 else 0.0
    return DirichletResult(prof, resid)


def envelope_table(n: int, m: int) -> int:
    """Number of nonzero terms in the cone-density expansion (diagnostic)."""
    return len(density_table(n, m)[1])
