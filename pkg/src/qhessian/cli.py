"""Batch driver: ``qhess <command> [--config PATH] [--out DIR] ...``.

Exit codes: 0 pass, 1 check failure, 2 solver non-convergence, 3 config or
input error.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import GridField, GridSpec, baston, d0, d1, mollify
from .energy import (VariationalProblem, energy_p, holder_check,
                     random_msh_profile, variational_solve)
from .envelope import (AnnulusConfig, ConvergenceError, ObstacleProblem,
                       capacity, extremal_capacity, extremal_envelope,
                       extremal_radial)
from .exterior import (Multivector, TwoForm, beta, beta_power, top_coefficient,
                       twoform_from_hyperhermitian, wedge)
from .hessian import (hessian_density, is_msh, moore_constant,
                      normalization_metadata, radial_density)
from .io import (ConfigError, Key, config_hash, load_config, load_field,
                 write_grid, write_json, write_table)
from .quaternion import (HyperhermitianMatrix, moore_det, reduced_sigma,
                         reduced_sigma_closed_form)

log = logging.getLogger("qhessian")

EXIT_OK, EXIT_FAIL, EXIT_NOCONV, EXIT_CONFIG = 0, 1, 2, 3

SCHEMAS = {
    "identities": {
        "n": Key(int, 1), "N": Key(int, 17), "polys": Key(int, 20),
        "moore_samples": Key(int, 20),
    },
    "hessian": {"m": Key(int, 1), "eps": Key(float, 0.0), "tol": Key(float, 1e-8)},
    "extremal": {
        "n": Key(int, 2), "m": Key(int, 2), "r": Key(float, 0.5), "R": Key(float, 1.0),
        "K": Key(int, 400), "mode": Key(str, "radial"), "N": Key(int, 17),
        "L": Key(float, 1.0), "tol": Key(float, 1e-8), "max_iter": Key(int, 200000),
    },
    "capacity": {
        "n": Key(int, 2), "m": Key(int, 2), "R": Key(float, 1.0), "K": Key(int, 400),
        "radii": Key(list, [0.2, 0.3, 0.4, 0.5, 0.6]), "mode": Key(str, "radial"),
        "N": Key(int, 17), "L": Key(float, 1.0), "eps": Key(float, 0.0),
        "tol": Key(float, 1e-8), "max_iter": Key(int, 200000),
    },
    "variational": {
        "n": Key(int, 2), "m": Key(int, 2), "R": Key(float, 1.0), "K": Key(int, 400),
        "mode": Key(str, "radial"), "N": Key(int, 17), "L": Key(float, 1.0),
        "mu": Key(str, "quadratic"), "mu_value": Key(float, 1.0),
        "mu_power": Key(float, 0.0), "continuation": Key(list, []),
        "tol": Key(float, 1e-10), "max_iter": Key(int, 200),
    },
    "energy": {
        "n": Key(int, 2), "m": Key(int, 2), "p": Key(list, [1.0, 2.0]),
        "R": Key(float, 1.0), "K": Key(int, 200), "samples": Key(int, 50),
    },
}
SECTIONS = {"identities": "identities", "hessian": "hessian", "extremal": "extremal",
            "capacity": "capacity", "solve": "variational", "energy": "energy"}


# --------------------------------------------------------------- helpers ---

def _resolve(args, command: str) -> dict:
    section = SECTIONS[command]
    schema = SCHEMAS[section]
    if args.config:
        cfg = load_config(args.config, section, schema)
    else:
        cfg = {k: v.default for k, v in schema.items()}
    if args.tol is not None and "tol" in cfg:
        cfg["tol"] = args.tol
    for key in ("n", "m"):
        if key in cfg and cfg[key] is not None:
            if not 1 <= cfg[key] <= 4:
                raise ConfigError(f"[{section}] {key} = {cfg[key]} outside 1..4")
    if "m" in cfg and "n" in cfg and cfg["m"] > cfg["n"]:
        raise ConfigError(f"[{section}] needs m <= n")
    if "mode" in cfg and cfg["mode"] not in ("radial", "grid"):
        raise ConfigError(f"[{section}] mode must be radial or grid")
    return cfg


def _stamp(command: str, cfg: dict, seed: int) -> dict:
    full = {"command": command, "config": cfg, "seed": seed}
    return {"config_sha256": config_hash(full), "version": __version__,
            "command": command}


def _emit(out: Path, name: str, summary: dict, stamp: dict):
    write_json(out / f"{name}.json", {**summary, **stamp})


def _grid_spec(cfg: dict) -> GridSpec:
    try:
        return GridSpec(cfg["n"], cfg["L"], cfg["N"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ------------------------------------------------------------ identities ---

def _random_cubic(spec: GridSpec, rng: np.random.Generator, terms: int = 12) -> GridField:
    coords = spec.coords()
    vals = np.full((spec.N,) * spec.dim, float(rng.normal()))
    for _ in range(terms):
        deg = int(rng.integers(1, 4))
        idx = rng.integers(0, spec.dim, size=deg)
        mono = float(rng.normal())
        for a in idx:
            mono = mono * coords[a]
        vals = vals + mono
    return GridField(spec, vals)


def identity_suite(n: int = 1, N: int = 17, polys: int = 20, moore_samples: int = 20,
                   seed: int = 0) -> dict:
    """Algebra and calculus identities with their max deviations."""
    rng = np.random.default_rng(seed)
    res = {}

    res["beta_power_top"] = max(abs(top_coefficient(beta_power(k, k)) - math.factorial(k))
                                for k in range(1, 5))

    dev = 0
    for _ in range(20):
        k = int(rng.integers(1, 4))
        a = Multivector(k, 1, {(i,): int(rng.integers(-5, 6)) for i in range(2 * k)})
        b = Multivector(k, 1, {(i,): int(rng.integers(-5, 6)) for i in range(2 * k)})
        c = Multivector(k, 1, {(i,): int(rng.integers(-5, 6)) for i in range(2 * k)})
        dev = max(dev, wedge(a, b).max_abs_diff(wedge(b, a) * -1))
        if 2 * k >= 3:
            dev = max(dev, wedge(wedge(a, b), c).max_abs_diff(wedge(a, wedge(b, c))))
    res["wedge_exact"] = dev

    spec = GridSpec(n, 1.0, N)
    q2 = spec.sample(lambda c: sum(x * x for x in c))
    f = baston(q2)
    res["quadratic_norm"] = float(np.abs(f.coeffs - 8 * beta(n).coeffs).max())

    worst = {"d0d0": 0.0, "d1d1": 0.0, "d0d1_anti": 0.0}
    for _ in range(polys):
        u = _random_cubic(spec, rng)
        a01, a10 = d0(d1(u)), d1(d0(u))
        scale = max(1.0, a01.max_abs())
        worst["d0d0"] = max(worst["d0d0"], d0(d0(u)).max_abs() / scale)
        worst["d1d1"] = max(worst["d1d1"], d1(d1(u)).max_abs() / scale)
        worst["d0d1_anti"] = max(worst["d0d1_anti"], (a01 + a10).max_abs() / scale)
    res.update(worst)

    worst_moore = 0.0
    for k in (2, 3):
        for _ in range(moore_samples):
            a = HyperhermitianMatrix.random(k, rng)
            dens = _pipeline_density(a)
            ref = moore_constant(k) * moore_det(a * 4.0)
            worst_moore = max(worst_moore, abs(dens - ref) / max(1.0, abs(ref)))
    res["moore_equivalence"] = worst_moore

    bad = 0
    for nn in range(1, 7):
        for mm in range(1, nn + 1):
            for p in range(1, mm + 1):
                if reduced_sigma(nn, mm, p) != reduced_sigma_closed_form(nn, mm, p):
                    bad += 1
    res["reduced_sigma_mismatches"] = bad

    limits = {"beta_power_top": 0, "wedge_exact": 0, "quadratic_norm": 1e-12,
              "d0d0": 1e-9, "d1d1": 1e-9, "d0d1_anti": 1e-9,
              "moore_equivalence": 1e-9, "reduced_sigma_mismatches": 0}
    checks = {k: {"deviation": res[k], "limit": limits[k], "pass": res[k] <= limits[k]}
              for k in limits}
    return {"n": n, "N": N, "checks": checks,
            "pass": all(c["pass"] for c in checks.values())}


def _pipeline_density(a: HyperhermitianMatrix) -> float:
    """Density of the quadratic x^T M x (M from A) through the wedge pipeline."""
    from .exterior import power
    k = a.n
    alpha = twoform_from_hyperhermitian(a) * 4.0
    top = top_coefficient(power(TwoForm(alpha.coeffs), k))
    return float(np.real(top))


def cmd_identities(args) -> int:
    cfg = _resolve(args, "identities")
    report = identity_suite(cfg["n"], cfg["N"], cfg["polys"], cfg["moore_samples"],
                            args.seed)
    for name, c in report["checks"].items():
        log.info("%-26s %.3e  %s", name, c["deviation"], "pass" if c["pass"] else "FAIL")
    _emit(args.out, "identities", report, _stamp("identities", cfg, args.seed))
    return EXIT_OK if report["pass"] else EXIT_FAIL


# ---------------------------------------------------------------- hessian ---

def cmd_hessian(args) -> int:
    cfg = _resolve(args, "hessian")
    if args.m is not None:
        cfg["m"] = args.m
    if args.eps is not None:
        cfg["eps"] = args.eps
    try:
        u = load_field(args.field)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"cannot read field: {exc}") from exc
    n, m = u.spec.n, cfg["m"]
    if not 1 <= m <= n:
        raise ConfigError(f"m = {m} outside 1..{n}")
    if cfg["eps"] > 0:
        u = mollify(u, cfg["eps"])
    dens = hessian_density(u, m)
    check = is_msh(u, m, tol=cfg["tol"], seed=args.seed)
    meta = {"h": u.spec.h, "eps": cfg["eps"], "m": m, "margin": dens.margin,
            "normalization": normalization_metadata(n, m)}
    stamp = _stamp("hessian", {**cfg, "field": Path(args.field).name}, args.seed)
    suffix = Path(args.field).suffix or ".qgf"
    full = np.zeros((u.spec.N,) * u.spec.dim)
    k = dens.margin
    full[(slice(k, u.spec.N - k),) * u.spec.dim] = dens.values
    write_grid(args.out / f"density{suffix}", u.spec, full, k, "density",
               {**meta, **stamp})
    summary = {**meta, "is_msh": check.verdict, "warning": not check.verdict,
               "cone_minima": check.minima,
               "density_min": float(dens.values.min()),
               "density_max": float(dens.values.max())}
    if not check.verdict:
        log.warning("input is not %d-subharmonic (worst order %s)", m, check.worst_k)
    _emit(args.out, "hessian", summary, stamp)
    return EXIT_OK


# --------------------------------------------------------------- extremal ---

def cmd_extremal(args) -> int:
    cfg = _resolve(args, "extremal")
    n, m = cfg["n"], cfg["m"]
    stamp = _stamp("extremal", cfg, args.seed)
    if cfg["mode"] == "radial":
        try:
            ann = AnnulusConfig(cfg["r"], cfg["R"], n, m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        prob = ObstacleProblem(n, m, R=cfg["R"], K=cfg["K"], r=cfg["r"],
                               tol=cfg["tol"], max_iter=cfg["max_iter"])
        env = extremal_envelope(prob)
        exact = extremal_radial(ann, cfg["K"])
        prof = env.solution
        dens = radial_density(prof, m=m)
        outside = prof.s[:-1] > cfg["r"] * (1 + 1e-12)
        err = float(np.abs(prof.values - exact.values).max())
        write_table(args.out / "extremal.csv",
                    {"s": prof.s, "envelope": prof.values, "closed_form": exact.values},
                    stamp)
        summary = {"mode": "radial", "h": prof.ds, "iterations": env.iterations,
                   "last_change": env.last_change, "converged": env.converged,
                   "sup_error": err,
                   "max_density_outside_obstacle": float(np.abs(dens[outside]).max())}
    else:
        spec = _grid_spec(cfg)
        R = cfg["R"]
        prob = ObstacleProblem(n, m, mode="grid", spec=spec, r=cfg["r"],
                               domain=lambda c: sum(x * x for x in c) < R * R,
                               tol=cfg["tol"], max_iter=min(cfg["max_iter"], 20000))
        env = extremal_envelope(prob)
        write_grid(args.out / "extremal.qgf", spec, env.solution.values, 0, "field", stamp)
        summary = {"mode": "grid", "h": spec.h, "iterations": env.iterations,
                   "last_change": env.last_change, "converged": env.converged}
    log.info("extremal: %d sweeps, last change %.2e", env.iterations, env.last_change)
    _emit(args.out, "extremal", summary, stamp)
    return EXIT_OK


# --------------------------------------------------------------- capacity ---

def cmd_capacity(args) -> int:
    cfg = _resolve(args, "capacity")
    n, m = cfg["n"], cfg["m"]
    radii = sorted(cfg["radii"])
    if not radii or radii[0] <= 0 or radii[-1] >= cfg["R"]:
        raise ConfigError("[capacity] radii must lie strictly inside (0, R)")
    stamp = _stamp("capacity", cfg, args.seed)
    caps, closed = [], []
    for r in radii:
        if cfg["mode"] == "radial":
            prob = ObstacleProblem(n, m, R=cfg["R"], K=cfg["K"], r=r, tol=cfg["tol"],
                                   max_iter=cfg["max_iter"])
            h = cfg["R"] / cfg["K"]
        else:
            spec = _grid_spec(cfg)
            R = cfg["R"]
            prob = ObstacleProblem(n, m, mode="grid", spec=spec, r=r,
                                   domain=lambda c: sum(x * x for x in c) < R * R,
                                   tol=cfg["tol"], max_iter=min(cfg["max_iter"], 20000))
            h = spec.h
        caps.append(capacity(prob, eps=cfg["eps"]).capacity)
        closed.append(extremal_capacity(AnnulusConfig(r, cfg["R"], n, m)))
    monotone = all(b >= a * (1 - 1e-9) for a, b in zip(caps, caps[1:]))
    write_table(args.out / "capacity.csv",
                {"r": radii, "capacity": caps, "closed_form": closed}, stamp)
    summary = {"mode": cfg["mode"], "h": h, "eps": cfg["eps"], "radii": radii,
               "capacity": caps, "closed_form": closed, "monotone": monotone}
    _emit(args.out, "capacity", summary, stamp)
    return EXIT_OK if monotone else EXIT_FAIL


# ------------------------------------------------------------------ solve ---

def _mu_profile(cfg: dict, s: np.ndarray) -> np.ndarray:
    kind = cfg["mu"]
    n, m = cfg["n"], cfg["m"]
    if kind in ("atom", "dirac", "point"):
        raise ConfigError("[variational] mu must be a bounded density; point masses "
                          "charge polar sets and are not supported")
    if kind == "quadratic":
        return np.full(s.shape, float(8 ** m * math.factorial(n)))
    if kind == "constant":
        return np.full(s.shape, cfg["mu_value"])
    if kind == "power":
        if cfg["mu_power"] < 0:
            raise ConfigError("[variational] mu_power must be >= 0 for a bounded density")
        return cfg["mu_value"] * s ** cfg["mu_power"]
    raise ConfigError(f"[variational] unknown mu kind {kind!r}")


def cmd_solve(args) -> int:
    cfg = _resolve(args, "solve")
    n, m = cfg["n"], cfg["m"]
    stamp = _stamp("solve", cfg, args.seed)
    if cfg["mode"] == "radial":
        s = np.linspace(0.0, cfg["R"], cfg["K"] + 1)
        mu = _mu_profile(cfg, s)
        prob = VariationalProblem(n, m, mu, R=cfg["R"], tol=cfg["tol"],
                                  max_iter=cfg["max_iter"],
                                  continuation=tuple(cfg["continuation"]))
    else:
        if n != 1 or m != 1:
            raise ConfigError("[variational] grid mode supports n = m = 1 only")
        spec = _grid_spec(cfg)
        mu = _mu_profile(cfg, spec.radius()) * np.ones((spec.N,) * spec.dim)
        prob = VariationalProblem(1, 1, mu, mode="grid", spec=spec, tol=cfg["tol"],
                                  max_iter=cfg["max_iter"],
                                  continuation=tuple(cfg["continuation"]))
    rep = variational_solve(prob)
    summary = {"mode": cfg["mode"], "converged": rep.converged,
               "iterations": rep.iterations, "residuals": rep.residuals,
               "functional": rep.functional, "energy": rep.energy,
               "stages": rep.stages}
    if cfg["mode"] == "radial":
        prof = rep.solution
        dens = np.append(radial_density(prof, m=m), np.nan)
        cols = {"s": prof.s, "u": prof.values, "density": dens, "mu": mu}
        if cfg["mu"] == "quadratic":
            ref = prof.s ** 2 - cfg["R"] ** 2
            summary["manufactured_sup_error"] = float(np.abs(prof.values - ref).max())
            cols["reference"] = ref
        summary["h"] = prof.ds
        write_table(args.out / "solve.csv", cols, stamp)
    else:
        summary["h"] = rep.solution.spec.h
        write_grid(args.out / "solve.qgf", rep.solution.spec, rep.solution.values,
                   0, "field", stamp)
    _emit(args.out, "solve", summary, stamp)
    log.info("solve: %d iterations, residual %.2e", rep.iterations,
             rep.residuals[-1] if rep.residuals else float("nan"))
    return EXIT_OK if rep.converged else EXIT_NOCONV


# ----------------------------------------------------------------- energy ---

def cmd_energy(args) -> int:
    cfg = _resolve(args, "energy")
    n, m = cfg["n"], cfg["m"]
    rng = np.random.default_rng(args.seed)
    stamp = _stamp("energy", cfg, args.seed)
    rows = {"sample": [], "p": [], "lhs": [], "bound": [], "ratio": []}
    violations = 0
    for i in range(cfg["samples"]):
        fs = [random_msh_profile(n, cfg["R"], cfg["K"], rng) for _ in range(m + 1)]
        for p in cfg["p"]:
            rep = holder_check(fs[0], fs[1:], p)
            violations += int(rep.violated)
            for k, v in (("sample", i), ("p", p), ("lhs", rep.lhs),
                         ("bound", rep.bound), ("ratio", rep.ratio)):
                rows[k].append(v)
    base = random_msh_profile(n, cfg["R"], cfg["K"], rng)
    homog = {}
    for p in cfg["p"]:
        e1 = energy_p(base, m, p)
        e2 = energy_p(base.with_values(2.0 * base.values), m, p)
        homog[str(p)] = {"fitted_exponent": math.log2(e2 / e1), "expected": m + p}
    write_table(args.out / "energy.csv", rows, stamp)
    summary = {"violations": violations, "tuples": cfg["samples"] * len(cfg["p"]),
               "max_ratio": max(rows["ratio"]) if rows["ratio"] else 0.0,
               "homogeneity": homog}
    _emit(args.out, "energy", summary, stamp)
    return EXIT_OK if violations == 0 else EXIT_FAIL


# ------------------------------------------------------------------- main ---

COMMANDS = {"identities": cmd_identities, "hessian": cmd_hessian,
            "extremal": cmd_extremal, "capacity": cmd_capacity,
            "solve": cmd_solve, "energy": cmd_energy}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with the command's section")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (falls back to QHESS_THREADS)")
    common.add_argument("--tol", type=float, default=None, help="override the tolerance")
    common.add_argument("--quiet", action="store_true")
    parser = argparse.ArgumentParser(prog="qhess", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "hessian":
            p.add_argument("field", help="grid field file (.qgf or .csv)")
            p.add_argument("--m", type=int, default=None)
            p.add_argument("--eps", type=float, default=None)
    return parser


def _threads(args) -> int:
    if args.threads is not None:
        t = args.threads
    else:
        env = os.environ.get("QHESS_THREADS", "1")
        try:
            t = int(env)
        except ValueError:
            raise ConfigError(f"QHESS_THREADS={env!r} is not an integer") from None
    if t < 1:
        raise ConfigError("thread count must be positive")
    return t


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        threads = _threads(args)
        args.out = Path(args.out)
        args.out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_NOCONV
    write_json(args.out / "timing.json",
               {"command": args.command, "threads": threads,
                "wall_time_s": time.perf_counter() - start})
    return code


if __name__ == "__main__":
    sys.exit(main())
