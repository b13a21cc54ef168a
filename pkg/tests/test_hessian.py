from __future__ import annotations

import math

import numpy as np
import pytest

from qhessian.calculus import GridField, GridSpec, RadialProfile, mollify
from qhessian.exterior import twoform_from_hyperhermitian
from qhessian.hessian import (comparison_check, density_via_moore,
                              hessian_density, is_msh, mixed_hessian_density,
                              moore_constant, normalization_metadata,
                              radial_comparison_check, radial_density,
                              radial_density_eig, radial_is_msh,
                              radial_total_mass, stokes_check, total_mass)
from qhessian.quaternion import HyperhermitianMatrix, mixed_discriminant, moore_det

SPECS = [GridSpec(1, 1.0, 9), GridSpec(2, 1.0, 5)]


def quadratic(spec, a: HyperhermitianMatrix) -> GridField:
    m = a.real_quadratic_matrix()
    c = spec.coords()
    return spec.sample(lambda c: sum(m[i, j] * c[i] * c[j]
                                     for i in range(spec.dim) for j in range(spec.dim)))


def diag_quadratic(spec, a):
    c = spec.coords()
    return spec.sample(lambda c: sum(a[l] * sum(c[4 * l + k] ** 2 for k in range(4))
                                     for l in range(spec.n)))


def bump(spec, center, radius, power=4):
    def f(c):
        r2 = sum((x - x0) ** 2 for x, x0 in zip(c, center)) / radius ** 2
        return np.where(r2 < 1, (1 - r2) ** power, 0.0)
    return spec.sample(f)


@pytest.mark.parametrize("spec", SPECS)
def test_norm_density(spec):
    u = spec.sample(lambda c: sum(x * x for x in c))
    for m in range(1, spec.n + 1):
        d = hessian_density(u, m)
        assert np.allclose(d.values, 8 ** m * math.factorial(spec.n), rtol=1e-12)


def test_affine_density_zero():
    spec = SPECS[1]
    u = spec.sample(lambda c: 3 - c[1] + 2 * c[6])
    for m in (1, 2):
        assert np.abs(hessian_density(u, m).values).max() < 1e-10


def test_diagonal_quadratic_matches_moore():
    spec = SPECS[1]
    a = [1.5, 0.75]
    d = hessian_density(diag_quadratic(spec, a), 2)
    expected = 8 ** 2 * 2 * a[0] * a[1]
    assert np.allclose(d.values, expected, rtol=1e-12)
    ref = moore_constant(2) * moore_det(HyperhermitianMatrix.diag(a) * 4.0)
    assert abs(expected - ref) < 1e-10 * expected


def test_random_quadratic_moore_constant():
    spec = SPECS[1]
    rng = np.random.default_rng(11)
    for _ in range(4):
        a = HyperhermitianMatrix.random(2, rng)
        d = hessian_density(quadratic(spec, a), 2).values
        ref = moore_constant(2) * moore_det(a * 4.0)
        assert np.abs(d - ref).max() < 1e-9 * max(1.0, abs(ref))
        fast = density_via_moore(twoform_from_hyperhermitian(a).coeffs * 4, 2)
        assert fast == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_mixed_density_properties():
    spec = SPECS[1]
    rng = np.random.default_rng(5)
    a, b, c = (HyperhermitianMatrix.random(2, rng) for _ in range(3))
    ua, ub, uc = quadratic(spec, a), quadratic(spec, b), quadratic(spec, c)
    ab = mixed_hessian_density(ua, ub).values
    assert np.abs(ab - mixed_hessian_density(ub, ua).values).max() < 1e-12 * np.abs(ab).max()
    assert np.allclose(mixed_hessian_density(ua, ua).values, hessian_density(ua, 2).values,
                       rtol=1e-12, atol=1e-12)
    lhs = mixed_hessian_density(ua + uc, ub).values
    rhs = ab + mixed_hessian_density(uc, ub).values
    assert np.abs(lhs - rhs).max() < 1e-10 * max(1.0, np.abs(lhs).max())
    ref = moore_constant(2) * mixed_discriminant(a * 4.0, b * 4.0)
    assert np.abs(ab - ref).max() < 1e-9 * max(1.0, abs(ref))


def test_mixed_density_diagonal_example():
    spec = SPECS[1]
    d = mixed_hessian_density(diag_quadratic(spec, [1.0, 2.0]),
                              diag_quadratic(spec, [3.0, 0.5])).values
    md = mixed_discriminant(HyperhermitianMatrix.diag([4.0, 8.0]),
                            HyperhermitianMatrix.diag([12.0, 2.0]))
    assert np.allclose(d, moore_constant(2) * md, rtol=1e-12)


def test_spec_mismatch():
    u = SPECS[0].sample(lambda c: c[0])
    v = GridSpec(1, 2.0, 9).sample(lambda c: c[0])
    with pytest.raises(ValueError):
        mixed_hessian_density(u, v)


def test_is_msh_examples():
    spec = SPECS[1]
    q2 = spec.sample(lambda c: sum(x * x for x in c))
    for m in (1, 2):
        rep = is_msh(q2, m)
        assert rep.verdict and all(v > 0 for v in rep.minima.values())
        bad = is_msh(q2 * -1.0, m)
        assert not bad.verdict and bad.worst_k == 1 and bad.worst_point is not None
    # spectrum (4, -2): subharmonic but not 2-sh
    u = diag_quadratic(spec, [1.0, -0.5])
    assert is_msh(u, 1).verdict
    rep = is_msh(u, 2)
    assert not rep.verdict and rep.worst_k in (2, "sampled")


def test_is_msh_deterministic():
    spec = SPECS[1]
    u = diag_quadratic(spec, [1.0, 0.2])
    assert is_msh(u, 2, seed=3).minima == is_msh(u, 2, seed=3).minima


def test_harmonic_kernel_on_annulus():
    """|x|^{-2} is harmonic in R^4: the grid Laplacian vanishes to O(h^2)."""
    errs = []
    for N in (17, 33):
        spec = GridSpec(1, 1.0, N)
        u = spec.sample(lambda c: 1.0 / np.maximum(sum(x * x for x in c), 1e-12))
        d = hessian_density(u, 1)
        r = spec.radius(d.margin)
        mask = (r > 0.6) & (r < 0.9)
        # second derivatives of |x|^{-2} are of size 6 |x|^{-4}
        errs.append(np.abs(d.values[mask] * r[mask] ** 4 / 6).max())
    assert errs[1] < errs[0] / 3
    assert errs[1] < 0.05


def test_positivity_when_msh():
    spec = SPECS[1]
    u = spec.sample(lambda c: sum(x * x for x in c) + 0.3 * c[0] ** 2)
    assert is_msh(u, 2).verdict
    for k in (1, 2):
        assert hessian_density(u, k).values.min() >= -1e-10


def test_total_mass():
    spec = SPECS[0]
    u = spec.sample(lambda c: sum(x * x for x in c))
    d = hessian_density(u, 1)
    side = (spec.N - 2) * spec.h
    assert total_mass(d) == pytest.approx(8 * side ** 4, rel=1e-12)
    left = total_mass(d, lambda c: c[0] < 0)
    right = total_mass(d, lambda c: c[0] >= 0)
    assert left + right == pytest.approx(total_mass(d), rel=1e-12)
    # the covered box tends to [-1, 1]^4
    fine = GridSpec(1, 1.0, 33)
    dd = hessian_density(fine.sample(lambda c: sum(x * x for x in c)), 1)
    assert total_mass(dd) == pytest.approx(8 * 2 ** 4, rel=0.15)


def test_stokes_examples():
    spec = GridSpec(1, 1.0, 17)
    u = bump(spec, [0.1, 0, 0, 0], 0.7)
    v = bump(spec, [-0.1, 0.1, 0, 0], 0.6)
    a, b = stokes_check(u, u)
    assert a == b
    a, b = stokes_check(u, v * 0.0)
    assert a == 0 and b == 0
    a, b = stokes_check(u, v)
    assert abs(a - b) <= 1e-12 * max(abs(a), abs(b))
    with pytest.raises(ValueError):
        stokes_check(spec.sample(lambda c: 1.0 + 0 * c[0]), v)


def test_stokes_with_mixed_forms():
    spec = GridSpec(2, 1.0, 7)
    u = bump(spec, [0.0] * 8, 0.6, power=3)
    v = bump(spec, [0.1] + [0.0] * 7, 0.55, power=3)
    w = spec.sample(lambda c: sum(x * x for x in c))
    a, b = stokes_check(u, v, [w])
    assert abs(a - b) <= 1e-10 * max(abs(a), abs(b), 1e-300)


def test_comparison_examples():
    spec = GridSpec(1, 1.0, 13)
    u = spec.sample(lambda c: sum(x * x for x in c))
    rep = comparison_check(u, u - spec.sample(lambda c: 1.0 + 0 * c[0]), 1)
    assert rep.points == 0 and rep.mass_u == 0 and rep.mass_v == 0
    v = spec.sample(lambda c: 2 * sum(x * x for x in c) - 1.0)
    w = spec.sample(lambda c: 1.5 * sum(x * x for x in c) - 0.6)
    mx = GridField(spec, np.maximum(v.values, w.values))
    sm = mollify(mx, 2 * spec.h)
    full = GridField(spec, np.where(np.isfinite(sm.values), sm.values, mx.values))
    rep = comparison_check(full, v, 1)
    assert not rep.violated
    with pytest.raises(ValueError):
        comparison_check(v, u, 1)


def test_radial_comparison_nested():
    from qhessian.envelope import AnnulusConfig, extremal_radial
    u = extremal_radial(AnnulusConfig(0.3, 1.0, 2, 2), 400)
    v = extremal_radial(AnnulusConfig(0.5, 1.0, 2, 2), 400)
    assert np.all(v.values <= u.values + 1e-15)
    rep = radial_comparison_check(u, v, 2)
    assert not rep.violated


def test_maximum_principle_under_mollification():
    spec = GridSpec(1, 1.0, 25)
    u = spec.sample(lambda c: sum(x * x for x in c))
    v = spec.sample(lambda c: 2 * c[0] ** 2 - 0.4)
    mx = GridField(spec, np.maximum(u.values, v.values))
    for k in (4, 2):
        eps = k * spec.h
        d = hessian_density(mollify(mx, eps), 1)
        c = spec.coords(d.margin)
        gap = -c[0] ** 2 + c[1] ** 2 + c[2] ** 2 + c[3] ** 2 + 0.4
        rho = eps + 2 * spec.h
        grad = 2 * np.sqrt(sum(x * x for x in c))
        # g(x + y) >= g(x) - |grad g| rho - rho^2 for |y| <= rho
        mask = np.broadcast_to(gap - grad * rho - rho ** 2 > 0, d.values.shape)
        assert mask.sum() > 0
        assert np.abs(d.values[mask] - 8).max() < 1e-9


@pytest.mark.parametrize("n,m", [(1, 1), (2, 1), (2, 2), (3, 2), (3, 3)])
def test_radial_density_quadratic(n, m):
    p = RadialProfile.sample(n, 1.0, 200, lambda s: s * s - 1)
    target = 8 ** m * math.factorial(n)
    assert np.allclose(radial_density(p, m=m), target, rtol=1e-10)
    assert np.allclose(radial_density_eig(p, m), target, rtol=1e-10)
    assert radial_is_msh(p, m).verdict
    mass = radial_total_mass(p, radial_density(p, m=m))
    vol = 2 * math.pi ** (2 * n) / math.factorial(2 * n - 1) * (1 - 0.5 / 200) ** (4 * n) / (4 * n)
    assert mass == pytest.approx(target * vol, rel=1e-10)


def test_radial_flux_vs_eigen_smooth():
    p = RadialProfile.sample(2, 1.0, 400, lambda s: np.exp(s * s) - np.e)
    a = radial_density(p, m=2)[5:-5]
    b = radial_density_eig(p, 2)[5:-5]
    assert np.abs(a - b).max() < 1e-3 * np.abs(b).max()


def test_radial_not_msh():
    p = RadialProfile.sample(2, 1.0, 100, lambda s: 1 - s * s)
    rep = radial_is_msh(p, 2)
    assert not rep.verdict


def test_normalization_metadata():
    meta = normalization_metadata(3, 2)
    assert meta["beta_power_top_coefficient"] == 6
    assert meta["quadratic_norm_density"] == 64 * 6
    assert meta["moore_constant"] == 48
