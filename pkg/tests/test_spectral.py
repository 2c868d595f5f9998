"""Spectral kernel checks against closed-form and brute-force oracles."""

import math

import numpy as np
import pytest

from nudge_lab.errors import (
    DomainError,
    GridMismatchError,
    ShapeError,
    SymmetryError,
)
from nudge_lab.spectral import (
    FlowState,
    Grid,
    Params,
    SpectralField,
    apply_A,
    bilinear_B0,
    bilinear_B1,
    buoyancy_term,
    dealias,
    divergence,
    divergence_l2,
    h1_norm,
    l2_inner,
    l2_norm,
    leray_project,
    lp_norm,
    norms,
    random_field,
    to_physical,
    to_spectral,
    vertical_velocity,
)


def naive_dft(x):
    """O(N^2) discrete Fourier sum, same normalization as to_spectral."""
    res = x.shape
    out = np.zeros(res, dtype=complex)
    for m in np.ndindex(*res):
        acc = 0.0
        for j in np.ndindex(*res):
            phase = sum(mi * ji / ni for mi, ji, ni in zip(m, j, res))
            acc += x[j] * np.exp(-2j * np.pi * phase)
        out[m] = acc / np.prod(res)
    return out


def solenoidal(grid, seed, **kw):
    kw.setdefault("ncomp", grid.dim)
    kw.setdefault("divergence_free", True)
    return random_field(grid, np.random.default_rng(seed), **kw)


# -- grid ------------------------------------------------------------------


def test_grid_validation():
    with pytest.raises(DomainError):
        Grid(2, "torus", (1.0, 1.0), (9, 8))  # odd
    with pytest.raises(DomainError):
        Grid(2, "torus", (1.0, 1.0), (8, 6))  # below minimum
    with pytest.raises(DomainError):
        Grid(4, "torus", (1.0,) * 4, (8,) * 4)
    with pytest.raises(DomainError):
        Grid(2, "moebius", (1.0, 1.0), (8, 8))
    with pytest.raises(DomainError):
        Grid(3, "channel", (1.0, 1.0, 1.0), (8, 8, 8))
    with pytest.raises(DomainError):
        Grid(2, "channel", (1.0, 2.0), (8, 8))  # wall-normal extent fixed at 1
    with pytest.raises(ShapeError):
        Grid(2, "torus", (1.0, 1.0, 1.0), (8, 8))
    with pytest.raises(DomainError):
        Grid(2, "torus", (1.0, -1.0), (8, 8))


def test_grid_lambda1():
    assert Grid(2, "torus", (2 * np.pi, 2 * np.pi), (8, 8)).lambda1 == pytest.approx(1.0, rel=1e-14)
    g = Grid(2, "torus", (1.0, 2.0), (8, 8))
    assert g.lambda1 == pytest.approx((2 * np.pi) ** 2, rel=1e-14)
    ch = Grid(2, "channel", (4.0, 1.0), (16, 16))
    assert ch.lambda1 == pytest.approx(min((2 * np.pi / 4.0) ** 2, np.pi**2), rel=1e-14)


def test_spectral_field_shape_validation(unit_torus):
    with pytest.raises(ShapeError):
        SpectralField(unit_torus, np.zeros((2, 16, 16), dtype=complex))
    with pytest.raises(ShapeError):
        SpectralField(unit_torus, np.zeros((3, 32, 32), dtype=complex))
    f = SpectralField(unit_torus, np.zeros((32, 32), dtype=complex))
    assert f.ncomp == 1 and not f.is_vector


def test_flow_state_validation(unit_torus):
    u = SpectralField.zeros(unit_torus, 2)
    th = SpectralField.zeros(unit_torus, 1)
    with pytest.raises(ShapeError):
        FlowState(th, None, 0.0)
    with pytest.raises(ShapeError):
        FlowState(u, u, 0.0)
    other = Grid(2, "torus", (1.0, 1.0), (16, 16))
    with pytest.raises(GridMismatchError):
        FlowState(u, SpectralField.zeros(other, 1), 0.0)


def test_params_validation(unit_torus):
    with pytest.raises(DomainError):
        Params(nu=0.0)
    with pytest.raises(DomainError):
        Params(nu=1.0, kappa=-1.0)
    with pytest.raises(DomainError):
        Params(nu=1.0, c_interp=0.0)
    with pytest.raises(ShapeError):
        Params(nu=1.0, f=SpectralField.zeros(unit_torus, 1))
    grad = SpectralField(unit_torus, np.stack([
        1j * np.broadcast_to(unit_torus.kd[0], unit_torus.resolution),
        1j * np.broadcast_to(unit_torus.kd[1], unit_torus.resolution),
    ]) * to_spectral(np.cos(2 * np.pi * unit_torus.meshgrid()[0]), unit_torus).coeffs)
    with pytest.raises(DomainError):
        Params(nu=1.0, f=grad)


# -- transforms ------------------------------------------------------------


def test_transform_matches_naive_dft_2d():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 8))
    g = Grid(2, "torus", (1.0, 1.0), (8, 8))
    c = to_spectral(x, g).coeffs[0]
    oracle = naive_dft(x)
    assert np.max(np.abs(c - oracle)) < 1e-12


def test_transform_matches_naive_dft_3d():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((8, 8, 8))
    g = Grid(3, "torus", (1.0, 1.0, 1.0), (8, 8, 8))
    c = to_spectral(x, g).coeffs[0]
    oracle = naive_dft(x)
    assert np.max(np.abs(c - oracle)) < 1e-12


@pytest.mark.parametrize("grid_args", [
    (2, "torus", (1.0, 1.0), (8, 8)),
    (2, "torus", (0.5, 2.0), (12, 8)),
    (3, "torus", (1.0, 1.0, 1.0), (8, 8, 8)),
])
def test_round_trip_20_seeded_fields(grid_args):
    g = Grid(*grid_args)
    for seed in range(20):
        x = np.random.default_rng(seed).standard_normal(g.resolution)
        back = to_physical(to_spectral(x, g))
        assert np.max(np.abs(back - x)) <= 1e-12 * max(1.0, np.max(np.abs(x)))


def test_round_trip_channel():
    g = Grid(2, "channel", (2.0, 1.0), (16, 16))
    for seed, ncomp in ((0, 1), (1, 2)):
        f = random_field(g, np.random.default_rng(seed), ncomp=ncomp, energy=1.0)
        x = to_physical(f)
        back = to_spectral(x, g)
        assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12


@pytest.mark.parametrize("grid_args", [
    (2, "torus", (1.0, 1.0), (8, 8)),
    (2, "torus", (3.0, 1.0), (16, 10)),
    (3, "torus", (1.0, 2.0, 1.0), (8, 8, 8)),
])
def test_parseval(grid_args):
    g = Grid(*grid_args)
    x = np.random.default_rng(7).standard_normal((1,) + g.resolution)
    f = to_spectral(x, g)
    quad = g.cell_volume * np.sum(x**2)
    assert l2_norm(f) ** 2 == pytest.approx(quad, rel=1e-12)


def test_parseval_channel():
    g = Grid(2, "channel", (2.0, 1.0), (16, 16))
    for ncomp in (1, 2):
        f = random_field(g, np.random.default_rng(ncomp), ncomp=ncomp, energy=1.0)
        x = to_physical(f)
        if ncomp == 1:
            x = x[np.newaxis]
        quad = g.cell_volume * np.sum(x**2)
        assert l2_norm(f) ** 2 == pytest.approx(quad, rel=1e-12)


def test_constant_field_is_zero_mode_only(unit_torus):
    f = to_spectral(np.full(unit_torus.resolution, 2.75), unit_torus)
    assert f.coeffs[0][0, 0] == pytest.approx(2.75, rel=1e-14)
    rest = f.coeffs[0].copy()
    rest[0, 0] = 0.0
    assert np.max(np.abs(rest)) < 1e-13


def test_sin_has_two_conjugate_coefficients():
    g = Grid(2, "torus", (2.0, 1.0), (16, 8))
    X, _ = g.meshgrid()
    c = to_spectral(np.sin(2 * np.pi * X / 2.0), g).coeffs[0]
    nonzero = np.argwhere(np.abs(c) > 1e-13)
    assert {tuple(p) for p in nonzero} == {(1, 0), (15, 0)}
    assert c[1, 0] == pytest.approx(-0.5j, abs=1e-13)
    assert np.conj(c[1, 0]) == pytest.approx(c[15, 0], abs=1e-14)


def test_single_mode_samples_complex_exponential(unit_torus):
    f = SpectralField.zeros(unit_torus, 1)
    f.coeffs[0][2, 1] = 0.5
    f.coeffs[0][-2, -1] = 0.5
    X, Y = unit_torus.meshgrid()
    oracle = np.cos(2 * np.pi * (2 * X + Y))
    assert np.max(np.abs(to_physical(f) - oracle)) < 1e-12


def test_zero_coefficients_give_zero_field(unit_torus):
    assert np.all(to_physical(SpectralField.zeros(unit_torus, 1)) == 0.0)


def test_broken_hermitian_symmetry_raises(unit_torus):
    f = SpectralField.zeros(unit_torus, 1)
    f.coeffs[0][1, 0] = 1.0  # no conjugate partner
    with pytest.raises(SymmetryError):
        to_physical(f)
    assert to_physical(f, check=False).shape == unit_torus.resolution


def test_transform_shape_error(unit_torus):
    with pytest.raises(ShapeError):
        to_spectral(np.zeros((16, 16)), unit_torus)


def test_dealias_zeroes_above_cutoff(unit_torus):
    f = to_spectral(np.random.default_rng(3).standard_normal(unit_torus.resolution),
                    unit_torus)
    d = dealias(f)
    cut = (32 - 1) // 3
    outside = ~unit_torus.dealias_mask
    assert np.all(d.coeffs[0][outside] == 0.0)
    inside = unit_torus.dealias_mask
    assert np.array_equal(d.coeffs[0][inside], f.coeffs[0][inside])
    radii = np.max(np.abs(np.array([np.broadcast_to(unit_torus.mode_index[i],
                                                    unit_torus.resolution)
                                    for i in range(2)])), axis=0)
    assert np.array_equal(unit_torus.dealias_mask, radii <= cut)


# -- norms -----------------------------------------------------------------


def test_single_mode_norms():
    g = Grid(2, "torus", (1.0, 1.0), (16, 16))
    f = SpectralField.zeros(g, 1)
    f.coeffs[0][3, 2] = 1.0
    lam = (2 * np.pi) ** 2 * (9 + 4)
    assert l2_norm(f) == pytest.approx(1.0, rel=1e-14)
    assert h1_norm(f) / l2_norm(f) == pytest.approx(math.sqrt(lam), rel=1e-13)
    l2, h1 = norms(f)
    assert (l2, h1) == (l2_norm(f), h1_norm(f))


def test_poincare_modewise(unit_torus):
    for seed in range(20):
        f = random_field(unit_torus, np.random.default_rng(seed), ncomp=2)
        assert unit_torus.lambda1 * l2_norm(f) ** 2 <= h1_norm(f) ** 2 * (1 + 1e-12)
    lowest = SpectralField.zeros(unit_torus, 1)
    lowest.coeffs[0][1, 0] = 0.5
    lowest.coeffs[0][-1, 0] = 0.5
    assert h1_norm(lowest) ** 2 == pytest.approx(
        unit_torus.lambda1 * l2_norm(lowest) ** 2, rel=1e-13)


def test_l4_norm_matches_analytic_integral():
    # int sin^4 = 3/8 per axis; the collocation sum is exact for this
    # trigonometric polynomial, so only round-off is allowed
    g = Grid(2, "torus", (1.0, 1.0), (16, 16))
    X, Y = g.meshgrid()
    f = to_spectral(np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y), g)
    assert lp_norm(f, 4) == pytest.approx((9.0 / 64.0) ** 0.25, rel=1e-12)
    assert lp_norm(f, 2) == pytest.approx(l2_norm(f), rel=1e-12)


def test_lp_norm_rejects_p_below_one(unit_torus):
    with pytest.raises(DomainError):
        lp_norm(SpectralField.zeros(unit_torus, 1), 0.5)


def test_l2_inner_matches_quadrature(unit_torus):
    f = random_field(unit_torus, np.random.default_rng(0), energy=1.0)
    h = random_field(unit_torus, np.random.default_rng(1), energy=1.0)
    quad = unit_torus.cell_volume * np.sum(to_physical(f) * to_physical(h))
    assert l2_inner(f, h) == pytest.approx(quad, rel=1e-12, abs=1e-14)


# -- operators -------------------------------------------------------------


def test_apply_A_eigenfunction(unit_torus):
    f = SpectralField.zeros(unit_torus, 1)
    f.coeffs[0][1, 2] = 1.0
    f.coeffs[0][-1, -2] = 1.0
    lam = (2 * np.pi) ** 2 * 5
    out = apply_A(f, which="temperature")
    assert np.max(np.abs(out.coeffs - lam * f.coeffs)) < 1e-10 * lam


def test_apply_A_quadratic_form_is_h1(unit_torus):
    for seed in range(20):
        f = random_field(unit_torus, np.random.default_rng(seed), ncomp=2,
                         divergence_free=True)
        assert l2_inner(apply_A(f), f) == pytest.approx(h1_norm(f) ** 2, rel=1e-12)
    f = random_field(unit_torus, np.random.default_rng(0), ncomp=2)
    g = random_field(unit_torus, np.random.default_rng(1), ncomp=2)
    assert l2_inner(apply_A(f), g) == pytest.approx(l2_inner(f, apply_A(g)), rel=1e-12)


def test_apply_A_kind_validation(unit_torus):
    v = SpectralField.zeros(unit_torus, 2)
    s = SpectralField.zeros(unit_torus, 1)
    with pytest.raises(ShapeError):
        apply_A(s, which="velocity")
    with pytest.raises(ShapeError):
        apply_A(v, which="temperature")
    with pytest.raises(DomainError):
        apply_A(v, which="vorticity")
    assert np.all(apply_A(v).coeffs == 0.0)


def gradient_field(grid, seed):
    phi = random_field(grid, np.random.default_rng(seed))
    c = np.stack([1j * np.broadcast_to(grid.kd[i], grid.resolution) * phi.coeffs[0]
                  for i in range(grid.dim)])
    return SpectralField(grid, c)


def test_leray_annihilates_gradients(unit_torus):
    g = gradient_field(unit_torus, 5)
    assert l2_norm(leray_project(g)) <= 1e-12 * l2_norm(g)


def test_leray_idempotent_and_self_adjoint(unit_torus):
    u = random_field(unit_torus, np.random.default_rng(2), ncomp=2)
    pu = leray_project(u)
    ppu = leray_project(pu)
    assert np.max(np.abs(ppu.coeffs - pu.coeffs)) <= 1e-12 * np.max(np.abs(pu.coeffs))
    v = random_field(unit_torus, np.random.default_rng(3), ncomp=2)
    assert l2_inner(pu, v) == pytest.approx(l2_inner(u, leray_project(v)), rel=1e-12)


def test_leray_fixes_divergence_free(unit_torus):
    u = solenoidal(unit_torus, 4, energy=1.0)
    pu = leray_project(u)
    assert np.max(np.abs(pu.coeffs - u.coeffs)) < 1e-14


def test_leray_modewise_oracle():
    g = Grid(2, "torus", (1.0, 1.0), (8, 8))
    u = random_field(g, np.random.default_rng(6), ncomp=2)
    pu = leray_project(u).coeffs
    kx = np.broadcast_to(g.kd[0], g.resolution)
    ky = np.broadcast_to(g.kd[1], g.resolution)
    for m in np.ndindex(*g.resolution):
        k = np.array([kx[m], ky[m]])
        uh = u.coeffs[:, m[0], m[1]]
        k2 = k @ k
        expect = uh if k2 == 0 else uh - k * (k @ uh) / k2
        assert np.max(np.abs(pu[:, m[0], m[1]] - expect)) < 1e-13


def test_leray_rejects_scalar(unit_torus):
    with pytest.raises(ShapeError):
        leray_project(SpectralField.zeros(unit_torus, 1))


def test_divergence_operators(unit_torus):
    u = solenoidal(unit_torus, 8, energy=1.0)
    assert divergence_l2(u) <= 1e-12
    assert l2_norm(divergence(u)) <= 1e-12
    g = gradient_field(unit_torus, 9)
    assert divergence_l2(g) > 1e-3  # gradients are far from solenoidal
    ch = Grid(2, "channel", (2.0, 1.0), (16, 16))
    w = random_field(ch, np.random.default_rng(1), ncomp=2, divergence_free=True)
    assert divergence_l2(w) <= 1e-12
    with pytest.raises(DomainError):
        divergence(w)
    with pytest.raises(ShapeError):
        divergence(SpectralField.zeros(unit_torus, 1))


# -- bilinear terms --------------------------------------------------------


def test_b0_plane_wave_oracle():
    g = Grid(2, "torus", (1.0, 1.0), (32, 32))
    U = SpectralField.zeros(g, 2)
    U.coeffs[0][0, 0] = 0.7
    U.coeffs[1][0, 0] = -0.3
    v = SpectralField.zeros(g, 2)
    k = 2 * np.pi * np.array([1.0, 2.0])
    amp = np.array([2.0, -1.0]) / math.sqrt(5.0)  # perpendicular to k
    v.coeffs[:, 1, 2] = amp * (0.5 + 0.25j)
    v.coeffs[:, -1, -2] = amp * (0.5 - 0.25j)
    out = bilinear_B0(U, v)
    factor = 1j * (k[0] * 0.7 + k[1] * (-0.3))
    expect = np.zeros_like(v.coeffs)
    expect[:, 1, 2] = factor * v.coeffs[:, 1, 2]
    expect[:, -1, -2] = np.conj(factor) * v.coeffs[:, -1, -2]
    assert np.max(np.abs(out.coeffs - expect)) < 1e-12 * np.max(np.abs(expect))


def test_b1_plane_wave_oracle():
    g = Grid(2, "torus", (1.0, 1.0), (32, 32))
    U = SpectralField.zeros(g, 2)
    U.coeffs[0][0, 0] = 1.25
    th = SpectralField.zeros(g, 1)
    th.coeffs[0][3, 1] = 0.5 - 0.125j
    th.coeffs[0][-3, -1] = 0.5 + 0.125j
    out = bilinear_B1(U, th)
    factor = 1j * 2 * np.pi * 3 * 1.25
    expect = np.zeros_like(th.coeffs)
    expect[0][3, 1] = factor * th.coeffs[0][3, 1]
    expect[0][-3, -1] = np.conj(factor) * th.coeffs[0][-3, -1]
    assert np.max(np.abs(out.coeffs - expect)) < 1e-12 * np.max(np.abs(expect))


@pytest.mark.parametrize("grid_args", [
    (2, "torus", (1.0, 1.0), (32, 32)),
    (3, "torus", (1.0, 1.0, 1.0), (16, 16, 16)),
    (2, "channel", (2.0, 1.0), (32, 32)),
])
def test_bilinear_skew_symmetry(grid_args):
    g = Grid(*grid_args)
    n_pairs = 20 if g.dim == 2 and g.geometry == "torus" else 5
    for seed in range(n_pairs):
        u = solenoidal(g, seed, energy=1.0)
        w = solenoidal(g, 100 + seed, energy=1.0)
        th = random_field(g, np.random.default_rng(200 + seed), energy=1.0)
        assert abs(l2_inner(bilinear_B0(u, w), w)) <= 1e-10 * h1_norm(u) * h1_norm(w) ** 2
        assert abs(l2_inner(bilinear_B1(u, th), th)) <= 1e-10 * h1_norm(u) * h1_norm(th) ** 2


def test_bilinear_zero_inputs(unit_torus):
    u = solenoidal(unit_torus, 0, energy=1.0)
    z = SpectralField.zeros(unit_torus, 2)
    assert l2_norm(bilinear_B0(z, u)) == 0.0
    assert l2_norm(bilinear_B0(u, z)) == 0.0
    assert l2_norm(bilinear_B1(z, SpectralField.zeros(unit_torus, 1))) == 0.0


def test_bilinear_rejects_nonsolenoidal_advection(unit_torus):
    g = gradient_field(unit_torus, 11)
    v = solenoidal(unit_torus, 12, energy=1.0)
    with pytest.raises(DomainError):
        bilinear_B0(g, v)
    with pytest.raises(DomainError):
        bilinear_B1(g, SpectralField.zeros(unit_torus, 1))
    with pytest.raises(ShapeError):
        bilinear_B0(v, SpectralField.zeros(unit_torus, 1))
    with pytest.raises(ShapeError):
        bilinear_B1(v, v)


def test_bilinear_output_is_dealiased_and_solenoidal(unit_torus):
    u = solenoidal(unit_torus, 13, energy=1.0)
    w = solenoidal(unit_torus, 14, energy=1.0)
    out = bilinear_B0(u, w)
    assert np.all(out.coeffs[:, ~unit_torus.dealias_mask] == 0.0)
    assert divergence_l2(out) <= 1e-12 * max(1.0, h1_norm(out))
    out1 = bilinear_B1(u, random_field(unit_torus, np.random.default_rng(15)))
    assert np.all(out1.coeffs[:, ~unit_torus.dealias_mask] == 0.0)


# -- coupling --------------------------------------------------------------


def test_buoyancy_term_is_projected_vertical_forcing(unit_torus):
    th = random_field(unit_torus, np.random.default_rng(16), energy=1.0)
    b = buoyancy_term(th)
    assert divergence_l2(b) <= 1e-12
    v = solenoidal(unit_torus, 17, energy=1.0)
    # self-adjointness of the projection moves it onto the solenoidal test field
    assert l2_inner(b, v) == pytest.approx(l2_inner(th, vertical_velocity(v)), rel=1e-12)
    with pytest.raises(ShapeError):
        buoyancy_term(v)
    with pytest.raises(ShapeError):
        vertical_velocity(th)


def test_vertical_velocity_picks_last_component(unit_torus):
    u = solenoidal(unit_torus, 18, energy=1.0)
    assert np.array_equal(vertical_velocity(u).coeffs[0], u.coeffs[-1])


# -- random fields ---------------------------------------------------------


def test_random_field_reproducible(unit_torus):
    a = random_field(unit_torus, np.random.default_rng(21), ncomp=2, energy=1.0)
    b = random_field(unit_torus, np.random.default_rng(21), ncomp=2, energy=1.0)
    assert np.array_equal(a.coeffs, b.coeffs)


def test_random_field_properties(unit_torus):
    f = random_field(unit_torus, np.random.default_rng(22), ncomp=2, band=4,
                     divergence_free=True, energy=2.5)
    assert np.all(np.abs(f.coeffs[:, unit_torus.mode_radius > 4]) == 0.0)
    assert np.all(f.coeffs[:, 0, 0] == 0.0)  # mean-zero
    assert divergence_l2(f) <= 1e-12 * h1_norm(f)
    assert l2_norm(f) == pytest.approx(2.5, rel=1e-12)
    g = random_field(unit_torus, np.random.default_rng(22), energy=3.0,
                     energy_norm="h1")
    assert h1_norm(g) == pytest.approx(3.0, rel=1e-12)


def test_random_field_zero_band_cannot_be_rescaled(unit_torus):
    with pytest.raises(DomainError):
        random_field(unit_torus, np.random.default_rng(0), band=0.5, energy=1.0)


def test_operations_preserve_hermitian_symmetry(unit_torus):
    u = solenoidal(unit_torus, 23, energy=1.0)
    th = random_field(unit_torus, np.random.default_rng(24), energy=1.0)
    for out in (apply_A(u), leray_project(u), bilinear_B0(u, u),
                bilinear_B1(u, th), buoyancy_term(th), dealias(u)):
        to_physical(out)  # raises SymmetryError on any violation
