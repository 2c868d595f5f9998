"""Observation-operator checks: exact cell quadrature, projection algebra,
mollifier normalization, and the empirical interpolant constants."""

import math

import numpy as np
import pytest
from scipy import integrate

from nudge_lab.errors import (
    DomainError,
    GridMismatchError,
    KindMismatchError,
    SamplingError,
    ShapeError,
)
from nudge_lab.interpolants import (
    Modal,
    Observation,
    Partition,
    SmoothedVolume,
    Volume,
    estimate_type1_constants,
    make_interpolant,
    mollifier_rho,
    mollifier_rho_eps,
    smoothed_gradient_bound_check,
)
from nudge_lab.spectral import (
    Grid,
    SpectralField,
    h1_norm,
    l2_norm,
    l2_inner,
    random_field,
    to_physical,
    to_spectral,
)


def rand_scalar(grid, seed, **kw):
    return random_field(grid, np.random.default_rng(seed), **kw)


# -- mollifier -------------------------------------------------------------


def bump_mass(dim):
    """Independent quadrature of the unnormalized radial bump."""
    surface = {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi}[dim]
    val, _ = integrate.quad(
        lambda r: r ** (dim - 1) * math.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0,
        epsabs=1e-14,
    )
    return surface * val


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_mollifier_vanishes_outside_unit_ball(dim):
    assert mollifier_rho(1.0, dim=dim) == 0.0
    assert mollifier_rho(1.5, dim=dim) == 0.0
    assert mollifier_rho(np.inf, dim=dim) == 0.0
    assert mollifier_rho(0.999, dim=dim) > 0.0


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_mollifier_value_at_origin(dim):
    K0 = 1.0 / bump_mass(dim)
    assert mollifier_rho(0.0, dim=dim) == pytest.approx(K0 * math.exp(-1.0), rel=1e-10)


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("eps", [1.0, 0.3, 0.02])
def test_mollifier_eps_has_unit_mass(dim, eps):
    surface = {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi}[dim]
    val, _ = integrate.quad(
        lambda r: surface * r ** (dim - 1) * mollifier_rho_eps(r, eps, dim=dim),
        0.0, eps, epsabs=1e-13,
    )
    assert val == pytest.approx(1.0, abs=1e-10)


def test_mollifier_eps_validation():
    with pytest.raises(DomainError):
        mollifier_rho_eps(0.5, 0.0)
    with pytest.raises(DomainError):
        mollifier_rho_eps(0.5, -1.0)


# -- partition --------------------------------------------------------------


def test_partition_validation(unit_torus):
    with pytest.raises(DomainError):
        Partition(unit_torus, 5)  # does not divide 32
    with pytest.raises(DomainError):
        Partition(unit_torus, (4, 0))
    with pytest.raises(ShapeError):
        Partition(unit_torus, (4, 4, 4))
    p = Partition(unit_torus, 4)
    assert p.cells == (4, 4)
    assert p.n_cells == 16
    assert p.sides == (0.25, 0.25)
    assert p.h == pytest.approx(0.25 * math.sqrt(2.0), rel=1e-14)
    assert p.boundary_cells() == []


def test_partition_boundary_cells_channel():
    g = Grid(2, "channel", (2.0, 1.0), (16, 16))
    p = Partition(g, (4, 4))
    walls = set(p.boundary_cells())
    assert walls == {(ix, 0) for ix in range(4)} | {(ix, 3) for ix in range(4)}


def test_cell_averages_match_explicit_mean(unit_torus):
    p = Partition(unit_torus, (4, 8))
    s = np.random.default_rng(0).standard_normal((2,) + unit_torus.resolution)
    got = p.averages(s)
    sx, sz = p.samples_per_cell
    for c in range(2):
        for i in range(4):
            for j in range(8):
                block = s[c, i * sx:(i + 1) * sx, j * sz:(j + 1) * sz]
                assert got[c, i, j] == pytest.approx(block.mean(), abs=1e-10)
    back = p.scatter(got)
    assert back.shape == s.shape
    assert np.array_equal(back[:, 0, 0], got[:, 0, 0])


# -- protocol ---------------------------------------------------------------


@pytest.mark.parametrize("kind,kw", [
    ("modal", {"n_modes": 8}),
    ("volume", {"cells": 4}),
    ("smoothed_volume", {"cells": 4}),
])
def test_apply_is_reconstruct_of_observe(unit_torus, kind, kw):
    ip = make_interpolant(unit_torus, kind, **kw)
    for seed in range(20):
        f = rand_scalar(unit_torus, seed, ncomp=2, energy=1.0)
        via_apply = ip.apply(f)
        via_parts = ip.reconstruct(ip.observe(f))
        assert np.array_equal(via_apply.coeffs, via_parts.coeffs)


def test_make_interpolant_validation(unit_torus):
    with pytest.raises(DomainError):
        make_interpolant(unit_torus, "modal")
    with pytest.raises(DomainError):
        make_interpolant(unit_torus, "volume")
    with pytest.raises(DomainError):
        make_interpolant(unit_torus, "nodal", n_modes=4)


def test_grid_and_kind_mismatch_errors(unit_torus):
    ip = Modal(unit_torus, 8)
    other = Grid(2, "torus", (1.0, 1.0), (16, 16))
    with pytest.raises(GridMismatchError):
        ip.observe(SpectralField.zeros(other, 2))
    vol = Volume(unit_torus, 4)
    obs = vol.observe(SpectralField.zeros(unit_torus, 2))
    with pytest.raises(KindMismatchError):
        ip.reconstruct(obs)
    with pytest.raises(KindMismatchError):
        Observation("pointwise", 0.0, np.zeros(3))


def test_observation_timestamp_and_payload(unit_torus):
    ip = Volume(unit_torus, 4)
    f = rand_scalar(unit_torus, 3, ncomp=2, energy=1.0)
    obs = ip.observe(f, t=1.25)
    assert obs.t == 1.25
    assert obs.payload.shape == (2, 4, 4)
    with pytest.raises(ShapeError):
        ip.reconstruct(Observation(ip.kind, 0.0, np.zeros((2, 3, 3))))
    with pytest.raises(ShapeError):
        Modal(unit_torus, 8).reconstruct(Observation("modal", 0.0, np.zeros((2, 5))))


# -- modal -----------------------------------------------------------------


def test_modal_rank_and_h(unit_torus):
    ip = Modal(unit_torus, 8)
    # eight gravest eigenvalues: four at |m|^2 = 1 and four at |m|^2 = 2
    assert ip.rank == 8
    assert ip.lambda_N == pytest.approx(2 * (2 * np.pi) ** 2, rel=1e-14)
    assert ip.h == pytest.approx(1.0 / math.sqrt(ip.lambda_N), rel=1e-14)
    with pytest.raises(DomainError):
        Modal(unit_torus, 0)
    with pytest.raises(DomainError):
        Modal(unit_torus, 10**6)


def test_modal_selection_closed_under_conjugation(unit_torus):
    # an odd request still yields a real-field-preserving (even) selection
    ip = Modal(unit_torus, 5)
    assert ip.rank >= 5 and ip.rank % 2 == 0
    f = rand_scalar(unit_torus, 1, ncomp=2, energy=1.0)
    to_physical(ip.apply(f))  # stays real: no SymmetryError


def test_modal_lossless_on_band_limited_fields(unit_torus):
    ip = Modal(unit_torus, 8)
    f = rand_scalar(unit_torus, 2, ncomp=2, energy=1.0)
    g = SpectralField(unit_torus, f.coeffs * ip.mask)
    assert np.array_equal(ip.apply(g).coeffs, g.coeffs)


def test_modal_is_orthogonal_projection(unit_torus):
    ip = Modal(unit_torus, 12)
    f = rand_scalar(unit_torus, 4, ncomp=2, energy=1.0)
    g = rand_scalar(unit_torus, 5, ncomp=2, energy=1.0)
    pf = ip.apply(f)
    assert np.array_equal(ip.apply(pf).coeffs, pf.coeffs)  # idempotent
    assert l2_inner(pf, g) == pytest.approx(l2_inner(f, ip.apply(g)), rel=1e-12)
    assert l2_norm(pf) <= l2_norm(f) * (1 + 1e-12)
    assert h1_norm(pf) <= h1_norm(f) * (1 + 1e-12)


def test_modal_annihilates_the_mean(unit_torus):
    ip = Modal(unit_torus, 8)
    f = to_spectral(np.full(unit_torus.resolution, 3.0), unit_torus)
    assert l2_norm(ip.apply(f)) == 0.0


# -- volume ----------------------------------------------------------------


def test_volume_constant_field_round_trip(unit_torus):
    ip = Volume(unit_torus, 4)
    f = to_spectral(np.full(unit_torus.resolution, 1.7), unit_torus)
    obs = ip.observe(f)
    assert np.max(np.abs(obs.payload - 1.7)) < 1e-12
    rec = to_physical(ip.reconstruct(obs))
    assert np.max(np.abs(rec - 1.7)) < 1e-12


def test_volume_apply_fixes_cellwise_constant_fields(unit_torus):
    ip = Volume(unit_torus, (4, 8))
    vals = np.random.default_rng(1).standard_normal((1, 4, 8))
    samples = ip.partition.scatter(vals)
    f = to_spectral(samples[0], unit_torus)
    back = to_physical(ip.apply(f))
    assert np.max(np.abs(back - samples[0])) < 1e-12


def test_volume_observe_matches_quadrature_oracle(unit_torus):
    ip = Volume(unit_torus, 8)
    f = rand_scalar(unit_torus, 6, energy=1.0)
    s = to_physical(f)
    got = ip.observe(f).payload[0]
    n = 4  # samples per cell side
    for i in range(8):
        for j in range(8):
            assert got[i, j] == pytest.approx(
                s[i * n:(i + 1) * n, j * n:(j + 1) * n].mean(), abs=1e-10)


def test_volume_payload_count_bound(unit_torus):
    # sum of squared cell averages is controlled by the L2 norm
    ip = Volume(unit_torus, 8)
    for seed in range(20):
        f = rand_scalar(unit_torus, seed, ncomp=2, energy=1.0)
        ssq = float(np.sum(ip.observe(f).payload ** 2))
        bound = ip.rank / unit_torus.volume * l2_norm(f) ** 2
        assert ssq <= bound + 1e-10


# -- smoothed volume ---------------------------------------------------------


def test_smoothed_epsilon_and_descriptor(unit_torus):
    ip = SmoothedVolume(unit_torus, 4)
    assert ip.epsilon == ip.h / 10.0
    d = ip.descriptor()
    assert d["kind"] == "smoothed_volume" and d["epsilon"] == ip.epsilon
    assert d["K_rho_sq"] == ip.K_rho_sq > 0.0


def test_shape_functions_nonnegative_and_locally_supported(unit_torus):
    ip = SmoothedVolume(unit_torus, 4)
    phi = ip.shape_function((1, 2))
    scale = np.abs(phi).max()
    assert phi.min() >= -1e-12 * scale
    # support is the cell dilated by eps (minimum-image distance to the
    # cell's sample points)
    X, Y = unit_torus.meshgrid()
    sx, sy = ip.partition.samples_per_cell
    cx = X[1 * sx:2 * sx, 2 * sy:3 * sy].ravel()
    cy = Y[1 * sx:2 * sx, 2 * sy:3 * sy].ravel()
    dx = np.abs(X[..., None] - cx)
    dy = np.abs(Y[..., None] - cy)
    dx = np.minimum(dx, 1.0 - dx)
    dy = np.minimum(dy, 1.0 - dy)
    dist = np.sqrt(dx**2 + dy**2).min(axis=-1)
    outside = dist >= ip.epsilon
    assert np.max(np.abs(phi[outside])) <= 1e-12 * scale


def test_shape_functions_sum_to_one_on_torus(unit_torus):
    ip = SmoothedVolume(unit_torus, 4)
    total = sum(ip.shape_function((i, j)) for i in range(4) for j in range(4))
    assert np.max(total) <= 1.0 + 1e-10
    assert np.max(np.abs(total - 1.0)) < 1e-10


def test_smoothed_constant_on_eroded_interiors(unit_torus):
    ip = SmoothedVolume(unit_torus, 4)
    f = to_spectral(np.full(unit_torus.resolution, 2.2), unit_torus)
    rec = to_physical(ip.reconstruct(ip.observe(f)))
    # on the torus the shapes sum to one, so a constant is reproduced
    # everywhere, in particular beyond eps of every cell face
    X, Y = unit_torus.meshgrid()
    fx = np.minimum(X % 0.25, 0.25 - X % 0.25)
    fy = np.minimum(Y % 0.25, 0.25 - Y % 0.25)
    interior = (fx > ip.epsilon) & (fy > ip.epsilon)
    assert interior.any()
    assert np.max(np.abs(rec[interior] - 2.2)) < 1e-10


def test_smoothed_channel_wall_strips():
    g = Grid(2, "channel", (2.0, 1.0), (32, 32))
    ip = SmoothedVolume(g, (4, 4))
    phi_wall = ip.shape_function((0, 0))
    z = g.axes[1]
    # the wall cell's indicator is shrunk by eps, so the mollified shape
    # vanishes at the wall itself
    assert np.max(np.abs(phi_wall[:, z < ip.epsilon / 2])) < 1e-12
    total = sum(ip.shape_function((i, j)) for i in range(4) for j in range(4))
    assert np.max(total) <= 1.0 + 1e-10
    away = (z > 2 * ip.epsilon) & (z < 1.0 - 2 * ip.epsilon)
    assert np.max(np.abs(total[:, away] - 1.0)) < 1e-10


def test_smoothed_reconstruct_matches_shape_functions(unit_torus):
    ip = SmoothedVolume(unit_torus, 4)
    e = np.zeros((1, 4, 4))
    e[0, 2, 1] = 1.0
    rec = to_physical(ip.reconstruct(Observation(ip.kind, 0.0, e)))
    assert np.max(np.abs(rec - ip.shape_function((2, 1)))) < 1e-12


# -- empirical constants ------------------------------------------------------


def test_type1_constants_modal_bounds(unit_torus):
    ip = Modal(unit_torus, 8)
    est = estimate_type1_constants(ip, n_samples=100, seed=0, slope=2.0)
    assert est.n_used == 100 and est.n_skipped == 0
    assert est.c_bound <= 1.0 + 1e-10  # orthogonal projection
    # with h = 1/sqrt(lambda_N) the tail estimate gives |P_N v - v| <= h ||v||
    assert est.c_approx <= 1.0 + 1e-12


def test_type1_constants_reproducible(unit_torus):
    ip = Volume(unit_torus, 4)
    a = estimate_type1_constants(ip, n_samples=25, seed=7)
    b = estimate_type1_constants(ip, n_samples=25, seed=7)
    assert (a.c_bound, a.c_approx) == (b.c_bound, b.c_approx)
    assert a.h == ip.h


def test_type1_constants_all_degenerate_samples(unit_torus):
    ip = Volume(unit_torus, 4)
    with pytest.raises(SamplingError):
        estimate_type1_constants(ip, n_samples=5, seed=0, band=0.5)


def test_gradient_bound_check_zero_and_single_cell(unit_torus):
    ip = SmoothedVolume(unit_torus, 4)
    with pytest.raises(KindMismatchError):
        smoothed_gradient_bound_check(Volume(unit_torus, 4))
    rep = smoothed_gradient_bound_check(ip, n_samples=10, seed=1)
    assert rep.n_used == 10 and rep.max_ratio > 0.0
    assert rep.K_rho_sq == ip.K_rho_sq and rep.h == ip.h
    # single-cell data: the ratio reduces to the shape function's own
    # Dirichlet energy over h K_rho^2
    e = np.zeros((1, 4, 4))
    e[0, 0, 0] = 1.0
    phi = ip.reconstruct(Observation(ip.kind, 0.0, e))
    ratio = h1_norm(phi) ** 2 / (ip.h * ip.K_rho_sq)
    assert np.isfinite(ratio) and ratio > 0.0
    zero = ip.observe(SpectralField.zeros(unit_torus, 1))
    assert h1_norm(ip.reconstruct(zero)) == 0.0
