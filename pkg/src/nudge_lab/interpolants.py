"""Type-I observation operators: modal projection, local volume averages,
and mollified volume averages.

All three variants satisfy the interpolation inequality
``|I_h v - v| <= c h ||v||`` with an h-independent constant; the mollified
variant additionally controls the H1 norm of the reconstruction through
the gradient of the bump kernel.  Observations are the compact payloads
(mode coefficients or cell averages); reconstructions are spectral fields
suitable for feeding back into the equations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import integrate

from .errors import (
    DomainError,
    GridMismatchError,
    KindMismatchError,
    SamplingError,
    ShapeError,
)
from .spectral import (
    CHANNEL,
    TORUS,
    Grid,
    SpectralField,
    _spec,
    _workers,
    h1_norm,
    l2_norm,
    leray_project,
    random_field,
    to_physical,
)

MODAL = "modal"
VOLUME = "volume"
SMOOTHED_VOLUME = "smoothed_volume"

KIND_TAGS = {MODAL: 0, VOLUME: 1, SMOOTHED_VOLUME: 2}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}


# -- mollifier -----------------------------------------------------------


def _bump_radial(r: np.ndarray) -> np.ndarray:
    """exp(-1/(1-r^2)) inside the unit ball, 0 outside (unnormalized)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _mollifier_K0(dim: int) -> float:
    """Normalization so that the radial bump has unit mass in R^dim."""
    if dim not in (1, 2, 3):
        raise DomainError("mollifier dimension must be 1, 2 or 3")
    surface = {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}[dim]
    val, _ = integrate.quad(
        lambda r: r ** (dim - 1) * np.exp(-1.0 / (1.0 - r * r)),
        0.0,
        1.0,
        epsabs=1e-14,
        epsrel=1e-13,
    )
    return 1.0 / (surface * val)


def mollifier_rho(r, dim: int = 2) -> np.ndarray:
    """Normalized radial bump rho(|x|) at radius r in R^dim."""
    return _mollifier_K0(dim) * _bump_radial(np.asarray(r, dtype=float))


def mollifier_rho_eps(r, eps: float, dim: int = 2) -> np.ndarray:
    """Rescaled mollifier rho_eps(x) = eps^-dim rho(x/eps) at radius r."""
    if eps <= 0:
        raise DomainError("mollifier width must be positive")
    return mollifier_rho(np.asarray(r, dtype=float) / eps, dim) / eps**dim


# -- observations --------------------------------------------------------


@dataclass
class Observation:
    """One observation record: interpolant kind, timestamp, payload array.

    Modal payloads are complex mode coefficients of shape (ncomp, rank);
    volume payloads are real cell averages of shape (ncomp, *cells).
    """

    kind: str
    t: float
    payload: np.ndarray

    def __post_init__(self):
        if self.kind not in KIND_TAGS:
            raise KindMismatchError(f"unknown observation kind {self.kind!r}")
        self.payload = np.asarray(self.payload)


# -- partition -----------------------------------------------------------


@dataclass
class Partition:
    """Congruent axis-aligned cells tiling the domain exactly.

    Cell counts must divide the collocation resolution so every cell owns
    the same number of sample points.  ``h`` is the cell diameter.
    """

    grid: Grid
    cells: tuple

    def __post_init__(self):
        if isinstance(self.cells, int):
            self.cells = (self.cells,) * self.grid.dim
        self.cells = tuple(int(m) for m in self.cells)
        if len(self.cells) != self.grid.dim:
            raise ShapeError("cell counts must match grid dimension")
        if any(m < 1 for m in self.cells):
            raise DomainError("cell counts must be positive")
        for n, m in zip(self.grid.resolution, self.cells):
            if n % m:
                raise DomainError(
                    f"cells per axis ({m}) must divide resolution ({n})"
                )
        self.sides = tuple(L / m for L, m in zip(self.grid.extents, self.cells))
        self.h = float(np.sqrt(sum(s**2 for s in self.sides)))
        self.n_cells = int(np.prod(self.cells))
        self.samples_per_cell = tuple(
            n // m for n, m in zip(self.grid.resolution, self.cells)
        )

    def boundary_cells(self) -> list:
        """Indices of cells touching a wall (channel only; empty on torus)."""
        if self.grid.geometry == TORUS:
            return []
        mx, mz = self.cells
        out = []
        for ix in range(mx):
            out.append((ix, 0))
            if mz > 1:
                out.append((ix, mz - 1))
        return out

    def averages(self, samples: np.ndarray) -> np.ndarray:
        """Per-cell mean of collocation samples, shape (ncomp, *cells)."""
        ncomp = samples.shape[0]
        shape = [ncomp]
        for m, s in zip(self.cells, self.samples_per_cell):
            shape.extend([m, s])
        r = samples.reshape(shape)
        axes = tuple(2 + 2 * i for i in range(self.grid.dim))
        return r.mean(axis=axes)

    def scatter(self, averages: np.ndarray) -> np.ndarray:
        """Piecewise-constant samples from cell values."""
        out = averages
        for i, s in enumerate(self.samples_per_cell):
            out = np.repeat(out, s, axis=1 + i)
        return out


# -- interpolant variants ------------------------------------------------


class Interpolant:
    """Common protocol: observe, reconstruct, apply, rank, h."""

    kind: str
    grid: Grid
    h: float
    rank: int

    def observe(self, f: SpectralField, t: float = 0.0) -> Observation:
        raise NotImplementedError

    def reconstruct(self, obs: Observation, ncomp: int | None = None) -> SpectralField:
        raise NotImplementedError

    def apply(self, f: SpectralField) -> SpectralField:
        """reconstruct(observe(f)): the interpolant as an operator on fields."""
        return self.reconstruct(self.observe(f))

    def _check_field(self, f: SpectralField):
        if f.grid != self.grid:
            raise GridMismatchError("field grid does not match interpolant grid")

    def _check_obs(self, obs: Observation):
        if obs.kind != self.kind:
            raise KindMismatchError(
                f"observation kind {obs.kind!r} does not match interpolant {self.kind!r}"
            )

    def descriptor(self) -> dict:
        raise NotImplementedError


class Modal(Interpolant):
    """Projection onto the N gravest eigenmodes of the Stokes/Laplace operator.

    Eigenvalues are sorted ascending with ties broken lexicographically on
    the integer wavevector; the selection is closed under conjugation so
    real fields stay real, and the realized count is reported as ``rank``.
    The mean mode is not an eigenmode and is annihilated.
    """

    kind = MODAL

    def __init__(self, grid: Grid, n_modes: int):
        self.grid = grid
        self.n_modes = int(n_modes)
        candidates = grid.dealias_mask & (grid.lam > 0)
        total = int(candidates.sum())
        if not 1 <= self.n_modes <= total:
            raise DomainError(
                f"modal rank must be between 1 and {total} (inside the dealias band)"
            )
        entries = []
        for pos in np.argwhere(candidates):
            key = tuple(
                int(grid.mode_index[i][tuple(pos * (np.arange(grid.dim) == i))])
                for i in range(grid.dim)
            )
            entries.append((float(grid.lam[tuple(pos)]), key, tuple(int(p) for p in pos)))
        entries.sort(key=lambda e: (e[0], e[1]))
        chosen = {e[2] for e in entries[: self.n_modes]}
        if grid.geometry == TORUS:
            conj = {
                tuple((-p) % n for p, n in zip(pos, grid.resolution)) for pos in chosen
            }
        else:
            nx = grid.resolution[0]
            conj = {((-p[0]) % nx, p[1]) for pos in chosen for p in [pos]}
        chosen |= conj
        sel = sorted(chosen)
        self.mode_positions = tuple(np.array([p[i] for p in sel]) for i in range(grid.dim))
        self.mask = np.zeros(grid.resolution, dtype=bool)
        self.mask[self.mode_positions] = True
        self.rank = len(sel)
        self.mode_lams = grid.lam[self.mode_positions].copy()
        self.lambda_N = float(self.mode_lams.max())
        self.h = 1.0 / np.sqrt(self.lambda_N)

    def observe(self, f: SpectralField, t: float = 0.0) -> Observation:
        self._check_field(f)
        payload = f.coeffs[(slice(None),) + self.mode_positions].copy()
        return Observation(self.kind, float(t), payload)

    def reconstruct(self, obs: Observation, ncomp: int | None = None) -> SpectralField:
        self._check_obs(obs)
        p = obs.payload
        if p.ndim != 2 or p.shape[1] != self.rank:
            raise ShapeError(
                f"modal payload must have shape (ncomp, {self.rank}), got {p.shape}"
            )
        out = SpectralField.zeros(self.grid, p.shape[0])
        out.coeffs[(slice(None),) + self.mode_positions] = p
        return out

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "n_modes": self.n_modes,
            "rank": self.rank,
            "lambda_N": self.lambda_N,
            "h": self.h,
        }


class Volume(Interpolant):
    """Piecewise-constant projection onto cell averages."""

    kind = VOLUME

    def __init__(self, grid: Grid, cells):
        self.grid = grid
        self.partition = Partition(grid, cells)
        self.h = self.partition.h
        self.rank = self.partition.n_cells

    def observe(self, f: SpectralField, t: float = 0.0) -> Observation:
        self._check_field(f)
        s = to_physical(f)
        if f.ncomp == 1:
            s = s[np.newaxis]
        return Observation(self.kind, float(t), self.partition.averages(s))

    def _check_payload(self, p: np.ndarray):
        if p.shape[1:] != self.partition.cells:
            raise ShapeError(
                f"volume payload must have cell shape {self.partition.cells}, got {p.shape[1:]}"
            )

    def reconstruct(self, obs: Observation, ncomp: int | None = None) -> SpectralField:
        self._check_obs(obs)
        p = obs.payload
        self._check_payload(p)
        samples = self.partition.scatter(p)
        pars = (
            self.grid.component_parities(p.shape[0])
            if self.grid.geometry == CHANNEL
            else [None] * p.shape[0]
        )
        out = np.empty((p.shape[0],) + self.grid.resolution, dtype=np.complex128)
        for i, par in enumerate(pars):
            out[i] = _spec(self.grid, samples[i], par)
        return SpectralField(self.grid, out)

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "cells": list(self.partition.cells),
            "rank": self.rank,
            "h": self.h,
        }


class SmoothedVolume(Interpolant):
    """Cell averages reconstructed through mollified shape functions.

    phi_alpha = rho_eps * psi_alpha with psi_alpha the cell indicator;
    wall-adjacent cells in the channel use an indicator shrunk by eps in
    the wall-normal direction only, so the mollified shape respects the
    Dirichlet boundary.  eps = h/10 with h the cell diameter.  The kernel
    is tabulated on the collocation grid, renormalized to unit discrete
    mass, and applied as a circular convolution via the FFT.
    """

    kind = SMOOTHED_VOLUME

    def __init__(self, grid: Grid, cells):
        self.grid = grid
        self.partition = Partition(grid, cells)
        self.h = self.partition.h
        self.rank = self.partition.n_cells
        self.epsilon = self.h / 10.0
        if grid.geometry == CHANNEL and self.epsilon >= self.partition.sides[1]:
            raise DomainError(
                "mollifier width must be smaller than the wall-normal cell side"
            )
        self._build_kernel()

    # kernel tabulation ---------------------------------------------------

    def _conv_grid_coords(self):
        """Signed minimum-image displacement coordinates of the conv grid."""
        g = self.grid
        coords = []
        if g.geometry == TORUS:
            for n, L in zip(g.resolution, g.extents):
                x = np.arange(n) * (L / n)
                coords.append((x + L / 2) % L - L / 2)
        else:
            nx, nz = g.resolution
            L = g.extents[0]
            x = np.arange(nx) * (L / nx)
            coords.append((x + L / 2) % L - L / 2)
            # z displacements live on a doubled torus so wall cells never wrap
            z = np.arange(2 * nz) * (1.0 / nz)
            coords.append((z + 1.0) % 2.0 - 1.0)
        return coords

    def _build_kernel(self):
        g = self.grid
        coords = self._conv_grid_coords()
        mesh = np.meshgrid(*coords, indexing="ij")
        dist = np.sqrt(sum(m**2 for m in mesh))
        kernel = mollifier_rho_eps(dist, self.epsilon, dim=g.dim)
        mass = kernel.sum() * g.cell_volume
        if mass <= 0:
            raise DomainError("tabulated mollifier has no support on the grid")
        kernel /= mass
        self.kernel = kernel
        self.kernel_hat = sfft.fftn(kernel, workers=_workers()) * g.cell_volume
        # sup-norm of each partial derivative of the unscaled bump, from the
        # tabulated kernel: d(rho_eps)/dx = eps^-(d+1) (d rho/dx)(x/eps)
        kd = self._conv_grid_deriv_wavenumbers()
        sup_sq = 0.0
        for kdi in kd:
            gi = sfft.ifftn(1j * kdi * sfft.fftn(kernel), workers=_workers()).real
            sup_sq += (self.epsilon ** (g.dim + 1) * np.abs(gi).max()) ** 2
        self.K_rho_sq = float(sup_sq)

    def _conv_grid_deriv_wavenumbers(self):
        g = self.grid
        if g.geometry == TORUS:
            shapes = []
            for i, (n, L) in enumerate(zip(g.resolution, g.extents)):
                k = 2 * np.pi * sfft.fftfreq(n, d=L / n)
                k[n // 2] = 0.0
                sh = np.ones(g.dim, dtype=int)
                sh[i] = n
                shapes.append(k.reshape(sh))
            return shapes
        nx, nz = g.resolution
        L = g.extents[0]
        kx = 2 * np.pi * sfft.fftfreq(nx, d=L / nx)
        kx[nx // 2] = 0.0
        kz = 2 * np.pi * sfft.fftfreq(2 * nz, d=1.0 / nz)
        kz[nz] = 0.0
        return [kx.reshape(nx, 1), kz.reshape(1, 2 * nz)]

    # strip-shrunk piecewise-constant scatter ------------------------------

    def _shape_samples(self, averages: np.ndarray) -> np.ndarray:
        """sum_alpha v_alpha psi_alpha on the collocation grid."""
        samples = self.partition.scatter(averages)
        if self.grid.geometry == CHANNEL:
            z = self.grid.axes[1]
            strip = (z < self.epsilon) | (z > 1.0 - self.epsilon)
            samples = samples.copy()
            samples[..., strip] = 0.0
        return samples

    def _convolve(self, samples: np.ndarray) -> np.ndarray:
        """Circular convolution with the tabulated kernel, one component."""
        g = self.grid
        if g.geometry == TORUS:
            out = sfft.ifftn(
                sfft.fftn(samples, workers=_workers()) * self.kernel_hat,
                workers=_workers(),
            ).real
            return out
        nx, nz = g.resolution
        padded = np.zeros((nx, 2 * nz))
        padded[:, :nz] = samples
        out = sfft.ifftn(
            sfft.fftn(padded, workers=_workers()) * self.kernel_hat,
            workers=_workers(),
        ).real
        return out[:, :nz]

    # protocol -------------------------------------------------------------

    def observe(self, f: SpectralField, t: float = 0.0) -> Observation:
        self._check_field(f)
        s = to_physical(f)
        if f.ncomp == 1:
            s = s[np.newaxis]
        return Observation(self.kind, float(t), self.partition.averages(s))

    def reconstruct(self, obs: Observation, ncomp: int | None = None) -> SpectralField:
        self._check_obs(obs)
        p = obs.payload
        if p.shape[1:] != self.partition.cells:
            raise ShapeError(
                f"payload must have cell shape {self.partition.cells}, got {p.shape[1:]}"
            )
        shaped = self._shape_samples(p)
        pars = (
            self.grid.component_parities(p.shape[0])
            if self.grid.geometry == CHANNEL
            else [None] * p.shape[0]
        )
        out = np.empty((p.shape[0],) + self.grid.resolution, dtype=np.complex128)
        for i, par in enumerate(pars):
            out[i] = _spec(self.grid, self._convolve(shaped[i]), par)
        return SpectralField(self.grid, out)

    def shape_function(self, cell_index) -> np.ndarray:
        """phi_alpha evaluated on the collocation grid (physical samples)."""
        avg = np.zeros((1,) + self.partition.cells)
        avg[(0,) + tuple(cell_index)] = 1.0
        return self._convolve(self._shape_samples(avg)[0])

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "cells": list(self.partition.cells),
            "rank": self.rank,
            "h": self.h,
            "epsilon": self.epsilon,
            "K_rho_sq": self.K_rho_sq,
        }


def make_interpolant(grid: Grid, kind: str, n_modes=None, cells=None) -> Interpolant:
    if kind == MODAL:
        if n_modes is None:
            raise DomainError("modal interpolant requires n_modes")
        return Modal(grid, n_modes)
    if kind == VOLUME:
        if cells is None:
            raise DomainError("volume interpolant requires cell counts")
        return Volume(grid, cells)
    if kind == SMOOTHED_VOLUME:
        if cells is None:
            raise DomainError("smoothed volume interpolant requires cell counts")
        return SmoothedVolume(grid, cells)
    raise DomainError(f"unknown interpolant kind {kind!r}")


# -- empirical constants -------------------------------------------------


@dataclass
class Type1Constants:
    """Empirical boundedness and approximation ratios of an interpolant."""

    c_bound: float
    c_approx: float
    h: float
    n_used: int
    n_skipped: int


def estimate_type1_constants(
    ip: Interpolant,
    n_samples: int = 100,
    seed: int = 0,
    band: float | None = None,
    ncomp: int = 1,
    slope: float = 0.0,
) -> Type1Constants:
    """Sample max |I_h v|/|v| and max |I_h v - v|/(h ||v||).

    Fields are seeded, mean-zero, band-limited with the given spectral
    slope; vector samples are additionally Leray-projected.  Degenerate
    draws (vanishing norms) are skipped and counted; if every draw
    degenerates a SamplingError is raised.
    """
    rng = np.random.default_rng(seed)
    c_bound = 0.0
    c_approx = 0.0
    used = skipped = 0
    for _ in range(n_samples):
        v = random_field(ip.grid, rng, ncomp=ncomp, band=band, slope=slope,
                         divergence_free=(ncomp > 1))
        nrm_l2, nrm_h1 = l2_norm(v), h1_norm(v)
        if nrm_l2 < 1e-14 or nrm_h1 < 1e-14:
            skipped += 1
            continue
        iv = ip.apply(v)
        c_bound = max(c_bound, l2_norm(iv) / nrm_l2)
        c_approx = max(c_approx, l2_norm(iv - v) / (ip.h * nrm_h1))
        used += 1
    if used == 0:
        raise SamplingError("all sampled fields were degenerate")
    return Type1Constants(c_bound, c_approx, ip.h, used, skipped)


@dataclass
class GradientBoundReport:
    """Empirical check of ||I~_h v||^2 <= h K_rho^2 sum |v_alpha|^2 scaling."""

    max_ratio: float
    K_rho_sq: float
    h: float
    n_used: int
    n_skipped: int


def smoothed_gradient_bound_check(
    ip: SmoothedVolume,
    n_samples: int = 50,
    seed: int = 0,
    band: float | None = None,
    ncomp: int = 1,
) -> GradientBoundReport:
    """Max over samples of ||I~_h v||^2 / (h K_rho^2 sum_alpha |v_alpha|^2)."""
    if not isinstance(ip, SmoothedVolume):
        raise KindMismatchError("gradient bound check applies to SmoothedVolume")
    rng = np.random.default_rng(seed)
    worst = 0.0
    used = skipped = 0
    for _ in range(n_samples):
        v = random_field(ip.grid, rng, ncomp=ncomp, band=band,
                         divergence_free=(ncomp > 1))
        obs = ip.observe(v)
        data_sq = float(np.sum(obs.payload**2))
        if data_sq < 1e-28:
            skipped += 1
            continue
        rec = ip.reconstruct(obs)
        worst = max(worst, h1_norm(rec) ** 2 / (ip.h * ip.K_rho_sq * data_sq))
        used += 1
    if used == 0:
        raise SamplingError("all sampled fields were degenerate")
    return GradientBoundReport(worst, ip.K_rho_sq, ip.h, used, skipped)
