"""Spectral representation of incompressible flow fields.

Fields live on a uniform collocation grid over a periodic box (``torus``)
or a 2D channel that is periodic in x and bounded by walls at z = 0, 1
(``channel``).  Torus fields are expanded in complex exponentials.  Channel
fields use exponentials in x and a sine/cosine basis in z chosen so that
homogeneous Dirichlet components (wall-normal velocity, temperature) are
sine series while the horizontal velocity is a cosine series; with that
pairing the basis is closed under incompressibility and under the
Boussinesq nonlinearity, and the Stokes and Laplace operators are diagonal.

Coefficient convention: ``f(x) = sum_k c_k e_k(x)`` with ``c = FFT(f)/N``
per periodic axis, so Parseval reads ``|f|^2 = |Omega| * sum w_k |c_k|^2``
(with basis weights w_k = 1 on the torus).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy import fft as sfft

from .errors import (
    DomainError,
    GridMismatchError,
    ShapeError,
    SymmetryError,
)

TORUS = "torus"
CHANNEL = "channel"

# z-basis parity tags for channel fields
SIN = "sin"
COS = "cos"

_DIV_TOL = 1e-8


def _workers() -> int:
    """Data-parallel width for FFT calls, capped by NUDGE_LAB_THREADS."""
    try:
        return max(1, int(os.environ.get("NUDGE_LAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(eq=True)
class Grid:
    """Collocation grid and the derived spectral machinery.

    Attributes beyond the declared fields (wavenumbers, eigenvalues,
    dealias mask, ...) are built once in ``__post_init__`` and treated as
    immutable.
    """

    dim: int
    geometry: str
    extents: tuple
    resolution: tuple

    def __post_init__(self):
        self.extents = tuple(float(e) for e in self.extents)
        self.resolution = tuple(int(n) for n in self.resolution)
        if self.geometry not in (TORUS, CHANNEL):
            raise DomainError(f"unknown geometry {self.geometry!r}")
        if self.dim not in (2, 3):
            raise DomainError("dim must be 2 or 3")
        if self.geometry == CHANNEL and self.dim != 2:
            raise DomainError("channel geometry is supported in 2D only")
        if len(self.extents) != self.dim or len(self.resolution) != self.dim:
            raise ShapeError("extents/resolution length must equal dim")
        if any(e <= 0 for e in self.extents):
            raise DomainError("extents must be positive")
        if any(n < 8 or n % 2 for n in self.resolution):
            raise DomainError("resolution must be even and at least 8 per axis")
        if self.geometry == CHANNEL and self.extents[1] != 1.0:
            raise DomainError("channel wall-normal extent is normalized to 1")

        dim, res, ext = self.dim, self.resolution, self.extents
        self.volume = float(np.prod(ext))
        self.cell_volume = self.volume / float(np.prod(res))
        self.spacing = tuple(L / n for L, n in zip(ext, res))

        if self.geometry == TORUS:
            # collocation x_j = j*dx, wavenumbers 2*pi*n/L
            self.axes = [np.arange(n) * d for n, d in zip(res, self.spacing)]
            ks = [2 * np.pi * sfft.fftfreq(n, d=L / n) for n, L in zip(res, ext)]
            self._k1d = ks
            kd = []
            for k, n in zip(ks, res):
                k = k.copy()
                k[n // 2] = 0.0  # odd derivatives drop the unpaired Nyquist mode
                kd.append(k)
            self._kd1d = kd
            shape = [np.ones(dim, dtype=int) for _ in range(dim)]
            for i in range(dim):
                shape[i][i] = res[i]
            self.k = [ks[i].reshape(shape[i]) for i in range(dim)]
            self.kd = [kd[i].reshape(shape[i]) for i in range(dim)]
            self.lam = sum(np.broadcast_to(self.k[i] ** 2, res) for i in range(dim))
            idx = [sfft.fftfreq(n) * n for n in res]
            self.mode_index = [idx[i].reshape(shape[i]) for i in range(dim)]
            self.mode_radius = np.sqrt(
                sum(np.broadcast_to(self.mode_index[i] ** 2, res) for i in range(dim))
            )
            masks = []
            for i, n in enumerate(res):
                cut = (n - 1) // 3
                masks.append(np.abs(self.mode_index[i]) <= cut)
            m = np.broadcast_to(masks[0], res).copy()
            for i in range(1, dim):
                m &= np.broadcast_to(masks[i], res)
            self.dealias_mask = m
            self.lambda1 = (2 * np.pi / min(ext)) ** 2
        else:
            nx, nz = res
            L = ext[0]
            # x periodic, z collocated at half-integer points (cell centers)
            self.axes = [np.arange(nx) * self.spacing[0],
                         (np.arange(nz) + 0.5) * self.spacing[1]]
            kx = 2 * np.pi * sfft.fftfreq(nx, d=L / nx)
            kdx = kx.copy()
            kdx[nx // 2] = 0.0
            kz = np.pi * np.arange(nz)
            self._k1d = [kx, kz]
            self._kd1d = [kdx, kz]
            self.kx = kx.reshape(nx, 1)
            self.kdx = kdx.reshape(nx, 1)
            self.kz = kz.reshape(1, nz)
            self.lam = self.kx**2 + self.kz**2
            nix = (sfft.fftfreq(nx) * nx).reshape(nx, 1)
            self.mode_index = [nix, np.arange(nz).reshape(1, nz)]
            self.mode_radius = np.sqrt(nix**2 + np.arange(nz).reshape(1, nz) ** 2)
            mx = np.abs(nix) <= (nx - 1) // 3
            mz = np.arange(nz).reshape(1, nz) <= (nz - 1) // 3
            self.dealias_mask = np.broadcast_to(mx & mz, res).copy()
            # weight of each basis function in Parseval sums
            wsin = np.full(nz, 0.5)
            wcos = np.full(nz, 0.5)
            wcos[0] = 1.0
            self._zweights = {SIN: wsin, COS: wcos}
            # smallest admissible eigenvalue over velocity and temperature bases
            self.lambda1 = min((2 * np.pi / L) ** 2, np.pi**2)

    # -- helpers ---------------------------------------------------------

    def component_parities(self, ncomp: int) -> tuple:
        """z-basis parity per component (channel only).

        Scalars are Dirichlet (sine); vectors pair a Neumann horizontal
        component with a Dirichlet wall-normal one.
        """
        if self.geometry != CHANNEL:
            raise DomainError("parities are defined for channel grids only")
        if ncomp == 1:
            return (SIN,)
        if ncomp == 2:
            return (COS, SIN)
        raise ShapeError(f"channel fields have 1 or 2 components, got {ncomp}")

    def basis_weights(self, parity: str) -> np.ndarray:
        """Parseval weight per mode slot for one channel component."""
        w = self._zweights[parity]
        return np.broadcast_to(w.reshape(1, -1), self.resolution)

    def meshgrid(self):
        return np.meshgrid(*self.axes, indexing="ij")


@dataclass
class SpectralField:
    """Spectral coefficients of a scalar or vector field on a grid.

    ``coeffs`` has shape ``(ncomp, *resolution)`` and dtype complex128.
    """

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.shape == self.grid.resolution:
            c = c[np.newaxis]
        if c.ndim != self.grid.dim + 1 or c.shape[1:] != self.grid.resolution:
            raise ShapeError(
                f"coefficient shape {c.shape} does not match grid "
                f"resolution {self.grid.resolution}"
            )
        if c.shape[0] not in (1, self.grid.dim):
            raise ShapeError(
                f"fields are scalar or {self.grid.dim}-component, got {c.shape[0]}"
            )
        self.coeffs = np.ascontiguousarray(c, dtype=np.complex128)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.ncomp > 1

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 1) -> "SpectralField":
        return cls(grid, np.zeros((ncomp,) + grid.resolution, dtype=np.complex128))

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def _check_compatible(self, other: "SpectralField"):
        if self.grid != other.grid:
            raise GridMismatchError("fields live on different grids")
        if self.ncomp != other.ncomp:
            raise ShapeError("component counts differ")

    def __add__(self, other):
        self._check_compatible(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_compatible(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return SpectralField(self.grid, self.coeffs * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)


@dataclass
class FlowState:
    """Reference solution state: velocity, temperature (None in NSE mode), time."""

    u: SpectralField
    theta: SpectralField | None
    t: float

    def __post_init__(self):
        if not self.u.is_vector:
            raise ShapeError("velocity must be a vector field")
        if self.theta is not None:
            if self.theta.is_vector:
                raise ShapeError("temperature must be a scalar field")
            if self.theta.grid != self.u.grid:
                raise GridMismatchError("velocity and temperature grids differ")


@dataclass
class Params:
    """Physical and analytic parameters.

    ``c_interp`` is the type-I interpolant constant c and ``C_sob`` the
    generic Sobolev/Ladyzhenskaya constant C appearing in the admissibility
    formulas; both are proof artifacts, default to 1, and are configurable
    because condition reports print sensitivity in them.
    """

    nu: float
    kappa: float = 0.0
    f: SpectralField | None = None
    c_interp: float = 1.0
    C_sob: float = 1.0

    def __post_init__(self):
        if self.nu <= 0:
            raise DomainError("nu must be positive")
        if self.kappa < 0:
            raise DomainError("kappa must be nonnegative")
        if self.c_interp <= 0 or self.C_sob <= 0:
            raise DomainError("analytic constants must be positive")
        if self.f is not None:
            if not self.f.is_vector:
                raise ShapeError("body force must be a vector field")
            if divergence_l2(self.f) > _DIV_TOL * max(1.0, l2_norm(self.f)):
                raise DomainError("body force must be divergence-free")


# -- transforms ----------------------------------------------------------


def _fft_axes(grid: Grid):
    return tuple(range(1, grid.dim + 1))


def _forward_channel_z(arr: np.ndarray, parity: str) -> np.ndarray:
    """Half-integer-grid samples -> sine/cosine coefficients along axis -1."""
    n = arr.shape[-1]
    if parity == COS:
        X = sfft.dct(arr, type=2, axis=-1, workers=_workers())
        c = X / n
        c[..., 0] *= 0.5
        return c
    X = sfft.dst(arr, type=2, axis=-1, workers=_workers())
    c = np.zeros_like(X)
    c[..., 1:] = X[..., :-1] / n  # slot m holds sin(m pi z); top mode dropped
    return c


def _inverse_channel_z(c: np.ndarray, parity: str) -> np.ndarray:
    n = c.shape[-1]
    if parity == COS:
        X = c * n
        X[..., 0] *= 2.0
        return sfft.idct(X, type=2, axis=-1, workers=_workers())
    X = np.zeros_like(c)
    X[..., :-1] = c[..., 1:] * n
    return sfft.idst(X, type=2, axis=-1, workers=_workers())


def _check_hermitian(grid: Grid, coeffs: np.ndarray):
    """Real fields must satisfy c(-k) = conj(c(k)) on periodic axes."""
    scale = np.abs(coeffs).max()
    if scale == 0.0:
        return
    axes = range(1, grid.dim + 1) if grid.geometry == TORUS else (1,)
    flipped = coeffs
    for ax in axes:
        n = coeffs.shape[ax]
        idx = (-np.arange(n)) % n
        flipped = np.take(flipped, idx, axis=ax)
    err = np.abs(flipped.conj() - coeffs).max()
    if err > 1e-10 * scale:
        raise SymmetryError(
            f"coefficients break Hermitian symmetry (relative error {err / scale:.2e})"
        )


def to_spectral(samples: np.ndarray, grid: Grid) -> SpectralField:
    """Transform collocation samples of a real field to coefficients.

    ``samples`` has shape ``resolution`` (scalar) or ``(ncomp, *resolution)``.
    """
    s = np.asarray(samples, dtype=float)
    if s.shape == grid.resolution:
        s = s[np.newaxis]
    if s.ndim != grid.dim + 1 or s.shape[1:] != grid.resolution:
        raise ShapeError(f"sample shape {s.shape} does not match grid")
    ncomp = s.shape[0]
    if grid.geometry == TORUS:
        c = sfft.fftn(s, axes=_fft_axes(grid), workers=_workers())
        c /= np.prod(grid.resolution)
        return SpectralField(grid, c)
    parities = grid.component_parities(ncomp)
    nx = grid.resolution[0]
    c = sfft.fft(s.astype(complex), axis=1, workers=_workers()) / nx
    out = np.empty_like(c)
    for i, par in enumerate(parities):
        out[i] = _forward_channel_z(c[i], par)
    return SpectralField(grid, out)


def to_physical(f: SpectralField, check: bool = True) -> np.ndarray:
    """Evaluate a field on the collocation grid.

    Raises SymmetryError if coefficients are not those of a real field.
    Returns shape ``resolution`` for scalars, ``(ncomp, *resolution)`` else.
    """
    grid = f.grid
    if check:
        _check_hermitian(grid, f.coeffs)
    if grid.geometry == TORUS:
        s = sfft.ifftn(
            f.coeffs * np.prod(grid.resolution),
            axes=_fft_axes(grid),
            workers=_workers(),
        ).real
    else:
        parities = grid.component_parities(f.ncomp)
        nx = grid.resolution[0]
        mid = np.empty_like(f.coeffs)
        for i, par in enumerate(parities):
            mid[i] = _inverse_channel_z(f.coeffs[i], par)
        s = sfft.ifft(mid * nx, axis=1, workers=_workers()).real
    return s[0] if f.ncomp == 1 else s


def dealias(f: SpectralField) -> SpectralField:
    """Zero all modes outside the 2/3-rule band."""
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


# -- norms ---------------------------------------------------------------


def _parseval_weights(grid: Grid, ncomp: int) -> np.ndarray:
    if grid.geometry == TORUS:
        return np.ones((1,) + grid.resolution)
    pars = grid.component_parities(ncomp)
    return np.stack([grid.basis_weights(p) for p in pars])


def l2_norm(f: SpectralField) -> float:
    """L2 norm |f| (components summed for vectors)."""
    w = _parseval_weights(f.grid, f.ncomp)
    return float(np.sqrt(f.grid.volume * np.sum(w * np.abs(f.coeffs) ** 2)))


def h1_norm(f: SpectralField) -> float:
    """H1 seminorm ||f|| = |A^(1/2) f| (the Dirichlet norm)."""
    w = _parseval_weights(f.grid, f.ncomp)
    return float(
        np.sqrt(f.grid.volume * np.sum(w * f.grid.lam * np.abs(f.coeffs) ** 2))
    )


def lp_norm(f: SpectralField, p: float) -> float:
    """Lp norm by collocation quadrature of the pointwise magnitude."""
    if p < 1:
        raise DomainError("lp_norm requires p >= 1")
    s = to_physical(f)
    if f.is_vector:
        mag = np.sqrt(np.sum(s**2, axis=0))
    else:
        mag = np.abs(s)
    return float((f.grid.cell_volume * np.sum(mag**p)) ** (1.0 / p))


def l2_inner(f: SpectralField, g: SpectralField) -> float:
    """L2 inner product (f, g)."""
    f._check_compatible(g)
    w = _parseval_weights(f.grid, f.ncomp)
    return float(f.grid.volume * np.sum(w * (f.coeffs * g.coeffs.conj()).real))


def norms(f: SpectralField) -> tuple:
    """Convenience bundle (|f|, ||f||)."""
    return l2_norm(f), h1_norm(f)


# -- linear operators ----------------------------------------------------


def apply_A(f: SpectralField, which: str = "velocity") -> SpectralField:
    """Apply the Stokes (velocity) or Laplace (temperature) operator.

    Both are diagonal in the chosen bases with eigenvalue lam(k); ``which``
    is validated against the field kind.
    """
    if which == "velocity" and not f.is_vector:
        raise ShapeError("velocity operator expects a vector field")
    if which == "temperature" and f.is_vector:
        raise ShapeError("temperature operator expects a scalar field")
    if which not in ("velocity", "temperature"):
        raise DomainError(f"unknown operator kind {which!r}")
    return SpectralField(f.grid, f.coeffs * f.grid.lam)


def leray_project(f: SpectralField) -> SpectralField:
    """Orthogonal projection onto divergence-free fields (modewise)."""
    if not f.is_vector:
        raise ShapeError("Leray projection is defined for vector fields")
    grid = f.grid
    c = f.coeffs.copy()
    if grid.geometry == TORUS:
        k2 = sum(np.broadcast_to(grid.kd[i] ** 2, grid.resolution) for i in range(grid.dim))
        dot = sum(grid.kd[i] * c[i] for i in range(grid.dim))
        nz = k2 > 0
        factor = np.zeros_like(dot)
        factor[nz] = dot[nz] / k2[nz]
        for i in range(grid.dim):
            c[i] -= grid.kd[i] * factor
        return SpectralField(grid, c)
    a, b = c[0], c[1]
    D = np.broadcast_to(grid.kdx**2 + grid.kz**2, grid.resolution)
    ell = 1j * grid.kdx * a + grid.kz * b
    nz = D > 0
    factor = np.zeros_like(ell)
    factor[nz] = ell[nz] / D[nz]
    c[0] = a + 1j * grid.kdx * factor
    c[1] = b - grid.kz * factor
    return SpectralField(grid, c)


def divergence(f: SpectralField) -> SpectralField:
    """Divergence of a torus vector field as a scalar field."""
    if not f.is_vector:
        raise ShapeError("divergence expects a vector field")
    if f.grid.geometry != TORUS:
        raise DomainError("divergence field is exposed on the torus only; "
                          "use divergence_l2 for channel grids")
    d = sum(1j * f.grid.kd[i] * f.coeffs[i] for i in range(f.grid.dim))
    return SpectralField(f.grid, d[np.newaxis])


def divergence_l2(f: SpectralField) -> float:
    """L2 norm of the divergence (any geometry)."""
    if not f.is_vector:
        raise ShapeError("divergence expects a vector field")
    grid = f.grid
    if grid.geometry == TORUS:
        d = sum(1j * grid.kd[i] * f.coeffs[i] for i in range(grid.dim))
        return float(np.sqrt(grid.volume * np.sum(np.abs(d) ** 2)))
    d = 1j * grid.kdx * f.coeffs[0] + grid.kz * f.coeffs[1]
    w = grid.basis_weights(COS)
    return float(np.sqrt(grid.volume * np.sum(w * np.abs(d) ** 2)))


# -- bilinear terms ------------------------------------------------------


def _phys(grid: Grid, arr: np.ndarray, parity: str | None) -> np.ndarray:
    """Inverse transform of one component array (no symmetry check)."""
    if grid.geometry == TORUS:
        n = np.prod(grid.resolution)
        return sfft.ifftn(arr * n, axes=tuple(range(grid.dim)), workers=_workers()).real
    nx = grid.resolution[0]
    mid = _inverse_channel_z(arr, parity)
    return sfft.ifft(mid * nx, axis=0, workers=_workers()).real


def _spec(grid: Grid, samples: np.ndarray, parity: str | None) -> np.ndarray:
    if grid.geometry == TORUS:
        c = sfft.fftn(samples, axes=tuple(range(grid.dim)), workers=_workers())
        return c / np.prod(grid.resolution)
    nx = grid.resolution[0]
    c = sfft.fft(samples.astype(complex), axis=0, workers=_workers()) / nx
    return _forward_channel_z(c, parity)


def _deriv_channel(grid: Grid, arr: np.ndarray, parity: str, axis: int):
    """Spectral derivative of one channel component; returns (array, parity)."""
    if axis == 0:
        return 1j * grid.kdx * arr, parity
    if parity == SIN:
        return grid.kz * arr, COS
    out = -grid.kz * arr
    return out, SIN


def _check_solenoidal(u: SpectralField):
    div = divergence_l2(u)
    if div > _DIV_TOL * max(1.0, h1_norm(u)):
        raise DomainError(
            f"advecting field is not solenoidal (|div u| = {div:.3e})"
        )


def _advect(u: SpectralField, q: SpectralField, out_parities):
    """Dealiased pseudo-spectral (u . grad) q, one output array per component."""
    grid = u.grid
    mask = grid.dealias_mask
    uc = u.coeffs * mask
    qc = q.coeffs * mask
    if grid.geometry == TORUS:
        up = [_phys(grid, uc[j], None) for j in range(grid.dim)]
        out = np.empty_like(qc)
        for i in range(qc.shape[0]):
            acc = np.zeros(grid.resolution)
            for j in range(grid.dim):
                dj = _phys(grid, 1j * grid.kd[j] * qc[i], None)
                acc += up[j] * dj
            out[i] = _spec(grid, acc, None) * mask
        return out
    upar = grid.component_parities(u.ncomp)
    qpar = grid.component_parities(q.ncomp) if q.ncomp > 1 else (SIN,)
    up = [_phys(grid, uc[j], upar[j]) for j in range(2)]
    out = np.empty_like(qc)
    for i in range(qc.shape[0]):
        acc = np.zeros(grid.resolution)
        for j in range(2):
            darr, dpar = _deriv_channel(grid, qc[i], qpar[i], j)
            acc += up[j] * _phys(grid, darr, dpar)
        out[i] = _spec(grid, acc, out_parities[i]) * mask
    return out


def bilinear_B0(u: SpectralField, v: SpectralField) -> SpectralField:
    """B0(u, v) = P_sigma((u . grad) v), dealiased by the 2/3 rule.

    Requires a solenoidal advecting field; the projection restores exact
    modewise incompressibility of the output.
    """
    if not (u.is_vector and v.is_vector):
        raise ShapeError("B0 expects vector fields")
    u._check_compatible(v)
    _check_solenoidal(u)
    grid = u.grid
    pars = grid.component_parities(u.ncomp) if grid.geometry == CHANNEL else None
    out = _advect(u, v, pars)
    return leray_project(SpectralField(grid, out))


def bilinear_B1(u: SpectralField, theta: SpectralField) -> SpectralField:
    """B1(u, theta) = (u . grad) theta, dealiased by the 2/3 rule."""
    if not u.is_vector or theta.is_vector:
        raise ShapeError("B1 expects a vector and a scalar field")
    if u.grid != theta.grid:
        raise GridMismatchError("fields live on different grids")
    _check_solenoidal(u)
    grid = u.grid
    pars = (SIN,) if grid.geometry == CHANNEL else None
    out = _advect(u, theta, pars)
    return SpectralField(grid, out)


# -- buoyancy coupling ---------------------------------------------------


def buoyancy_term(theta: SpectralField) -> SpectralField:
    """P_sigma(theta e_z): temperature forcing of the vertical momentum."""
    if theta.is_vector:
        raise ShapeError("buoyancy term expects a scalar field")
    grid = theta.grid
    c = np.zeros((grid.dim,) + grid.resolution, dtype=np.complex128)
    c[-1] = theta.coeffs[0]
    return leray_project(SpectralField(grid, c))


def vertical_velocity(u: SpectralField) -> SpectralField:
    """u . e_z as a scalar field (feeds the temperature equation)."""
    if not u.is_vector:
        raise ShapeError("expected a vector field")
    return SpectralField(u.grid, u.coeffs[-1][np.newaxis])


# -- random fields -------------------------------------------------------


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    ncomp: int = 1,
    band: float | None = None,
    slope: float = 0.0,
    divergence_free: bool = False,
    mean_zero: bool = True,
    energy: float | None = None,
    energy_norm: str = "l2",
) -> SpectralField:
    """Seeded random band-limited field.

    Modes with integer radius in (0, band] are kept and shaped by
    radius**(-slope); the zero mode is dropped when ``mean_zero``.  The
    result is optionally Leray-projected and rescaled so that the requested
    norm equals ``energy``.
    """
    if band is None:
        band = min(grid.resolution) / 8
    noise = rng.standard_normal((ncomp,) + grid.resolution)
    f = to_spectral(noise, grid)
    r = grid.mode_radius
    keep = (r <= band) & (r > 0 if mean_zero else r >= 0)
    shape = np.zeros(grid.resolution)
    pos = r > 0
    shape[pos & keep] = r[pos & keep] ** (-slope)
    if not mean_zero:
        shape[r == 0] = 1.0
    c = f.coeffs * shape
    out = SpectralField(grid, c)
    if divergence_free:
        out = leray_project(out)
    if energy is not None:
        cur = l2_norm(out) if energy_norm == "l2" else h1_norm(out)
        if cur == 0.0:
            raise DomainError("cannot rescale a zero field to positive energy")
        out = out * (energy / cur)
    return out
