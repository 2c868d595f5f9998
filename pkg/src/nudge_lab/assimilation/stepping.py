"""Time integration: Crank-Nicolson on the dissipative operators,
Adams-Bashforth 2 on everything explicit, forward Euler on the first step.

The nudged stepper shares the reference code path exactly; with mu = 0 it
reproduces the reference trajectory bitwise.  Modal nudging is folded into
the implicit solve (the relaxation -mu P_N w is diagonal), with the data
term evaluated at the midpoint average of consecutive observations.
Volume-kind nudging stays explicit, which requires mu * dt <= 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import (
    DivergenceError,
    DomainError,
    GridMismatchError,
    KindMismatchError,
    StabilityError,
    StreamFormatError,
)
from ..interpolants import MODAL, Interpolant, Observation
from ..spectral import (
    SIN,
    TORUS,
    FlowState,
    Grid,
    Params,
    SpectralField,
    _deriv_channel,
    _phys,
    _spec,
    l2_inner,
    leray_project,
)

__all__ = ["NudgedState", "ReferenceStepper", "NudgedStepper", "step_reference", "step_nudged"]

_CFL_LIMIT = 0.5


@dataclass
class NudgedState:
    """State of the nudged system: velocity w, temperature eta, time."""

    w: SpectralField
    eta: SpectralField | None
    t: float

    @classmethod
    def zero(cls, grid: Grid, model: str = "boussinesq") -> "NudgedState":
        eta = SpectralField.zeros(grid, 1) if model == "boussinesq" else None
        return cls(w=SpectralField.zeros(grid, grid.dim), eta=eta, t=0.0)


class ReferenceStepper:
    """Integrates the unforced reference system (or forced, with Params.f)."""

    def __init__(self, grid: Grid, params: Params, dt: float, model: str = "boussinesq"):
        if dt <= 0:
            raise DomainError("dt must be positive")
        if model not in ("boussinesq", "nse"):
            raise DomainError(f"unknown model {model!r}")
        self.grid = grid
        self.params = params
        self.dt = dt
        self.model = model
        lam = grid.lam
        self._den_u = 1.0 + 0.5 * dt * params.nu * lam
        self._num_u = 1.0 - 0.5 * dt * params.nu * lam
        if model == "boussinesq":
            self._den_t = 1.0 + 0.5 * dt * params.kappa * lam
            self._num_t = 1.0 - 0.5 * dt * params.kappa * lam
        self._fc = params.f.coeffs if params.f is not None else None
        self._prev = None

    def reset(self, history=None) -> None:
        """Clear (or restore) the multistep history; fresh steppers and
        checkpoint restarts go through here."""
        self._prev = history

    @property
    def history(self):
        return self._prev

    # -- explicit right-hand side -------------------------------------

    def _explicit(self, u: SpectralField, theta: SpectralField | None):
        """Dealiased explicit slopes (velocity, temperature) plus the
        physical-space speed maxima for the CFL estimate."""
        grid = self.grid
        mask = grid.dealias_mask
        uc = u.coeffs * mask
        d = grid.dim
        if grid.geometry == TORUS:
            up = [_phys(grid, uc[j], None) for j in range(d)]
            adv = np.empty_like(uc)
            for i in range(d):
                acc = up[0] * _phys(grid, 1j * grid.kd[0] * uc[i], None)
                for j in range(1, d):
                    acc += up[j] * _phys(grid, 1j * grid.kd[j] * uc[i], None)
                adv[i] = _spec(grid, acc, None) * mask
            eu = -adv
            eth = None
            if theta is not None:
                tc = theta.coeffs[0] * mask
                acc = up[0] * _phys(grid, 1j * grid.kd[0] * tc, None)
                for j in range(1, d):
                    acc += up[j] * _phys(grid, 1j * grid.kd[j] * tc, None)
                eth = -(_spec(grid, acc, None) * mask)[np.newaxis]
        else:
            upar = grid.component_parities(d)
            up = [_phys(grid, uc[j], upar[j]) for j in range(2)]
            adv = np.empty_like(uc)
            for i in range(2):
                acc = np.zeros(grid.resolution)
                for j in range(2):
                    darr, dpar = _deriv_channel(grid, uc[i], upar[i], j)
                    acc += up[j] * _phys(grid, darr, dpar)
                adv[i] = _spec(grid, acc, upar[i]) * mask
            eu = -adv
            eth = None
            if theta is not None:
                tc = theta.coeffs[0] * mask
                acc = np.zeros(grid.resolution)
                for j in range(2):
                    darr, dpar = _deriv_channel(grid, tc, SIN, j)
                    acc += up[j] * _phys(grid, darr, dpar)
                eth = -(_spec(grid, acc, SIN) * mask)[np.newaxis]
        if theta is not None:
            # linear coupling terms carry the full (non-dealiased) fields
            eu[-1] += theta.coeffs[0]
            eth[0] += u.coeffs[-1]
        if self._fc is not None:
            eu += self._fc
        eu = leray_project(SpectralField(grid, eu)).coeffs
        speeds = tuple(float(np.max(np.abs(a))) for a in up)
        return eu, eth, speeds

    def _check_cfl(self, speeds, t: float) -> None:
        cfl = self.dt * sum(s / dx for s, dx in zip(speeds, self.grid.spacing))
        if cfl > _CFL_LIMIT:
            raise StabilityError(
                f"advective CFL {cfl:.3f} exceeds {_CFL_LIMIT} at t = {t:.6g}",
                suggested_dt=0.9 * _CFL_LIMIT * self.dt / cfl,
            )

    def _combine(self, e, prev):
        if prev is None:
            return e
        return 1.5 * e - 0.5 * prev

    def _finite_or_raise(self, arr: np.ndarray, t: float) -> None:
        if not np.isfinite(arr).all():
            raise DivergenceError(
                f"solution lost finiteness during the step from t = {t:.6g}",
                last_valid_time=t,
            )

    def step(self, s: FlowState) -> FlowState:
        if s.u.grid != self.grid:
            raise GridMismatchError("state grid does not match the stepper")
        if (s.theta is None) != (self.model == "nse"):
            raise DomainError("state temperature does not match the model")
        eu, eth, speeds = self._explicit(s.u, s.theta)
        self._check_cfl(speeds, s.t)
        pu, pt = self._prev if self._prev is not None else (None, None)
        ru = self._combine(eu, pu)
        unew = (self._num_u * s.u.coeffs + self.dt * ru) / self._den_u
        self._finite_or_raise(unew, s.t)
        theta_new = None
        if s.theta is not None:
            rt = self._combine(eth, pt)
            tnew = (self._num_t * s.theta.coeffs + self.dt * rt) / self._den_t
            self._finite_or_raise(tnew, s.t)
            theta_new = SpectralField(self.grid, tnew)
        self._prev = (eu, eth)
        return FlowState(
            u=SpectralField(self.grid, unew), theta=theta_new, t=s.t + self.dt
        )


class NudgedStepper(ReferenceStepper):
    """Reference dynamics plus -mu P_sigma(I_h w - I_h u) on the velocity.

    ``obs_slack`` widens the timestamp alignment window (in units of dt)
    for zero-order-hold replay of sparser streams.
    """

    def __init__(
        self,
        grid: Grid,
        params: Params,
        dt: float,
        interpolant: Interpolant,
        mu: float,
        model: str = "boussinesq",
        obs_slack: float = 1.0,
    ):
        super().__init__(grid, params, dt, model)
        if interpolant.grid != grid:
            raise GridMismatchError("interpolant grid does not match the stepper")
        if mu < 0:
            raise DomainError("nudging strength must be nonnegative")
        self.interpolant = interpolant
        self.mu = mu
        # (I_h u - I_h w, w) of the step last taken, for energy budgets
        self.last_nudge_inner = 0.0
        self._obs_tol = obs_slack * dt * (1.0 + 1e-9)
        self._implicit = interpolant.kind == MODAL and mu > 0
        if self._implicit:
            sel = interpolant.mask.astype(float)
            lam = grid.lam
            self._sel = sel
            self._den_u = 1.0 + 0.5 * dt * (params.nu * lam + mu * sel)
            self._num_u = 1.0 - 0.5 * dt * (params.nu * lam + mu * sel)
            self._data_factor = dt * mu * sel
        elif mu > 0 and mu * dt > _CFL_LIMIT:
            raise StabilityError(
                f"explicit nudging needs mu * dt <= {_CFL_LIMIT}, got {mu * dt:.3f}",
                suggested_dt=0.9 * _CFL_LIMIT / mu,
            )

    def _check_obs(self, obs: Observation, t: float) -> None:
        if obs.kind != self.interpolant.kind:
            raise KindMismatchError(
                f"stepper expects {self.interpolant.kind!r} observations, got {obs.kind!r}"
            )
        if abs(obs.t - t) > self._obs_tol:
            raise StreamFormatError(
                f"observation at t = {obs.t:.6g} not aligned with state t = {t:.6g}"
            )

    def step(
        self,
        s: NudgedState,
        obs: Observation,
        obs_next: Observation | None = None,
    ) -> NudgedState:
        if s.w.grid != self.grid:
            raise GridMismatchError("state grid does not match the stepper")
        if (s.eta is None) != (self.model == "nse"):
            raise DomainError("state temperature does not match the model")
        self._check_obs(obs, s.t)
        eu, eth, speeds = self._explicit(s.w, s.eta)
        self._check_cfl(speeds, s.t)
        ip = self.interpolant
        data = None
        if self._implicit:
            v = ip.reconstruct(obs)
            ihw = SpectralField(self.grid, self._sel * s.w.coeffs)
            self.last_nudge_inner = l2_inner(v - ihw, s.w)
            vc = v.coeffs
            if obs_next is not None:
                self._check_obs(obs_next, s.t + self.dt)
                vc = 0.5 * (vc + ip.reconstruct(obs_next).coeffs)
            data = self._data_factor * vc
        elif self.mu > 0:
            g0 = ip.reconstruct(obs) - ip.apply(s.w)
            self.last_nudge_inner = l2_inner(g0, s.w)
            g = leray_project(g0)
            eu = eu + self.mu * g.coeffs
        pu, pt = self._prev if self._prev is not None else (None, None)
        ru = self._combine(eu, pu)
        rhs = self._num_u * s.w.coeffs + self.dt * ru
        if data is not None:
            rhs = rhs + data
        wnew = rhs / self._den_u
        self._finite_or_raise(wnew, s.t)
        eta_new = None
        if s.eta is not None:
            rt = self._combine(eth, pt)
            tnew = (self._num_t * s.eta.coeffs + self.dt * rt) / self._den_t
            self._finite_or_raise(tnew, s.t)
            eta_new = SpectralField(self.grid, tnew)
        self._prev = (eu, eth)
        return NudgedState(
            w=SpectralField(self.grid, wnew), eta=eta_new, t=s.t + self.dt
        )


def step_reference(s: FlowState, p: Params, dt: float, model: str | None = None) -> FlowState:
    """One forward-Euler/CN step from a cold start (no multistep history)."""
    if model is None:
        model = "nse" if s.theta is None else "boussinesq"
    return ReferenceStepper(s.u.grid, p, dt, model).step(s)


def step_nudged(
    s: NudgedState,
    obs: Observation,
    interpolant: Interpolant,
    mu: float,
    p: Params,
    dt: float,
    model: str | None = None,
    obs_next: Observation | None = None,
) -> NudgedState:
    """One cold-start nudged step; loops should hold a NudgedStepper."""
    if model is None:
        model = "nse" if s.eta is None else "boussinesq"
    stepper = NudgedStepper(s.w.grid, p, dt, interpolant, mu, model)
    return stepper.step(s, obs, obs_next=obs_next)
