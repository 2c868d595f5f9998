"""Admissibility arithmetic for nudging: observation functionals M_h and
K_h, the resolution thresholds h_0, the nudging-strength intervals, and
the proven decay rate.

All formulas take the analytic constants c (type-I interpolant constant)
and C (generic Sobolev constant) from Params; both are proof artifacts
with no sharp known value, so reports also carry the largest values for
which the condition still passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, GridMismatchError
from ..interpolants import MODAL
from ..spectral import Grid, Params, l2_norm

__all__ = [
    "MuInterval",
    "ConditionReport",
    "compute_Mh",
    "compute_Kh",
    "temperature_bound_Sp",
    "h0_variant",
    "H0_VARIANTS",
    "mu_range",
    "mu_range_weakened",
    "weakened_Mh",
    "decay_rate_alpha",
    "check_condition",
]


@dataclass
class MuInterval:
    """Closed admissible interval for the nudging strength."""

    lower: float
    upper: float

    @property
    def empty(self) -> bool:
        return self.lower > self.upper

    def contains(self, mu: float) -> bool:
        return (not self.empty) and self.lower <= mu <= self.upper

    def geometric_mean(self) -> float:
        if self.empty:
            raise DomainError("empty admissible interval has no midpoint")
        return math.sqrt(self.lower * self.upper)


# -- observation functionals ----------------------------------------------


def _observed_h1_sq(stream) -> np.ndarray:
    """||I_h u(t)||^2 per record, computed from payloads without transforms
    for modal streams and via reconstruction otherwise."""
    from ..spectral import h1_norm  # local to keep import surface small

    ip = stream.interpolant
    if ip.kind == MODAL:
        g = ip.grid
        lam = ip.mode_lams
        res = np.empty(len(stream))
        for i, obs in enumerate(stream.observations):
            pay = obs.payload
            if g.geometry == "torus":
                tot = float(np.sum(np.abs(pay) ** 2 * lam))
            else:
                tot = 0.0
                for ci, par in enumerate(g.component_parities(pay.shape[0])):
                    wc = g.basis_weights(par)[ip.mode_positions]
                    tot += float(np.sum(np.abs(pay[ci]) ** 2 * lam * wc))
            res[i] = g.volume * tot
        return res
    return np.array(
        [h1_norm(ip.reconstruct(obs)) ** 2 for obs in stream.observations]
    )


def compute_Mh(stream, params: Params) -> float:
    """Observation-bound M_h of a stream (units of the Dirichlet norm).

    Modal: sqrt(32 sup_t ||P_N u||^2); volume kinds:
    sqrt(32 sup_t C h sum_alpha |v_alpha|^2) with C = c_interp^2.
    """
    if len(stream) == 0:
        raise DomainError("cannot compute M_h of an empty stream")
    ip = stream.interpolant
    if ip.kind == MODAL:
        sup = float(_observed_h1_sq(stream).max())
    else:
        C = params.c_interp**2
        sup = 0.0
        for obs in stream.observations:
            sup = max(sup, C * ip.h * float(np.sum(obs.payload**2)))
    return math.sqrt(32.0 * sup)


def compute_Kh(stream, tau0: float, p: int) -> float:
    """sup_t (int_t^{t+tau0} ||I_h u||^{2p} ds)^{1/(2p)} by trapezoid.

    Only full windows [t, t + tau0] inside the recorded range are used.
    """
    if p < 3:
        raise DomainError("the time-average exponent requires p >= 3")
    if tau0 <= 0:
        raise DomainError("tau0 must be positive")
    t = np.asarray(stream.times)
    if len(t) < 2 or t[-1] - t[0] < tau0:
        raise DomainError("stream shorter than the averaging window tau0")
    g = _observed_h1_sq(stream) ** p
    cum = np.concatenate([[0.0], np.cumsum(np.diff(t) * (g[1:] + g[:-1]) / 2.0)])

    def window_int(a: float) -> float:
        b = a + tau0
        ia = float(np.interp(a, t, cum))
        ib = float(np.interp(b, t, cum))
        return ib - ia

    starts = t[t <= t[-1] - tau0 + 1e-12 * max(1.0, tau0)]
    best = max(window_int(a) for a in starts)
    return best ** (1.0 / (2 * p))


def temperature_bound_Sp(M0: float, lambda1: float, params: Params, p: int = 2) -> float:
    """L^{2p} temperature bound S_p = C p M0 / ((2p-1) lambda1)^(1/(2p))."""
    if p < 1:
        raise DomainError("p must be a positive integer")
    return params.C_sob * p * M0 / ((2 * p - 1) * lambda1) ** (1.0 / (2 * p))


# -- resolution thresholds -------------------------------------------------

H0_VARIANTS = (
    "weak",
    "strong",
    "sync",
    "attractor",
    "criterion",
    "weakened",
    "weakened_nu5",
)


def h0_variant(
    name: str,
    params: Params,
    grid: Grid,
    S2: float | None = None,
    f_l2: float | None = None,
) -> float:
    """Resolution threshold h_0 of the named admissibility theorem.

    ``S2`` (temperature L4 bound) feeds the sync variant; ``f_l2`` (body
    force norm, default |params.f|) feeds the stationary-force variants.
    The two ``weakened`` spellings differ only in the viscosity exponent
    (nu^8 vs nu^5), which the source states inconsistently; both are kept.
    """
    nu, kap, c, C = params.nu, params.kappa, params.c_interp, params.C_sob
    lam1 = grid.lambda1
    if name in ("weak", "strong", "sync") and kap <= 0:
        raise DomainError("temperature-coupled thresholds require kappa > 0")
    if f_l2 is None:
        f_l2 = l2_norm(params.f) if params.f is not None else 0.0
    if name == "weak":
        return math.sqrt(nu * kap * lam1 / (16.0 * c))
    if name == "strong":
        inv = (4.0 * c / nu) * max(8.0 / (kap * lam1), (2.0 / kap) * (1.0 + 2.0 / lam1**2))
        return 1.0 / math.sqrt(inv)
    if name == "sync":
        if S2 is None:
            raise DomainError("sync threshold requires the temperature bound S2")
        inv = max(
            32.0 * c / (nu * kap * lam1),
            (8.0 * c / (nu * kap)) * (1.0 + 2.0 / lam1**2),
            64.0 * C * S2**8 / (nu**4 * kap**4),
        )
        return 1.0 / math.sqrt(inv)
    if name == "attractor":
        return 1.0 / math.sqrt(4.0 * c * lam1)
    if name == "criterion":
        inv = max(1.0 / (4.0 * c * lam1), 32.0 * c * f_l2**4 / (nu**8 * lam1**2))
        return 1.0 / math.sqrt(inv)
    if name in ("weakened", "weakened_nu5"):
        power = 8 if name == "weakened" else 5
        inv = max(4.0 * c * lam1, 1024.0 * c * f_l2**4 / (nu**power * lam1**2))
        return 1.0 / math.sqrt(inv)
    raise DomainError(f"unknown h0 variant {name!r}; choose from {H0_VARIANTS}")


# -- admissible nudging strengths ------------------------------------------


def mu_range(M_h: float, h: float, h0: float, params: Params) -> MuInterval:
    """Main admissible interval:
    max{nu/(4 c h0^2), 16 c M_h^4/nu^3} <= mu <= nu/(4 c h^2).

    Empty exactly when 16 c M_h^4/nu^3 > nu/(4 c h^2) or h > h0.
    """
    if h <= 0 or h0 <= 0:
        raise DomainError("h and h0 must be positive")
    nu, c = params.nu, params.c_interp
    lower = max(nu / (4.0 * c * h0**2), 16.0 * c * M_h**4 / nu**3)
    upper = nu / (4.0 * c * h**2)
    return MuInterval(lower, upper)


def mu_range_weakened(
    K_h: float, h: float, h0: float, params: Params, p: int
) -> MuInterval:
    """Time-averaged admissible interval:
    max{nu/(4 c h0^2), (32 C K_h^4 / q^(2/q))^(p/(p-2))} <= mu <= nu/(4 c h^2)
    with 1/p + 1/q = 1.
    """
    if p <= 2:
        raise DomainError("the weakened interval requires p > 2")
    if h <= 0 or h0 <= 0:
        raise DomainError("h and h0 must be positive")
    nu, c, C = params.nu, params.c_interp, params.C_sob
    q = p / (p - 1.0)
    lower = max(
        nu / (4.0 * c * h0**2),
        (32.0 * C * K_h**4 / q ** (2.0 / q)) ** (p / (p - 2.0)),
    )
    upper = nu / (4.0 * c * h**2)
    return MuInterval(lower, upper)


def weakened_Mh(
    K_h: float,
    mu: float,
    params: Params,
    grid: Grid,
    p: int,
    tau0: float,
    f_l2: float | None = None,
) -> float:
    """Velocity bound of the time-averaged theorem:
    M_h^2 = 8|f|^2/(lambda1 nu^2)
          + (2 C K_h^2 mu^(1/p)/q^(1/q)) (2/(1 - e^(-nu lambda1 p tau0/4)))^(1/p).
    """
    if p <= 2:
        raise DomainError("requires p > 2")
    nu, C = params.nu, params.C_sob
    lam1 = grid.lambda1
    if f_l2 is None:
        f_l2 = l2_norm(params.f) if params.f is not None else 0.0
    q = p / (p - 1.0)
    decay = 1.0 - math.exp(-nu * lam1 * p * tau0 / 4.0)
    second = (2.0 * C * K_h**2 * mu ** (1.0 / p) / q ** (1.0 / q)) * (2.0 / decay) ** (
        1.0 / p
    )
    return math.sqrt(8.0 * f_l2**2 / (lam1 * nu**2) + second)


def decay_rate_alpha(mu: float, lambda1: float, params: Params) -> float:
    """Proven synchronization rate alpha = min(mu/4, kappa lambda1 / 2)."""
    if mu <= 0:
        raise DomainError("alpha is defined for positive mu")
    return min(mu / 4.0, params.kappa * lambda1 / 2.0)


# -- full condition check ---------------------------------------------------


@dataclass
class ConditionReport:
    """Everything the admissibility check measured and decided."""

    variant: str
    satisfied: bool
    h: float
    h0: float
    M_h: float
    mu_interval: MuInterval
    mu: float | None
    alpha: float | None
    violations: list = field(default_factory=list)
    h0_variants: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    K_h: float | None = None
    largest_c: float | None = None
    largest_C: float | None = None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "satisfied": self.satisfied,
            "h": self.h,
            "h0": self.h0,
            "M_h": self.M_h,
            "K_h": self.K_h,
            "mu_lower": self.mu_interval.lower,
            "mu_upper": self.mu_interval.upper,
            "mu_interval_empty": self.mu_interval.empty,
            "mu": self.mu,
            "alpha": self.alpha,
            "violations": list(self.violations),
            "h0_variants": dict(self.h0_variants),
            "constants": dict(self.constants),
            "largest_c": self.largest_c,
            "largest_C": self.largest_C,
        }


def _interval_for(variant, M_h, K_h, h, h0, params, p_avg):
    if variant == "weakened" or variant == "weakened_nu5":
        return mu_range_weakened(K_h, h, h0, params, p_avg)
    if variant == "weak":
        nu, c = params.nu, params.c_interp
        return MuInterval(nu / (2.0 * c * h0**2), nu / (2.0 * c * h**2))
    if variant == "attractor":
        nu, c = params.nu, params.c_interp
        lower = max(2.0 * c * M_h**4 / nu**3, nu / (4.0 * c * h0**2))
        return MuInterval(lower, nu / (4.0 * c * h**2))
    return mu_range(M_h, h, h0, params)


def check_condition(
    stream,
    params: Params,
    grid: Grid,
    variant: str = "sync",
    mu: float | None = None,
    M0: float | None = None,
    tau0: float = 1.0,
    p_avg: int = 3,
) -> ConditionReport:
    """Evaluate the admissibility condition of the named theorem on a stream.

    When M0 (the velocity L2 bound feeding the temperature estimate) is not
    supplied it is taken from the observed part of the stream, which is a
    lower bound of the true sup |u|; pass the measured value for a faithful
    sync threshold.  ``mu=None`` selects the geometric mean of the interval
    when it is nonempty.
    """
    if variant not in H0_VARIANTS:
        raise DomainError(f"unknown condition variant {variant!r}")
    if stream.interpolant.grid != grid:
        raise GridMismatchError("stream interpolant grid does not match")
    ip = stream.interpolant
    h = ip.h
    if len(stream) == 0:
        # vacuous sup: an empty record set bounds nothing
        M0 = 0.0 if M0 is None else M0
        M_h = 0.0
    else:
        if M0 is None:
            M0 = stream.sup_l2()
        M_h = compute_Mh(stream, params)
    S2 = temperature_bound_Sp(M0, grid.lambda1, params, p=2)
    K_h = None
    if variant in ("weakened", "weakened_nu5"):
        K_h = compute_Kh(stream, tau0, p_avg)

    def passes(c_val: float, C_val: float) -> tuple:
        pp = Params(
            nu=params.nu, kappa=params.kappa, f=params.f,
            c_interp=c_val, C_sob=C_val,
        )
        h0 = h0_variant(variant, pp, grid, S2=S2)
        iv = _interval_for(variant, M_h, K_h, h, h0, pp, p_avg)
        ok = h <= h0 and not iv.empty
        return ok, h0, iv

    ok, h0, interval = passes(params.c_interp, params.C_sob)
    violations = []
    if h > h0:
        violations.append(f"h = {h:.6g} exceeds h0 = {h0:.6g} ({variant})")
    if interval.empty:
        violations.append(
            f"admissible interval is empty: lower {interval.lower:.6g} > "
            f"upper {interval.upper:.6g}"
        )
    chosen = mu
    if chosen is None and not interval.empty:
        chosen = interval.geometric_mean()
    if chosen is not None and not interval.contains(chosen):
        violations.append(
            f"mu = {chosen:.6g} outside [{interval.lower:.6g}, {interval.upper:.6g}]"
        )
    satisfied = not violations
    alpha = (
        decay_rate_alpha(chosen, grid.lambda1, params)
        if (chosen is not None and chosen > 0)
        else None
    )

    variants = {}
    for name in H0_VARIANTS:
        try:
            variants[name] = h0_variant(name, params, grid, S2=S2)
        except DomainError:
            continue

    def largest(which: str) -> float | None:
        # the passing set in each constant is an interval touching 0; bisect
        # its upper edge in log space
        base_c, base_C = params.c_interp, params.C_sob
        def ok_at(x):
            c_val = x if which == "c" else base_c
            C_val = x if which == "C" else base_C
            return passes(c_val, C_val)[0]
        if not ok_at(1e-12):
            return None
        lo, hi = 1e-12, 1e12
        if ok_at(hi):
            return hi
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if ok_at(mid):
                lo = mid
            else:
                hi = mid
        return lo

    return ConditionReport(
        variant=variant,
        satisfied=satisfied,
        h=h,
        h0=h0,
        M_h=M_h,
        mu_interval=interval,
        mu=chosen,
        alpha=alpha,
        violations=violations,
        h0_variants=variants,
        constants={
            "c": params.c_interp,
            "C": params.C_sob,
            "S2": S2,
            "M0": M0,
            "lambda1": grid.lambda1,
        },
        K_h=K_h,
        largest_c=largest("c"),
        largest_C=largest("C"),
    )
