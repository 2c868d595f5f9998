"""Post-processing: decay-rate fits, the integral Gronwall lemma as an
executable check, energy-identity residuals, determining-map Lipschitz
tests, and the X/Z/P space norms.

Everything here is a pure function of recorded series or observation
streams; the two tests that need trajectories integrate nudged systems
through the assimilation layer but never touch a reference solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    SeriesFormatError,
    StreamFormatError,
    WindowError,
)
from .interpolants import Observation
from .series import ErrorSeries
from .spectral import Params, h1_norm, l2_norm

__all__ = [
    "DecayFit",
    "GronwallReport",
    "ResidualReport",
    "LipschitzReport",
    "SpaceNorms",
    "ShiftReport",
    "fit_decay",
    "gronwall_check",
    "energy_residuals",
    "lipschitz_test",
    "space_norms",
    "shift_equivariance_test",
    "sliding_window_sup",
]


# -- decay fitting ---------------------------------------------------------


@dataclass
class DecayFit:
    """Log-linear fit of one channel: rate = -slope."""

    rate: float
    window: tuple
    residual: float
    floor: float
    n_samples: int


def fit_decay(series: ErrorSeries, channel: str, floor_factor: float = 10.0) -> DecayFit:
    """Fit an exponential rate to a decaying channel.

    The fit window starts right after the channel's global maximum (end of
    transient) and ends at the last sample above floor_factor times the
    terminal value; a series that never exceeds that floor is fit whole
    (flat data, rate about zero).
    """
    if floor_factor < 1.0:
        raise DomainError("floor_factor must be at least 1")
    t = series.t
    y = series.channel(channel)
    if len(y) < 2:
        raise WindowError("need at least two samples to fit")
    start = int(np.argmax(y)) + 1
    if start >= len(y):
        start = len(y) - 1
    floor = floor_factor * y[-1]
    above = np.nonzero(y > floor)[0]
    end = int(above[-1]) if len(above) else len(y) - 1
    if end - start + 1 < 5:
        raise WindowError(
            f"fit window [{start}, {end}] has fewer than 5 samples"
        )
    yy = y[start : end + 1]
    tt = t[start : end + 1]
    if np.any(yy <= 0):
        raise DomainError("channel must be positive on the fit window")
    logy = np.log(yy)
    slope, intercept = np.polyfit(tt, logy, 1)
    resid = logy - (slope * tt + intercept)
    return DecayFit(
        rate=float(-slope),
        window=(float(tt[0]), float(tt[-1])),
        residual=float(np.sqrt(np.mean(resid**2))),
        floor=float(floor),
        n_samples=len(tt),
    )


# -- Gronwall lemma --------------------------------------------------------


@dataclass
class GronwallReport:
    """Outcome of the integral Gronwall check.

    The hypothesis y(t) + mu * int_s^t y <= y(s) for all s <= t is
    equivalent to g(t) = y(t) + mu * int_0^t y being nonincreasing; its
    worst margin is min over pairs of g(s) - g(t).  The conclusion bounds
    y(t) for t >= 1/mu by the decaying average of the first 1/mu window,
    the corollary by the window ending at t/2 (checked for t >= 2/mu so
    the window stays inside the data).
    """

    mu: float
    hypothesis_ok: bool
    hypothesis_margin: float
    first_violation: tuple | None
    conclusion_ok: bool | None
    conclusion_margin: float | None
    corollary_ok: bool | None
    corollary_margin: float | None


def _cumtrapz(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))])


def gronwall_check(
    t,
    y,
    mu: float,
    cumulative=None,
    hypothesis_rtol: float = 1e-12,
) -> GronwallReport:
    """Check the hypothesis and, when it holds, assert the decay conclusion.

    ``cumulative`` may supply the exact running integral of y; otherwise a
    trapezoid is used (whose overestimate on convex data can flag an
    exact-equality hypothesis, hence the relative slack).
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t.ndim != 1 or t.shape != y.shape or len(t) < 2:
        raise DomainError("t and y must be matching 1-d arrays with >= 2 samples")
    if mu <= 0:
        raise DomainError("mu must be positive")
    if np.any(y < 0):
        raise DomainError("y must be nonnegative")
    span = t[-1] - t[0]
    if span < 1.0 / mu or (len(t) - 1) / (mu * span) < 20:
        raise WindowError("need at least 20 samples per unit 1/mu window")
    Y = np.asarray(cumulative, float) if cumulative is not None else _cumtrapz(t, y)
    if Y.shape != y.shape:
        raise DomainError("cumulative integral must match y in shape")

    g = y + mu * Y
    scale = float(np.max(np.abs(g))) or 1.0
    tol = hypothesis_rtol * scale
    run_min = np.minimum.accumulate(g)
    # worst pairwise margin min_{s<t} g(s) - g(t), O(n)
    margins = run_min[:-1] - g[1:]
    hyp_margin = float(margins.min()) if len(margins) else 0.0
    first_violation = None
    bad = np.nonzero(margins < -tol)[0]
    if len(bad):
        j = int(bad[0]) + 1
        i = int(np.argmin(g[:j]))
        first_violation = (float(t[i]), float(t[j]))
    hypothesis_ok = first_violation is None
    if not hypothesis_ok:
        return GronwallReport(
            mu=mu,
            hypothesis_ok=False,
            hypothesis_margin=hyp_margin,
            first_violation=first_violation,
            conclusion_ok=None,
            conclusion_margin=None,
            corollary_ok=None,
            corollary_margin=None,
        )

    t0 = t[0]

    def integral_to(a: float) -> float:
        return float(np.interp(a, t, Y))

    inv = 1.0 / mu
    head = integral_to(t0 + inv) - integral_to(t0)
    concl_margin = math.inf
    for j in np.nonzero(t - t0 >= inv)[0]:
        bound = mu * math.exp(-mu * (t[j] - t0 - inv)) * head
        concl_margin = min(concl_margin, bound - y[j])
    coro_margin = math.inf
    for j in np.nonzero(t - t0 >= 2.0 * inv)[0]:
        half = t0 + 0.5 * (t[j] - t0)
        win = integral_to(half) - integral_to(half - inv)
        bound = mu * math.exp(-mu * (t[j] - t0) / 2.0) * win
        coro_margin = min(coro_margin, bound - y[j])
    ctol = hypothesis_rtol * scale
    return GronwallReport(
        mu=mu,
        hypothesis_ok=True,
        hypothesis_margin=hyp_margin,
        first_violation=None,
        conclusion_ok=bool(concl_margin >= -ctol) if math.isfinite(concl_margin) else None,
        conclusion_margin=concl_margin if math.isfinite(concl_margin) else None,
        corollary_ok=bool(coro_margin >= -ctol) if math.isfinite(coro_margin) else None,
        corollary_margin=coro_margin if math.isfinite(coro_margin) else None,
    )


# -- energy residuals ------------------------------------------------------


@dataclass
class ResidualReport:
    """LHS - RHS of each energy identity along the record times."""

    residuals: dict
    max_abs: dict
    max_rel: dict
    flagged: list = field(default_factory=list)
    tolerance: float = 0.0


def _require(series: ErrorSeries, *names: str) -> None:
    missing = [n for n in names if not series.has(n)]
    if missing:
        raise SeriesFormatError(f"series lacks accumulator channels {missing}")


def energy_residuals(
    series: ErrorSeries,
    p: Params,
    mu: float | None = None,
    rel_tol: float = 5e-3,
) -> ResidualReport:
    """Recompute the four energy identities from recorded channels.

    Reference and nudged velocity/temperature balances, e.g.
    |w(t)|^2 + 2 nu int |grad w|^2 = |w(0)|^2 + 2 int (w.e3, eta)
    + 2 mu int (I_h u - I_h w, w); residuals are LHS - RHS and should sit
    at the scheme's O(dt^2) level.  Integrals come from the in-run
    trapezoid accumulators.
    """
    if mu is None:
        mu = series.meta.get("mu")
    if mu is None:
        raise DomainError("mu not given and absent from series metadata")
    model = series.meta.get("model", "boussinesq")
    resid: dict = {}

    _require(series, "u_l2", "int_u_h1_sq", "w_l2", "int_w_h1_sq", "int_nudge_inner")
    u2 = series.channel("u_l2") ** 2
    w2 = series.channel("w_l2") ** 2
    ref_rhs = np.zeros_like(u2)
    dat_rhs = 2.0 * mu * series.channel("int_nudge_inner")
    if model == "boussinesq":
        _require(series, "int_couple_ref", "int_couple_nudged")
        ref_rhs = ref_rhs + 2.0 * series.channel("int_couple_ref")
        dat_rhs = dat_rhs + 2.0 * series.channel("int_couple_nudged")
    if series.has("int_f_u"):
        ref_rhs = ref_rhs + 2.0 * series.channel("int_f_u")
        dat_rhs = dat_rhs + 2.0 * series.channel("int_f_w")
    resid["reference_velocity"] = (
        u2 + 2.0 * p.nu * series.channel("int_u_h1_sq") - u2[0] - ref_rhs
    )
    resid["nudged_velocity"] = (
        w2 + 2.0 * p.nu * series.channel("int_w_h1_sq") - w2[0] - dat_rhs
    )
    if model == "boussinesq":
        _require(series, "theta_l2", "int_theta_h1_sq", "eta_l2", "int_eta_h1_sq")
        th2 = series.channel("theta_l2") ** 2
        et2 = series.channel("eta_l2") ** 2
        resid["reference_temperature"] = (
            th2
            + 2.0 * p.kappa * series.channel("int_theta_h1_sq")
            - th2[0]
            - 2.0 * series.channel("int_couple_ref")
        )
        resid["nudged_temperature"] = (
            et2
            + 2.0 * p.kappa * series.channel("int_eta_h1_sq")
            - et2[0]
            - 2.0 * series.channel("int_couple_nudged")
        )

    scales = {
        "reference_velocity": u2,
        "nudged_velocity": w2,
    }
    if model == "boussinesq":
        scales["reference_temperature"] = series.channel("theta_l2") ** 2
        scales["nudged_temperature"] = series.channel("eta_l2") ** 2
    max_abs = {k: float(np.max(np.abs(v))) for k, v in resid.items()}
    max_rel = {}
    flagged = []
    for k, v in resid.items():
        scale = float(np.max(scales[k])) or 1.0
        max_rel[k] = max_abs[k] / scale
        if max_rel[k] > rel_tol:
            flagged.append(k)
    return ResidualReport(
        residuals=resid,
        max_abs=max_abs,
        max_rel=max_rel,
        flagged=flagged,
        tolerance=rel_tol,
    )


# -- space norms -----------------------------------------------------------


@dataclass
class SpaceNorms:
    x_norm: float
    z_sup_l2: float
    z_window_int: float
    z_norm: float
    p_norm: float
    window: float


def sliding_window_sup(t, y, window: float = 1.0) -> float:
    """sup over sample starts s of the trapezoid integral of y on
    [s, s + window], clipped at the series end."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if len(t) < 2:
        raise WindowError("need at least two samples")
    if window <= 0:
        raise DomainError("window must be positive")
    cum = _cumtrapz(t, y)
    ends = np.minimum(t + window, t[-1])
    vals = np.interp(ends, t, cum) - cum
    return float(vals.max())


def space_norms(
    obj,
    l2_channel: str = "w_l2",
    h1_channel: str = "w_h1",
    theta_l2_channel: str | None = None,
    window: float = 1.0,
) -> SpaceNorms:
    """X, Z and P norms of a recorded trajectory or an observation stream.

    X = sup of the Dirichlet norm; Z combines the sup of the L2 norm with
    the sliding unit-window integral of the squared Dirichlet norm; P is
    the sup of the (velocity, temperature) pair L2 norm.
    """
    if isinstance(obj, ErrorSeries):
        if len(obj) == 0:
            raise WindowError("empty series")
        t = obj.t
        l2 = obj.channel(l2_channel)
        h1 = obj.channel(h1_channel)
        th = obj.channel(theta_l2_channel) if theta_l2_channel else None
    else:
        if len(obj) == 0:
            raise WindowError("empty stream")
        t = obj.times
        fields = [obj.reconstruct(i) for i in range(len(obj))]
        l2 = np.array([l2_norm(f) for f in fields])
        h1 = np.array([h1_norm(f) for f in fields])
        th = None
    x_norm = float(h1.max())
    z_sup = float(l2.max())
    z_win = sliding_window_sup(t, h1**2, window) if len(t) >= 2 else 0.0
    pair = np.sqrt(l2**2 + th**2) if th is not None else l2
    return SpaceNorms(
        x_norm=x_norm,
        z_sup_l2=z_sup,
        z_window_int=z_win,
        z_norm=math.sqrt(z_sup**2 + z_win),
        p_norm=float(pair.max()),
        window=window,
    )


# -- determining-map tests -------------------------------------------------


@dataclass
class LipschitzReport:
    sup_wbar_sq: float
    bound_wbar_sq: float
    sup_window_int: float
    bound_window_int: float
    sup_vbar_sq: float
    terminal_p_gap: float
    mu: float
    ok_pointwise: bool
    ok_window: bool
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.ok_pointwise and self.ok_window


def _check_paired_streams(v1, v2) -> None:
    if v1.interpolant.descriptor() != v2.interpolant.descriptor():
        raise StreamFormatError("streams use different interpolants")
    if len(v1) != len(v2):
        raise StreamFormatError("streams have different lengths")
    if np.max(np.abs(v1.times - v2.times)) > 1e-9:
        raise StreamFormatError("stream timestamps disagree")


def _nsteps_from(stream, cfg_dt: float) -> int:
    cad = stream.cadence
    if abs(cad - cfg_dt) > 1e-9 * max(cad, 1.0):
        raise StreamFormatError(
            f"stream cadence {cad:.6g} does not match dt = {cfg_dt:.6g}"
        )
    return len(stream) - 1


def lipschitz_test(
    v1,
    v2,
    cfg,
    p: Params,
    model: str = "boussinesq",
    record_every: int = 10,
    tolerance: float = 0.05,
) -> LipschitzReport:
    """Drive two nudged systems with paired streams and verify the
    determining-map Lipschitz bounds:
    sup |w1-w2|^2 <= 8 sup |v1-v2|^2 and
    sup_s int_s^{s+1} |grad(w1-w2)|^2 <= (4 mu / nu) sup |v1-v2|^2.
    """
    from .assimilation.conditions import check_condition
    from .assimilation.experiments import _gate, _resolve_mu
    from .assimilation.stepping import NudgedState, NudgedStepper

    _check_paired_streams(v1, v2)
    nsteps = _nsteps_from(v1, cfg.dt)
    ip = cfg.interpolant
    grid = ip.grid
    rep1 = check_condition(v1, p, grid, variant=cfg.variant, mu=cfg.mu)
    rep2 = check_condition(v2, p, grid, variant=cfg.variant, mu=cfg.mu)
    _gate(rep1, cfg)
    _gate(rep2, cfg)
    mu = _resolve_mu(cfg, rep1)

    s1 = NudgedState.zero(grid, model)
    s2 = NudgedState.zero(grid, model)
    st1 = NudgedStepper(grid, p, cfg.dt, ip, mu, model)
    st2 = NudgedStepper(grid, p, cfg.dt, ip, mu, model)
    times: list = []
    wbar_l2: list = []
    wbar_h1: list = []
    ebar_l2: list = []
    vbar_l2: list = []
    for k in range(nsteps + 1):
        if k % record_every == 0 or k == nsteps:
            times.append(s1.t)
            dw = s1.w - s2.w
            wbar_l2.append(l2_norm(dw))
            wbar_h1.append(h1_norm(dw))
            if model == "boussinesq":
                ebar_l2.append(l2_norm(s1.eta - s2.eta))
            dv = Observation(v1[k].kind, v1[k].t, v1[k].payload - v2[k].payload)
            vbar_l2.append(l2_norm(ip.reconstruct(dv)))
        if k < nsteps:
            nxt = k + 1
            s1 = st1.step(s1, v1[k], obs_next=v1[nxt])
            s2 = st2.step(s2, v2[k], obs_next=v2[nxt])

    t = np.asarray(times)
    wb = np.asarray(wbar_l2)
    vb = np.asarray(vbar_l2)
    sup_wbar_sq = float(np.max(wb**2))
    sup_vbar_sq = float(np.max(vb**2))
    win = sliding_window_sup(t, np.asarray(wbar_h1) ** 2, 1.0)
    bound1 = 8.0 * sup_vbar_sq
    bound2 = (4.0 * mu / p.nu) * sup_vbar_sq
    term_gap = math.sqrt(
        wb[-1] ** 2 + (ebar_l2[-1] ** 2 if model == "boussinesq" else 0.0)
    )
    return LipschitzReport(
        sup_wbar_sq=sup_wbar_sq,
        bound_wbar_sq=bound1,
        sup_window_int=win,
        bound_window_int=bound2,
        sup_vbar_sq=sup_vbar_sq,
        terminal_p_gap=term_gap,
        mu=mu,
        ok_pointwise=sup_wbar_sq <= (1.0 + tolerance) * bound1,
        ok_window=win <= (1.0 + tolerance) * bound2,
        tolerance=tolerance,
    )


@dataclass
class ShiftReport:
    sigma: float
    transient: float
    max_rel_dev: float
    ok: bool
    mu: float
    alpha: float
    tolerance: float


def shift_equivariance_test(
    v,
    sigma: float,
    cfg,
    p: Params,
    model: str = "boussinesq",
    record_every: int = 10,
    tolerance: float = 0.05,
    transient: float | None = None,
) -> ShiftReport:
    """Compare nudging the shifted stream against the shifted nudged
    trajectory.

    The two runs see identical observations once aligned; after a
    transient of 5/alpha (the contraction has washed out the differing
    histories) their velocities must agree within the relative tolerance.
    Only the velocity is compared: it is the variable the data determine,
    while the temperature keeps a memory of its start that fades no
    faster than the natural decay.
    """
    from .assimilation.conditions import check_condition
    from .assimilation.experiments import _gate, _resolve_mu
    from .assimilation.stepping import NudgedState, NudgedStepper

    nsteps = _nsteps_from(v, cfg.dt)
    ip = cfg.interpolant
    grid = ip.grid
    report = check_condition(v, p, grid, variant=cfg.variant, mu=cfg.mu)
    _gate(report, cfg)
    mu = _resolve_mu(cfg, report)
    if report.alpha is None or report.alpha <= 0:
        raise DomainError("shift test needs a positive decay rate alpha")
    alpha = report.alpha

    vs = v.shifted(sigma)
    k0 = len(v) - len(vs)
    if k0 >= nsteps:
        raise WindowError("shift leaves no overlap to compare")

    s1 = NudgedState.zero(grid, model)
    st1 = NudgedStepper(grid, p, cfg.dt, ip, mu, model)
    for k in range(k0):
        s1 = st1.step(s1, v[k], obs_next=v[k + 1])

    s2 = NudgedState.zero(grid, model)
    st2 = NudgedStepper(grid, p, cfg.dt, ip, mu, model)
    if transient is None:
        transient = 5.0 / alpha
    max_rel = 0.0
    compared = 0
    rem = nsteps - k0
    for k in range(rem + 1):
        if (k % record_every == 0 or k == rem) and s2.t >= transient:
            rel = l2_norm(s1.w - s2.w) / max(l2_norm(s1.w), 1e-300)
            max_rel = max(max_rel, rel)
            compared += 1
        if k < rem:
            s1 = st1.step(s1, v[k0 + k], obs_next=v[k0 + k + 1])
            s2 = st2.step(s2, vs[k], obs_next=vs[k + 1])
    if compared == 0:
        raise WindowError(
            f"no samples after the transient {transient:.3g}; extend the stream"
        )
    return ShiftReport(
        sigma=sigma,
        transient=transient,
        max_rel_dev=max_rel,
        ok=max_rel <= tolerance,
        mu=mu,
        alpha=alpha,
        tolerance=tolerance,
    )
