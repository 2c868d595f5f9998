import math
import numpy as np

from nudge_lab.spectral import FlowState, Grid, Params, random_field, l2_norm, h1_norm
from nudge_lab.interpolants import Modal
from nudge_lab.assimilation import NudgingConfig, run_sync_experiment
from nudge_lab.series import ErrorSeries
from nudge_lab.analysis import (
    fit_decay,
    gronwall_check,
    energy_residuals,
    space_norms,
    lipschitz_test,
    shift_equivariance_test,
    sliding_window_sup,
)

rng = np.random.default_rng(7)

# 1. fit_decay on exact exponential
t = np.linspace(0.0, 10.0, 401)
y = 0.37 * np.exp(-3.0 * t)
s = ErrorSeries(t=t, channels={"e": y}, meta={})
fit = fit_decay(s, "e")
print("fit rate", fit.rate, "window", fit.window, "resid", fit.residual)
assert abs(fit.rate - 3.0) < 1e-10, fit.rate

# additive floor
y2 = 0.37 * np.exp(-3.0 * t) + 1e-12
fit2 = fit_decay(ErrorSeries(t=t, channels={"e": y2}, meta={}), "e")
print("floored rate", fit2.rate, "window", fit2.window)
assert abs(fit2.rate - 3.0) < 0.03 * 3.0, fit2.rate

# constant series -> rate 0
y3 = np.full_like(t, 2.5)
fit3 = fit_decay(ErrorSeries(t=t, channels={"e": y3}, meta={}), "e")
print("flat rate", fit3.rate)
assert abs(fit3.rate) < 1e-12

# 2. gronwall: y' = -(mu + r) y  =>  y + mu * int y satisfies hypothesis
mu = 4.0
r = 1.5
tg = np.linspace(0.0, 4.0, 2001)
yg = np.exp(-(mu + r) * tg)
cum = (1.0 - np.exp(-(mu + r) * tg)) / (mu + r)
rep = gronwall_check(tg, yg, mu, cumulative=cum)
print("gronwall", rep.hypothesis_ok, rep.hypothesis_margin, rep.conclusion_ok,
      rep.conclusion_margin, rep.corollary_ok, rep.corollary_margin)
assert rep.hypothesis_ok and rep.conclusion_ok and rep.corollary_ok

# trapezoid cumulative on convex data: hypothesis at exact equality r=0
yh = np.exp(-mu * tg)
cumh = (1.0 - np.exp(-mu * tg)) / mu
reph = gronwall_check(tg, yh, mu, cumulative=cumh)
print("equality case", reph.hypothesis_ok, reph.hypothesis_margin)
assert reph.hypothesis_ok

# violation detection: growing y
bad = gronwall_check(tg, np.exp(0.3 * tg), mu)
print("violation", bad.hypothesis_ok, bad.first_violation)
assert not bad.hypothesis_ok and bad.first_violation is not None

# sliding window oracle
tw = np.linspace(0, 3, 301)
yw = np.sin(tw) ** 2 + 0.2
brute = max(
    np.trapz(yw[i:np.searchsorted(tw, min(tw[i] + 1.0, tw[-1]), side="right")],
             tw[i:np.searchsorted(tw, min(tw[i] + 1.0, tw[-1]), side="right")])
    for i in range(len(tw))
)
mine = sliding_window_sup(tw, yw, 1.0)
print("window sup", mine, "brute", brute)
assert abs(mine - brute) < 1e-8

# 3. real sync run on a small grid; energy residuals + space norms
grid = Grid(2, "torus", (0.5, 0.5), (64, 64))
p = Params(nu=1e-2, kappa=1e-2, c_interp=1e-4)
ip = Modal(grid, 8)
u0 = random_field(grid, np.random.default_rng(1), ncomp=2, band=8,
                  slope=3.0, divergence_free=True, energy=5e-3)
th0 = random_field(grid, np.random.default_rng(2), ncomp=1, band=8,
                   slope=3.0, energy=5e-3)
cfg = NudgingConfig(interpolant=ip, dt=2e-3)
res = run_sync_experiment(FlowState(u0, th0, 0.0), cfg, p, T=3.0, record_every=5)
print("sync mu", res.mu, "alpha", res.alpha)

er = energy_residuals(res.series, p)
print("residual max_rel", {k: f"{v:.2e}" for k, v in er.max_rel.items()})
print("flagged", er.flagged)
# at mu*dt = 2.5 the w transient is sub-step, so only the nudged velocity
# identity is beyond quadrature reach
assert set(er.flagged) <= {"nudged_velocity"}, er.max_rel

# moderate mu resolves the transient: all four identities close
cfg_mod = NudgingConfig(interpolant=ip, dt=2e-3, mu=25.0, force=True)
res_mod = run_sync_experiment(FlowState(u0, th0, 0.0), cfg_mod, p, T=3.0, record_every=5)
er_mod = energy_residuals(res_mod.series, p)
print("moderate-mu max_rel", {k: f"{v:.2e}" for k, v in er_mod.max_rel.items()})
assert not er_mod.flagged, er_mod.max_rel

sn = space_norms(res.series, l2_channel="w_l2", h1_channel="w_h1",
                 theta_l2_channel="eta_l2")
print("norms X", sn.x_norm, "Z", sn.z_norm, "P", sn.p_norm)
sns = space_norms(res.stream)
print("stream X", sns.x_norm, "Z", sns.z_norm)

# 4. lipschitz on the same stream vs itself (zero gap) and vs a second run
rep_same = lipschitz_test(res.stream, res.stream, cfg, p)
print("lipschitz same:", rep_same.sup_wbar_sq, rep_same.ok)
assert rep_same.sup_wbar_sq == 0.0 and rep_same.ok

u0b = random_field(grid, np.random.default_rng(11), ncomp=2, band=8,
                   slope=3.0, divergence_free=True, energy=5e-3)
th0b = random_field(grid, np.random.default_rng(12), ncomp=1, band=8,
                    slope=3.0, energy=5e-3)
resb = run_sync_experiment(FlowState(u0b, th0b, 0.0), cfg, p, T=3.0, record_every=5)
pair = lipschitz_test(res.stream, resb.stream, cfg, p)
print("lipschitz pair: sup w^2", pair.sup_wbar_sq, "bound", pair.bound_wbar_sq,
      "win", pair.sup_window_int, "bound", pair.bound_window_int,
      "ok", pair.ok, "gap", pair.terminal_p_gap)
assert pair.ok

# 5. shift equivariance: large kappa raises alpha so the 5/alpha default
# transient fits inside a short stream
p_hot = Params(nu=1e-2, kappa=0.1, c_interp=1e-4)
res_hot = run_sync_experiment(FlowState(u0, th0, 0.0), cfg, p_hot, T=3.0,
                              record_every=5)
shift0 = shift_equivariance_test(res_hot.stream, 0.0, cfg, p_hot)
print("shift 0:", shift0.max_rel_dev, shift0.ok, "transient", shift0.transient)
assert shift0.max_rel_dev == 0.0

shift = shift_equivariance_test(res_hot.stream, 0.5, cfg, p_hot)
print("shift 0.5:", shift.max_rel_dev, shift.ok)
assert shift.ok

print("ALL ANALYSIS SMOKE OK")
