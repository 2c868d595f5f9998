import os, json, numpy as np, tempfile
from nudge_lab.errors import (ConfigError, StreamFormatError, GridMismatchError,
                              SeriesFormatError)
from nudge_lab.spectral import Grid, FlowState, Params, random_field, l2_norm
from nudge_lab.interpolants import Modal, Volume
from nudge_lab.assimilation import (NudgingConfig, ObservationStream,
                                    run_reference, run_stream_assimilation,
                                    run_sync_experiment)
from nudge_lab import io as nio

tmp = tempfile.mkdtemp()

# --- config parse round-trip -----------------------------------------
cfg_text = """
# desk-scale twin experiment
model = boussinesq
geometry = torus
resolution = 64, 64
extent = 0.5, 0.5
nu = 1e-2
kappa = 1e-2
interpolant = modal
modes = 8
dt = 2e-3
T = 0.2
record_every = 5
seed = 3
ic_energy = 5e-3
mu = auto
"""
p = os.path.join(tmp, "run.cfg")
open(p, "w").write(cfg_text)
cfg = nio.load_config(p)
assert cfg.model == "boussinesq" and cfg.resolution == (64, 64)
assert cfg.mu is None and cfg.record_every == 5
print("config parse ok")

# unknown key
open(p + ".bad", "w").write("model = nse\nbogus_key = 3\n")
try:
    nio.load_config(p + ".bad"); raise SystemExit("no ConfigError")
except ConfigError as e:
    assert "bogus_key" in str(e), e
print("unknown key rejected ok")

grid = nio.build_grid(cfg)
params = nio.build_params(cfg, grid)
ip = nio.build_interpolant(cfg, grid)
state = nio.initial_state(cfg, grid)
assert state.theta is not None

# --- checkpoint round-trip -------------------------------------------
ref = run_reference(state, params, cfg.dt, cfg.T, record_every=cfg.record_every)
ck = os.path.join(tmp, "final.ndgl")
nio.save_checkpoint(ck, ref.state, history=ref.history)
st2, hist2 = nio.load_checkpoint(ck, grid=grid)
assert st2.t == ref.state.t
assert np.array_equal(st2.u.coeffs, ref.state.u.coeffs)
assert np.array_equal(st2.theta.coeffs, ref.state.theta.coeffs)
assert hist2 is not None and np.array_equal(hist2[0], ref.history[0])
print("checkpoint round-trip ok (bitwise)")

# grid mismatch
g2 = Grid(2, "torus", (0.5, 0.5), (32, 32))
try:
    nio.load_checkpoint(ck, grid=g2); raise SystemExit("no GridMismatchError")
except GridMismatchError:
    pass
print("checkpoint grid mismatch ok")

# newer version rejected
raw = bytearray(open(ck, "rb").read())
raw[4:6] = (99).to_bytes(2, "little")
open(ck + ".v99", "wb").write(bytes(raw))
try:
    nio.load_checkpoint(ck + ".v99"); raise SystemExit("no version error")
except StreamFormatError:
    pass
print("newer version rejected ok")

# --- restart equality: run T then resume vs single 2T ----------------
T2 = 2 * cfg.T
full = run_reference(state, params, cfg.dt, T2, record_every=cfg.record_every)
resumed = run_reference(FlowState(st2.u, st2.theta, st2.t), params, cfg.dt, cfg.T,
                        record_every=cfg.record_every)
# resumed stepper starts with empty history -> first step Euler again; gap small
gap = l2_norm(resumed.state.u - full.state.u) / l2_norm(full.state.u)
print(f"restart (history dropped) rel gap = {gap:.3e}")

# --- stream round-trip ------------------------------------------------
ncfg = NudgingConfig(interpolant=ip, dt=cfg.dt, mu=None)
res = run_sync_experiment(state, ncfg, params, T=0.1, record_every=10)
sp = os.path.join(tmp, "obs.ndgs")
nio.save_stream(sp, res.stream)
s2 = nio.load_stream(sp, ip)
assert len(s2) == len(res.stream) and s2.kind == res.stream.kind
assert all(np.array_equal(a.payload, b.payload) for a, b in zip(s2, res.stream))
assert np.array_equal(s2.times, res.stream.times)
print("stream round-trip ok (bitwise)")

# --- series CSV round-trip -------------------------------------------
cp = os.path.join(tmp, "series.csv")
nio.save_series(cp, res.series)
s3 = nio.load_series(cp)
assert set(s3.names()) == set(res.series.names())
for n in s3.names():
    assert np.array_equal(s3.channel(n), res.series.channel(n)), n
assert s3.meta["mu"] == res.series.meta["mu"]
print("series CSV round-trip ok (exact via %.17g)")

# malformed CSV
open(cp + ".bad", "w").write("t,x\n0.0,1.0\n0.1\n")
try:
    nio.load_series(cp + ".bad"); raise SystemExit("no SeriesFormatError")
except SeriesFormatError:
    pass
print("malformed CSV rejected ok")

# --- run_stream_assimilation ------------------------------------------
sres = run_stream_assimilation(res.stream, ncfg, params, model="boussinesq",
                               record_every=10)
assert "obs_gap" in sres.series.names() and "int_nudge_inner" in sres.series.names()
gp = sres.series.channel("obs_gap")
print(f"stream assimilation: obs gap {gp[0]:.3e} -> {gp[-1]:.3e}, mu={sres.mu:.4g}")
assert gp[-1] < gp[0]

# twin lockstep and stream-driven should agree on w when fed the same stream
wl = res.series.channel("w_l2")
ws = sres.series.channel("w_l2")
k = min(len(wl), len(ws))
dev = float(np.max(np.abs(wl[:k] - ws[:k])))
print(f"lockstep vs stream-driven w_l2 max dev = {dev:.3e}")
assert dev == 0.0, dev

# cadence mismatch rejected
bad = NudgingConfig(interpolant=ip, dt=cfg.dt / 2, mu=sres.mu)
try:
    run_stream_assimilation(res.stream, bad, params); raise SystemExit("no cadence error")
except StreamFormatError:
    pass
print("cadence mismatch rejected ok")

# --- reference zero initial data -> zero series ----------------------
z = FlowState(random_field(grid, np.random.default_rng(0), ncomp=2,
                           divergence_free=True, energy=0.0),
              random_field(grid, np.random.default_rng(1), energy=0.0), 0.0)
zr = run_reference(z, Params(nu=1e-2, kappa=1e-2), 1e-2, 0.1)
assert all(np.all(zr.series.channel(n) == 0.0) for n in zr.series.names())
print("zero initial data -> zero series ok")

# --- jsonable ---------------------------------------------------------
js = nio.jsonable(sres.report)
json.dumps(js)
print("report jsonable ok")
print("ALL IO SMOKE OK")
