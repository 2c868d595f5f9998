"""Command line front end.

Five subcommands cover the experiment lifecycle: ``simulate`` integrates
the reference system, ``assimilate`` nudges a cold-started copy against
synthesized or prerecorded observations, ``check-condition`` evaluates
the admissibility condition without running anything, ``analyze``
recomputes fits and residuals from stored series, and ``sweep`` repeats
the twin experiment over a list of nudging gains.  Exit codes: 0
success, 2 configuration or condition errors, 3 numerical failure, 4
artifact mismatch, 5 malformed series.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .analysis import energy_residuals, fit_decay, space_norms
from .assimilation import (
    NudgingConfig,
    ObservationStream,
    check_condition,
    run_reference,
    run_stream_assimilation,
    run_sync_experiment,
)
from .errors import (
    ConditionError,
    ConfigError,
    DivergenceError,
    DomainError,
    GridMismatchError,
    KindMismatchError,
    NudgeLabError,
    RegularityError,
    SeriesFormatError,
    StabilityError,
    StreamFormatError,
    WindowError,
)
from .io import (
    ExperimentConfig,
    build_grid,
    build_interpolant,
    build_params,
    initial_state,
    jsonable,
    load_checkpoint,
    load_config,
    load_series,
    load_stream,
    save_checkpoint,
    save_report,
    save_series,
    save_stream,
)
from .series import ErrorSeries
from .spectral import Params

__all__ = ["main"]

_EXIT_CODES = (
    (2, (ConfigError, ConditionError, DomainError)),
    (3, (DivergenceError, StabilityError, RegularityError)),
    (4, (StreamFormatError, KindMismatchError, GridMismatchError)),
    (5, (SeriesFormatError, WindowError)),
)


def _exit_code(exc: NudgeLabError) -> int:
    for code, classes in _EXIT_CODES:
        if isinstance(exc, classes):
            return code
    return 1


def _outdir(cfg: ExperimentConfig) -> str:
    os.makedirs(cfg.outdir, exist_ok=True)
    return cfg.outdir


def _gap_series(series: ErrorSeries):
    """The decayable gap channel: pair error for twin runs, data misfit
    for stream-driven runs; None when neither is recorded."""
    if series.has("err_sum_sq"):
        y = np.sqrt(series.channel("err_sum_sq"))
    elif series.has("obs_gap"):
        y = series.channel("obs_gap")
    else:
        return None
    return ErrorSeries(t=series.t, channels={"gap": y}, meta=series.meta)


def _decay_payload(series: ErrorSeries, mu: float, alpha: float | None) -> dict | None:
    gap = _gap_series(series)
    if gap is None:
        return None
    y = gap.channel("gap")
    initial, terminal = float(y[0]), float(y[-1])
    payload = {
        "mu": mu,
        "alpha": alpha,
        "initial_gap": initial,
        "terminal_gap": terminal,
        "rate": None,
    }
    try:
        fit = fit_decay(gap, "gap")
    except (DomainError, WindowError):
        fit = None
    if fit is not None:
        payload.update(
            rate=fit.rate,
            window=list(fit.window),
            residual=fit.residual,
            n_samples=fit.n_samples,
        )
    ok_ratio = initial == 0.0 or terminal <= 1e-2 * initial
    ok_rate = alpha is None or payload["rate"] is None or payload["rate"] >= 0.9 * alpha
    payload["verdict"] = "PASS" if (ok_ratio and ok_rate) else "FAIL"
    return payload


def cmd_simulate(cfg: ExperimentConfig) -> int:
    grid = build_grid(cfg)
    params = build_params(cfg, grid)
    history = None
    if cfg.resume:
        state, history = load_checkpoint(cfg.resume, grid=grid)
        if (state.theta is None) != (cfg.model == "nse"):
            raise ConfigError("checkpoint model does not match the config")
    else:
        state = initial_state(cfg, grid)
    res = run_reference(
        state, params, cfg.dt, cfg.T, record_every=cfg.record_every,
        history=history, interpolant=build_interpolant(cfg, grid),
        obs_every=cfg.obs_every,
    )
    out = _outdir(cfg)
    series_path = os.path.join(out, "series.csv")
    ckpt_path = os.path.join(out, "final.ndgl")
    stream_path = os.path.join(out, "obs.ndgs")
    save_series(series_path, res.series)
    save_checkpoint(ckpt_path, res.state, history=res.history)
    save_stream(stream_path, res.stream)
    size = "x".join(str(n) for n in cfg.resolution)
    print(f"simulate: {cfg.model} on {size}, t = {state.t:g} .. {res.state.t:g}")
    for path in (series_path, ckpt_path, stream_path):
        print(f"  wrote {path}")
    return 0


def cmd_assimilate(cfg: ExperimentConfig, mu_override: float | None) -> int:
    grid = build_grid(cfg)
    params = build_params(cfg, grid)
    ip = build_interpolant(cfg, grid)
    overridden = mu_override is not None
    ncfg = NudgingConfig(
        interpolant=ip,
        dt=cfg.dt,
        mu=mu_override if overridden else cfg.mu,
        obs_every=cfg.obs_every,
        variant=cfg.variant,
        force=cfg.force or overridden,
    )
    if cfg.stream:
        stream = load_stream(cfg.stream, ip)
        res = run_stream_assimilation(
            stream, ncfg, params, model=cfg.model, record_every=cfg.record_every
        )
    else:
        res = run_sync_experiment(
            initial_state(cfg, grid), ncfg, params, cfg.T,
            record_every=cfg.record_every,
        )
    if not res.report.satisfied:
        why = "overridden mu" if overridden else "forced run"
        print(
            f"warning: admissibility condition not satisfied ({why}, "
            f"mu = {res.mu:g}); decay is not guaranteed",
            file=sys.stderr,
        )
    out = _outdir(cfg)
    save_series(os.path.join(out, "series.csv"), res.series)
    save_report(os.path.join(out, "report.json"), res.report)
    decay = _decay_payload(res.series, res.mu, res.alpha)
    if decay is not None:
        save_report(os.path.join(out, "decay.json"), decay)
        rate = "none" if decay["rate"] is None else f"{decay['rate']:.4g}"
        print(
            f"assimilate: mu = {res.mu:.6g}, gap {decay['initial_gap']:.3e} -> "
            f"{decay['terminal_gap']:.3e}, rate = {rate}, {decay['verdict']}"
        )
    print(f"  wrote {os.path.join(out, 'series.csv')}")
    return 0


def cmd_check_condition(cfg: ExperimentConfig, mu_override: float | None) -> int:
    grid = build_grid(cfg)
    params = build_params(cfg, grid)
    ip = build_interpolant(cfg, grid)
    stream = load_stream(cfg.stream, ip) if cfg.stream else ObservationStream(ip)
    mu = mu_override if mu_override is not None else cfg.mu
    report = check_condition(stream, params, grid, variant=cfg.variant, mu=mu)
    print("SATISFIED" if report.satisfied else "NOT SATISFIED")
    for violation in report.violations:
        print(f"  violated: {violation}")
    print(json.dumps(jsonable(report), indent=2, sort_keys=True))
    return 0


_REQUIRED_FOR_RESIDUALS = ("u_l2", "int_u_h1_sq", "w_l2", "int_w_h1_sq", "int_nudge_inner")

_NORM_GROUPS = (
    ("reference", "u_l2", "u_h1", "theta_l2"),
    ("nudged", "w_l2", "w_h1", "eta_l2"),
    ("error", "err_u_l2", "err_u_h1", "err_theta_l2"),
)


def _reintegrate(series: ErrorSeries) -> dict:
    """Recompute each running integral from its recorded integrand; on a
    record-every-step series this reproduces the in-run accumulators
    exactly (same panels, same summation order)."""
    t = series.t
    devs = {}
    for name in series.names():
        if not name.startswith("int_"):
            continue
        base = name[len("int_"):]
        if base.endswith("_sq") and series.has(base[: -len("_sq")]):
            y = series.channel(base[: -len("_sq")]) ** 2
        elif series.has(base):
            y = series.channel(base)
        else:
            continue
        panels = 0.5 * np.diff(t) * (y[1:] + y[:-1])
        acc = np.concatenate(([0.0], np.cumsum(panels)))
        devs[name] = float(np.max(np.abs(acc - series.channel(name))))
    return devs


def cmd_analyze(cfg: ExperimentConfig) -> int:
    path = cfg.series or os.path.join(cfg.outdir, "series.csv")
    series = load_series(path)
    meta = series.meta
    result: dict = {"series": path, "records": len(series)}

    decay = _decay_payload(series, meta.get("mu", 0.0), meta.get("alpha"))
    if decay is not None:
        result["decay"] = decay

    if all(series.has(n) for n in _REQUIRED_FOR_RESIDUALS) and "nu" in meta:
        p = Params(nu=float(meta["nu"]), kappa=float(meta.get("kappa") or 0.0))
        er = energy_residuals(series, p)
        result["energy_residuals"] = {
            "max_rel": er.max_rel,
            "flagged": er.flagged,
            "tolerance": er.tolerance,
        }

    norms = {}
    for label, l2c, h1c, thc in _NORM_GROUPS:
        if series.has(l2c) and series.has(h1c):
            sn = space_norms(
                series, l2c, h1c,
                theta_l2_channel=thc if series.has(thc) else None,
            )
            norms[label] = {"X": sn.x_norm, "Z": sn.z_norm, "P": sn.p_norm}
    if norms:
        result["space_norms"] = norms

    devs = _reintegrate(series)
    if devs:
        result["accumulators"] = {
            "max_dev": devs,
            "worst": float(max(devs.values())),
        }

    out = _outdir(cfg)
    save_report(os.path.join(out, "analysis.json"), result)
    if decay is not None:
        rate = "none" if decay["rate"] is None else f"{decay['rate']:.4g}"
        print(
            f"analyze: gap {decay['initial_gap']:.3e} -> "
            f"{decay['terminal_gap']:.3e}, rate = {rate}, {decay['verdict']}"
        )
    if "energy_residuals" in result:
        worst = max(result["energy_residuals"]["max_rel"].values())
        print(f"  energy residuals: worst rel {worst:.3e}")
    if devs:
        print(f"  accumulator reproduction: worst dev {result['accumulators']['worst']:.3e}")
    print(f"  wrote {os.path.join(out, 'analysis.json')}")
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    if not cfg.sweep_mu:
        raise ConfigError("sweep requires sweep_mu in the config")
    grid = build_grid(cfg)
    params = build_params(cfg, grid)
    ip = build_interpolant(cfg, grid)
    state = initial_state(cfg, grid)
    out = _outdir(cfg)
    rows = []
    for mu in cfg.sweep_mu:
        ncfg = NudgingConfig(
            interpolant=ip, dt=cfg.dt, mu=mu, obs_every=cfg.obs_every,
            variant=cfg.variant, force=True,
        )
        res = run_sync_experiment(
            state, ncfg, params, cfg.T, record_every=cfg.record_every
        )
        sub = os.path.join(out, f"mu_{mu:g}")
        os.makedirs(sub, exist_ok=True)
        save_series(os.path.join(sub, "series.csv"), res.series)
        save_report(os.path.join(sub, "report.json"), res.report)
        decay = _decay_payload(res.series, res.mu, res.alpha)
        row = {"mu": mu, "satisfied": res.report.satisfied}
        if decay is not None:
            row.update(
                initial_gap=decay["initial_gap"],
                terminal_gap=decay["terminal_gap"],
                rate=decay["rate"],
                verdict=decay["verdict"],
            )
            rate = "none" if decay["rate"] is None else f"{decay['rate']:.4g}"
            print(
                f"  mu = {mu:g}: gap -> {decay['terminal_gap']:.3e}, "
                f"rate = {rate}, {decay['verdict']}"
            )
        rows.append(row)
    save_report(os.path.join(out, "summary.json"), {"runs": rows})
    print(f"  wrote {os.path.join(out, 'summary.json')}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nudge-lab",
        description="Nudging data assimilation for Navier-Stokes and Boussinesq flows.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate the reference system and checkpoint it"),
        ("assimilate", "run the nudged system against observations"),
        ("check-condition", "evaluate the admissibility condition"),
        ("analyze", "recompute fits and residuals from a stored series"),
        ("sweep", "repeat the twin experiment over sweep_mu"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument(
            "--override-mu", type=float, default=None, metavar="V",
            help="force this nudging gain, bypassing the condition gate",
        )
        p.add_argument(
            "--out", default=None, metavar="DIR",
            help="output directory (overrides the config's outdir)",
        )
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg = dataclasses.replace(cfg, outdir=args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "assimilate":
            return cmd_assimilate(cfg, args.override_mu)
        if args.command == "check-condition":
            return cmd_check_condition(cfg, args.override_mu)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        return cmd_sweep(cfg)
    except NudgeLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    raise SystemExit(main())
