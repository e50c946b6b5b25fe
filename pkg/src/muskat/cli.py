"""Command-line entry point: muskat <experiment> --config FILE [--out DIR]."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import subprocess
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from . import cli_io as cio
from . import constants as cst
from . import experiments as ex
from .dynamics import StepperConfig, run
from .errors import MuskatError
from .interface_ops import QuadratureScheme
from .spectral import SpectralInterface, mode, random_interface, snapshot_dict, to_grid, wiener_norm

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 2, 3


def params_of(cfg: cio.RunConfig, a_mu: float | None = None) -> cst.FluidParams:
    return cst.FluidParams(cfg.a_mu if a_mu is None else a_mu, cfg.a_rho)


def stepper_of(cfg: cio.RunConfig) -> StepperConfig:
    return StepperConfig(
        dt_max=cfg.dt_max,
        cfl_c=cfg.cfl_c,
        t_end=cfg.t_end,
        mollifier_eps=cfg.mollifier_eps,
        blowup_threshold=cfg.blowup_threshold,
        mollifier_linear=cfg.mollifier_linear,
        sample_dt=cfg.sample_dt,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
    )


def quad_of(cfg: cio.RunConfig) -> QuadratureScheme:
    return QuadratureScheme(cfg.window_periods, True, cfg.dealias_fraction)


def initial_data(cfg: cio.RunConfig) -> SpectralInterface:
    dims, n, L = cfg.dims, cfg.n, cfg.period
    if cfg.init == "zero":
        return SpectralInterface.zeros(dims, n, L)
    if cfg.init == "decay":
        f = ex.decay_initial(n, L, cfg.decay_power, cfg.decay_xi_cut, 1.0, cfg.seed)
    elif cfg.init == "cos":
        f = mode(dims, n, L, (1,) + (0,) * (dims - 1), 1.0)
    else:
        f = random_interface(dims, n, L, cfg.init_modes, 1.0, cfg.seed)
    if cfg.amplitude_mode == "max":
        size = float(np.max(np.abs(to_grid(f))))
        target = cfg.amplitude
    else:
        size = wiener_norm(f, 1.0, 0.0, 0.0)
        target = cfg.amplitude
        if cfg.amplitude_mode == "threshold":
            target *= cst.threshold(abs(cfg.a_mu), cfg.model)
    return f.scaled(target / size) if size > 0 else f


def verdict(name, passed, measured, bound, tolerance) -> dict:
    return {"name": name, "pass": bool(passed), "measured": float(measured), "bound": float(bound),
            "tolerance": float(tolerance)}


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write_common(out: str, cfg: cio.RunConfig, verdicts: list[dict], extra: dict | None = None) -> None:
    os.makedirs(out, exist_ok=True)
    cio.write_text(os.path.join(out, "config.txt"), cio.serialize(cfg))
    cio.write_text(os.path.join(out, "verdict.json"), _json(verdicts))
    meta = {
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "experiment": cfg.experiment,
        "grid": {"model": cfg.model, "n": cfg.n, "period": cfg.period},
    }
    meta.update(extra or {})
    cio.write_text(os.path.join(out, "metadata.json"), _json(meta))


def _exit_code(verdicts: list[dict]) -> int:
    return EXIT_OK if all(v["pass"] for v in verdicts) else EXIT_FAIL


# ---- experiments ------------------------------------------------------------------

def cmd_simulate(cfg: cio.RunConfig, out: str, resume: str | None = None) -> int:
    params, stepper, quad = params_of(cfg), stepper_of(cfg), quad_of(cfg)
    os.makedirs(out, exist_ok=True)
    state = None
    prior = []
    prior_diag = []
    if resume:
        state = cio.checkpoint_read(resume)
        path = os.path.join(out, "trajectory.csv")
        if os.path.exists(path):
            old = cio.read_csv(out)
            prior = [r for r in old.rows if r["t"] <= state.f.time]
            prior_diag = [d for d in old.diagnostics if d["t"] <= state.f.time]
    f0 = initial_data(cfg) if state is None else state.f
    ckpt = os.path.join(out, "checkpoint.json")
    counter = {"n": 0}

    def on_sample(st):
        counter["n"] += 1
        if cfg.checkpoint_stride and counter["n"] % cfg.checkpoint_stride == 0:
            cio.checkpoint_write(ckpt, st)

    rec = run(f0, params, stepper, quad, cfg.nu_fraction, cfg.snapshot_stride, state, on_sample)
    rec.rows = prior + rec.rows
    rec.diagnostics = prior_diag + rec.diagnostics
    cio.emit_csv(rec, out)
    if cfg.snapshot_stride:
        snap_dir = os.path.join(out, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        for i, f in enumerate(rec.snapshots):
            cio.write_text(os.path.join(snap_dir, f"snap_{i:05d}.json"), json.dumps(snapshot_dict(f), sort_keys=True))
    inside = rec.metadata.get("inside", True) and params.a_rho > 0
    verdicts = []
    e = ex.energy_monitor(rec)
    l2 = ex.l2_monitor(rec)
    ratios = [d["bound_max_ratio"] for d in rec.diagnostics if not math.isnan(d["bound_max_ratio"])]
    worst = max(ratios) if ratios else 0.0
    verdicts.append(verdict("energy", e.passed or not inside, e.measured, 0.0, e.tolerance))
    verdicts.append(verdict("l2", l2.passed or not inside, l2.measured, 0.0, l2.tolerance))
    verdicts.append(verdict("vorticity_bounds", not rec.bound_failures or not inside, worst, 1.0, 1e-12))
    verdicts.append(verdict("no_blowup", not rec.blew_up or not inside, float(rec.blew_up), 0.0, 0.0))
    notes = {"nu": rec.metadata.get("nu"), "sigma": rec.metadata.get("sigma"), "inside_hypothesis": bool(inside),
             "raw_energy_pass": e.passed, "raw_l2_pass": l2.passed}
    _write_common(out, cfg, verdicts, notes)
    return _exit_code(verdicts)


def cmd_reverse(cfg, out):
    params, stepper, quad = params_of(cfg), stepper_of(cfg), quad_of(cfg)
    rep = ex.time_reversal_illposedness(initial_data(cfg), params, stepper, cfg.delta, quad)
    os.makedirs(out, exist_ok=True)
    rows = [{"k": k, "rate": r, "linear_rate": lr} for k, r, lr in zip(rep.mode_k, rep.mode_rate, rep.linear_rate)]
    cio.write_text(os.path.join(out, "reversal_modes.csv"), cio.table_text(("k", "rate", "linear_rate"), rows))
    summary = [{"recovery_error": rep.recovery_error, "growth_h1": rep.growth_h1, "growth_h2": rep.growth_h2,
                "max_rate_error": rep.max_rate_error}]
    cio.write_text(os.path.join(out, "reversal.csv"),
                   cio.table_text(("recovery_error", "growth_h1", "growth_h2", "max_rate_error"), summary))
    verdicts = [
        verdict("mode_rates", rep.max_rate_error <= 0.05, rep.max_rate_error, 0.05, 0.0),
        verdict("recovery", rep.recovery_error <= 1e-5, rep.recovery_error, 1e-5, 0.0),
    ]
    _write_common(out, cfg, verdicts, {"blowup": rep.blowup, "note": rep.note})
    return _exit_code(verdicts)


def cmd_decay(cfg, out):
    params, stepper, quad = params_of(cfg), stepper_of(cfg), quad_of(cfg)
    rep = ex.decay_experiment(initial_data(cfg), params, stepper, (cfg.t_fit_start, cfg.t_fit_end), quad)
    cio.emit_csv(rep.record, out)
    if cfg.model == "2d":
        bands = {"f11": (-1.8, -1.2), "h1": (-1.3, -0.7)}
    else:
        bands = {"f11": (-2.3, -1.7), "h1": (-1.3, -0.7)}
    verdicts = []
    for name, fit in (("f11", rep.f11), ("h1", rep.h1)):
        lo, hi = bands[name]
        verdicts.append(verdict(f"{name}_exponent", lo <= fit.exponent <= hi, fit.exponent, hi, hi - lo))
    fits = [{"norm": n, "exponent": f.exponent, "stderr": f.stderr, "r_squared": f.r_squared, "samples": f.samples}
            for n, f in (("f11", rep.f11), ("h1", rep.h1))]
    cio.write_text(os.path.join(out, "decay_fit.csv"),
                   cio.table_text(("norm", "exponent", "stderr", "r_squared", "samples"), fits))
    _write_common(out, cfg, verdicts)
    return _exit_code(verdicts)


def cmd_contraction(cfg, out):
    params, stepper, quad = params_of(cfg), stepper_of(cfg), quad_of(cfg)
    f0 = initial_data(cfg)
    g0 = f0 + mode(cfg.dims, cfg.n, cfg.period, (3,) + (0,) * (cfg.dims - 1), cfg.perturbation)
    res = ex.contraction_monitor(f0, g0, params, stepper, quad)
    os.makedirs(out, exist_ok=True)
    rows = [{"t": t, "difference_f01": y} for t, y in res.series]
    cio.write_text(os.path.join(out, "contraction.csv"), cio.table_text(("t", "difference_f01"), rows))
    verdicts = [verdict("contraction", res.passed, res.measured, 0.0, res.tolerance)]
    _write_common(out, cfg, verdicts)
    return _exit_code(verdicts)


def cmd_mollifier(cfg, out):
    params, stepper, quad = params_of(cfg), stepper_of(cfg), quad_of(cfg)
    rep = ex.mollifier_cauchy_rate(initial_data(cfg), params, stepper, cfg.eps_list, quad)
    os.makedirs(out, exist_ok=True)
    rows = [{"eps": e, "difference_f01": d} for e, d in zip(rep.eps, rep.differences)]
    cio.write_text(os.path.join(out, "mollifier.csv"), cio.table_text(("eps", "difference_f01"), rows))
    verdicts = [verdict("cauchy_slope", rep.slope >= 0.3, rep.slope, 0.3, 0.0),
                verdict("monotone", rep.monotone, float(rep.monotone), 1.0, 0.0)]
    _write_common(out, cfg, verdicts)
    return _exit_code(verdicts)


def cmd_staircase(cfg, out):
    spec = ex.StaircaseSpec(cfg.sigma_exp, cfg.delta_exp, cfg.gamma_exp, cfg.s_target, cfg.n_shells)
    rep = ex.staircase(spec)
    os.makedirs(out, exist_ok=True)
    marks = [m for m in (10**j for j in range(0, 10)) if m <= spec.n_shells]
    rows = [{"n": m, "f11": rep.f11_partial[m - 1], "l2": rep.l2_partial[m - 1], "hs": rep.hs_partial[m - 1]}
            for m in marks]
    cio.write_text(os.path.join(out, "staircase.csv"), cio.table_text(("n", "f11", "l2", "hs"), rows))
    need = 0.9 * math.log(1e3) * ex.SHELL_CONSTANT
    verdicts = [verdict("f11_tail", rep.f11_tail_fraction < 1e-6, rep.f11_tail_fraction, 1e-6, 0.0),
                verdict("hs_growth", rep.hs_growth >= need, rep.hs_growth, need, 0.0)]
    _write_common(out, cfg, verdicts)
    return _exit_code(verdicts)


def cmd_constants(model: str, samples: int, out: str, cfg: cio.RunConfig | None = None) -> int:
    """Threshold curve; ``out`` is either a directory or the target .csv path."""
    table = cst.curve_table(samples, model)
    cols = ("a_mu", "threshold", "sigma_at_half_threshold")
    rows = [dict(zip(cols, r)) for r in table]
    text = cio.table_text(cols, rows)
    dec = bool(np.all(np.diff(table[:, 1]) < 0))
    verdicts = [verdict("strictly_decreasing", dec, float(dec), 1.0, 0.0)]
    if out.endswith(".csv"):
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        cio.write_text(out, text)
        return _exit_code(verdicts)
    os.makedirs(out, exist_ok=True)
    cio.write_text(os.path.join(out, "threshold_curve.csv"), text)
    cfg = cfg or replace(cio.RunConfig(), experiment="constants", model=model, samples=samples)
    _write_common(out, cfg, verdicts)
    return _exit_code(verdicts)


def cmd_sweep(cfg, out):
    """One simulate run per a_mu value, each in its own process and directory."""
    os.makedirs(out, exist_ok=True)
    codes = []
    for i, a in enumerate(cfg.a_mu_list):
        sub = os.path.join(out, f"run_{i:03d}")
        os.makedirs(sub, exist_ok=True)
        sub_cfg = replace(cfg, experiment="simulate", a_mu=float(a), out_dir=sub)
        path = os.path.join(sub, "input.txt")
        cio.write_text(path, cio.serialize(sub_cfg))
        proc = subprocess.run([sys.executable, "-m", "muskat.cli", "simulate", "--config", path, "--out", sub])
        codes.append(proc.returncode)
    rows = [{"a_mu": a, "exit_code": c} for a, c in zip(cfg.a_mu_list, codes)]
    cio.write_text(os.path.join(out, "sweep.csv"), cio.table_text(("a_mu", "exit_code"), rows))
    if any(c == EXIT_ERROR for c in codes):
        return EXIT_ERROR
    return EXIT_FAIL if any(c == EXIT_FAIL for c in codes) else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "reverse": cmd_reverse,
    "decay": cmd_decay,
    "contraction": cmd_contraction,
    "mollifier": cmd_mollifier,
    "staircase": cmd_staircase,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="muskat", description="Muskat interface experiments")
    p.add_argument("experiment", choices=sorted(list(COMMANDS) + ["constants"]))
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--resume", help="checkpoint to continue from (simulate only)")
    p.add_argument("--model", choices=("2d", "3d"), help="constants: model")
    p.add_argument("--samples", type=int, help="constants: number of |A_mu| samples")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = None
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise cio.IoFailure(str(exc)) from exc
            if "experiment" not in {ln.split("=", 1)[0].strip() for ln in text.splitlines() if "=" in ln}:
                text = f"experiment={args.experiment}\n" + text
            cfg = cio.parse_config(text)
            if cfg.experiment != args.experiment:
                raise cio.BadValue("experiment", f"config says {cfg.experiment}, command is {args.experiment}")
        elif args.experiment != "constants":
            raise cio.MissingRequired("--config")
        out = args.out or (cfg.out_dir if cfg else "out")
        if args.experiment == "constants":
            model = args.model or (cfg.model if cfg else "3d")
            samples = args.samples or (cfg.samples if cfg else 21)
            if samples < 2:
                raise cio.BadValue("samples", "must be >= 2")
            return cmd_constants(model, samples, out, cfg)
        if args.experiment == "simulate":
            return cmd_simulate(cfg, out, args.resume)
        if args.resume:
            raise cio.BadValue("--resume", "only simulate runs can be resumed")
        return COMMANDS[args.experiment](cfg, out)
    except (MuskatError, ValueError, OSError) as exc:
        print(f"muskat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
