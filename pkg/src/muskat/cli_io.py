"""Flat key=value configuration, JSON checkpoints and CSV emission."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, fields

from .dynamics import RunState
from .errors import BadValue, CorruptSnapshot, FormatVersionMismatch, IoFailure, MissingRequired, UnknownKey
from .record import COLUMNS, DIAGNOSTIC_COLUMNS, TrajectoryRecord
from .spectral import SpectralInterface, from_snapshot_dict, snapshot_dict

SNAPSHOT_FORMAT = "muskat-snapshot"
SNAPSHOT_VERSION = 1

EXPERIMENTS = ("simulate", "reverse", "decay", "contraction", "mollifier", "staircase", "sweep", "constants")


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "simulate"
    model: str = "2d"
    n: int = 128
    period: float = 2 * math.pi
    a_mu: float = 0.0
    a_rho: float = 1.0
    nu_fraction: float = 0.1
    dt_max: float = 0.01
    cfl_c: float = 0.25
    t_end: float = 1.0
    sample_dt: float = 0.05
    mollifier_eps: float = 0.0
    mollifier_linear: str = "half"
    window_periods: int = 1
    dealias_fraction: float = 2.0 / 3.0
    snapshot_stride: int = 0
    checkpoint_stride: int = 0
    out_dir: str = "out"
    init: str = "random"
    amplitude: float = 0.8
    amplitude_mode: str = "threshold"
    init_modes: int = 4
    seed: int = 0
    decay_power: float = -0.45
    decay_xi_cut: float = 4.0
    perturbation: float = 1e-4
    delta: float = 0.1
    eps_list: tuple = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    t_fit_start: float = 5.0
    t_fit_end: float = 50.0
    tol: float = 1e-12
    max_iter: int = 200
    blowup_threshold: float = 1.0
    a_mu_list: tuple = (0.0, 0.5, 1.0)
    samples: int = 21
    sigma_exp: float = 2.0
    delta_exp: float = 1.0
    gamma_exp: float = 4.5
    s_target: float = 0.25
    n_shells: int = 1_000_000

    @property
    def dims(self) -> int:
        return 1 if self.model == "2d" else 2


_REQUIRED = {
    "simulate": ("model", "n", "a_mu"),
    "reverse": ("model", "n", "a_mu"),
    "decay": ("model", "n", "a_mu"),
    "contraction": ("model", "n", "a_mu"),
    "mollifier": ("model", "n", "a_mu"),
    "sweep": ("model", "n"),
    "staircase": (),
    "constants": (),
}

_CHOICES = {
    "experiment": EXPERIMENTS,
    "model": ("2d", "3d"),
    "mollifier_linear": ("half", "full"),
    "init": ("random", "cos", "decay", "zero"),
    "amplitude_mode": ("threshold", "f11", "max"),
}

_FIELDS = {f.name: f for f in fields(RunConfig)}


def _kind(name: str) -> str:
    default = _FIELDS[name].default
    if isinstance(default, bool):
        return "bool"
    if isinstance(default, int):
        return "int"
    if isinstance(default, float):
        return "float"
    if isinstance(default, tuple):
        return "list"
    return "str"


def _parse_value(key: str, raw: str):
    kind = _kind(key)
    try:
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "list":
            items = [s for s in raw.replace(" ", "").split(",") if s]
            out = tuple(float(s) for s in items)
            if not out or not all(math.isfinite(x) for x in out):
                raise ValueError
            return out
    except ValueError:
        raise BadValue(key, f"cannot read {raw!r} as {kind}") from None
    return raw


def _validate(c: RunConfig) -> None:
    for key, choices in _CHOICES.items():
        if getattr(c, key) not in choices:
            raise BadValue(key, f"must be one of {', '.join(choices)}")
    if not -1.0 <= c.a_mu <= 1.0:
        raise BadValue("a_mu", "outside [-1,1]")
    if any(not -1.0 <= a <= 1.0 for a in c.a_mu_list):
        raise BadValue("a_mu_list", "entries outside [-1,1]")
    if c.n < 4 or c.n & (c.n - 1):
        raise BadValue("n", "must be a power of two >= 4")
    positive = ("period", "dt_max", "cfl_c", "tol", "blowup_threshold", "delta")
    for key in positive:
        if not getattr(c, key) > 0:
            raise BadValue(key, "must be positive")
    for key in ("t_end", "sample_dt", "mollifier_eps", "snapshot_stride", "checkpoint_stride", "amplitude",
                "perturbation", "init_modes", "seed"):
        if getattr(c, key) < 0:
            raise BadValue(key, "must be nonnegative")
    if not 0 <= c.nu_fraction < 1:
        raise BadValue("nu_fraction", "must be in [0, 1)")
    if c.window_periods < 1:
        raise BadValue("window_periods", "must be >= 1")
    if not 0 < c.dealias_fraction <= 1:
        raise BadValue("dealias_fraction", "must be in (0, 1]")
    if c.max_iter < 1:
        raise BadValue("max_iter", "must be >= 1")
    if c.samples < 2:
        raise BadValue("samples", "must be >= 2")
    if any(e <= 0 for e in c.eps_list):
        raise BadValue("eps_list", "entries must be positive")
    if not c.t_fit_end > c.t_fit_start:
        raise BadValue("t_fit_end", "must exceed t_fit_start")


def parse_config(text: str) -> RunConfig:
    """Parse flat key=value lines; '#' starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadValue(f"line {lineno}", "expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise UnknownKey(key)
        if key in values:
            raise BadValue(key, "given twice")
        values[key] = _parse_value(key, raw)
    experiment = values.get("experiment", RunConfig.experiment)
    if experiment not in EXPERIMENTS:
        raise BadValue("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    for key in _REQUIRED[experiment]:
        if key not in values:
            raise MissingRequired(key)
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    return str(v)


def serialize(c: RunConfig) -> str:
    """Resolved configuration, one key per line in declaration order."""
    return "".join(f"{f.name}={_fmt(getattr(c, f.name))}\n" for f in fields(RunConfig))


# ---- checkpoints ------------------------------------------------------------------

def checkpoint_dict(state: RunState) -> dict:
    return {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "step": int(state.step),
        "snapshot": snapshot_dict(state.f),
        "state": {
            "energy_integral": float(state.energy_integral),
            "nu": float(state.nu),
            "sigma": float(state.sigma),
            "last_f21_nu": float(state.last_f21_nu),
            "inside": bool(state.extra.get("inside", True)),
        },
    }


def checkpoint_write(path: str, state: RunState | SpectralInterface) -> None:
    if isinstance(state, SpectralInterface):
        state = RunState(state)
    text = json.dumps(checkpoint_dict(state), sort_keys=True)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def checkpoint_read(path: str) -> RunState:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    return checkpoint_loads(text)


def checkpoint_loads(text: str) -> RunState:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptSnapshot(f"not valid JSON: {exc}") from exc
    if not isinstance(d, dict) or d.get("format") != SNAPSHOT_FORMAT:
        raise CorruptSnapshot("missing snapshot format tag")
    if d.get("version") != SNAPSHOT_VERSION:
        raise FormatVersionMismatch(f"snapshot version {d.get('version')!r}, expected {SNAPSHOT_VERSION}")
    try:
        f = from_snapshot_dict(d["snapshot"])
        st = d.get("state", {})
        return RunState(
            f,
            int(d["step"]),
            float(st.get("energy_integral", 0.0)),
            float(st.get("nu", 0.0)),
            float(st.get("sigma", 0.0)),
            float(st.get("last_f21_nu", 0.0)),
            {"inside": bool(st.get("inside", True))},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSnapshot(f"malformed snapshot: {exc}") from exc


# ---- CSV ------------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, str):
        return v
    return "%.17g" % v


def table_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def emit_csv(record: TrajectoryRecord, out_dir: str, stem: str = "trajectory") -> list[str]:
    """Write <stem>.csv (monitor columns) and <stem>_diagnostics.csv."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc
    main = os.path.join(out_dir, f"{stem}.csv")
    diag = os.path.join(out_dir, f"{stem}_diagnostics.csv")
    write_text(main, table_text(COLUMNS, record.rows))
    write_text(diag, table_text(DIAGNOSTIC_COLUMNS, record.diagnostics))
    return [main, diag]


def _read_table(path: str, columns) -> list[dict]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != tuple(columns):
        raise IoFailure(f"{path}: header does not match the schema")
    out = []
    for r in rows[1:]:
        out.append({c: (v if c == "flags" else float(v)) for c, v in zip(columns, r)})
    return out


def read_csv(out_dir: str, stem: str = "trajectory") -> TrajectoryRecord:
    rec = TrajectoryRecord()
    rec.rows = _read_table(os.path.join(out_dir, f"{stem}.csv"), COLUMNS)
    dpath = os.path.join(out_dir, f"{stem}_diagnostics.csv")
    if os.path.exists(dpath):
        rec.diagnostics = _read_table(dpath, DIAGNOSTIC_COLUMNS)
    return rec
