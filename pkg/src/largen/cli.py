"""Command-line driver: ``largen <command> [--config FILE] [--out DIR] ...``.

Every command reads an optional JSON config whose top level may hold one
block per command plus ``out`` and ``tolerance``.  All parameters are checked
before any computation starts, and files are only written once the run has
finished, so a failed run leaves no partial output.

Exit status: 0 on success, 2 for invalid configuration, 3 for numerical
failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .classicality import (
    NECESSARY_ONLY_NOTE,
    ThermalSpec,
    correlation_coefficient,
    mode_variances,
    squeeze_parameters,
    uncertainty_function,
)
from .effpot import scan_Nc, scan_y_min, solve_gap
from .numerics import NumericalError, ToleranceSpec
from .on_model import LargeNParams, RadialGrid, evolve_quantum_roll, quantum_roll_initial_state
from .qvlasov import (
    BackgroundField,
    BackreactionSystem,
    ModeEnsemble,
    MomentumGrid,
    backreaction_step,
    bogoliubov_coefficients,
    integrate_modes,
    mode_entropy,
    system_energy,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

COMMANDS = ("quantum-roll", "effpot-scan", "schwinger", "classicality")

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "quantum-roll": {
        "N": 2.0,
        "g": 8.0,
        "y0": 1.0,
        "width": 0.5,
        "y_max": 5.0,
        "points": 1001,
        "dt": 1e-3,
        "t_end": 10.0,
        "sample_every": 10,
    },
    "effpot-scan": {
        "g": 1.0,
        "y0": 1.0,
        "N_lo": 2.0,
        "N_hi": 200.0,
        "N_count": 100,
        "y_hi": 5.0,
        "chi_min": 1e-12,
        "chi_max": 100.0,
        "profile": None,
    },
    "schwinger": {
        "e": 1.0,
        "m": 1.0,
        "E0": 0.5,
        "grid": None,
        "t_end": 10.0,
        "dt_out": 0.1,
        "cutoff": 20.0,
        "n_init": 0.0,
        "vacuum_subtraction": True,
        "mode_output": False,
    },
    "classicality": {
        "preset": "ground_state",
        "omega": 1.0,
        "theta0": None,
        "kappa": 1.0,
        "kz": 0.0,
        "kperp": 0.0,
        "E0": 0.5,
        "e": 1.0,
        "m": 1.0,
        "t_end": 10.0,
        "dt_out": 0.1,
    },
}
GRID_DEFAULTS = {"kz_min": -8.0, "kz_max": 8.0, "kz_count": 64, "kperp_max": 3.0, "kperp_count": 16}
PROFILE_DEFAULTS = {"N": 20.0, "y_lo": 0.0, "y_hi": 3.0, "points": 61}
TOLERANCE_KEYS = ("abs", "rel", "max_steps")
PRESETS = ("ground_state", "thermal", "inverted_oscillator", "schwinger_mode")


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return format(float(x), ".17g")


def _csv(header: str, rows) -> str:
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _merge(section: str, given: Optional[dict], defaults: dict) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"{section}: expected an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(unknown)}")
    out = dict(defaults)
    out.update(given)
    return out


def _number(cfg: dict, section: str, key: str, *, positive=False, nonneg=False, allow_none=False) -> Optional[float]:
    v = cfg[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{section}.{key}: expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{section}.{key} must be > 0, got {v!r}")
    if nonneg and not v >= 0:
        raise ConfigError(f"{section}.{key} must be >= 0, got {v!r}")
    return float(v)


def _integer(cfg: dict, section: str, key: str, minimum: int) -> int:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{section}.{key}: expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(f"{section}.{key} must be >= {minimum}, got {v!r}")
    return v


def _flag(cfg: dict, section: str, key: str) -> bool:
    if not isinstance(cfg[key], bool):
        raise ConfigError(f"{section}.{key}: expected true or false")
    return cfg[key]


def _step_count(span: float, step: float, section: str, key: str) -> int:
    n = int(round(span / step))
    if n < 1 or abs(n * step - span) > 1e-9 * max(1.0, span):
        raise ConfigError(f"{section}: t_end must be a positive multiple of {key}")
    return n


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(cfg) - set(COMMANDS) - {"out", "tolerance"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    return cfg


def resolve_tolerance(cfg: dict, args) -> ToleranceSpec:
    tcfg = _merge("tolerance", cfg.get("tolerance"), {"abs": 1e-10, "rel": 1e-10, "max_steps": 10_000_000})
    if args.tol_abs is not None:
        tcfg["abs"] = args.tol_abs
    if args.tol_rel is not None:
        tcfg["rel"] = args.tol_rel
    a = _number(tcfg, "tolerance", "abs", positive=True)
    r = _number(tcfg, "tolerance", "rel", positive=True)
    return ToleranceSpec(a, r, _integer(tcfg, "tolerance", "max_steps", 1))


def resolve_threads(args) -> int:
    raw = args.threads if args.threads is not None else os.environ.get("LARGEN_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"threads: expected an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"threads must be >= 1, got {n}")
    return n


# ---------------------------------------------------------------- commands
# Each command is split into a validating ``prepare`` and a ``run`` that
# returns {filename: text}; nothing touches the disk until ``run`` succeeds.


def prepare_quantum_roll(block: dict) -> dict:
    s = "quantum-roll"
    c = _merge(s, block, DEFAULTS[s])
    N = _number(c, s, "N")
    if N < 1:
        raise ConfigError(f"{s}.N must be >= 1, got {N!r}")
    params = LargeNParams(N, _number(c, s, "g", nonneg=True), _number(c, s, "y0", nonneg=True))
    grid = RadialGrid(_number(c, s, "y_max", positive=True), _integer(c, s, "points", 16))
    dt = _number(c, s, "dt", positive=True)
    return {
        "params": params,
        "grid": grid,
        "width": _number(c, s, "width", positive=True),
        "dt": dt,
        "steps": _step_count(_number(c, s, "t_end", positive=True), dt, s, "dt"),
        "sample_every": _integer(c, s, "sample_every", 1),
    }


def run_quantum_roll(job: dict, tol: ToleranceSpec, threads: int, log) -> Dict[str, str]:
    state = quantum_roll_initial_state(job["params"], job["grid"], job["width"])
    series = evolve_quantum_roll(state, job["params"], job["dt"], job["steps"], sample_every=job["sample_every"])
    for note in series.notes:
        log(f"note: {note}")
    return {"quantum_roll.csv": _csv("t,y2,norm,energy", series.rows())}


def prepare_effpot_scan(block: dict) -> dict:
    s = "effpot-scan"
    c = _merge(s, block, DEFAULTS[s])
    g = _number(c, s, "g", nonneg=True)
    y0 = _number(c, s, "y0", nonneg=True)
    N_lo, N_hi = _number(c, s, "N_lo"), _number(c, s, "N_hi")
    if N_lo < 1:
        raise ConfigError(f"{s}.N_lo must be >= 1, got {N_lo!r}")
    if not N_hi > N_lo:
        raise ConfigError(f"{s}.N_hi must exceed N_lo")
    chi_min = _number(c, s, "chi_min", positive=True)
    chi_max = _number(c, s, "chi_max", positive=True)
    if not chi_max > chi_min:
        raise ConfigError(f"{s}: chi scan grid empty (chi_min={chi_min!r} >= chi_max={chi_max!r})")
    job = {
        "template": LargeNParams(N_lo, g, y0),
        "Ns": np.linspace(N_lo, N_hi, _integer(c, s, "N_count", 2)),
        "y_hi": _number(c, s, "y_hi", positive=True),
        "chi_range": (chi_min, chi_max),
        "profile": None,
    }
    if c["profile"] is not None:
        p = _merge(f"{s}.profile", c["profile"], PROFILE_DEFAULTS)
        Np = _number(p, f"{s}.profile", "N")
        if Np < 1:
            raise ConfigError(f"{s}.profile.N must be >= 1, got {Np!r}")
        y_lo = _number(p, f"{s}.profile", "y_lo", nonneg=True)
        y_hi = _number(p, f"{s}.profile", "y_hi", positive=True)
        if not y_hi > y_lo:
            raise ConfigError(f"{s}.profile.y_hi must exceed y_lo")
        job["profile"] = (LargeNParams(Np, g, y0), np.linspace(y_lo, y_hi, _integer(p, f"{s}.profile", "points", 2)))
    return job


def run_effpot_scan(job: dict, tol: ToleranceSpec, threads: int, log) -> Dict[str, str]:
    Ns = job["Ns"]
    y_min = scan_y_min(job["template"], Ns, tol, job["y_hi"], threads, job["chi_range"])
    if y_min[0] == 0:
        summary = "N_c=<=N_lo"
    elif y_min[-1] > 0:
        summary = "N_c=>N_hi"
    else:
        i = int(np.argmax(y_min == 0))
        nc = scan_Nc(job["template"], float(Ns[i - 1]), float(Ns[i]), tol, job["chi_range"])
        summary = f"N_c={_fmt(nc)}"
    log(summary, stream=sys.stdout)
    files = {"y_min.csv": _csv("N,y_min", zip(Ns, y_min)), "effpot_summary.txt": summary + "\n"}
    if job["profile"] is not None:
        params, ys = job["profile"]
        rows = []
        for y in ys:
            sol = solve_gap(float(y), params, tol, job["chi_range"])
            rows.append((y, sol.chi, sol.v_eff_per_N, sol.defined))
        files["effpot_profile.csv"] = _csv("y,chi,V_per_N,defined", rows)
    return files


def prepare_schwinger(block: dict) -> dict:
    s = "schwinger"
    c = _merge(s, block, DEFAULTS[s])
    gcfg = _merge(f"{s}.grid", c["grid"], GRID_DEFAULTS)
    gs = f"{s}.grid"
    grid = MomentumGrid(
        _number(gcfg, gs, "kz_min"),
        _number(gcfg, gs, "kz_max"),
        _integer(gcfg, gs, "kz_count", 0),
        _number(gcfg, gs, "kperp_max", nonneg=True),
        _integer(gcfg, gs, "kperp_count", 0),
        _number(c, s, "cutoff", positive=True),
    )
    field = BackgroundField.with_field(
        _number(c, s, "E0"), e=_number(c, s, "e", positive=True), m=_number(c, s, "m", positive=True)
    )
    dt_out = _number(c, s, "dt_out", positive=True)
    return {
        "field": field,
        "grid": grid,
        "dt_out": dt_out,
        "steps": _step_count(_number(c, s, "t_end", positive=True), dt_out, s, "dt_out"),
        "n_init": _number(c, s, "n_init", nonneg=True),
        "vacuum_subtraction": _flag(c, s, "vacuum_subtraction"),
        "mode_output": _flag(c, s, "mode_output"),
    }


def run_schwinger(job: dict, tol: ToleranceSpec, threads: int, log) -> Dict[str, str]:
    modes = ModeEnsemble.vacuum(job["grid"], job["field"], job["n_init"])
    system = BackreactionSystem(0.0, job["field"], modes, job["vacuum_subtraction"])
    rows: List[tuple] = []
    mode_rows: List[tuple] = []

    def record(sysm: BackreactionSystem):
        fld, md = sysm.field, sysm.modes
        n_t = md.n_tilde(fld)
        entropy = float(np.sum(mode_entropy(n_t))) if len(md) else 0.0
        rows.append((sysm.t, fld.A, fld.E, sysm.current(), entropy, system_energy(sysm)))
        if job["mode_output"]:
            corr = md.abs_corr(fld)
            mode_rows.extend((sysm.t, kz, kp, n, c) for kz, kp, n, c in zip(md.k_z, md.k_perp, n_t, corr))

    record(system)
    for i in range(1, job["steps"] + 1):
        system = backreaction_step(system, job["dt_out"], tol)
        # pin the clock to the output grid so times do not accumulate rounding
        system.t = i * job["dt_out"]
        record(system)
    e0, e1 = rows[0][5], rows[-1][5]
    summary = {
        "S_initial": rows[0][4],
        "S_final": rows[-1][4],
        "energy_drift": (e1 - e0) / abs(e0) if e0 != 0 else e1 - e0,
        "particle_yield": float(np.sum(system.modes.weight * system.modes.n_tilde(system.field))),
        "mode_count": len(system.modes),
    }
    files = {
        "schwinger.csv": _csv("t,A,E,j,S_total,energy_total", rows),
        "schwinger_summary.json": _json(summary),
    }
    if job["mode_output"]:
        files["schwinger_modes.csv"] = _csv("t,kz,kperp,n_tilde,abs_corr", mode_rows)
    return files


def prepare_classicality(block: dict) -> dict:
    s = "classicality"
    c = _merge(s, block, DEFAULTS[s])
    preset = c["preset"]
    if preset not in PRESETS:
        raise ConfigError(f"{s}.preset must be one of {', '.join(PRESETS)}, got {preset!r}")
    theta0 = _number(c, s, "theta0", positive=True, allow_none=True)
    if preset == "thermal" and theta0 is None:
        theta0 = math.log(3.0)
    dt_out = _number(c, s, "dt_out", positive=True)
    steps = _step_count(_number(c, s, "t_end", positive=True), dt_out, s, "dt_out")
    return {
        "preset": preset,
        "thermal": ThermalSpec(math.inf if theta0 is None else theta0),
        "omega": _number(c, s, "omega", positive=True),
        "kappa": _number(c, s, "kappa", positive=True),
        "kz": _number(c, s, "kz"),
        "kperp": _number(c, s, "kperp", nonneg=True),
        "field": BackgroundField.with_field(
            _number(c, s, "E0"), e=_number(c, s, "e", positive=True), m=_number(c, s, "m", positive=True)
        ),
        "times": dt_out * np.arange(steps + 1),
    }


def _classicality_mode(job: dict):
    """Initial amplitude and ``omega^2(t)`` of the chosen preset."""
    preset = job["preset"]
    if preset in ("ground_state", "thermal"):
        w = job["omega"]
        return w, lambda t: np.array([w * w])
    if preset == "inverted_oscillator":
        k = job["kappa"]
        return k, lambda t: np.array([-k * k])
    fld, kz, kp = job["field"], job["kz"], job["kperp"]
    omega_sq = lambda t: np.array([(kz + fld.e * fld.E * t) ** 2 + kp * kp + fld.m**2])
    return math.sqrt(omega_sq(0.0)[0]), omega_sq


def run_classicality(job: dict, tol: ToleranceSpec, threads: int, log) -> Dict[str, str]:
    w0, omega_sq = _classicality_mode(job)
    times = job["times"]
    f0 = 1 / math.sqrt(2 * w0)
    traj = integrate_modes([f0], [-1j * w0 * f0], [0.0], omega_sq, 0.0, float(times[-1]), tol, t_eval=times[1:])
    states = np.vstack([[f0, -1j * w0 * f0, 0.0], traj.states])
    inverted = job["preset"] == "inverted_oscillator"
    kz = 0.0 if job["preset"] != "schwinger_mode" else job["kz"]
    kp = 0.0 if job["preset"] != "schwinger_mode" else job["kperp"]
    rows = []
    for t, (f, fd, th) in zip(times, states):
        cov = mode_variances(_Amplitude(f, fd), job["thermal"])
        if inverted:
            r = math.nan
        else:
            alpha, beta = bogoliubov_coefficients(f, fd, math.sqrt(omega_sq(t)[0]), th.real)
            r = squeeze_parameters(alpha, beta, th.real)[0]
        rows.append((t, kz, kp, uncertainty_function(cov), correlation_coefficient(cov), r))
    log(f"note: {NECESSARY_ONLY_NOTE}")
    summary = {
        "preset": job["preset"],
        "note": NECESSARY_ONLY_NOTE,
        "U_max": max(row[3] for row in rows),
        "rho_xp_final": rows[-1][4],
        "squeeze_r_final": None if inverted else rows[-1][5],
    }
    return {
        "classicality.csv": _csv("t,kz,kperp,U,rho_xp,squeeze_r", rows),
        "classicality_summary.json": _json(summary),
    }


class _Amplitude:
    __slots__ = ("f", "f_dot")

    def __init__(self, f, f_dot):
        self.f, self.f_dot = f, f_dot


PREPARE = {
    "quantum-roll": prepare_quantum_roll,
    "effpot-scan": prepare_effpot_scan,
    "schwinger": prepare_schwinger,
    "classicality": prepare_classicality,
}
RUN = {
    "quantum-roll": run_quantum_roll,
    "effpot-scan": run_effpot_scan,
    "schwinger": run_schwinger,
    "classicality": run_classicality,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="largen", description="Large-N and pair-creation numerics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (default: config 'out' or '.')")
        p.add_argument("--threads", type=int, help="worker processes for scans (env LARGEN_THREADS)")
        p.add_argument("--tol-abs", type=float, dest="tol_abs")
        p.add_argument("--tol-rel", type=float, dest="tol_rel")
    return parser


def _log(msg: str, stream=None) -> None:
    print(msg, file=stream or sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        tol = resolve_tolerance(cfg, args)
        threads = resolve_threads(args)
        out = args.out if args.out is not None else cfg.get("out", ".")
        if not isinstance(out, str):
            raise ConfigError("out: expected a path string")
        job = PREPARE[args.command](cfg.get(args.command))
    except ValueError as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG
    try:
        files = RUN[args.command](job, tol, threads, _log)
    except NumericalError as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except ValueError as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG
    target = Path(out)
    target.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (target / name).write_text(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
