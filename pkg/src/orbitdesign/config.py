"""Run configuration: INI-style sections with JSON values.

Degrees are accepted at the boundary (``x0_deg``, ``theta1_jmp_deg``,
``waypoints_deg``) and converted to radians here.  Every violation found
while loading is collected, so one :class:`ConfigError` lists them all.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .biped import BipedParams, make_biped_system
from .designer import ContinuationSchedule, DesignProblem, StrategySettings
from .errors import ConfigError
from .integration import MIN_INTERVALS, TimeGrid
from .pronto import ProntoOptions

SCENARIOS = ("gait1", "gait2")
U_D_MODES = ("inverse-dynamics", "zero")

# key -> (required, kind)
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "model": {
        "m": (False, "positive"), "M_H": (False, "positive"), "M_T": (False, "positive"),
        "r": (False, "positive"), "l": (False, "positive"), "g": (False, "positive"),
        "theta1_jmp_deg": (False, "positive"),
    },
    "problem": {
        "x0_deg": (True, "vec6"), "T": (True, "positive"), "N": (True, "int"),
        "Q_diag": (True, "vec6"), "R_diag": (True, "vec2"), "u_d_mode": (True, "str"),
        "waypoints_deg": (False, "waypoints"),
    },
    "schedules": {
        "rho_emb0": (True, "positive"), "rho_emb_factor": (True, "positive"), "rho_emb_max_steps": (True, "int"),
        "rho_f0": (True, "positive"), "rho_f_factor": (True, "positive"), "rho_f_max_steps": (True, "int"),
        "max_newton": (False, "int"),
    },
    "tolerances": {
        "eps_emb": (True, "positive"), "delta_f_tol": (True, "positive"), "eps_f_tol": (True, "positive"),
        "grad_tol": (True, "positive"), "dbeta_step": (False, "positive"),
    },
    "solver": {
        "mode": (False, "str"), "max_iter": (False, "int"), "gain_q": (False, "positive"),
        "gain_r": (False, "positive"), "gain_qf": (False, "positive"),
    },
    "output": {
        "directory": (False, "str"), "formats": (False, "strlist"), "figures": (False, "bool"),
    },
}
OPTIONAL_SECTIONS = ("solver",)


@dataclass
class RunConfig:
    model: BipedParams
    x0: np.ndarray
    T: float
    N: int
    Q_diag: np.ndarray
    R_diag: np.ndarray
    u_d_mode: str
    waypoints: Optional[list]
    settings: StrategySettings
    output_dir: str = "runs"
    formats: List[str] = field(default_factory=lambda: ["csv"])
    figures: bool = True
    source: Optional[str] = None  # raw text of the file, kept for the run snapshot

    def design_problem(self) -> DesignProblem:
        sys = make_biped_system(self.model)
        return DesignProblem(sys, self.x0, TimeGrid(self.T, self.N), np.diag(self.Q_diag), np.diag(self.R_diag),
                             u_d_mode=self.u_d_mode, waypoints=self.waypoints)

    def summary(self) -> dict:
        return {
            "model": asdict(self.model),
            "x0_deg": np.rad2deg(self.x0).tolist(),
            "T": self.T,
            "N": self.N,
            "Q_diag": self.Q_diag.tolist(),
            "R_diag": self.R_diag.tolist(),
            "u_d_mode": self.u_d_mode,
        }


def _check(kind: str, value: Any) -> Optional[str]:
    def number(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)

    if kind == "positive":
        return None if number(value) and value > 0 else "expected a positive number"
    if kind == "int":
        return None if isinstance(value, int) and not isinstance(value, bool) and value > 0 else \
            "expected a positive integer"
    if kind in ("vec6", "vec2"):
        size = int(kind[-1])
        ok = isinstance(value, list) and len(value) == size and all(number(v) for v in value)
        return None if ok else f"expected a list of {size} numbers"
    if kind == "str":
        return None if isinstance(value, str) else "expected a string"
    if kind == "strlist":
        return None if isinstance(value, list) and all(isinstance(v, str) for v in value) else \
            "expected a list of strings"
    if kind == "bool":
        return None if isinstance(value, bool) else "expected true or false"
    if kind == "waypoints":
        ok = isinstance(value, list) and all(isinstance(w, list) and len(w) == 4 and all(number(v) for v in w)
                                             for w in value)
        return None if ok else "expected a list of [t, th1_deg, th2_deg, th3_deg] rows"
    raise AssertionError(kind)


def _line_of(text: str, section: str, key: str) -> Optional[int]:
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
        elif current == section and stripped.split("=", 1)[0].strip() == key:
            return i
    return None


def parse_config(text: str, name: str = "<config>") -> RunConfig:
    """Parse and validate configuration text."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (M_H vs m)
    try:
        parser.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: cannot parse", [str(exc).replace("\n", " ")]) from exc

    problems: List[str] = []
    values: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            line = next((i for i, ln in enumerate(text.splitlines(), 1) if ln.strip() == f"[{section}]"), "?")
            problems.append(f"{name}:{line}: unknown section [{section}]")
    for section, keys in SCHEMA.items():
        values[section] = {}
        if not parser.has_section(section):
            if section not in OPTIONAL_SECTIONS:
                problems.append(f"{name}: missing section [{section}]")
            continue
        for key, raw in parser.items(section):
            line = _line_of(text, section, key)
            where = f"{name}:{line}" if line else name
            if key not in keys:
                problems.append(f"{where}: unknown key '{key}' in [{section}]")
                continue
            try:
                value = json.loads(raw)
            except json.JSONDecodeError as exc:
                problems.append(f"{where}: [{section}] {key}: value is not valid JSON ({exc.msg})")
                continue
            err = _check(keys[key][1], value)
            if err:
                problems.append(f"{where}: [{section}] {key}: {err}")
                continue
            values[section][key] = value
        for key, (required, _) in keys.items():
            if required and not parser.has_option(section, key):
                problems.append(f"{name}: [{section}] missing required key '{key}'")

    prob = values.get("problem", {})
    if "u_d_mode" in prob and prob["u_d_mode"] not in U_D_MODES:
        problems.append(f"{name}: [problem] u_d_mode: expected one of {', '.join(U_D_MODES)}")
    if "N" in prob and prob["N"] < MIN_INTERVALS:
        problems.append(f"{name}: [problem] N: need at least {MIN_INTERVALS} intervals")
    for key in ("Q_diag",):
        if key in prob and min(prob[key]) < 0:
            problems.append(f"{name}: [problem] {key}: entries must be nonnegative")
    if "R_diag" in prob and min(prob["R_diag"]) <= 0:
        problems.append(f"{name}: [problem] R_diag: entries must be positive")
    if "waypoints_deg" in prob and "T" in prob:
        times = [w[0] for w in prob["waypoints_deg"]]
        if any(not 0 < t < prob["T"] for t in times) or times != sorted(set(times)):
            problems.append(f"{name}: [problem] waypoints_deg: times must be increasing and inside (0, T)")
    sched = values.get("schedules", {})
    for key in ("rho_emb_factor", "rho_f_factor"):
        if key in sched and sched[key] <= 1:
            problems.append(f"{name}: [schedules] {key}: must exceed 1")
    solver = values.get("solver", {})
    if "mode" in solver and solver["mode"] not in ("newton", "gauss-newton"):
        problems.append(f"{name}: [solver] mode: expected newton or gauss-newton")
    out = values.get("output", {})
    if any(f != "csv" for f in out.get("formats", [])):
        problems.append(f"{name}: [output] formats: only csv is supported")

    model = {k: v for k, v in values.get("model", {}).items() if k != "theta1_jmp_deg"}
    if "theta1_jmp_deg" in values.get("model", {}):
        model["theta1_jmp"] = float(np.deg2rad(values["model"]["theta1_jmp_deg"]))
    try:
        params = BipedParams(**model)
    except ValueError as exc:
        problems.append(f"{name}: [model] {exc}")
    if problems:
        raise ConfigError(f"{name}: {len(problems)} problem(s) in configuration", problems)

    tol = values["tolerances"]
    pronto = ProntoOptions(grad_tol=tol["grad_tol"], **{k: v for k, v in solver.items()})
    settings = StrategySettings(
        sched_emb=ContinuationSchedule(sched["rho_emb0"], sched["rho_emb_factor"], sched["rho_emb_max_steps"]),
        sched_f=ContinuationSchedule(sched["rho_f0"], sched["rho_f_factor"], sched["rho_f_max_steps"]),
        eps_emb=tol["eps_emb"], delta_f_tol=tol["delta_f_tol"], eps_f_tol=tol["eps_f_tol"],
        max_newton=sched.get("max_newton", StrategySettings.max_newton),
        dbeta_step=tol.get("dbeta_step", StrategySettings.dbeta_step),
        pronto=pronto,
    )
    waypoints = None
    if "waypoints_deg" in prob:
        waypoints = [[w[0], *np.deg2rad(w[1:])] for w in prob["waypoints_deg"]]
    return RunConfig(
        model=params,
        x0=np.deg2rad(prob["x0_deg"]),
        T=float(prob["T"]),
        N=int(prob["N"]),
        Q_diag=np.asarray(prob["Q_diag"], dtype=float),
        R_diag=np.asarray(prob["R_diag"], dtype=float),
        u_d_mode=prob["u_d_mode"],
        waypoints=waypoints,
        settings=settings,
        output_dir=out.get("directory", "runs"),
        formats=out.get("formats", ["csv"]),
        figures=out.get("figures", True),
        source=text,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}", [str(exc)]) from exc
    return parse_config(text, str(path))


def preset_text(scenario: str) -> str:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}", [f"choose one of {', '.join(SCENARIOS)}"])
    return resources.files("orbitdesign.presets").joinpath(f"{scenario}.cfg").read_text()


def load_preset(scenario: str) -> RunConfig:
    return parse_config(preset_text(scenario), f"{scenario}.cfg")
