"""Declarative experiment configuration: strict YAML schema and parsing.

Configs are nested key-value sections.  Parsing is strict: unknown keys,
wrong types or out-of-range values raise ConfigError (with the offending
field path) before any computation starts.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .algebra import from_bloch, minus_state, one_state, plus_state, zero_state
from .controls import (
    CancelDriftGuess,
    ConstantGuess,
    GuessSpec,
    KickPairGuess,
    SplitPeakGuess,
    ZeroGuess,
)
from .dynamics import LindbladSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "config_hash"]

CONTROL_AXES = ("x", "y", "z")


class ConfigError(ValueError):
    """A configuration file failed validation."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"config field '{path}': {message}")


def _require_mapping(node: Any, path: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(path, f"expected a mapping, got {type(node).__name__}")
    return node


def _reject_unknown(node: dict, allowed: set[str], path: str) -> None:
    unknown = set(node) - allowed
    if unknown:
        raise ConfigError(path, f"unknown keys {sorted(unknown)}")


def _get_number(node: dict, key: str, path: str, default=None, required=False,
                minimum=None, strict_min=False, maximum=None) -> float | None:
    if key not in node:
        if required:
            raise ConfigError(f"{path}.{key}", "required key missing")
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{path}.{key}", "must be finite")
    if minimum is not None and (value <= minimum if strict_min else value < minimum):
        op = ">" if strict_min else ">="
        raise ConfigError(f"{path}.{key}", f"must be {op} {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{path}.{key}", f"must be <= {maximum}, got {value}")
    return value


def _get_int(node: dict, key: str, path: str, default=None, required=False, minimum=None) -> int | None:
    if key not in node:
        if required:
            raise ConfigError(f"{path}.{key}", "required key missing")
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {value}")
    return value


def _get_bool(node: dict, key: str, path: str, default=None) -> bool | None:
    if key not in node:
        return default
    value = node[key]
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}", f"expected a boolean, got {value!r}")
    return value


def _get_str(node: dict, key: str, path: str, default=None, required=False, choices=None) -> str | None:
    if key not in node:
        if required:
            raise ConfigError(f"{path}.{key}", "required key missing")
        return default
    value = node[key]
    if not isinstance(value, str):
        raise ConfigError(f"{path}.{key}", f"expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(f"{path}.{key}", f"must be one of {sorted(choices)}, got {value!r}")
    return value


def _get_number_list(node: dict, key: str, path: str, minimum=None, strict_min=False) -> list[float] | None:
    if key not in node:
        return None
    value = node[key]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}.{key}", "expected a number or non-empty list of numbers")
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{path}.{key}[{i}]", f"expected a number, got {item!r}")
        item = float(item)
        if not np.isfinite(item):
            raise ConfigError(f"{path}.{key}[{i}]", "must be finite")
        if minimum is not None and (item <= minimum if strict_min else item < minimum):
            raise ConfigError(f"{path}.{key}[{i}]", f"out of range: {item}")
        out.append(item)
    return out


def _parse_initial_state(node: dict, path: str) -> np.ndarray:
    value = node.get("initial_state", "plus")
    named = {
        "plus": plus_state,
        "minus": minus_state,
        "zero": zero_state,
        "one": one_state,
    }
    if isinstance(value, str):
        if value not in named:
            raise ConfigError(f"{path}.initial_state",
                              f"must be one of {sorted(named)} or a Bloch 3-vector")
        return named[value]()
    if isinstance(value, list) and len(value) == 3:
        try:
            return from_bloch([float(v) for v in value])
        except Exception as exc:
            raise ConfigError(f"{path}.initial_state", str(exc)) from None
    raise ConfigError(f"{path}.initial_state", f"unrecognized value {value!r}")


_GUESS_KEYS = {
    "zero": set(),
    "constant": {"value"},
    "cancel_drift": set(),
    "kick_pair": {"amplitude", "width", "center1", "center2"},
    "split_peak": {"amplitude", "width", "center"},
}


def _parse_guess(node: Any, path: str, b: float) -> GuessSpec:
    if isinstance(node, str):
        node = {"kind": node}
    mapping = _require_mapping(node, path)
    kind = _get_str(mapping, "kind", path, required=True, choices=set(_GUESS_KEYS))
    _reject_unknown(mapping, {"kind"} | _GUESS_KEYS[kind], path)
    if kind == "zero":
        return ZeroGuess()
    if kind == "constant":
        value = _get_number(mapping, "value", path, required=True)
        return ConstantGuess(value=value)
    if kind == "cancel_drift":
        return CancelDriftGuess(b=b)
    if kind == "kick_pair":
        return KickPairGuess(
            amplitude=_get_number(mapping, "amplitude", path),
            width=_get_number(mapping, "width", path, minimum=0.0, strict_min=True),
            center1=_get_number(mapping, "center1", path, minimum=0.0),
            center2=_get_number(mapping, "center2", path, minimum=0.0),
        )
    return SplitPeakGuess(
        amplitude=_get_number(mapping, "amplitude", path),
        width=_get_number(mapping, "width", path, minimum=0.0, strict_min=True),
        center=_get_number(mapping, "center", path, minimum=0.0),
    )


@dataclass(frozen=True)
class KrotovSettings:
    lambdas: dict[str, float]
    optimize: dict[str, bool]
    guesses: dict[str, GuessSpec]
    shape_ramp_fraction: float
    max_iterations: int
    delta_jt_tolerance: float


@dataclass(frozen=True)
class SweepSettings:
    t_factors: list[float]
    decay_cap_multiple: float
    protocols: list[str]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (one config file)."""

    b: float
    delta_b_values: list[float]
    noise: LindbladSpec
    decay_time: float
    initial: np.ndarray
    t_final_values: list[float]
    n_steps: int | None
    protocol: str
    krotov: KrotovSettings | None
    output_directory: str
    tables: list[str] | None
    seed: int
    sweep: SweepSettings
    fields_dir: str | None
    raw: dict = field(repr=False, default_factory=dict)


def parse_config(data: Any) -> ExperimentConfig:
    """Validate a parsed YAML document into an ExperimentConfig."""
    root = _require_mapping(data, "<root>")
    _reject_unknown(
        root,
        {"problem", "grid", "protocol", "krotov", "outputs", "seed", "sweep"},
        "<root>",
    )

    problem = _require_mapping(root.get("problem", {}), "problem")
    _reject_unknown(
        problem,
        {"b", "delta_b", "noise", "decay_time", "initial_state", "fields_dir"},
        "problem",
    )
    b = _get_number(problem, "b", "problem", default=1.0)
    delta_b_values = _get_number_list(problem, "delta_b", "problem", minimum=0.0, strict_min=True)
    if delta_b_values is None:
        raise ConfigError("problem.delta_b", "required key missing")
    noise_kind = _get_str(problem, "noise", "problem", default="none",
                          choices={"relaxation", "dephasing", "none"})
    decay_time = _get_number(problem, "decay_time", "problem",
                             minimum=0.0, strict_min=True)
    if noise_kind == "none":
        noise = LindbladSpec.none()
        decay_time = float("inf") if decay_time is None else decay_time
    else:
        if decay_time is None:
            raise ConfigError("problem.decay_time", f"required for noise '{noise_kind}'")
        noise = LindbladSpec(noise_kind, 1.0 / decay_time)
    initial = _parse_initial_state(problem, "problem")
    fields_dir = _get_str(problem, "fields_dir", "problem")

    grid = _require_mapping(root.get("grid", {}), "grid")
    _reject_unknown(grid, {"t_final", "n_steps"}, "grid")
    # t_final may be omitted for sweeps, which can derive durations from
    # sweep.t_factors and the speed limit of each delta_b.
    t_final_values = _get_number_list(grid, "t_final", "grid",
                                      minimum=0.0, strict_min=True) or []
    n_steps = _get_int(grid, "n_steps", "grid", minimum=1)

    protocol = _get_str(root, "protocol", "<root>", default="ramsey",
                        choices={"ramsey", "optimize"})

    krotov = None
    if "krotov" in root:
        node = _require_mapping(root["krotov"], "krotov")
        allowed = {"shape_ramp_fraction", "max_iterations", "delta_jt_tolerance"}
        for axis in CONTROL_AXES:
            allowed |= {f"lambda_{axis}", f"optimize_{axis}", f"guess_{axis}"}
        _reject_unknown(node, allowed, "krotov")
        lambdas = {
            axis: _get_number(node, f"lambda_{axis}", "krotov", default=1.0,
                              minimum=0.0, strict_min=True)
            for axis in CONTROL_AXES
        }
        optimize = {
            axis: _get_bool(node, f"optimize_{axis}", "krotov", default=True)
            for axis in CONTROL_AXES
        }
        guesses = {
            axis: _parse_guess(node.get(f"guess_{axis}", "zero"), f"krotov.guess_{axis}", b)
            for axis in CONTROL_AXES
        }
        krotov = KrotovSettings(
            lambdas=lambdas,
            optimize=optimize,
            guesses=guesses,
            shape_ramp_fraction=_get_number(node, "shape_ramp_fraction", "krotov",
                                            default=0.05, minimum=0.0, maximum=0.5),
            max_iterations=_get_int(node, "max_iterations", "krotov", default=500, minimum=1),
            delta_jt_tolerance=_get_number(node, "delta_jt_tolerance", "krotov",
                                           default=1e-7, minimum=0.0, strict_min=True),
        )
    if protocol == "optimize" and krotov is None:
        raise ConfigError("krotov", "section required when protocol is 'optimize'")

    outputs = _require_mapping(root.get("outputs", {}), "outputs")
    _reject_unknown(outputs, {"directory", "tables"}, "outputs")
    output_directory = _get_str(outputs, "directory", "outputs", default="out")
    tables = None
    if "tables" in outputs:
        value = outputs["tables"]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError("outputs.tables", "expected a list of table names")
        known = {"trajectory", "convergence", "fields", "summary", "m_curve"}
        bad = set(value) - known
        if bad:
            raise ConfigError("outputs.tables", f"unknown tables {sorted(bad)}")
        tables = list(value)

    seed = _get_int(root, "seed", "<root>", default=0)

    sweep_node = _require_mapping(root.get("sweep", {}), "sweep")
    _reject_unknown(sweep_node, {"t_factors", "decay_cap_multiple", "protocols"}, "sweep")
    t_factors = _get_number_list(sweep_node, "t_factors", "sweep",
                                 minimum=0.0, strict_min=True) or [0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
    decay_cap = _get_number(sweep_node, "decay_cap_multiple", "sweep",
                            default=10.0, minimum=0.0, strict_min=True)
    sweep_protocols = sweep_node.get("protocols", ["ramsey", "optimize"])
    if (not isinstance(sweep_protocols, list)
            or not sweep_protocols
            or not all(p in ("ramsey", "optimize") for p in sweep_protocols)):
        raise ConfigError("sweep.protocols",
                          "expected a non-empty list drawn from ['ramsey', 'optimize']")
    sweep = SweepSettings(
        t_factors=t_factors,
        decay_cap_multiple=decay_cap,
        protocols=list(sweep_protocols),
    )

    return ExperimentConfig(
        b=b,
        delta_b_values=delta_b_values,
        noise=noise,
        decay_time=decay_time,
        initial=initial,
        t_final_values=t_final_values,
        n_steps=n_steps,
        protocol=protocol,
        krotov=krotov,
        output_directory=output_directory,
        tables=tables,
        seed=seed,
        sweep=sweep,
        fields_dir=fields_dir,
        raw=root,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML config file."""
    with open(path) as handle:
        try:
            data = yaml.safe_load(handle)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"YAML parse error: {exc}") from None
    if data is None:
        raise ConfigError("<file>", "config file is empty")
    return parse_config(data)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form of the parsed config."""
    canonical = json.dumps(config.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
