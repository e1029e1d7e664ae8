"""Scenario configuration files (TOML, numbers written as decimal strings)."""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .evolution import PeriodicCoefficients
from .fourier import FourierSeries
from .inequalities import ConstantsSpec
from .levy import AtomList, LevyTriple, PowerLawDensity
from .solution import Scenario

DEFAULT_TOLERANCES = {"ode_tol": "1e-10", "quad_tol": "1e-12", "tail_tol": "1e-10"}


class ConfigError(ValueError):
    """Malformed or missing configuration entry; ``key`` names the offender."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _num(value, key):
    if isinstance(value, bool):
        raise ConfigError(key, "expected a number")
    if isinstance(value, (int, float)):
        return repr(value) if isinstance(value, float) else str(value)
    if not isinstance(value, str):
        raise ConfigError(key, f"expected a decimal string, got {type(value).__name__}")
    try:
        x = float(value)
    except ValueError:
        raise ConfigError(key, f"not a number: {value!r}") from None
    if not np.isfinite(x):
        raise ConfigError(key, f"must be finite, got {value!r}")
    return value.strip()


def _num_array(value, shape, key):
    """Normalize nested lists of numbers to nested lists of strings with the given shape."""
    try:
        arr = np.array(value, dtype=object)
    except ValueError:
        raise ConfigError(key, "ragged array") from None
    if arr.shape != shape:
        raise ConfigError(key, f"expected shape {shape}, got {arr.shape}")
    flat = [_num(v, key) for v in arr.ravel()]
    return np.array(flat, dtype=object).reshape(shape).tolist() if shape else flat[0]


def _get(table, name, prefix, required=True, default=None):
    if not isinstance(table, dict):
        raise ConfigError(prefix, "expected a table")
    if name not in table:
        if required:
            raise ConfigError(f"{prefix}.{name}" if prefix else name, "missing required key")
        return default
    return table[name]


def _series_table(table, shape, key, default_const):
    if table is None:
        return {"const": default_const, "cos": [], "sin": []}
    if not isinstance(table, dict):
        raise ConfigError(key, "expected a table")
    unknown = set(table) - {"const", "cos", "sin"}
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown key")
    const = _num_array(_get(table, "const", key), shape, f"{key}.const")
    out = {"const": const}
    for part in ("cos", "sin"):
        seq = table.get(part, [])
        if not isinstance(seq, list):
            raise ConfigError(f"{key}.{part}", "expected a list of coefficient arrays")
        out[part] = [_num_array(c, shape, f"{key}.{part}[{k}]") for k, c in enumerate(seq)]
    return out


def _normalize(raw):
    """Validated, canonical (all-string numbers, defaults filled) form of a config dict."""
    sc = _get(raw, "scenario", "")
    d_str = _num(_get(sc, "dimension", "scenario"), "scenario.dimension")
    try:
        d = int(d_str)
    except ValueError:
        raise ConfigError("scenario.dimension", "must be an integer") from None
    if d < 1:
        raise ConfigError("scenario.dimension", "must be at least 1")
    period = _num(_get(sc, "period", "scenario"), "scenario.period")
    if not float(period) > 0:
        raise ConfigError("scenario.period", "must be positive")
    seed = _num(sc.get("master_seed", "0"), "scenario.master_seed")
    try:
        if int(seed) < 0:
            raise ValueError
    except ValueError:
        raise ConfigError("scenario.master_seed", "must be a nonnegative integer") from None
    out = {"scenario": {"dimension": d_str, "period": period, "master_seed": seed,
                        "output_dir": str(sc.get("output_dir", "out"))}}

    coef = _get(raw, "coefficients", "")
    zeros_v = ["0"] * d
    eye = [["1" if i == j else "0" for j in range(d)] for i in range(d)]
    out["coefficients"] = {
        "A": _series_table(_get(coef, "A", "coefficients"), (d, d), "coefficients.A", None),
        "f": _series_table(coef.get("f"), (d,), "coefficients.f", zeros_v),
        "B": _series_table(coef.get("B"), (d, d), "coefficients.B", eye),
    }

    noise = _get(raw, "noise", "")
    jumps = noise.get("jumps", {"kind": "none"})
    kind = _get(jumps, "kind", "noise.jumps")
    if kind == "none":
        jt = {"kind": "none"}
    elif kind == "atoms":
        locs = _get(jumps, "locations", "noise.jumps")
        n = len(locs) if isinstance(locs, list) else -1
        if n < 0:
            raise ConfigError("noise.jumps.locations", "expected a list of vectors")
        jt = {"kind": "atoms",
              "locations": _num_array(locs, (n, d), "noise.jumps.locations"),
              "intensities": _num_array(_get(jumps, "intensities", "noise.jumps"), (n,),
                                        "noise.jumps.intensities")}
    elif kind == "power_law":
        if d != 1:
            raise ConfigError("noise.jumps.kind", "power_law requires dimension 1")
        jt = {"kind": "power_law"}
        for name in ("scale", "alpha", "r_max"):
            jt[name] = _num(_get(jumps, name, "noise.jumps"), f"noise.jumps.{name}")
        jt["quadrature_nodes"] = _num(jumps.get("quadrature_nodes", "24"), "noise.jumps.quadrature_nodes")
    else:
        raise ConfigError("noise.jumps.kind", f"unknown jump family {kind!r}")
    out["noise"] = {
        "drift": _num_array(noise.get("drift", zeros_v), (d,), "noise.drift"),
        "covariance": _num_array(_get(noise, "covariance", "noise"), (d, d), "noise.covariance"),
        "jumps": jt,
    }

    tol = dict(DEFAULT_TOLERANCES)
    for k, v in raw.get("tolerances", {}).items():
        if k not in tol:
            raise ConfigError(f"tolerances.{k}", "unknown tolerance")
        tol[k] = _num(v, f"tolerances.{k}")
        if not float(tol[k]) > 0:
            raise ConfigError(f"tolerances.{k}", "must be positive")
    out["tolerances"] = tol

    if "constants" in raw:
        cons = {}
        for name, table in raw["constants"].items():
            if name not in ("c1", "c2"):
                raise ConfigError(f"constants.{name}", "unknown constant")
            cons[name] = {"scale": _num(_get(table, "scale", f"constants.{name}"), f"constants.{name}.scale"),
                          "rate": _num(_get(table, "rate", f"constants.{name}"), f"constants.{name}.rate")}
        out["constants"] = cons

    sim = raw.get("simulation", {})
    out["simulation"] = {
        "n_paths": _num(sim.get("n_paths", "10000"), "simulation.n_paths"),
        "dt": _num(sim.get("dt", repr(float(period) / 128)), "simulation.dt"),
    }
    if not float(out["simulation"]["dt"]) > 0:
        raise ConfigError("simulation.dt", "must be positive")
    return out


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Canonical configuration; ``data`` holds every number as a decimal string."""

    data: dict

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.data == other.data

    @property
    def dimension(self):
        return int(self.data["scenario"]["dimension"])

    @property
    def period(self):
        return float(self.data["scenario"]["period"])

    @property
    def master_seed(self):
        return int(self.data["scenario"]["master_seed"])

    @property
    def output_dir(self):
        return self.data["scenario"]["output_dir"]

    @property
    def tolerances(self):
        return {k: float(v) for k, v in self.data["tolerances"].items()}

    @property
    def n_paths(self):
        return int(float(self.data["simulation"]["n_paths"]))

    @property
    def dt(self):
        return float(self.data["simulation"]["dt"])

    def serialize(self) -> str:
        return tomli_w.dumps(_sorted(self.data))

    def sha256(self):
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    def with_seed(self, seed):
        data = copy.deepcopy(self.data)
        data["scenario"]["master_seed"] = str(int(seed))
        return ScenarioConfig(data)

    def coefficients(self) -> PeriodicCoefficients:
        T = self.period
        c = self.data["coefficients"]

        def series(tab):
            arr = lambda v: np.array(v, dtype=float)  # noqa: E731
            return FourierSeries(T, arr(tab["const"]), [arr(v) for v in tab["cos"]],
                                 [arr(v) for v in tab["sin"]])

        return PeriodicCoefficients(T, series(c["A"]), series(c["f"]), series(c["B"]))

    def noise(self) -> LevyTriple:
        n = self.data["noise"]
        j = n["jumps"]
        d = self.dimension
        if j["kind"] == "atoms":
            jumps = AtomList(np.array(j["locations"], dtype=float).reshape(-1, d),
                             np.array(j["intensities"], dtype=float))
        elif j["kind"] == "power_law":
            jumps = PowerLawDensity(float(j["scale"]), float(j["alpha"]), float(j["r_max"]),
                                    int(j["quadrature_nodes"]))
        else:
            jumps = None
        return LevyTriple(np.array(n["drift"], dtype=float), np.array(n["covariance"], dtype=float), jumps)

    def scenario(self) -> Scenario:
        tol = self.tolerances
        return Scenario(self.coefficients(), self.noise(), master_seed=self.master_seed,
                        ode_tol=tol["ode_tol"], quad_tol=tol["quad_tol"], tail_tol=tol["tail_tol"])

    def constants(self):
        cons = self.data.get("constants")
        if not cons:
            return None
        pair = lambda name: (float(cons[name]["scale"]), float(cons[name]["rate"])) if name in cons else None  # noqa: E731
        return ConstantsSpec.exponential(pair("c1"), pair("c2"))


def _sorted(obj):
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_sorted(v) for v in obj]
    return obj


def parse_config_text(text) -> ScenarioConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from None
    return ScenarioConfig(_normalize(raw))


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"no such file: {path}")
    return parse_config_text(path.read_text())
