"""Scenario files: flat typed key-value sections, strictly validated.

Unknown sections or keys are errors; every value is parsed by the declared
type of its key.  The config hash is a SHA-256 over the canonicalized
section.key=value lines, so it changes iff any config field changes.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .containers import fmt17
from .grids import Dispersion, Grid, PotentialSpec, gaussian_vhat, harmonic_trap

__all__ = ["Scenario", "ScenarioError", "parse_scenario", "load_scenario"]


class ScenarioError(ValueError):
    pass


def _parse_bool(token: str) -> bool:
    low = token.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {token!r}")


def _parse_epsilon(token: str):
    if token.strip().lower() == "auto":
        return "auto"
    value = float(token)
    if value <= 0:
        raise ValueError("epsilon must be positive")
    return value


# section -> key -> (parser, required, default)
_SCHEMA = {
    "scenario": {
        "name": (str, True, None),
    },
    "grid": {
        "dim": (int, True, None),
        "points_per_dim": (int, True, None),
        "box_length": (float, True, None),
    },
    "model": {
        "n_particles": (int, True, None),
        "epsilon": (_parse_epsilon, False, "auto"),
        "dispersion": (str, False, "relativistic"),
        "m0": (float, False, 1.0),
    },
    "potential": {
        "kernel": (str, False, "none"),
        "coupling": (float, False, 1.0),
        "width": (float, False, 1.0),
        "table": (str, False, ""),
        "trap": (str, False, "none"),
        "trap_strength": (float, False, 1.0),
    },
    "preparation": {
        "kind": (str, False, "fermi_sea"),
        "max_iterations": (int, False, 200),
        "mixing": (float, False, 0.5),
        "convergence_tol": (float, False, 1e-10),
        "aufbau": (_parse_bool, False, True),
        "boost_amplitude": (float, False, 0.5),
        "boost_mode": (int, False, 1),
    },
    "evolution": {
        "scheme": (str, False, "exponential_midpoint"),
        "dt": (float, True, None),
        "t_final": (float, True, None),
        "exchange_on": (_parse_bool, False, True),
        "reortho_every": (int, False, 10),
        "keep_trap": (_parse_bool, False, False),
    },
    "diagnostics": {
        "conservation": (int, False, 0),
        "commutators": (int, False, 0),
        "exp_bound": (int, False, 0),
        "exchange_bound": (int, False, 0),
        "kinetic_ratio": (int, False, 0),
        "checkpoint": (int, False, 0),
    },
}

_CHOICES = {
    ("model", "dispersion"): ("relativistic", "nonrelativistic", "massless"),
    ("potential", "kernel"): ("gaussian", "table", "none"),
    ("potential", "trap"): ("harmonic", "none"),
    ("preparation", "kind"): ("scf", "fermi_sea", "boosted_fermi_sea"),
    ("evolution", "scheme"): ("exponential_midpoint", "rk4_frozen_field"),
}


@dataclass
class Scenario:
    """Validated scenario: plain typed fields mirroring the schema."""

    values: dict = field(default_factory=dict)
    source: str = ""

    def __getitem__(self, key: tuple) -> object:
        return self.values[key]

    @property
    def name(self) -> str:
        return self.values[("scenario", "name")]

    def epsilon(self) -> float:
        rule = self.values[("model", "epsilon")]
        if rule == "auto":
            n = self.values[("model", "n_particles")]
            dim = self.values[("grid", "dim")]
            return float(n) ** (-1.0 / dim)
        return rule

    def with_value(self, section: str, key: str, token: str) -> "Scenario":
        """A copy with one field replaced by a re-parsed token (sweep support)."""
        if (section, key) not in [(s, k) for s in _SCHEMA for k in _SCHEMA[s]]:
            raise ScenarioError(f"unknown field [{section}] {key}")
        parser = _SCHEMA[section][key][0]
        try:
            value = parser(token)
        except ValueError as exc:
            raise ScenarioError(f"bad value for [{section}] {key}: {exc}") from exc
        new_values = dict(self.values)
        new_values[(section, key)] = value
        out = Scenario(values=new_values, source=self.source)
        out.validate()
        return out

    def canonical_lines(self) -> list[str]:
        lines = []
        for (section, key), value in sorted(self.values.items()):
            if isinstance(value, bool):
                token = "true" if value else "false"
            elif isinstance(value, float):
                token = fmt17(value)
            else:
                token = str(value)
            lines.append(f"{section}.{key}={token}")
        return lines

    def config_hash(self) -> str:
        payload = "\n".join(self.canonical_lines()).encode()
        return hashlib.sha256(payload).hexdigest()

    def validate(self) -> None:
        v = self.values
        for (section, key), choices in _CHOICES.items():
            if v[(section, key)] not in choices:
                raise ScenarioError(
                    f"[{section}] {key} must be one of {choices}, got {v[(section, key)]!r}"
                )
        if v[("potential", "kernel")] == "table":
            if v[("grid", "dim")] != 1:
                raise ScenarioError("[potential] kernel=table requires dim=1")
            if not v[("potential", "table")]:
                raise ScenarioError("missing required field [potential] table")
        if v[("model", "dispersion")] != "massless" and v[("model", "m0")] <= 0:
            raise ScenarioError("[model] m0 must be positive for massive dispersions")
        if v[("evolution", "dt")] <= 0 or v[("evolution", "t_final")] < 0:
            raise ScenarioError("[evolution] dt must be positive and t_final >= 0")

    # --- physics object construction -------------------------------------

    def build_grid(self) -> Grid:
        return Grid(
            self.values[("grid", "dim")],
            self.values[("grid", "points_per_dim")],
            self.values[("grid", "box_length")],
            self.epsilon(),
        )

    def build_dispersion(self) -> Dispersion:
        kind = self.values[("model", "dispersion")]
        if kind == "massless":
            return Dispersion.massless()
        return Dispersion(kind, self.values[("model", "m0")])

    def build_potential(self, grid: Grid) -> PotentialSpec:
        kernel = self.values[("potential", "kernel")]
        if kernel == "gaussian":
            vhat = gaussian_vhat(grid, self.values[("potential", "width")])
        elif kernel == "table":
            vhat = self._table_vhat(grid)
        else:
            vhat = np.zeros(grid.shape)
        vext = None
        if self.values[("potential", "trap")] == "harmonic":
            vext = harmonic_trap(grid, self.values[("potential", "trap_strength")])
        return PotentialSpec(grid, vhat, vext=vext,
                             coupling=self.values[("potential", "coupling")])

    def _table_vhat(self, grid: Grid) -> np.ndarray:
        path = Path(self.values[("potential", "table")])
        if not path.is_absolute() and self.source:
            path = Path(self.source).parent / path
        vhat = np.zeros(grid.shape)
        freq_index = {int(f): i for i, f in enumerate(grid.freq_axis)}
        for line_no, line in enumerate(path.read_text().strip().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                freq_tok, val_tok = line.split(",")
                freq, val = int(freq_tok), float(val_tok)
            except ValueError as exc:
                raise ScenarioError(f"{path}:{line_no}: bad table row {line!r}") from exc
            if freq not in freq_index:
                raise ScenarioError(f"{path}:{line_no}: frequency {freq} not on the dual grid")
            vhat[freq_index[freq]] = val
        return vhat


def parse_scenario(text: str, source: str = "") -> Scenario:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source or "<scenario>")
    except configparser.Error as exc:
        raise ScenarioError(f"scenario parse error: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ScenarioError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ScenarioError(f"unknown key [{section}] {key}")
            type_parser = _SCHEMA[section][key][0]
            try:
                values[(section, key)] = type_parser(raw)
            except ValueError as exc:
                raise ScenarioError(f"bad value for [{section}] {key}: {exc}") from exc
    for section, keys in _SCHEMA.items():
        for key, (_, required, default) in keys.items():
            if (section, key) in values:
                continue
            if required:
                raise ScenarioError(f"missing required field [{section}] {key}")
            values[(section, key)] = default
    scenario = Scenario(values=values, source=source)
    scenario.validate()
    return scenario


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), source=str(path))
