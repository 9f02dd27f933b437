"""Experiment configuration: parsing and validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError

SUITES = ("reversibility", "admissibility", "csi", "decay", "convexity", "wasserstein",
          "constants", "lemmaA1", "cancellation")
GATING = ("reversibility", "admissibility")
# suites that read the coupling table; only these wait on admissibility
COUPLING_SUITES = ("convexity", "constants", "cancellation")

DEFAULT_T_GRID = (0.05, 0.1, 0.25, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    suites: tuple
    phi_list: tuple = (1.0, 1.5, 2.0)
    samples: int = 100
    seed: int = 0
    t_grid: tuple = DEFAULT_T_GRID
    output_dir: str = "entrolab-out"
    suite_samples: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def samples_for(self, suite: str) -> int:
        return int(self.suite_samples.get(suite, self.samples))

    def echo(self) -> dict:
        """Plain-JSON view used in reports (output_dir left out so reruns elsewhere match)."""
        return {"model": self.model, "suites": list(self.suites), "phi_list": list(self.phi_list),
                "samples": self.samples, "seed": self.seed, "t_grid": list(self.t_grid),
                "suite_samples": dict(sorted(self.suite_samples.items())),
                "options": self.options}


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_real(x) -> bool:
    return (isinstance(x, (int, float)) and not isinstance(x, bool)) and math.isfinite(x)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a decoded JSON object; every error names the offending field."""
    _require(isinstance(raw, dict), "<root>", "expected an object")
    known = {"model", "suites", "phi_list", "samples", "seed", "t_grid", "output_dir",
             "suite_samples", "options"}
    extra = sorted(set(raw) - known)
    _require(not extra, extra[0] if extra else "", "unknown field")

    model = raw.get("model")
    _require(isinstance(model, dict), "model", "required object")
    _require(isinstance(model.get("family"), str), "model.family", "required string")
    _require(isinstance(model.get("params", {}), dict), "model.params", "expected an object")

    suites = raw.get("suites", list(SUITES))
    if suites == "all":
        suites = list(SUITES)
    _require(isinstance(suites, list) and len(suites) > 0, "suites", "must be a nonempty list")
    for i, s in enumerate(suites):
        _require(s in SUITES, f"suites[{i}]", f"unknown suite {s!r}")
    _require(len(set(suites)) == len(suites), "suites", "duplicate entries")

    phi_list = raw.get("phi_list", [1.0, 1.5, 2.0])
    _require(isinstance(phi_list, list) and phi_list, "phi_list", "must be a nonempty list")
    alphas = []
    for i, a in enumerate(phi_list):
        if a == "log":
            a = 1.0
        _require(_is_real(a) and 1.0 <= a <= 2.0, f"phi_list[{i}]", "alpha must lie in [1, 2]")
        alphas.append(float(a))

    samples = raw.get("samples", 100)
    _require(_is_int(samples) and samples >= 1, "samples", "must be an integer >= 1")
    seed = raw.get("seed", 0)
    _require(_is_int(seed) and seed >= 0, "seed", "must be a nonnegative integer")

    t_grid = raw.get("t_grid", list(DEFAULT_T_GRID))
    _require(isinstance(t_grid, list) and t_grid, "t_grid", "must be a nonempty list")
    for i, t in enumerate(t_grid):
        _require(_is_real(t) and t > 0, f"t_grid[{i}]", "times must be positive")
    _require(all(a < b for a, b in zip(t_grid, t_grid[1:])), "t_grid", "must be strictly increasing")

    out = raw.get("output_dir", "entrolab-out")
    _require(isinstance(out, str) and out, "output_dir", "must be a nonempty string")

    per = raw.get("suite_samples", {})
    _require(isinstance(per, dict), "suite_samples", "expected an object")
    for k, v in per.items():
        _require(k in SUITES, f"suite_samples.{k}", "unknown suite")
        _require(_is_int(v) and v >= 1, f"suite_samples.{k}", "must be an integer >= 1")

    options = raw.get("options", {})
    _require(isinstance(options, dict), "options", "expected an object")

    return ExperimentConfig(model=model, suites=tuple(suites), phi_list=tuple(alphas),
                            samples=samples, seed=seed, t_grid=tuple(float(t) for t in t_grid),
                            output_dir=out, suite_samples=dict(per), options=options)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<file>: invalid JSON at line {exc.lineno}") from exc
    return parse_config(raw)
