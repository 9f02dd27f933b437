"""Model zoo: builders for the six families and a JSON-spec entry point."""

from __future__ import annotations

import math

from ..errors import ConfigError, InvalidParams
from .base import KappaReport, Model, box_graph_edges, cycle_edges
from .irw import (
    TildeH,
    build_irw,
    explicit_symmetric_kappa,
    irw_kappas,
    oddly_convex_kappa,
    poisson_v_minus,
    symmetric_interaction,
    symmetric_v_plus,
    tilde_h,
    zero_potential,
)
from .particles import bernoulli_laplace, hardcore, zero_range
from .spin import build_glauber, curie_weiss, ising, ising_box

FAMILIES = ("irw", "curie_weiss", "ising", "hardcore", "bernoulli_laplace", "zero_range")

H_PRESETS = {
    "zero": lambda m: 0.0,
    "linear": lambda m: float(m),
    "quadratic": lambda m: float(m * m),
}


def _h_from(value):
    if isinstance(value, str):
        if value not in H_PRESETS:
            raise ConfigError(f"model.params.h: unknown preset {value!r}")
        return H_PRESETS[value]
    values = [float(v) for v in value]

    def h(m):
        if m < len(values):
            return values[m]
        # extend linearly past the table
        return values[-1] + (m - len(values) + 1) * (values[-1] - values[-2])
    return h


def _rate_fn(spec):
    if isinstance(spec, str):
        presets = {"linear": lambda k: float(k), "constant": lambda k: float(k > 0)}
        if spec not in presets:
            raise ConfigError(f"model.params.rates: unknown preset {spec!r}")
        return presets[spec]
    if isinstance(spec, dict):
        slope = float(spec.get("slope", 1.0))
        bump = float(spec.get("even_bump", 0.0))
        return lambda k: 0.0 if k == 0 else slope * k + (bump if k % 2 == 0 else 0.0)
    values = [float(v) for v in spec]
    return lambda k: values[k] if k < len(values) else values[-1] + (k - len(values) + 1) * (values[-1] - values[-2])


def _graph(params):
    if "edges" in params:
        return int(params["n_vertices"]), [tuple(e) for e in params["edges"]]
    if "cycle" in params:
        n = int(params["cycle"])
        return n, cycle_edges(n)
    if "box" in params:
        shape = [int(v) for v in params["box"]]
        n = 1
        for v in shape:
            n *= v
        return n, box_graph_edges(shape)
    raise ConfigError("model.params: graph needs 'edges', 'cycle' or 'box'")


def build_model(spec: dict) -> Model:
    """Build a model from ``{family, params, truncation}``."""
    family = spec.get("family")
    params = dict(spec.get("params", {}))
    try:
        if family == "irw":
            d = int(params.get("d", 1))
            n = int(spec.get("truncation") or params.get("n", 0))
            if n < 1:
                raise ConfigError("model.truncation: irw needs a box size >= 1")
            lam = float(params.get("lam", 1.0))
            beta = float(params.get("beta", 0.0))
            h = _h_from(params.get("h", "zero"))
            return build_irw(symmetric_v_plus(h, beta), poisson_v_minus(lam), d, n,
                             {"lam": lam, "beta": beta, "h": params.get("h", "zero")})
        if family == "curie_weiss":
            return curie_weiss(int(params["N"]), float(params["beta"]))
        if family == "ising":
            n, edges = _graph(params)
            dim = int(params.get("dim", len(params.get("box", [0]))))
            return ising(n, edges, float(params["beta"]), dim)
        if family == "hardcore":
            n, edges = _graph(params)
            return hardcore(n, edges, float(params["rho"]))
        if family == "bernoulli_laplace":
            return bernoulli_laplace(int(params["L"]), int(params["N"]))
        if family == "zero_range":
            return zero_range(int(params["L"]), int(params["N"]), _rate_fn(params.get("rates", "linear")))
    except KeyError as exc:
        raise ConfigError(f"model.params.{exc.args[0]}: missing") from exc
    except (TypeError, ValueError, InvalidParams) as exc:
        raise ConfigError(f"model.params: {exc}") from exc
    raise ConfigError(f"model.family: unknown family {family!r}")


__all__ = [
    "FAMILIES", "KappaReport", "Model", "TildeH", "bernoulli_laplace", "build_glauber", "build_irw",
    "build_model", "curie_weiss", "explicit_symmetric_kappa", "hardcore", "irw_kappas", "ising",
    "ising_box", "oddly_convex_kappa", "poisson_v_minus", "symmetric_interaction", "symmetric_v_plus",
    "tilde_h", "zero_potential", "zero_range",
]
