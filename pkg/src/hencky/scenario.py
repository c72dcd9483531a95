"""Plain-text scenario files.

Sections and keys (all optional except ``[mesh]``)::

    [mesh]
    shape = rectangle        ; rectangle | lshape
    widths = 1, 1
    m = 8
    gamma0 = all             ; or side names such as bottom,top
    [material]
    mu = 1
    kappa = 1
    [yield]
    set = ball               ; ball | segment | square
    size = 1
    [datum]
    family = shear           ; zero | affine | shear | bump
    gamma = 2
    [solver]
    tol = 1e-8
    mode = relaxed
    [pipeline]
    schedule = 32, 64, 128

Malformed files raise :class:`ScenarioError` carrying the offending line.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

import numpy as np

from .functionals import Datum, Scenario
from .mesh import MeshError, gen_lshape, gen_rectangle
from .pipeline import PipelineConfig
from .solver import SolveConfig
from .tensor_core import Ball, ElasticModuli, segment_polytope, square_polytope

KNOWN = {
    "mesh": {"shape", "widths", "m", "gamma0"},
    "material": {"mu", "kappa"},
    "yield": {"set", "size"},
    "datum": {"family", "a", "b", "gamma", "amplitude", "center", "radius"},
    "solver": {"tol", "mode", "method", "max_iter"},
    "pipeline": {"schedule", "levels", "eps_rule", "theta", "psi_rule", "stencil_radius", "budget_scale",
                 "strict", "weakstar_fields"},
}


class ScenarioError(ValueError):
    def __init__(self, msg, line=None, path=None):
        where = f"{path or '<scenario>'}:{line}: " if line else f"{path or '<scenario>'}: "
        super().__init__(where + msg)
        self.line = line


@dataclass
class ScenarioSpec:
    scenario: Scenario
    solve: SolveConfig
    pipeline: PipelineConfig
    mesh_params: dict = field(default_factory=dict)
    source: str = ""

    def at_resolution(self, m):
        """Same scenario on a mesh with ``m`` subdivisions."""
        mesh = _make_mesh(dict(self.mesh_params, m=m), lambda *_: None)
        return self.scenario.with_mesh(mesh)


def _line_map(text):
    """``(section, key) -> line number`` and section header lines."""
    out, sect = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            sect = m.group(1).strip().lower()
            out[(sect, None)] = i
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", line)
        if m and sect is not None:
            out[(sect, m.group(1).strip().lower())] = i
    return out


def _floats(text, n=None):
    vals = [float(x) for x in re.split(r"[,\s]+", text.strip()) if x]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {len(vals)}")
    return vals


def _make_mesh(p, fail):
    shape = p.get("shape", "rectangle")
    m = int(p.get("m", 8))
    gamma0 = p.get("gamma0", "all")
    if shape == "rectangle":
        return gen_rectangle(p.get("widths", [1.0, 1.0]), m, gamma0)
    if shape == "lshape":
        return gen_lshape(m, gamma0)
    fail(f"unknown mesh shape {shape!r}", ("mesh", "shape"))


def parse_scenario(text, path=None) -> ScenarioSpec:
    lines = _line_map(text)

    def fail(msg, key=None):
        raise ScenarioError(msg, lines.get(key) if key else None, path)

    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ScenarioError(str(exc).splitlines()[0], line, path) from None
    for sect in cp.sections():
        s = sect.lower()
        if s not in KNOWN:
            fail(f"unknown section [{sect}]", (s, None))
        for key in cp[sect]:
            if key not in KNOWN[s]:
                fail(f"unknown key {key!r} in [{sect}]", (s, key))
    if not cp.has_section("mesh"):
        raise ScenarioError("missing [mesh] section", None, path)

    def get(sect, key, conv, default):
        if not cp.has_option(sect, key):
            return default
        try:
            return conv(cp.get(sect, key))
        except (TypeError, ValueError) as exc:
            fail(f"bad value for {key}: {exc}", (sect, key))

    mp = dict(
        shape=get("mesh", "shape", str.strip, "rectangle"),
        widths=get("mesh", "widths", _floats, [1.0, 1.0]),
        m=get("mesh", "m", int, 8),
        gamma0=get("mesh", "gamma0", str.strip, "all"),
    )
    try:
        mesh = _make_mesh(mp, fail)
    except MeshError as exc:
        fail(str(exc), ("mesh", "m"))
    n = mesh.dim
    mu, kappa = get("material", "mu", float, 1.0), get("material", "kappa", float, 1.0)
    try:
        moduli = ElasticModuli(mu, kappa)
    except ValueError as exc:
        fail(str(exc), ("material", "mu"))
    kind = get("yield", "set", str.strip, "ball")
    size = get("yield", "size", float, 1.0)
    if kind == "ball":
        if size <= 0:
            fail("yield size must be positive", ("yield", "size"))
        K = Ball(size, n)
    elif kind == "segment":
        K = segment_polytope(n)
    elif kind == "square":
        K = square_polytope(n, size)
    else:
        fail(f"unknown yield set {kind!r}", ("yield", "set"))
    fam = get("datum", "family", str.strip, "zero")
    params = {}
    if fam == "affine":
        params["A"] = np.array(get("datum", "a", lambda s: _floats(s, n * n), [0.0] * n * n)).reshape(n, n)
        params["b"] = np.array(get("datum", "b", lambda s: _floats(s, n), [0.0] * n))
    elif fam == "shear":
        params["gamma"] = get("datum", "gamma", float, 1.0)
    elif fam == "bump":
        params["amplitude"] = get("datum", "amplitude", lambda s: _floats(s, n), [1.0] + [0.0] * (n - 1))
        params["center"] = get("datum", "center", lambda s: _floats(s, n), [0.5] * n)
        params["radius"] = get("datum", "radius", float, 0.5)
    elif fam != "zero":
        fail(f"unknown datum family {fam!r}", ("datum", "family"))
    try:
        scen = Scenario(mesh, moduli, K, Datum(fam, params))
    except ValueError as exc:
        fail(str(exc), ("mesh", "gamma0"))
    sk = dict(mode=get("solver", "mode", str.strip, "relaxed"),
              method=get("solver", "method", str.strip, "pdhg"),
              tol=get("solver", "tol", float, 1e-8),
              max_iter=get("solver", "max_iter", int, 200_000))
    try:
        solve = SolveConfig(**sk)
    except ValueError as exc:
        fail(str(exc), ("solver", None))
    pk = {}
    conv = dict(schedule=lambda s: tuple(int(x) for x in _floats(s)), levels=int, eps_rule=str.strip,
                theta=float, psi_rule=str.strip, stencil_radius=int, budget_scale=float,
                strict=lambda s: s.strip().lower() in ("1", "true", "yes", "on"), weakstar_fields=int)
    for key, c in conv.items():
        val = get("pipeline", key, c, None)
        if val is not None:
            pk[key] = val
    try:
        pipe = PipelineConfig(**pk)
    except ValueError as exc:
        fail(str(exc), ("pipeline", None))
    return ScenarioSpec(scen, solve, pipe, mp, text)


def read_scenario(path) -> ScenarioSpec:
    with open(path) as fh:
        return parse_scenario(fh.read(), str(path))
