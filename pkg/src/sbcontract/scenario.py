"""Scenario files: problem data, discretisation and solver settings in TOML.

A scenario bundles the system ``(A, B, eps)``, the two supports with their
densities, the discretisation (point counts and seed), the solver settings
and output options.  Parsing either produces a fully validated
:class:`Scenario` or raises :class:`ScenarioError` naming the offending
field (and its line when it can be located).

Example::

    name = "demo"

    [system]
    registry = "double_integrator"   # or A = [[...]] and B = [[...]]
    epsilon = 0.5

    [supports.X0]
    kind = "ball"
    center = [0.0, 0.0]
    radius = 1.0

    [supports.X1]
    kind = "ellipsoid"
    center = [2.0, 0.0]
    shape = [[1.0, 0.0], [0.0, 0.5]]
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import tomlkit
from tomlkit.exceptions import ParseError

from .bridge import DensitySpec
from .dynamics import DEFAULT_STEPS, REGISTRY, LinearSystem, make_system
from .errors import DomainError
from .geometry import Ball, Ellipsoid, PointCloud, Polytope

SUPPORT_KINDS = ("ellipsoid", "ball", "polytope", "pointcloud")
SUPPORT_KEYS = ("X0", "X1")
DENSITY_KEYS = ("rho0", "rho1")


class ScenarioError(DomainError):
    """Invalid scenario file; ``field`` is the dotted path of the bad entry."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = ""
        if field:
            where = field if line is None else f"{field} (line {line})"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class SystemSpec:
    epsilon: float
    registry: Optional[str] = None
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    n: Optional[int] = None
    steps: int = DEFAULT_STEPS

    @property
    def dim(self):
        if self.registry is not None:
            return self.build().n
        return self.A.shape[0]

    def build(self):
        if self.registry is not None:
            return make_system(self.registry, self.epsilon, self.n)
        return LinearSystem.constant(self.A, self.B, self.epsilon)


@dataclass(frozen=True)
class SupportSpec:
    kind: str
    center: Optional[np.ndarray] = None
    shape: Optional[np.ndarray] = None
    radius: Optional[float] = None
    points: Optional[np.ndarray] = None

    def build(self):
        if self.kind == "ellipsoid":
            return Ellipsoid(self.center, self.shape)
        if self.kind == "ball":
            return Ball(self.center, self.radius)
        if self.kind == "polytope":
            return Polytope(self.points)
        return PointCloud(self.points)

    @property
    def dim(self):
        return self.center.size if self.points is None else self.points.shape[1]


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SystemSpec
    supports: tuple
    densities: tuple
    counts: tuple = (200, 200)
    seed: int = 0
    tol: float = 1e-12
    max_pass: int = 1000
    separation_power: int = 2
    telemetry: Optional[str] = None
    report: Optional[str] = None
    paths: int = 2000
    em_steps: int = 500
    source: Optional[str] = field(default=None, compare=False)

    def build_system(self):
        return self.system.build()

    def support_sets(self):
        return tuple(s.build() for s in self.supports)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_toml(self):
        return dump_scenario(self)


# -- parsing ------------------------------------------------------------------------


def _plain(obj):
    """tomlkit containers -> builtin dicts/lists/scalars."""
    if hasattr(obj, "unwrap"):
        return obj.unwrap()
    return obj


class _Reader:
    def __init__(self, text, source):
        self.text = text
        self.lines = text.splitlines()
        self.source = source

    def locate(self, path):
        """Best-effort line number of a dotted key (header, then first ``key =`` below it)."""
        parts = path.split(".")
        header_line = None
        for depth in range(len(parts), 0, -1):
            header = re.compile(r"^\s*\[\s*" + r"\s*\.\s*".join(map(re.escape, parts[:depth])) + r"\s*\]")
            hits = [i for i, ln in enumerate(self.lines) if header.match(ln)]
            if hits:
                header_line = hits[0]
                break
        if header_line is not None and depth == len(parts):
            return header_line + 1
        start = 0 if header_line is None else header_line + 1
        key = re.compile(r"^\s*" + re.escape(parts[-1]) + r"\s*=")
        for i in range(start, len(self.lines)):
            if header_line is not None and self.lines[i].lstrip().startswith("["):
                break
            if key.match(self.lines[i]):
                return i + 1
        return None if header_line is None else header_line + 1

    def fail(self, path, message):
        raise ScenarioError(message, path, self.locate(path))


def _number(r, table, key, path, kind=float, positive=False, default=None, required=True):
    if key not in table:
        if not required:
            return default
        r.fail(path, "missing required field")
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        r.fail(path, f"expected a number, got {v!r}")
    if kind is int:
        if not float(v).is_integer():
            r.fail(path, f"expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
        if not np.isfinite(v):
            r.fail(path, "must be finite")
    if positive and not v > 0:
        r.fail(path, f"must be positive, got {v}")
    return v


def _array(r, table, key, path, ndim, required=True):
    if key not in table:
        if required:
            r.fail(path, "missing required field")
        return None
    try:
        a = np.array(table[key], dtype=float)
    except (TypeError, ValueError):
        r.fail(path, "expected a numeric array")
    if ndim == 2 and a.ndim == 1 and a.size > 0 and not isinstance(table[key][0], list):
        r.fail(path, "expected a nested list (matrix)")
    if a.ndim != ndim or a.size == 0:
        r.fail(path, f"expected a {ndim}-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        r.fail(path, "entries must be finite")
    return a


def _table(r, doc, key, path, required=True):
    if key not in doc:
        if required:
            r.fail(path, "missing required table")
        return {}
    t = doc[key]
    if not isinstance(t, dict):
        r.fail(path, "expected a table")
    return t


def _parse_system(r, t):
    eps = _number(r, t, "epsilon", "system.epsilon", positive=True)
    steps = _number(r, t, "steps", "system.steps", kind=int, default=DEFAULT_STEPS, required=False)
    if steps < 2:
        r.fail("system.steps", "need at least 2 quadrature steps")
    n = _number(r, t, "n", "system.n", kind=int, required=False, positive=True)
    if "registry" in t:
        name = t["registry"]
        if name not in REGISTRY:
            r.fail("system.registry", f"unknown registry name {name!r}; known: {', '.join(sorted(REGISTRY))}")
        if "A" in t or "B" in t:
            r.fail("system", "give either registry or A/B, not both")
        return SystemSpec(eps, registry=name, n=n, steps=steps)
    A = _array(r, t, "A", "system.A", 2)
    B = _array(r, t, "B", "system.B", 2)
    if A.shape[0] != A.shape[1]:
        r.fail("system.A", f"A must be square, got shape {A.shape}")
    if B.shape[0] != A.shape[0]:
        r.fail("system.B", f"dimension mismatch: B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
    return SystemSpec(eps, A=A, B=B, steps=steps)


def _parse_support(r, t, path, n):
    kind = t.get("kind")
    if kind not in SUPPORT_KINDS:
        r.fail(path + ".kind", f"expected one of {', '.join(SUPPORT_KINDS)}, got {kind!r}")
    if kind in ("ellipsoid", "ball"):
        c = _array(r, t, "center", path + ".center", 1)
        if c.size != n:
            r.fail(path + ".center", f"dimension mismatch: center has {c.size} entries, system state is {n}-d")
        if kind == "ball":
            rad = _number(r, t, "radius", path + ".radius", positive=True)
            return SupportSpec(kind, center=c, radius=rad)
        S = _array(r, t, "shape", path + ".shape", 2)
        if S.shape != (n, n):
            r.fail(path + ".shape", f"dimension mismatch: shape is {S.shape}, expected {(n, n)}")
        if np.max(np.abs(S - S.T)) > 1e-9 * max(1.0, np.max(np.abs(S))):
            r.fail(path + ".shape", "shape matrix must be symmetric")
        if np.linalg.eigvalsh(S)[0] <= 0:
            r.fail(path + ".shape", "shape matrix must be positive definite")
        return SupportSpec(kind, center=c, shape=S)
    P = _array(r, t, "points", path + ".points", 2)
    if P.shape[1] != n:
        r.fail(path + ".points", f"dimension mismatch: points are {P.shape[1]}-d, system state is {n}-d")
    return SupportSpec(kind, points=P)


def _parse_density(r, t, path, n):
    kind = t.get("kind", "uniform")
    if kind == "uniform":
        return DensitySpec()
    if kind != "gaussian":
        r.fail(path + ".kind", f"expected 'uniform' or 'gaussian', got {kind!r}")
    mean = _array(r, t, "mean", path + ".mean", 1)
    cov = _array(r, t, "cov", path + ".cov", 2)
    if mean.size != n:
        r.fail(path + ".mean", f"dimension mismatch: mean has {mean.size} entries, expected {n}")
    if cov.shape != (n, n):
        r.fail(path + ".cov", f"dimension mismatch: cov is {cov.shape}, expected {(n, n)}")
    try:
        return DensitySpec("gaussian", mean, cov)
    except ValueError as exc:
        r.fail(path + ".cov", str(exc))


def parse_scenario_text(text, source="<string>"):
    """Parse and validate scenario TOML text."""
    r = _Reader(text, source)
    try:
        doc = _plain(tomlkit.parse(text))
    except ParseError as exc:
        raise ScenarioError(f"TOML syntax error: {exc}", line=getattr(exc, "line", None)) from None
    known = {"name", "system", "supports", "densities", "discretization", "solver", "options", "simulation"}
    for key in doc:
        if key not in known:
            r.fail(key, f"unknown top-level key; expected one of {', '.join(sorted(known))}")

    system = _parse_system(r, _table(r, doc, "system", "system"))
    try:
        n = system.dim
    except (ValueError, DomainError) as exc:
        r.fail("system", str(exc))

    sup = _table(r, doc, "supports", "supports")
    supports = tuple(
        _parse_support(r, _table(r, sup, k, f"supports.{k}"), f"supports.{k}", n) for k in SUPPORT_KEYS
    )
    den = _table(r, doc, "densities", "densities", required=False)
    densities = tuple(
        _parse_density(r, _table(r, den, k, f"densities.{k}", required=False), f"densities.{k}", n)
        for k in DENSITY_KEYS
    )

    disc = _table(r, doc, "discretization", "discretization", required=False)
    c0 = _number(r, disc, "count0", "discretization.count0", int, True, 200, False)
    c1 = _number(r, disc, "count1", "discretization.count1", int, True, 200, False)
    seed = _number(r, disc, "seed", "discretization.seed", int, default=0, required=False)
    if seed < 0:
        r.fail("discretization.seed", "seed must be nonnegative")

    sol = _table(r, doc, "solver", "solver", required=False)
    tol = _number(r, sol, "tol", "solver.tol", positive=True, default=1e-12, required=False)
    max_pass = _number(r, sol, "max_pass", "solver.max_pass", int, True, 1000, False)

    opt = _table(r, doc, "options", "options", required=False)
    power = _number(r, opt, "separation_power", "options.separation_power", int, default=2, required=False)
    if power not in (1, 2):
        r.fail("options.separation_power", f"must be 1 or 2, got {power}")
    out = {}
    for key in ("telemetry", "report"):
        v = opt.get(key)
        if v is not None and not isinstance(v, str):
            r.fail(f"options.{key}", "expected a path string")
        out[key] = v

    sim = _table(r, doc, "simulation", "simulation", required=False)
    paths = _number(r, sim, "paths", "simulation.paths", int, True, 2000, False)
    em_steps = _number(r, sim, "steps", "simulation.steps", int, True, 500, False)

    name = doc.get("name", Path(source).stem)
    if not isinstance(name, str):
        r.fail("name", "expected a string")
    return Scenario(
        name=name,
        system=system,
        supports=supports,
        densities=densities,
        counts=(c0, c1),
        seed=seed,
        tol=tol,
        max_pass=max_pass,
        separation_power=power,
        telemetry=out["telemetry"],
        report=out["report"],
        paths=paths,
        em_steps=em_steps,
        source=source,
    )


def parse_scenario(path):
    """Read and validate a scenario file.

    Raises
    ------
    ScenarioError
        With the dotted field path (and line, when found) of the first problem.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc.strerror}") from None
    return parse_scenario_text(text, str(path))


# -- writing -------------------------------------------------------------------------


def _list(a):
    return np.asarray(a, dtype=float).tolist()


def dump_scenario(sc):
    """Serialise a scenario back to TOML text (round-trips through :func:`parse_scenario_text`)."""
    doc = tomlkit.document()
    doc["name"] = sc.name
    s = tomlkit.table()
    if sc.system.registry is not None:
        s["registry"] = sc.system.registry
        if sc.system.n is not None:
            s["n"] = sc.system.n
    else:
        s["A"] = _list(sc.system.A)
        s["B"] = _list(sc.system.B)
    s["epsilon"] = sc.system.epsilon
    s["steps"] = sc.system.steps
    doc["system"] = s

    sup = tomlkit.table(is_super_table=True)
    for key, spec in zip(SUPPORT_KEYS, sc.supports):
        t = tomlkit.table()
        t["kind"] = spec.kind
        if spec.center is not None:
            t["center"] = _list(spec.center)
        if spec.shape is not None:
            t["shape"] = _list(spec.shape)
        if spec.radius is not None:
            t["radius"] = spec.radius
        if spec.points is not None:
            t["points"] = _list(spec.points)
        sup[key] = t
    doc["supports"] = sup

    den = tomlkit.table(is_super_table=True)
    for key, d in zip(DENSITY_KEYS, sc.densities):
        t = tomlkit.table()
        t["kind"] = d.kind
        if d.kind == "gaussian":
            t["mean"] = _list(d.mean)
            t["cov"] = _list(d.cov)
        den[key] = t
    doc["densities"] = den

    doc["discretization"] = {"count0": sc.counts[0], "count1": sc.counts[1], "seed": sc.seed}
    doc["solver"] = {"tol": sc.tol, "max_pass": sc.max_pass}
    opt = {"separation_power": sc.separation_power}
    if sc.telemetry is not None:
        opt["telemetry"] = sc.telemetry
    if sc.report is not None:
        opt["report"] = sc.report
    doc["options"] = opt
    doc["simulation"] = {"paths": sc.paths, "steps": sc.em_steps}
    return tomlkit.dumps(doc)


def shipped_scenario_path(name="example1"):
    """Path of a scenario file shipped with the package."""
    return resources.files("sbcontract") / "data" / f"{name}.toml"


def load_shipped(name="example1"):
    ref = shipped_scenario_path(name)
    return parse_scenario_text(ref.read_text(encoding="utf-8"), str(ref))


def example1_supports(bundle):
    """The two ellipsoids whose Gramian images are unit disks at ``(0, 3)`` and ``(3, 0)``.

    Centers ``Phi^{-1} M^{1/2} (0, 3)`` and ``M^{1/2} (3, 0)``; shapes
    ``Phi^{-1} M Phi^{-T}`` and ``M``.
    """
    Phi, M, Ms = bundle.Phi, bundle.M, bundle.M_sqrt
    Phi_inv = np.linalg.inv(Phi)
    c0 = Phi_inv @ Ms @ np.array([0.0, 3.0])
    c1 = Ms @ np.array([3.0, 0.0])
    return Ellipsoid(c0, Phi_inv @ M @ Phi_inv.T), Ellipsoid(c1, M)
