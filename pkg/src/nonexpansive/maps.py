"""Catalog of nonexpansive self-maps, iteration and expansion audits."""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.optimize import least_squares

from . import hyperbolic
from .errors import (AuditInconclusive, BadParameter, IncompatibleSpace, NotNonexpansive,
                     SpaceMismatch, UnknownMap)
from .metric_core import (TOL_METRIC, Circle, Euclidean, HalfLine, IntegerLattice, PoincareDisk,
                          Point, Polydisc, Product, Space)

TOL_SOLVE = 1e-7
CONSTRUCTION_AUDIT_PAIRS = 256

GOLDEN_ANGLE = 2 * math.pi * (math.sqrt(5) - 1) / 2


def noble_angle(seed: int) -> float:
    """Rotation angle ``2 pi [0; a, 1, 1, ...]`` with ``a = 1`` for seed 0, else ``seed + 2``.

    Seed 0 gives the golden rotation.  ``a = 2`` is skipped because it is
    the mirror image of the golden angle and induces the same orbit metric.
    """
    inv_phi = (math.sqrt(5) - 1) / 2
    a = 1 if seed == 0 else seed + 2
    return 2 * math.pi / (a + inv_phi)


@dataclass(frozen=True)
class MapSpec:
    name: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, obj: Any) -> "MapSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        if isinstance(obj, MapSpec):
            return obj
        if not isinstance(obj, dict) or "name" not in obj:
            raise BadParameter("map spec must be an object with a 'name' field")
        params = obj.get("params") or {}
        if not isinstance(params, dict):
            raise BadParameter("map spec field 'params' must be an object")
        return cls(name=str(obj["name"]), params=dict(params))

    def to_json(self) -> dict:
        return {"name": self.name, "params": self.params}


@dataclass(frozen=True)
class DynamicMap:
    name: str
    space: Space
    rule: Callable[[np.ndarray], np.ndarray]
    claims_isometry: bool = False
    claims_surjective: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, p: Point) -> Point:
        return self.space.point(self.rule(self.space.as_array(p)))


@dataclass
class AuditReport:
    passed: bool
    defect: float
    witness: tuple | None = None
    samples: int = 0
    min_defect: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def isometry_defect(self) -> float:
        return max(abs(self.defect), abs(self.min_defect))


def _complex_param(value, name) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise BadParameter(f"{name} must be a number or an [re, im] pair")
        return complex(float(value[0]), float(value[1]))
    try:
        return complex(value)
    except (TypeError, ValueError):
        raise BadParameter(f"{name} must be a number or an [re, im] pair") from None


def _disk_rule(f: Callable[[complex], complex]):
    def rule(x):
        w = f(complex(x[0], x[1]))
        return np.array([w.real, w.imag])
    return rule


def _require(space, *kinds, name):
    if not isinstance(space, kinds):
        raise IncompatibleSpace(f"map '{name}' is not defined on {space.tag}")


def _disk_function(spec: MapSpec) -> tuple[Callable[[complex], complex], bool]:
    """Holomorphic disk self-map for a disk map spec, plus its automorphism flag."""
    p = spec.params
    name = spec.name
    if name == "identity":
        return (lambda z: z), True
    if name == "mobius-hyperbolic":
        a = _complex_param(p.get("a", 0.5), "a")
        if abs(a) >= 1:
            raise BadParameter("mobius-hyperbolic needs |a| < 1")
        return hyperbolic.inverse_automorphism(a), True
    if name == "disk-automorphism":
        a = _complex_param(p.get("a", 0.0), "a")
        if abs(a) >= 1:
            raise BadParameter("disk-automorphism needs |a| < 1")
        return hyperbolic.automorphism(a, float(p.get("theta", 0.0))), True
    if name == "mobius-elliptic":
        a = _complex_param(p.get("a", 0.0), "a")
        if abs(a) >= 1:
            raise BadParameter("mobius-elliptic needs |a| < 1")
        to0 = hyperbolic.automorphism(a)
        back = hyperbolic.inverse_automorphism(a)
        rot = cmath.exp(1j * float(p.get("theta", 2 * math.pi / 6)))
        return (lambda z: back(rot * to0(z))), True
    if name == "mobius-parabolic":
        m = hyperbolic.parabolic_matrix(float(p.get("t", 1.0)))
        return (lambda z: hyperbolic.mobius_matrix_apply(m, z)), True
    if name == "blaschke":
        zeros = [_complex_param(a, "zeros") for a in p.get("zeros", [0.0])]
        if not zeros:
            raise BadParameter("blaschke needs at least one zero")
        if any(abs(a) >= 1 for a in zeros):
            raise BadParameter("blaschke zeros must lie in the open disk")
        return hyperbolic.blaschke(zeros, float(p.get("theta", 0.0))), len(zeros) == 1
    raise UnknownMap(name)


DISK_MAPS = ("identity", "mobius-hyperbolic", "disk-automorphism", "mobius-elliptic",
             "mobius-parabolic", "blaschke")


def _build(spec: MapSpec, space: Space) -> DynamicMap:
    name, p = spec.name, spec.params
    if name == "identity":
        return DynamicMap(name, space, lambda x: np.array(x, dtype=float), True, True, p)

    if name in ("scale", "affine"):
        _require(space, Euclidean, HalfLine, name=name)
        c = float(p.get("c", p.get("a", 0.5)))
        b = np.asarray(p.get("b", 0.0), dtype=float)
        if isinstance(space, HalfLine) and (c < 0 or np.any(b < 0)):
            raise BadParameter(f"{name} with c={c}, b={b} does not map the half-line into itself")
        iso = abs(c) == 1.0
        return DynamicMap(name, space, lambda x: c * x + b, iso, iso or c != 0.0, p)

    if name == "translation":
        _require(space, Euclidean, IntegerLattice, HalfLine, name=name)
        v = np.broadcast_to(np.asarray(p.get("v", 1.0), dtype=float), (space.dimension,)).copy()
        if isinstance(space, IntegerLattice) and not np.all(v == np.round(v)):
            raise BadParameter("lattice translation needs an integer vector")
        if isinstance(space, HalfLine):
            if v[0] < 0:
                raise BadParameter("half-line translation needs v >= 0")
            return DynamicMap(name, space, lambda x: x + v, True, v[0] == 0, p)
        return DynamicMap(name, space, lambda x: x + v, True, True, p)

    if name == "rotation":
        _require(space, Circle, name=name)
        theta = float(p.get("theta", GOLDEN_ANGLE))
        c, s = math.cos(theta), math.sin(theta)

        def rotate(x):
            return np.array([c * x[0] - s * x[1], s * x[0] + c * x[1]])

        return DynamicMap(name, space, rotate, True, True, p)

    if name in DISK_MAPS:
        _require(space, PoincareDisk, name=name)
        f, auto = _disk_function(spec)
        return DynamicMap(name, space, _disk_rule(f), auto, auto, p)

    if name == "product":
        comps = [MapSpec.from_json(c) for c in p.get("components", [])]
        if isinstance(space, Polydisc):
            if len(comps) != space.factors:
                raise BadParameter(f"polydisc({space.factors}) needs {space.factors} components")
            funcs = [_disk_function(c) for c in comps]
            fs = [f for f, _ in funcs]

            def prod_rule(x):
                out = np.empty_like(x, dtype=float)
                for i, f in enumerate(fs):
                    w = f(complex(x[2 * i], x[2 * i + 1]))
                    out[2 * i], out[2 * i + 1] = w.real, w.imag
                return out

            iso = all(a for _, a in funcs)
            return DynamicMap(name, space, prod_rule, iso, iso, p)
        if isinstance(space, Product):
            if len(comps) != len(space.factors):
                raise BadParameter(f"{space.tag} needs {len(space.factors)} components")
            parts = [_build(c, f) for c, f in zip(comps, space.factors)]
            cuts = list(zip(space.offsets[:-1], space.offsets[1:]))

            def prod_rule(x):
                return np.concatenate([m.rule(x[a:b]) for m, (a, b) in zip(parts, cuts)])

            iso = all(m.claims_isometry for m in parts)
            surj = all(m.claims_surjective for m in parts)
            return DynamicMap(name, space, prod_rule, iso, surj, p)
        raise IncompatibleSpace(f"product map needs a polydisc or product space, got {space.tag}")

    raise UnknownMap(name)


def make_map(spec, space: Space, audit: bool = True) -> DynamicMap:
    """Build a catalog map on ``space``.

    With ``audit`` (the default) the map is rejected with
    :class:`NotNonexpansive` unless a fixed 256-pair expansion audit passes.
    """
    spec = MapSpec.from_json(spec)
    m = _build(spec, space)
    if audit:
        report = audit_nonexpansive(m, CONSTRUCTION_AUDIT_PAIRS, seed=0)
        if not report.passed:
            raise NotNonexpansive(
                f"{spec.name} expands distances by {report.defect:.3g}", report)
    return m


def compose(outer: DynamicMap, inner: DynamicMap) -> DynamicMap:
    """``outer o inner``: apply ``inner`` first."""
    if outer.space != inner.space:
        raise SpaceMismatch(f"{outer.space.tag} vs {inner.space.tag}")
    f, g = outer.rule, inner.rule
    return DynamicMap(
        f"{outer.name}*{inner.name}", outer.space, lambda x: f(g(x)),
        outer.claims_isometry and inner.claims_isometry,
        outer.claims_surjective and inner.claims_surjective)


def iterate(m: DynamicMap, p, k: int) -> Point:
    """``f^k(p)`` by ``k`` successive applications of the rule."""
    if k < 0:
        raise BadParameter("iteration count must be nonnegative")
    x = m.space.as_array(p)
    rule = m.rule
    for _ in range(k):
        x = rule(x)
    return m.space.point(x)


def _images(m: DynamicMap, xs: np.ndarray) -> np.ndarray:
    return np.array([m.rule(x) for x in xs])


def audit_nonexpansive(m: DynamicMap, pairs: int, seed: int) -> AuditReport:
    """Largest observed ``d(f a, f b) - d(a, b)`` over seeded random pairs."""
    if pairs < 1:
        raise BadParameter("pairs must be >= 1")
    space = m.space
    rng = np.random.default_rng(seed)
    a = space.sample_array(rng, pairs)
    b = space.sample_array(rng, pairs)
    before = space.dist(a, b)
    after = space.dist(_images(m, a), _images(m, b))
    defects = after - before
    i = int(np.argmax(defects))
    worst = float(defects[i])
    return AuditReport(
        passed=worst <= TOL_METRIC,
        defect=worst,
        witness=(space.point(a[i]), space.point(b[i])),
        samples=pairs,
        min_defect=float(np.min(defects)),
    )


def _grid_preimage(m, space, center, radius, q, budget, rng):
    cands = space.sample_ball(rng, center, radius, budget)
    imgs = _images(m, cands)
    d = space.dist(imgs, q)
    i = int(np.argmin(d))
    return cands[i], float(d[i])


def _lattice_preimage(m, space, center, radius, q):
    span = int(math.ceil(radius))
    axes = [np.arange(-span, span + 1)] * space.dimension
    offs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, space.dimension)
    offs = offs[np.sum(np.abs(offs), axis=1) < radius]
    cands = center + offs
    d = space.dist(_images(m, cands), q)
    i = int(np.argmin(d))
    return cands[i], float(d[i])


def find_preimage(m: DynamicMap, q: np.ndarray, center: np.ndarray, radius: float,
                  rng: np.random.Generator, tol_solve: float = TOL_SOLVE,
                  grid_budget: int = 4096):
    """Numerically solve ``f(p) = q`` near ``center``; returns ``(p, residual)``."""
    space = m.space
    if isinstance(space, IntegerLattice):
        return _lattice_preimage(m, space, center, radius, q)

    def residual(y):
        return m.rule(space.project(y)) - q

    best, best_res = None, math.inf
    for y0 in (q, center):
        sol = least_squares(residual, np.asarray(y0, dtype=float), xtol=1e-15, ftol=1e-15,
                            gtol=1e-15, max_nfev=200)
        p = space.project(sol.x)
        res = float(space.dist(m.rule(p), q))
        if res < best_res:
            best, best_res = p, res
        if res <= tol_solve:
            return best, best_res
    p, res = _grid_preimage(m, space, center, radius, q, grid_budget, rng)
    if res < best_res:
        best, best_res = p, res
    if best_res > tol_solve:
        # polish the best grid candidate
        sol = least_squares(residual, best, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
        p = space.project(sol.x)
        res = float(space.dist(m.rule(p), q))
        if res < best_res:
            best, best_res = p, res
    return best, best_res


def audit_ball_surjectivity(m: DynamicMap, center, radius: float, probes: int, seed: int,
                            tol_solve: float = TOL_SOLVE) -> AuditReport:
    """Check that every probe in ``B(f(center), radius)`` has a preimage in ``B(center, radius)``.

    Raises :class:`AuditInconclusive` when the preimage search cannot reach
    ``tol_solve`` for some probe.
    """
    if not (m.claims_isometry and m.claims_surjective):
        raise BadParameter(f"{m.name} does not claim to be a surjective isometry")
    space = m.space
    if not radius > 0 or radius > space.properness_radius:
        raise BadParameter(f"radius {radius} outside (0, {space.properness_radius}]")
    c = space.as_array(center)
    rng = np.random.default_rng(seed)
    fc = m.rule(c)
    qs = space.sample_ball(rng, fc, radius, probes)
    worst_gap = -math.inf
    witness = None
    residuals = []
    for q in qs:
        p, res = find_preimage(m, q, c, radius, rng, tol_solve)
        if res > tol_solve:
            raise AuditInconclusive(
                f"preimage search stalled at residual {res:.3g} for probe {q.tolist()}")
        residuals.append(res)
        gap = float(space.dist(p, c)) - radius
        if gap > worst_gap:
            worst_gap, witness = gap, (space.point(q), space.point(p))
    return AuditReport(
        passed=worst_gap < tol_solve,
        defect=worst_gap,
        witness=witness,
        samples=probes,
        details={"max_residual": max(residuals) if residuals else 0.0},
    )
