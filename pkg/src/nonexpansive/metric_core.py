"""Metric spaces, points, ball covers and the catalog of model spaces.

Points carry plain tuples of floats; the numerical work happens on numpy
arrays whose last axis holds the coordinates.  Every space exposes a
broadcasting ``dist`` so that orbit analyses can compare one point against
thousands at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import hyperbolic
from .errors import BadParameter, EmptyInput, SpaceMismatch, UnknownSpace

TOL_METRIC = 1e-9

# spaces built by make_space, keyed by tag, so a Point can find its metric
_TAG_CACHE: dict = {}

UNBOUNDED = math.inf

# largest Poincaré distance from 0 that double precision can still resolve
RESOLVABLE_DISK_RADIUS = hyperbolic.omega(0.0, 1.0 - hyperbolic.BOUNDARY_GUARD)


@dataclass(frozen=True)
class Point:
    coordinates: tuple
    space_tag: str

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coordinates, dtype=float)

    def __len__(self):
        return len(self.coordinates)


@dataclass(frozen=True)
class SpaceSpec:
    name: str
    dim: int | None = None
    params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, obj: Any) -> "SpaceSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        if isinstance(obj, SpaceSpec):
            return obj
        if not isinstance(obj, dict) or "name" not in obj:
            raise BadParameter("space spec must be an object with a 'name' field")
        dim = obj.get("dim")
        if dim is not None and not isinstance(dim, int):
            raise BadParameter("space spec field 'dim' must be an integer")
        params = obj.get("params") or {}
        if not isinstance(params, dict):
            raise BadParameter("space spec field 'params' must be an object")
        return cls(name=str(obj["name"]), dim=dim, params=dict(params))

    def to_json(self) -> dict:
        out = {"name": self.name}
        if self.dim is not None:
            out["dim"] = self.dim
        if self.params:
            out["params"] = self.params
        return out


class Space:
    """A proper metric space given by a broadcasting distance oracle.

    Subclasses set ``name``, ``dimension`` (number of real coordinates),
    ``properness_radius`` and implement ``dist``, ``sample_array`` and
    ``sample_ball``.
    """

    name = "space"
    properness_radius = UNBOUNDED

    def __init__(self, dimension: int):
        self.dimension = dimension

    # -- identity -------------------------------------------------------
    @property
    def tag(self) -> str:
        return self.name

    def __repr__(self):
        return f"<Space {self.tag}>"

    def __eq__(self, other):
        return isinstance(other, Space) and self.tag == other.tag

    def __hash__(self):
        return hash(self.tag)

    @property
    def base_point(self) -> Point:
        return self.point(self.base_array())

    def base_array(self) -> np.ndarray:
        return np.zeros(self.dimension)

    # -- points ---------------------------------------------------------
    def point(self, coords: Sequence[float]) -> Point:
        x = np.asarray(coords, dtype=float).reshape(-1)
        self.check(x)
        return Point(tuple(float(c) for c in x), self.tag)

    def check(self, x: np.ndarray) -> None:
        if x.shape != (self.dimension,):
            raise BadParameter(
                f"{self.tag} expects {self.dimension} coordinates, got {x.shape[0] if x.ndim else 0}")
        if not np.all(np.isfinite(x)):
            raise BadParameter(f"non-finite coordinates {x.tolist()}")

    def escaped(self, x: np.ndarray) -> bool:
        """True when ``x`` has left the numerically resolvable part of the space."""
        return not bool(np.all(np.isfinite(x)))

    def project(self, x: np.ndarray) -> np.ndarray:
        """Map ambient coordinates onto the space (used by inverse searches)."""
        return np.asarray(x, dtype=float)

    def as_array(self, p) -> np.ndarray:
        if isinstance(p, Point):
            if p.space_tag != self.tag:
                raise SpaceMismatch(f"point of {p.space_tag} used in {self.tag}")
            return p.array
        return np.asarray(p, dtype=float)

    # -- metric ---------------------------------------------------------
    def dist(self, x: np.ndarray, y: np.ndarray):
        raise NotImplementedError

    def distance(self, p, q) -> float:
        return float(self.dist(self.as_array(p), self.as_array(q)))

    # -- sampling -------------------------------------------------------
    def sample_array(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def sample_ball(self, rng: np.random.Generator, center: np.ndarray, radius: float,
                    count: int) -> np.ndarray:
        raise NotImplementedError

    def sampler(self, seed: int, count: int) -> list[Point]:
        rng = np.random.default_rng(seed)
        return [self.point(x) for x in self.sample_array(rng, count)]


class Euclidean(Space):
    def __init__(self, dim: int = 1):
        super().__init__(dim)

    @property
    def tag(self):
        return f"euclidean({self.dimension})"

    name = "euclidean"

    def dist(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.sqrt(np.sum(d * d, axis=-1))

    def sample_array(self, rng, count):
        return rng.normal(scale=3.0, size=(count, self.dimension))

    def sample_ball(self, rng, center, radius, count):
        v = rng.normal(size=(count, self.dimension))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = radius * rng.random(count) ** (1.0 / self.dimension)
        return center + v * r[:, None]


class IntegerLattice(Space):
    name = "integer-lattice"

    def __init__(self, dim: int = 1):
        super().__init__(dim)

    @property
    def tag(self):
        return f"integer-lattice({self.dimension})"

    def check(self, x):
        super().check(x)
        if not np.all(x == np.round(x)):
            raise BadParameter(f"lattice point must have integer coordinates, got {x.tolist()}")

    def dist(self, x, y):
        return np.sum(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)), axis=-1)

    def project(self, x):
        return np.round(x)

    def sample_array(self, rng, count):
        return rng.integers(-20, 21, size=(count, self.dimension)).astype(float)

    def sample_ball(self, rng, center, radius, count):
        span = int(math.ceil(radius))
        out = []
        while len(out) < count:
            off = rng.integers(-span, span + 1, size=self.dimension)
            if np.sum(np.abs(off)) < radius:
                out.append(center + off)
        return np.array(out, dtype=float)


class Circle(Space):
    """Unit circle in the plane with the chordal distance."""

    name = "circle"
    _unit_tol = 1e-6

    def __init__(self):
        super().__init__(2)

    def base_array(self):
        return np.array([1.0, 0.0])

    def check(self, x):
        super().check(x)
        if abs(math.hypot(x[0], x[1]) - 1.0) > self._unit_tol:
            raise BadParameter(f"circle point must have unit norm, got {x.tolist()}")

    def dist(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.sqrt(np.sum(d * d, axis=-1))

    def project(self, x):
        x = np.asarray(x, dtype=float)
        n = np.linalg.norm(x)
        return self.base_array() if n == 0 else x / n

    def sample_array(self, rng, count):
        t = rng.uniform(0.0, 2 * math.pi, size=count)
        return np.stack([np.cos(t), np.sin(t)], axis=1)

    def sample_ball(self, rng, center, radius, count):
        half = math.pi if radius >= 2.0 else 2.0 * math.asin(radius / 2.0)
        t0 = math.atan2(center[1], center[0])
        t = t0 + rng.uniform(-half, half, size=count) * (1 - 1e-12)
        return np.stack([np.cos(t), np.sin(t)], axis=1)


def _to_complex(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0] + 1j * x[..., 1]


def _from_complex(z):
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1)


def _disk_ball(rng, c: complex, radius: float, count: int) -> np.ndarray:
    top = min(math.tanh(radius), 1.0 - 1e-12)
    r = top * np.sqrt(rng.random(count))
    t = rng.uniform(0.0, 2 * math.pi, size=count)
    u = r * np.exp(1j * t)
    return (u + c) / (1.0 + np.conj(c) * u)


class PoincareDisk(Space):
    """Unit disk with the Poincaré distance; complex ``z`` is stored as ``(re, im)``."""

    name = "poincare-disk"
    properness_radius = RESOLVABLE_DISK_RADIUS

    def __init__(self):
        super().__init__(2)

    def check(self, x):
        super().check(x)
        if math.hypot(x[0], x[1]) >= 1.0:
            raise BadParameter(f"disk point must satisfy |z| < 1, got {x.tolist()}")

    def escaped(self, x):
        if super().escaped(x):
            return True
        return math.hypot(x[0], x[1]) >= 1.0 - hyperbolic.BOUNDARY_GUARD

    def dist(self, x, y):
        return hyperbolic.omega(_to_complex(x), _to_complex(y))

    def project(self, x):
        x = np.asarray(x, dtype=float)
        n = math.hypot(x[0], x[1])
        lim = 1.0 - 1e-9
        return x * (lim / n) if n >= lim else x

    def sample_array(self, rng, count):
        r = 0.95 * np.sqrt(rng.random(count))
        t = rng.uniform(0.0, 2 * math.pi, size=count)
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)

    def sample_ball(self, rng, center, radius, count):
        return _from_complex(_disk_ball(rng, complex(center[0], center[1]), radius, count))


class Polydisc(Space):
    """Product of ``n`` disks with the max of the coordinate Poincaré distances."""

    name = "polydisc"
    properness_radius = RESOLVABLE_DISK_RADIUS

    def __init__(self, dim: int = 2):
        super().__init__(2 * dim)
        self.factors = dim

    @property
    def tag(self):
        return f"polydisc({self.factors})"

    def complex_coords(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., 0::2] + 1j * x[..., 1::2]

    def check(self, x):
        super().check(x)
        if np.any(np.abs(self.complex_coords(x)) >= 1.0):
            raise BadParameter(f"polydisc coordinates must lie in the open disk, got {x.tolist()}")

    def escaped(self, x):
        if super().escaped(x):
            return True
        return bool(np.any(np.abs(self.complex_coords(x)) >= 1.0 - hyperbolic.BOUNDARY_GUARD))

    def dist(self, x, y):
        return np.max(hyperbolic.omega(self.complex_coords(x), self.complex_coords(y)), axis=-1)

    def project(self, x):
        z = self.complex_coords(x)
        n = np.abs(z)
        lim = 1.0 - 1e-9
        z = np.where(n >= lim, z * (lim / np.maximum(n, lim)), z)
        out = np.empty(self.dimension)
        out[0::2], out[1::2] = z.real, z.imag
        return out

    def sample_array(self, rng, count):
        r = 0.95 * np.sqrt(rng.random((count, self.factors)))
        t = rng.uniform(0.0, 2 * math.pi, size=(count, self.factors))
        out = np.empty((count, self.dimension))
        out[:, 0::2], out[:, 1::2] = r * np.cos(t), r * np.sin(t)
        return out

    def sample_ball(self, rng, center, radius, count):
        zc = self.complex_coords(center)
        out = np.empty((count, self.dimension))
        for i, c in enumerate(zc):
            z = _disk_ball(rng, complex(c), radius, count)
            out[:, 2 * i], out[:, 2 * i + 1] = z.real, z.imag
        return out


class HalfLine(Space):
    name = "half-line"

    def __init__(self):
        super().__init__(1)

    def check(self, x):
        super().check(x)
        if x[0] < 0:
            raise BadParameter(f"half-line point must be nonnegative, got {x[0]}")

    def dist(self, x, y):
        return np.abs(np.asarray(x, dtype=float)[..., 0] - np.asarray(y, dtype=float)[..., 0])

    def project(self, x):
        return np.maximum(np.asarray(x, dtype=float), 0.0)

    def sample_array(self, rng, count):
        return rng.exponential(scale=3.0, size=(count, 1))

    def sample_ball(self, rng, center, radius, count):
        lo = max(0.0, center[0] - radius)
        hi = center[0] + radius
        return rng.uniform(lo, hi, size=(count, 1))


class Product(Space):
    """Cartesian product with the max of the factor distances."""

    name = "product"

    def __init__(self, factors: Sequence[Space]):
        if not factors:
            raise BadParameter("product space needs at least one factor")
        self.factors = list(factors)
        self.offsets = np.cumsum([0] + [f.dimension for f in self.factors])
        super().__init__(int(self.offsets[-1]))
        self.properness_radius = min(f.properness_radius for f in self.factors)

    @property
    def tag(self):
        return "product(" + ",".join(f.tag for f in self.factors) + ")"

    def parts(self, x):
        x = np.asarray(x, dtype=float)
        return [x[..., a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def base_array(self):
        return np.concatenate([f.base_array() for f in self.factors])

    def check(self, x):
        super().check(x)
        for f, part in zip(self.factors, self.parts(x)):
            f.check(part)

    def escaped(self, x):
        return any(f.escaped(part) for f, part in zip(self.factors, self.parts(x)))

    def dist(self, x, y):
        ds = [f.dist(a, b) for f, a, b in zip(self.factors, self.parts(x), self.parts(y))]
        return np.max(np.stack(np.broadcast_arrays(*ds), axis=-1), axis=-1)

    def project(self, x):
        return np.concatenate([f.project(p) for f, p in zip(self.factors, self.parts(x))])

    def sample_array(self, rng, count):
        return np.concatenate([f.sample_array(rng, count) for f in self.factors], axis=1)

    def sample_ball(self, rng, center, radius, count):
        return np.concatenate(
            [f.sample_ball(rng, c, radius, count) for f, c in zip(self.factors, self.parts(center))],
            axis=1)


def _positive_dim(spec: SpaceSpec, default: int) -> int:
    dim = default if spec.dim is None else spec.dim
    if dim <= 0:
        raise BadParameter(f"{spec.name}: dimension must be positive, got {dim}")
    return dim


def make_space(spec) -> Space:
    """Build a catalog space from a :class:`SpaceSpec` or its JSON form.

    >>> make_space({"name": "euclidean", "dim": 2}).distance([0, 0], [3, 4])
    5.0
    """
    spec = SpaceSpec.from_json(spec)
    name = spec.name
    if name == "euclidean":
        space = Euclidean(_positive_dim(spec, 1))
    elif name == "integer-lattice":
        space = IntegerLattice(_positive_dim(spec, 1))
    elif name == "circle":
        space = Circle()
    elif name == "poincare-disk":
        space = PoincareDisk()
    elif name == "polydisc":
        space = Polydisc(_positive_dim(spec, 2))
    elif name == "half-line":
        space = HalfLine()
    elif name == "product":
        factors = spec.params.get("factors")
        if not factors:
            raise BadParameter("product space needs params.factors")
        space = Product([make_space(f) for f in factors])
    else:
        raise UnknownSpace(name)
    defects = metric_axiom_defects(space, triples=32, seed=0)
    if max(defects.values()) > TOL_METRIC:
        raise BadParameter(f"{space.tag} failed its metric-axiom self check: {defects}")
    _TAG_CACHE[space.tag] = space
    return space


def metric_axiom_defects(space: Space, triples: int = 1000, seed: int = 0) -> dict:
    """Largest violations of the metric axioms on seeded random triples."""
    rng = np.random.default_rng(seed)
    a = space.sample_array(rng, triples)
    b = space.sample_array(rng, triples)
    c = space.sample_array(rng, triples)
    dab, dba = space.dist(a, b), space.dist(b, a)
    dbc, dac = space.dist(b, c), space.dist(a, c)
    return {
        "identity": float(np.max(np.abs(space.dist(a, a)))),
        "symmetry": float(np.max(np.abs(dab - dba))),
        "triangle": float(np.max(dac - dab - dbc)),
        "nonnegativity": float(np.max(-np.minimum(dab, 0.0))),
    }


@dataclass(frozen=True)
class BallCover:
    centers: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise BadParameter("cover radius must be positive")
        tags = {c.space_tag for c in self.centers}
        if len(tags) > 1:
            raise SpaceMismatch(f"cover centers from several spaces: {sorted(tags)}")

    def __len__(self):
        return len(self.centers)


def covered(p: Point, cover: BallCover, space: Space | None = None) -> bool:
    """True iff ``p`` lies in the open ball of some center of ``cover``."""
    if not cover.centers:
        return False
    if p.space_tag != cover.centers[0].space_tag:
        raise SpaceMismatch(f"{p.space_tag} vs {cover.centers[0].space_tag}")
    if space is None:
        space = space_from_tag(p.space_tag)
    centers = np.array([c.coordinates for c in cover.centers])
    return bool(np.min(space.dist(p.array, centers)) < cover.radius)


def greedy_net_indices(points: np.ndarray, eps: float,
                       dist: Callable[[np.ndarray, np.ndarray], np.ndarray],
                       centers: list[int] | None = None, start: int = 0,
                       stop_on_new: bool = False) -> list[int]:
    """First-fit greedy eps-net over ``points[start:]``.

    ``dist(x, Y)`` must return the distances from one point to a stack of
    points.  ``centers`` seeds the net (indices into ``points``); with
    ``stop_on_new`` the scan returns as soon as it adds a center.
    """
    chosen = list(centers or [])
    n = len(points)
    buf = np.empty((n,) + points.shape[1:], dtype=points.dtype)
    for i, c in enumerate(chosen):
        buf[i] = points[c]
    count = len(chosen)
    for i in range(start, n):
        if count == 0 or np.min(dist(points[i], buf[:count])) >= eps:
            buf[count] = points[i]
            count += 1
            chosen.append(i)
            if stop_on_new and i >= start:
                return chosen
    return chosen


def epsilon_net(points: Sequence[Point], eps: float, space: Space | None = None) -> BallCover:
    """Greedy first-fit eps-net of ``points`` in input order."""
    if not points:
        raise EmptyInput("epsilon_net needs at least one point")
    if not eps > 0:
        raise BadParameter("eps must be positive")
    tags = {p.space_tag for p in points}
    if len(tags) > 1:
        raise SpaceMismatch(f"points from several spaces: {sorted(tags)}")
    if space is None:
        space = space_from_tag(points[0].space_tag)
    arr = np.array([p.coordinates for p in points], dtype=float)
    idx = greedy_net_indices(arr, eps, space.dist)
    return BallCover(tuple(points[i] for i in idx), eps)


def space_from_tag(tag: str) -> Space:
    """Recover a space from a point's tag (spaces register themselves on creation)."""
    try:
        return _TAG_CACHE[tag]
    except KeyError:
        raise UnknownSpace(tag) from None
