"""Poincaré distance, analytic chains and chain-based upper bounds for the Kobayashi distance.

Supported targets are the unit disk and the polydisc.  A chain is a list of
links ``(z_j, w_j, phi_j)`` with holomorphic ``phi_j`` from the disk into the
target; consecutive links must meet, ``phi_j(w_j) = phi_{j+1}(z_{j+1})``.
The estimator only ever builds chains and measures them, so its output is
always an upper bound for the Kobayashi distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import hyperbolic
from .errors import BadParameter, BrokenChain, OnBoundary, UnsupportedSpace
from .maps import AuditReport, MapSpec, make_map
from .metric_core import TOL_METRIC, Point, make_space, SpaceSpec

RESTARTS = 3
_STEP_FLOOR = 1e-13
# slack for |lambda_i| <= 1 when t was computed by a differently rounded division
_LAMBDA_SLACK = 1e-14


@dataclass(frozen=True)
class DiskPoint:
    re: float
    im: float

    def __post_init__(self):
        if not math.hypot(self.re, self.im) < 1.0:
            raise BadParameter(f"disk point ({self.re}, {self.im}) is not inside the unit disk")

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)

    @classmethod
    def of(cls, z) -> "DiskPoint":
        if isinstance(z, DiskPoint):
            return z
        if isinstance(z, (list, tuple)):
            return cls(float(z[0]), float(z[1]))
        z = complex(z)
        return cls(z.real, z.imag)


def _guard(*zs):
    for z in zs:
        if abs(z) >= 1.0 - hyperbolic.BOUNDARY_GUARD:
            raise OnBoundary(f"|{z}| is within {hyperbolic.BOUNDARY_GUARD} of the unit circle")


def poincare_distance(z, w) -> float:
    """Poincaré distance ``artanh |z - w| / |1 - conj(z) w|`` between two disk points."""
    z, w = DiskPoint.of(z).z, DiskPoint.of(w).z
    _guard(z, w)
    return hyperbolic.omega(z, w)


@dataclass(frozen=True)
class ChainLink:
    z: complex
    w: complex
    map: Callable[[complex], np.ndarray]
    name: str = "link"

    def image(self, zeta: complex) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.map(zeta), dtype=complex))


@dataclass
class AnalyticChain:
    links: list = field(default_factory=list)

    @property
    def start(self) -> np.ndarray:
        return self.links[0].image(self.links[0].z)

    @property
    def end(self) -> np.ndarray:
        return self.links[-1].image(self.links[-1].w)


def chain_length(chain: AnalyticChain, tol: float = TOL_METRIC) -> float:
    """Sum of the Poincaré lengths of the links; raises :class:`BrokenChain` on a gap."""
    total = 0.0
    for j, link in enumerate(chain.links):
        if j:
            prev = chain.links[j - 1]
            gap = float(np.max(np.abs(prev.image(prev.w) - link.image(link.z))))
            if gap > tol:
                raise BrokenChain(f"links {j - 1} and {j} miss by {gap:.3g}")
        total += poincare_distance(link.z, link.w)
    return total


@dataclass(frozen=True)
class ChainSearchBudget:
    max_links: int = 2
    waypoints: int = 64
    descent_iters: int = 200


# -- templates ---------------------------------------------------------------

def identity_link(a: complex, b: complex) -> ChainLink:
    return ChainLink(a, b, lambda zeta: zeta, "identity")


def scaled_disc_link(p: np.ndarray, q: np.ndarray, t: float) -> ChainLink | None:
    """Link ``0 -> t`` through ``zeta -> (A_i^{-1}(lambda_i zeta))_i`` joining ``p`` to ``q``.

    ``A_i`` moves ``p_i`` to 0 and ``lambda_i = A_i(q_i) / t``.  The link is
    admissible only if every ``|lambda_i| <= 1``; otherwise None.  Moduli
    exceeding 1 by rounding are pulled back onto the unit circle.
    """
    if not t > 0:
        return None
    lam = np.array([hyperbolic.automorphism(pi)(qi) for pi, qi in zip(p, q)]) / t
    mod = np.abs(lam)
    if np.any(mod > 1.0 + _LAMBDA_SLACK):
        return None
    lam = lam / np.maximum(mod, 1.0)
    backs = [hyperbolic.inverse_automorphism(pi) for pi in p]

    def phi(zeta):
        return np.array([g(l * zeta) for g, l in zip(backs, lam)])

    return ChainLink(0j, complex(t), phi, "scaled-disc")


def coordinate_chain(a: np.ndarray, b: np.ndarray) -> AnalyticChain:
    """Move one coordinate at a time along a coordinate disc."""
    links = []
    cur = a.copy()
    for i in range(len(a)):
        if a[i] == b[i]:
            continue
        frozen = cur.copy()

        def phi(zeta, i=i, frozen=frozen):
            out = frozen.copy()
            out[i] = zeta
            return out

        links.append(ChainLink(complex(a[i]), complex(b[i]), phi, f"coordinate-{i}"))
        cur[i] = b[i]
    return AnalyticChain(links)


def _least_scale(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Least admissible ``t`` of the scaled-disc template, ``max_i |A_{p_i}(q_i)|``."""
    return np.max(np.abs((q - p) / (1.0 - np.conj(p) * q)), axis=-1)


def _two_link_lengths(a, b, c):
    # same evaluation order as chain_length on the resulting chain
    return 0.0 + hyperbolic.omega(0.0, _least_scale(a, c)) + hyperbolic.omega(0.0, _least_scale(c, b))


def _waypoints(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Nested low-discrepancy waypoints in the polydisc (prefixes of one Halton sequence)."""
    u = qmc.Halton(d=2 * n, scramble=False, seed=seed).random(count + 1)[1:]
    r = 0.98 * np.sqrt(u[:, 0::2])
    ang = 2 * math.pi * u[:, 1::2]
    return r * np.exp(1j * ang)


def _descend(a, b, c0, iters):
    """Coordinate descent with step halving, run from every waypoint at once.

    Each waypoint follows its own trajectory, independent of the others and
    of ``iters``, so more waypoints or more iterations can only add or
    improve candidates.  A converged trajectory restarts its step size up to
    ``RESTARTS`` times.
    """
    c = c0.copy()
    k, n = c.shape
    best = np.asarray(_two_link_lengths(a, b, c), dtype=float)
    h = np.full(k, 0.25)
    restarts = np.full(k, RESTARTS)
    dirs = np.concatenate([np.eye(n), 1j * np.eye(n)])
    dirs = np.concatenate([dirs, -dirs])
    for _ in range(iters):
        live = h >= _STEP_FLOOR
        if not live.any():
            break
        idx = np.nonzero(live)[0]
        cand = c[idx, None, :] + h[idx, None, None] * dirs[None]
        vals = np.full(cand.shape[:2], np.inf)
        inside = np.all(np.abs(cand) < 0.999, axis=-1)
        if inside.any():
            vals[inside] = _two_link_lengths(a, b, cand[inside])
        j = np.argmin(vals, axis=1)
        v = vals[np.arange(len(idx)), j]
        better = v < best[idx]
        up = idx[better]
        c[up] = cand[better, j[better]]
        best[up] = v[better]
        down = idx[~better]
        h[down] *= 0.5
        again = down[(h[down] < _STEP_FLOOR) & (restarts[down] > 0)]
        h[again] = 0.25
        restarts[again] -= 1
    return best, c


def _coords(space_name: str, x) -> np.ndarray:
    if isinstance(x, Point):
        x = x.coordinates
    if isinstance(x, DiskPoint):
        return np.array([x.z])
    arr = np.asarray(x)
    if np.iscomplexobj(arr):
        return arr.astype(complex).ravel()
    arr = arr.astype(float).ravel()
    if len(arr) % 2:
        raise BadParameter("points must be given as [re, im] pairs")
    return arr[0::2] + 1j * arr[1::2]


def best_chain(space_name: str, a, b, budget: ChainSearchBudget | None = None
               ) -> tuple[float, AnalyticChain]:
    """Shortest chain found by the template search, with its length."""
    budget = budget or ChainSearchBudget()
    if space_name not in ("poincare-disk", "polydisc"):
        raise UnsupportedSpace(f"no chain templates for '{space_name}'")
    za, zb = _coords(space_name, a), _coords(space_name, b)
    if za.shape != zb.shape:
        raise BadParameter("endpoints have different dimensions")
    if space_name == "poincare-disk" and len(za) != 1:
        raise BadParameter("disk points need exactly one complex coordinate")
    _guard(*za, *zb)
    if np.array_equal(za, zb):
        return 0.0, AnalyticChain([])
    iters = budget.descent_iters

    cands: list[AnalyticChain] = []
    if len(za) == 1:
        cands.append(AnalyticChain([identity_link(complex(za[0]), complex(zb[0]))]))
    else:
        cands.append(coordinate_chain(za, zb))
    t = float(_least_scale(za, zb))
    link = scaled_disc_link(za, zb, t)
    if link is not None:
        cands.append(AnalyticChain([link]))

    if budget.max_links >= 2 and budget.waypoints > 0:
        _, ends = _descend(za, zb, _waypoints(len(za), budget.waypoints), iters)
        for c in ends:
            l1 = scaled_disc_link(za, c, float(_least_scale(za, c)))
            l2 = scaled_disc_link(c, zb, float(_least_scale(c, zb)))
            if l1 is not None and l2 is not None:
                cands.append(AnalyticChain([l1, l2]))

    best, best_c = math.inf, None
    for ch in cands:
        try:
            length = chain_length(ch)
        except BrokenChain:
            continue
        if not (np.allclose(ch.start, za, atol=1e-9) and np.allclose(ch.end, zb, atol=1e-9)):
            continue
        if length < best:
            best, best_c = length, ch
    return best, best_c


def kobayashi_upper_bound(space_name: str, a, b, budget: ChainSearchBudget | None = None) -> float:
    """Length of the shortest analytic chain from ``a`` to ``b`` found within ``budget``."""
    return best_chain(space_name, a, b, budget)[0]


def audit_schwarz_pick(map_name: str, pairs: int = 100, seed: int = 0,
                       params: dict | None = None) -> AuditReport:
    """Largest ``omega(f z, f w) - omega(z, w)`` for a holomorphic disk self-map.

    Automorphisms must also preserve distances to within tolerance.
    """
    disk = make_space(SpaceSpec("poincare-disk", 2, {}))
    m = make_map(MapSpec(map_name, dict(params or {})), disk, audit=False)
    rng = np.random.default_rng(seed)
    x = disk.sample_array(rng, pairs)
    y = disk.sample_array(rng, pairs)
    fx = np.array([m.rule(p) for p in x])
    fy = np.array([m.rule(p) for p in y])
    defects = disk.dist(fx, fy) - disk.dist(x, y)
    i = int(np.argmax(defects))
    worst = float(defects[i])
    passed = worst <= TOL_METRIC
    if m.claims_isometry:
        passed = passed and float(np.max(np.abs(defects))) <= TOL_METRIC
    return AuditReport(passed=passed, defect=worst,
                       witness=(disk.point(x[i]), disk.point(y[i])), samples=pairs,
                       min_defect=float(np.min(defects)),
                       details={"automorphism": m.claims_isometry})
