"""Orbits, their induced metric on the integers, recurrence and the dichotomy verdict.

A finite horizon cannot decide whether an orbit is relatively compact or
compactly divergent, so :func:`classify_orbit` answers with three values and
attaches the numeric evidence it used.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParameter, BudgetExceeded, NotFound
from .maps import DynamicMap
from .metric_core import Point, greedy_net_indices

MAX_HORIZON = 1_000_000
DEFAULT_EPS = 1e-3
DEFAULT_HORIZON = 10_000


class Verdict(str, enum.Enum):
    RELATIVELY_COMPACT = "RelativelyCompact"
    COMPACTLY_DIVERGENT = "CompactlyDivergent"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class OrbitVerdict:
    kind: Verdict
    evidence: dict = field(default_factory=dict)


class Orbit:
    """Cached iterates ``f^0(x0) .. f^K(x0)`` with lazy, memoized pair distances.

    When an iterate leaves the numerically resolvable part of the space
    (for the disk: within 1e-14 of the unit circle) iteration stops and
    ``escaped_at`` records the first such index; all later indices count as
    being infinitely far from every stored point.
    """

    def __init__(self, m: DynamicMap, start: Point, horizon: int, points: np.ndarray,
                 escaped_at: int | None = None):
        self.map = m
        self.space = m.space
        self.start = start
        self.horizon = horizon
        self.points = points
        self.escaped_at = escaped_at
        self._memo: dict[tuple[int, int], float] = {}

    def __len__(self):
        return len(self.points)

    def point(self, k: int) -> Point:
        return self.space.point(self.points[k])

    def pair_distance(self, n: int, m: int) -> float:
        if n > m:
            n, m = m, n
        key = (n, m)
        if key not in self._memo:
            stored = len(self.points)
            if m >= stored:
                d = 0.0 if n == m else math.inf
            else:
                d = float(self.space.dist(self.points[n], self.points[m]))
            self._memo[key] = d
        return self._memo[key]

    def row(self, n: int) -> np.ndarray:
        """Distances from ``f^n(x0)`` to every index ``0..horizon``."""
        out = np.full(self.horizon + 1, math.inf)
        stored = len(self.points)
        if n < stored:
            out[:stored] = self.space.dist(self.points[n], self.points)
        else:
            out[n] = 0.0
        return out

    def distances_from(self, x: np.ndarray) -> np.ndarray:
        out = np.full(self.horizon + 1, math.inf)
        out[:len(self.points)] = self.space.dist(x, self.points)
        return out


def compute_orbit(m: DynamicMap, start, horizon: int, max_horizon: int = MAX_HORIZON) -> Orbit:
    if horizon < 1:
        raise BadParameter("horizon must be >= 1")
    if horizon > max_horizon:
        raise BudgetExceeded(f"horizon {horizon} exceeds the configured maximum {max_horizon}")
    space = m.space
    if not isinstance(start, Point):
        start = space.point(start)
    x = space.as_array(start)
    pts = np.empty((horizon + 1, space.dimension))
    pts[0] = x
    rule = m.rule
    escaped_at = None
    for k in range(1, horizon + 1):
        x = rule(x)
        if space.escaped(x):
            escaped_at = k
            break
        pts[k] = x
    if escaped_at is not None:
        pts = pts[:escaped_at]
    return Orbit(m, start, horizon, pts, escaped_at)


def default_radii(space, start=None) -> list[float]:
    """Geometric radius ladder scaled to the space's properness radius.

    For unbounded spaces the ladder is extended until it exceeds twice the
    distance from the base point to ``start``.
    """
    p = space.properness_radius
    if math.isfinite(p):
        return [p * 2.0 ** -j for j in range(8, -1, -1)]
    radii = [2.0 ** j for j in range(0, 11)]
    if start is not None:
        d0 = space.distance(space.base_point, start)
        while radii[-1] <= 2.0 * d0:
            radii.append(2.0 * radii[-1])
    return radii


def _divergence_evidence(orbit: Orbit, radii) -> dict | None:
    space = orbit.space
    base = space.base_array()
    d = orbit.distances_from(base)
    d0 = d[0]
    if not max(radii) > d0:
        # escape from a ball that never held the start says nothing
        return None
    half = orbit.horizon // 2
    escape_index = []
    for r in radii:
        inside = np.nonzero(d <= r)[0]
        k_r = int(inside[-1]) + 1 if len(inside) else 0
        if k_r > half:
            return None
        escape_index.append(k_r)
    return {"radii": [float(r) for r in radii], "escape_index": escape_index,
            "escaped_at": orbit.escaped_at}


def _compactness_evidence(orbit: Orbit, eps: float) -> dict | None:
    if orbit.escaped_at is not None:
        return None
    pts = orbit.points
    half = (len(pts) - 1) // 2 + 1
    dist = orbit.space.dist
    first = greedy_net_indices(pts[:half], eps, dist)
    # greedy in input order extends the first-half net, so equal sizes
    # mean no second-half iterate opened a new eps-ball
    full = greedy_net_indices(pts, eps, dist, centers=first, start=half, stop_on_new=True)
    if len(full) != len(first):
        return None
    return {"eps": eps, "net_size": len(full), "net_size_half": len(first)}


def classify_orbit(orbit: Orbit, eps: float = DEFAULT_EPS, radii=None) -> OrbitVerdict:
    """Three-valued dichotomy verdict for a computed orbit.

    CompactlyDivergent needs, for every radius ``R``, an index in the first
    half of the horizon after which every iterate stays outside the closed
    ball ``B(base, R)``.  RelativelyCompact needs a greedy net of the first
    half (prefix of length K/2) whose eps-balls already contain the second
    half, i.e. equal net sizes over K/2 and K iterates.  Divergence is tested first, so at most one
    kind of evidence is ever reported.
    """
    if not eps > 0:
        raise BadParameter("eps must be positive")
    space = orbit.space
    if radii is None:
        radii = default_radii(space, orbit.start)
    radii = sorted(float(r) for r in radii)
    if not radii or radii[0] <= 0:
        raise BadParameter("radii must be a nonempty list of positive numbers")
    if math.isfinite(space.properness_radius) and radii[-1] > space.properness_radius:
        raise BadParameter(
            f"radius {radii[-1]} exceeds the properness radius {space.properness_radius:.6g}")
    div = _divergence_evidence(orbit, radii)
    if div is not None:
        return OrbitVerdict(Verdict.COMPACTLY_DIVERGENT, div)
    comp = _compactness_evidence(orbit, eps)
    if comp is not None:
        return OrbitVerdict(Verdict.RELATIVELY_COMPACT, comp)
    return OrbitVerdict(Verdict.INCONCLUSIVE, {
        "horizon": orbit.horizon, "points": len(orbit.points), "eps": eps,
        "radii": radii, "escaped_at": orbit.escaped_at})


@dataclass
class RecurrenceCertificate:
    point: Point
    return_times: list
    gaps_increasing: bool
    return_defects: list
    eps_recur: float = DEFAULT_EPS


def increasing_gap_subsequence(times) -> list[int]:
    """Greedy filter: keep a time only if its gap to the last kept time exceeds the last gap.

    The first two times are always kept.
    """
    kept: list[int] = []
    for t in times:
        if len(kept) < 2:
            kept.append(int(t))
        elif t - kept[-1] > kept[-1] - kept[-2]:
            kept.append(int(t))
    return kept


def detect_recurrence(orbit: Orbit, eps_recur: float = DEFAULT_EPS) -> RecurrenceCertificate:
    """Certificate of eps-returns of ``x0`` with strictly increasing gaps.

    Raises :class:`NotFound` (carrying the smallest return defect) when fewer
    than three gap-increasing return times exist within the horizon.
    """
    if not eps_recur > 0:
        raise BadParameter("eps_recur must be positive")
    row = orbit.row(0)
    tail = row[1:]
    min_defect = float(np.min(tail)) if len(tail) else math.inf
    returns = np.nonzero(tail <= eps_recur)[0] + 1
    kept = increasing_gap_subsequence(returns)
    if len(kept) < 3:
        raise NotFound(f"{len(kept)} gap-increasing returns within eps {eps_recur}", min_defect)
    gaps = np.diff(kept)
    return RecurrenceCertificate(
        point=orbit.start,
        return_times=kept,
        gaps_increasing=bool(np.all(np.diff(gaps) > 0)),
        return_defects=[float(row[k]) for k in kept],
        eps_recur=eps_recur,
    )


def certify_limit_recurrent(orbit: Orbit, cert: RecurrenceCertificate, eps: float) -> bool:
    """Check ``f^(k_{n+1} - k_n)(y)`` returns within ``eps`` of ``y`` for every gap."""
    space = orbit.space
    y = space.as_array(cert.point)
    gaps = np.diff(cert.return_times)
    if len(gaps) == 0:
        return False
    from_start = np.array_equal(y, orbit.points[0])
    rule = orbit.map.rule
    x, done = y, 0
    for g in sorted(set(int(g) for g in gaps)):
        if from_start and g < len(orbit.points):
            x = orbit.points[g]
        else:
            for _ in range(g - done):
                x = rule(x)
        done = g
        if not space.dist(x, y) <= eps:
            return False
    return True
