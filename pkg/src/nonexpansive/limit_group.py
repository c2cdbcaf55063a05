"""Limit retraction, the group of iterate limits, and the finite-semigroup group oracle.

Limit maps are handled through their restriction to a finite set of
certified recurrent anchors: a limit map ``lim f^{m_n}`` is sampled as the
table ``f^m(anchors)`` for an exponent ``m`` past the last simultaneous
return time.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadParameter, BudgetExceeded, InternalContradiction,
                     NoRecurrentAnchor, NotFound)
from .maps import AuditReport, DynamicMap
from .metric_core import TOL_METRIC, Point, greedy_net_indices
from .orbit_engine import (DEFAULT_EPS, DEFAULT_HORIZON, Verdict, classify_orbit,
                           compute_orbit, certify_limit_recurrent, detect_recurrence)

EPS_RETRACT = 1e-3
EPS_GROUP = 5e-3
CONVERGENCE_WINDOW = 64
GROUP_SAMPLE = 512
MIN_LATER_RETURNS = 3


class _Divergent:
    """Value of the extended retraction on compactly divergent starts."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DIVERGENT"


DIVERGENT = _Divergent()


def _iterate_array(rule, x: np.ndarray, k: int) -> np.ndarray:
    for _ in range(k):
        x = rule(x)
    return x


def _orbit_array(rule, x: np.ndarray, length: int) -> np.ndarray:
    out = np.empty((length + 1,) + x.shape)
    out[0] = x
    for k in range(1, length + 1):
        x = rule(x)
        out[k] = x
    return out


@dataclass
class RetractionEstimate:
    map: DynamicMap
    sample: list
    anchors: list
    return_sequence: list
    values: list
    residual: float
    horizon: int
    eps_retract: float
    verdicts: list = field(default_factory=list)

    @property
    def k_last(self) -> int:
        return self.return_sequence[-1]

    def anchor_array(self) -> np.ndarray:
        return np.array([a.coordinates for a in self.anchors], dtype=float)

    def apply(self, x) -> Point:
        """``f^{k_last}(x)``, the estimate of ``rho`` at an arbitrary point."""
        space = self.map.space
        return space.point(_iterate_array(self.map.rule, space.as_array(x), self.k_last))

    def idempotence_defect(self) -> float:
        space = self.map.space
        worst = 0.0
        for v in self.values:
            if v is DIVERGENT:
                continue
            worst = max(worst, space.distance(self.apply(v), v))
        return worst

    def anchor_fixing_defect(self) -> float:
        space = self.map.space
        return max(space.distance(self.apply(a), a) for a in self.anchors)

    def to_json(self) -> dict:
        return {
            "anchors": [list(a.coordinates) for a in self.anchors],
            "return_sequence_head": self.return_sequence[:32],
            "return_count": len(self.return_sequence),
            "k_last": self.k_last,
            "residual": self.residual,
            "values": [None if v is DIVERGENT else list(v.coordinates) for v in self.values],
            "verdicts": [v.value for v in self.verdicts],
        }


def _certified_anchor(m: DynamicMap, x: np.ndarray, horizon: int, eps_recur: float):
    orbit = compute_orbit(m, m.space.point(x), horizon)
    if orbit.escaped_at is not None:
        return None
    try:
        cert = detect_recurrence(orbit, eps_recur)
    except NotFound:
        return None
    # two returns within eps_recur put their gap within 2 eps_recur of a return
    return cert.point if certify_limit_recurrent(orbit, cert, 2 * eps_recur) else None


def estimate_retraction(m: DynamicMap, starts, horizon: int = DEFAULT_HORIZON,
                        eps_retract: float = EPS_RETRACT, eps_recur: float | None = None,
                        eps_classify: float = DEFAULT_EPS) -> RetractionEstimate:
    """Estimate the limit retraction from a sample of starts.

    Anchor candidates are the non-divergent starts and, for those that are
    not themselves recurrent, the last iterate ``f^K(start)``.  A candidate
    becomes an anchor when it carries a recurrence certificate at
    ``eps_recur`` (default ``eps_retract``).  The return sequence is the set
    of exponents at which every anchor is back within ``eps_retract``.
    """
    if not starts:
        raise BadParameter("starts must be nonempty")
    if not eps_retract > 0:
        raise BadParameter("eps_retract must be positive")
    eps_recur = eps_retract if eps_recur is None else eps_recur
    space = m.space
    sample = [s if isinstance(s, Point) else space.point(s) for s in starts]
    verdicts = []
    anchors: list[np.ndarray] = []

    def add_anchor(p: Point):
        a = p.array
        if all(space.dist(a, b) > eps_retract for b in anchors):
            anchors.append(a)

    for s in sample:
        orbit = compute_orbit(m, s, horizon)
        verdict = classify_orbit(orbit, eps_classify).kind
        verdicts.append(verdict)
        if verdict == Verdict.COMPACTLY_DIVERGENT:
            continue
        a = _certified_anchor(m, s.array, horizon, eps_recur)
        if a is None and orbit.escaped_at is None:
            a = _certified_anchor(m, orbit.points[-1], horizon, eps_recur)
        if a is not None:
            add_anchor(a)
    if not anchors:
        raise NoRecurrentAnchor(f"no start (or orbit end) is recurrent within eps {eps_recur}")

    common = np.ones(horizon + 1, dtype=bool)
    common[0] = False
    for a in anchors:
        pts = _orbit_array(m.rule, a, horizon)
        common &= space.dist(a, pts) <= eps_retract
    returns = [int(k) for k in np.nonzero(common)[0]]
    if not returns:
        raise BudgetExceeded(f"no simultaneous return of {len(anchors)} anchors within {horizon}")
    k_last = returns[-1]

    anchor_pts = [space.point(a) for a in anchors]
    residual = max(space.distance(space.point(_iterate_array(m.rule, a, k_last)), p)
                   for a, p in zip(anchors, anchor_pts))
    values = []
    for s, v in zip(sample, verdicts):
        if v == Verdict.COMPACTLY_DIVERGENT:
            values.append(DIVERGENT)
        else:
            values.append(space.point(_iterate_array(m.rule, s.array, k_last)))
    return RetractionEstimate(m, sample, anchor_pts, returns, values, residual, horizon,
                              eps_retract, verdicts)


def transfer_bound(space, a, p, fk_a) -> float:
    """Upper bound on ``d(f^k p, p)`` from a near-return of ``a``, for nonexpansive ``f``.

    ``d(f^k p, p) <= d(f^k p, f^k a) + d(f^k a, a) + d(a, p) <= 2 d(a, p) + d(f^k a, a)``.
    """
    return 2.0 * space.distance(a, p) + space.distance(fk_a, a)


@dataclass
class GroupAudit:
    element_net: list
    exponents: list
    composition_closure_defect: float
    identity_defect: float
    inverse_defect: float
    generator_defect: float
    isometry_defect: float

    def passed(self, eps_group: float = EPS_GROUP) -> bool:
        return max(self.composition_closure_defect, self.identity_defect,
                   self.inverse_defect, self.generator_defect) <= eps_group

    def to_json(self) -> dict:
        return {
            "net_size": len(self.element_net),
            "exponents": self.exponents,
            "composition_closure_defect": self.composition_closure_defect,
            "identity_defect": self.identity_defect,
            "inverse_defect": self.inverse_defect,
            "generator_defect": self.generator_defect,
            "isometry_defect": self.isometry_defect,
        }


class _AnchorTables:
    """``f^m(anchors)`` for ``0 <= m <= length``, one orbit per anchor."""

    def __init__(self, m: DynamicMap, anchors: np.ndarray, length: int):
        self.space = m.space
        self.tables = np.stack([_orbit_array(m.rule, a, length) for a in anchors], axis=1)

    def __getitem__(self, m):
        return self.tables[m]

    def sup_dist(self, t: np.ndarray, many: np.ndarray) -> np.ndarray:
        return np.max(self.space.dist(t, many), axis=-1)


def audit_group_structure(m: DynamicMap, est: RetractionEstimate, net_eps: float = EPS_GROUP,
                          sample: int = GROUP_SAMPLE, seed: int = 0) -> GroupAudit:
    """Audit the group structure of the sampled limit maps on the anchors.

    Candidate elements are ``f^m`` for ``m = k_last + j`` with ``j < sample``
    plus as many seeded exponents from ``[k_last, k_last + 4 sample)``.  The
    generator ``f o rho`` has powers ``f^p o rho``, i.e. exponents
    ``k_last + p`` for ``1 <= p <= sample``.
    """
    if not net_eps > 0:
        raise BadParameter("net_eps must be positive")
    k = est.k_last
    rng = np.random.default_rng(seed)
    extra = rng.integers(0, 4 * sample, size=sample)
    offsets = np.unique(np.concatenate([np.arange(sample), extra]))
    offsets = np.concatenate([np.arange(sample), offsets[offsets >= sample]])
    anchors = est.anchor_array()
    top = int(2 * (k + offsets.max()))
    tabs = _AnchorTables(m, anchors, top)
    cand = tabs[k + offsets]
    net_local = greedy_net_indices(cand, net_eps, tabs.sup_dist)
    exps = [int(k + offsets[i]) for i in net_local]
    net = cand[net_local]

    def to_net(t):
        return float(np.min(tabs.sup_dist(t, net)))

    closure = 0.0
    inverse = 0.0
    for e1 in exps:
        best_inv = math.inf
        for e2 in exps:
            comp = tabs[e1 + e2]
            closure = max(closure, to_net(comp))
            best_inv = min(best_inv, float(tabs.sup_dist(anchors, comp[None])[0]))
        inverse = max(inverse, best_inv)
    identity = to_net(anchors)
    powers = tabs[k + np.arange(1, sample + 1)]
    generator = max(float(np.min(tabs.sup_dist(t, powers))) for t in net)

    space = m.space
    base = space.dist(anchors[:, None, :], anchors[None, :, :])
    iso = 0.0
    for t in net:
        iso = max(iso, float(np.max(np.abs(space.dist(t[:, None, :], t[None, :, :]) - base))))
    return GroupAudit(
        element_net=[[space.point(x) for x in t] for t in net],
        exponents=exps,
        composition_closure_defect=closure,
        identity_defect=identity,
        inverse_defect=inverse,
        generator_defect=generator,
        isometry_defect=iso,
    )


def check_convergence_criterion(m: DynamicMap, est: RetractionEstimate,
                                horizon: int | None = None, eps: float = EPS_RETRACT,
                                window: int = CONVERGENCE_WINDOW) -> bool:
    """Compare "every anchor is fixed" with "iterates settle on the retraction".

    The second side asks ``f^k(x)`` to stay within ``eps`` of ``rho(x)`` for
    every non-divergent start and all ``k`` in ``[horizon, horizon + window]``.
    Returns whether the two sides agree.
    """
    space = m.space
    horizon = est.horizon if horizon is None else horizon
    fixed = all(space.dist(m.rule(a.array), a.array) <= eps for a in est.anchors)
    converges = True
    for s, v in zip(est.sample, est.values):
        if v is DIVERGENT:
            continue
        x = _iterate_array(m.rule, s.array, horizon)
        tail = _orbit_array(m.rule, x, window)
        if np.max(space.dist(v.array, tail)) > eps:
            converges = False
            break
    return fixed == converges


def _hausdorff(space, a: np.ndarray, b: np.ndarray) -> float:
    d = space.dist(a[:, None, :], b[None, :, :])
    return float(max(np.max(np.min(d, axis=1)), np.max(np.min(d, axis=0))))


def accumulation_points(m: DynamicMap, start, horizon: int, eps: float,
                        min_returns: int = MIN_LATER_RETURNS) -> np.ndarray:
    """Tail iterates (index >= K/2) with at least ``min_returns`` later eps-returns."""
    space = m.space
    pts = _orbit_array(m.rule, space.as_array(start), horizon)
    tail = pts[horizon // 2:]
    keep = []
    for i, x in enumerate(tail):
        later = tail[i + 1:]
        if len(later) and np.count_nonzero(space.dist(x, later) <= eps) >= min_returns:
            keep.append(i)
    return tail[keep]


def accumulation_hausdorff(m: DynamicMap, est: RetractionEstimate, start, eps: float,
                           audit: GroupAudit | None = None) -> float:
    """Hausdorff distance between orbit accumulation points and ``G . rho(start)``."""
    space = m.space
    start = start if isinstance(start, Point) else space.point(start)
    rho_x = est.apply(start)
    if audit is None:
        audit = audit_group_structure(m, est, net_eps=eps)
    acc = accumulation_points(m, start, est.horizon, eps)
    if len(acc) == 0:
        return math.inf
    # each net element is f^e, so g(rho(x)) = f^e(rho(x))
    top = max(audit.exponents)
    orbit = _orbit_array(m.rule, rho_x.array, top)
    group_orbit = orbit[audit.exponents]
    return _hausdorff(space, acc, group_orbit)


def accumulation_vs_group_orbit(m: DynamicMap, est: RetractionEstimate, start, eps: float,
                                audit: GroupAudit | None = None) -> bool:
    start = start if isinstance(start, Point) else m.space.point(start)
    for s, v in zip(est.sample, est.values):
        if v is DIVERGENT and s == start:
            raise BadParameter("start is compactly divergent")
    return accumulation_hausdorff(m, est, start, eps, audit) <= 3 * eps


def audit_mono_to_iso(m: DynamicMap, est: RetractionEstimate, pairs: int = 64,
                      seed: int = 0) -> AuditReport:
    """Isometry defect of ``f`` on sampled anchor pairs.

    Passes when the largest ``|d(f a, f b) - d(a, b)|`` is at most
    ``2 residual + tol``.  A single anchor passes vacuously.
    """
    space = m.space
    anchors = est.anchor_array()
    bound = 2 * est.residual + TOL_METRIC
    if len(anchors) < 2:
        return AuditReport(passed=True, defect=0.0, samples=0, details={"vacuous": True,
                                                                         "bound": bound})
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(anchors), size=pairs)
    j = rng.integers(0, len(anchors), size=pairs)
    a, b = anchors[i], anchors[j]
    fa = np.array([m.rule(x) for x in a])
    fb = np.array([m.rule(x) for x in b])
    defects = np.abs(space.dist(fa, fb) - space.dist(a, b))
    w = int(np.argmax(defects))
    worst = float(defects[w])
    return AuditReport(passed=worst <= bound, defect=worst,
                       witness=(space.point(a[w]), space.point(b[w])), samples=pairs,
                       details={"vacuous": False, "bound": bound})


# -- finite semigroups -------------------------------------------------------

@dataclass(frozen=True)
class FiniteSemigroup:
    order: int
    table: tuple

    def __post_init__(self):
        n = self.order
        t = tuple(tuple(int(v) for v in row) for row in self.table)
        object.__setattr__(self, "table", t)
        if n < 1 or len(t) != n or any(len(r) != n for r in t):
            raise BadParameter(f"table must be {n}x{n}")
        if any(not 0 <= v < n for r in t for v in r):
            raise BadParameter("table entries must lie in 0..order-1")
        for x, y, z in itertools.product(range(n), repeat=3):
            if t[t[x][y]][z] != t[x][t[y][z]]:
                raise BadParameter(f"not associative at {(x, y, z)}")

    def mul(self, x: int, y: int) -> int:
        return self.table[x][y]

    @classmethod
    def from_csv(cls, path) -> "FiniteSemigroup":
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    try:
                        rows.append([int(v) for v in line.split(",")])
                    except ValueError:
                        raise BadParameter(f"{path}: non-integer entry in {line!r}") from None
        return cls(len(rows), tuple(map(tuple, rows)))


def _identity_and_inverses(sg: FiniteSemigroup) -> bool:
    n, t = sg.order, sg.table
    for e in range(n):
        if all(t[e][x] == x and t[x][e] == x for x in range(n)):
            return all(any(t[x][y] == e and t[y][x] == e for y in range(n)) for x in range(n))
    return False


def semigroup_is_group(sg: FiniteSemigroup) -> bool:
    """Two-sided divisibility test ``h = u g = g v``, cross-checked against the group axioms."""
    n, t = sg.order, sg.table
    left = [set(t[u][g] for u in range(n)) for g in range(n)]
    right = [set(t[g][v] for v in range(n)) for g in range(n)]
    divisible = all(len(left[g]) == n and len(right[g]) == n for g in range(n))
    if divisible and not _identity_and_inverses(sg):
        raise InternalContradiction("divisible semigroup without identity and inverses")
    return divisible


def enumerate_semigroups(n: int):
    """Yield every associative table on ``{0..n-1}`` (labelled, not up to isomorphism)."""
    if n < 1:
        raise BadParameter("order must be >= 1")
    cells = [(x, y) for x in range(n) for y in range(n)]
    t = [[-1] * n for _ in range(n)]

    def ok(x: int, y: int, z: int) -> bool:
        xy, yz = t[x][y], t[y][z]
        if xy < 0 or yz < 0:
            return True
        l, r = t[xy][z], t[x][yz]
        return l < 0 or r < 0 or l == r

    def consistent(a: int, b: int) -> bool:
        # only associativity instances that read cell (a, b) can have changed
        r = range(n)
        return (all(ok(a, b, z) for z in r) and all(ok(x, a, b) for x in r)
                and all(ok(x, y, b) for x in r for y in r if t[x][y] == a)
                and all(ok(a, y, z) for y in r for z in r if t[y][z] == b))

    def rec(i: int):
        if i == len(cells):
            yield tuple(tuple(r) for r in t)
            return
        a, b = cells[i]
        for v in range(n):
            t[a][b] = v
            if consistent(a, b):
                yield from rec(i + 1)
        t[a][b] = -1

    yield from rec(0)
