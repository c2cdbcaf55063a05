"""Finite-horizon metrics on the integers and the Całka covering lemma.

Balls are open: ``B(n, rho) = {k : d(k, n) < rho}`` and
``E(n, rho)`` is the union of ``B(k, rho)`` for ``k = 0..n``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (BadParameter, BudgetExceeded, CoverFailure, NotInjective,
                     PreconditionUnmet, WrongMonotonicity)
from .metric_core import TOL_METRIC
from .orbit_engine import Orbit

DEFAULT_MIN_BALL_COUNT = 50
SHIFT_AUDIT_ROWS = 64


class ShiftDirection(str, enum.Enum):
    NON_DECREASING = "NonDecreasingShift"
    NON_INCREASING = "NonIncreasingShift"
    INVARIANT = "InvariantShift"


class NatMetric:
    """Symmetric distance table on ``0..horizon`` with a shift-monotonicity label.

    The table is accessed one row at a time through ``row(n)`` so that
    orbit-backed metrics with horizon 10^4 never materialize 10^8 entries.
    """

    def __init__(self, horizon: int, row: Callable[[int], np.ndarray],
                 monotone_dir: ShiftDirection):
        if horizon < 1:
            raise BadParameter("horizon must be >= 1")
        self.horizon = horizon
        self._row = row
        self.monotone_dir = ShiftDirection(monotone_dir)
        self._cache: dict[int, np.ndarray] = {}

    def row(self, n: int) -> np.ndarray:
        r = self._cache.get(n)
        if r is None:
            r = np.asarray(self._row(n), dtype=float)
            if len(self._cache) < 4096:
                self._cache[n] = r
        return r

    def d(self, n: int, m: int) -> float:
        return float(self.row(n)[m])

    # -- constructors ---------------------------------------------------
    @classmethod
    def from_table(cls, table, monotone_dir=None, tol: float = TOL_METRIC) -> "NatMetric":
        t = np.asarray(table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise BadParameter("distance table must be square")
        if np.any(np.abs(np.diag(t)) > tol) or np.any(np.abs(t - t.T) > tol):
            raise BadParameter("distance table must be symmetric with zero diagonal")
        if monotone_dir is None:
            monotone_dir = detect_shift_direction(t, tol)
        return cls(t.shape[0] - 1, lambda n: t[n], monotone_dir)

    @classmethod
    def from_function(cls, f: Callable[[int, int], float], horizon: int,
                      monotone_dir=None) -> "NatMetric":
        idx = np.arange(horizon + 1)
        t = np.array([[f(int(n), int(m)) for m in idx] for n in idx], dtype=float)
        return cls.from_table(t, monotone_dir)

    @classmethod
    def shift_invariant(cls, profile) -> "NatMetric":
        """Metric ``d(n, m) = profile[|n - m|]``."""
        g = np.asarray(profile, dtype=float)
        if g[0] != 0:
            raise BadParameter("profile[0] must be 0")
        h = len(g) - 1
        idx = np.arange(h + 1)
        return cls(h, lambda n: g[np.abs(idx - n)], ShiftDirection.INVARIANT)


def detect_shift_direction(t: np.ndarray, tol: float = TOL_METRIC) -> ShiftDirection:
    diff = t[1:, 1:] - t[:-1, :-1]
    if np.all(np.abs(diff) <= tol):
        return ShiftDirection.INVARIANT
    if np.all(diff >= -tol):
        return ShiftDirection.NON_DECREASING
    if np.all(diff <= tol):
        return ShiftDirection.NON_INCREASING
    raise BadParameter("distance table is not shift-monotone in either direction")


def read_csv_table(path) -> NatMetric:
    """Load a triangular ``n,m,d`` CSV into a :class:`NatMetric`."""
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["n", "m", "d"]:
            raise BadParameter(f"{path}: header must be 'n,m,d'")
        for line, rec in enumerate(reader, start=2):
            try:
                entries.append((int(rec["n"]), int(rec["m"]), float(rec["d"])))
            except (TypeError, ValueError):
                raise BadParameter(f"{path}:{line}: malformed row {rec}") from None
    if not entries:
        raise BadParameter(f"{path}: no rows")
    h = max(max(n, m) for n, m, _ in entries)
    t = np.full((h + 1, h + 1), np.nan)
    np.fill_diagonal(t, 0.0)
    for n, m, d in entries:
        if n < 0 or m < 0 or d < 0:
            raise BadParameter(f"{path}: negative entry ({n}, {m}, {d})")
        t[n, m] = t[m, n] = d
    if np.isnan(t).any():
        n, m = map(int, np.argwhere(np.isnan(t))[0])
        raise BadParameter(f"{path}: missing entry for pair ({n}, {m})")
    return NatMetric.from_table(t)


def write_csv_table(nm: NatMetric, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "m", "d"])
        for n in range(nm.horizon + 1):
            r = nm.row(n)
            for m in range(n, nm.horizon + 1):
                w.writerow([n, m, repr(float(r[m]))])


def from_orbit(orbit: Orbit, audit_rows: int = SHIFT_AUDIT_ROWS, seed: int = 0) -> NatMetric:
    """Induced metric ``d(n, m) = dist(f^n x0, f^m x0)`` on ``0..horizon``.

    Refuses orbits that repeat a point (pseudo-metric) with
    :class:`NotInjective`.  The label is InvariantShift only for maps that
    claim to be isometries and pass an equality audit on sampled rows.
    """
    if orbit.escaped_at is not None:
        raise BadParameter(f"orbit left the resolvable space at index {orbit.escaped_at}")
    pts = orbit.points
    dist = orbit.space.dist
    h = orbit.horizon
    for n in range(h):
        r = dist(pts[n], pts[n + 1:])
        j = int(np.argmin(r))
        if r[j] <= TOL_METRIC:
            raise NotInjective(f"f^{n}(x0) and f^{n + 1 + j}(x0) coincide", (n, n + 1 + j))

    def row(n):
        return dist(pts[n], pts)

    direction = ShiftDirection.NON_INCREASING
    if orbit.map.claims_isometry:
        rng = np.random.default_rng(seed)
        rows = np.unique(np.concatenate([[0, h - 1], rng.integers(0, h, size=audit_rows)]))
        if all(np.all(np.abs(row(n + 1)[1:] - row(n)[:-1]) <= TOL_METRIC) for n in rows):
            direction = ShiftDirection.INVARIANT
    return NatMetric(h, row, direction)


def _require_direction(nm: NatMetric):
    if nm.monotone_dir == ShiftDirection.NON_INCREASING:
        raise WrongMonotonicity(
            "the covering lemma needs d(n+1, m+1) >= d(n, m); this metric only shrinks under "
            "the shift (reduce to the isometric case first)")


@dataclass
class CalkaReport:
    rho: float
    ball0_count: int
    N: int | None = None
    M: int | None = None
    conclusion_verified_to: int = -1

    def to_json(self) -> dict:
        return {"rho": self.rho, "ball0_count": self.ball0_count, "N": self.N, "M": self.M,
                "conclusion_verified_to": self.conclusion_verified_to}


def check_hypothesis(nm: NatMetric, rho: float,
                     min_ball_count: int = DEFAULT_MIN_BALL_COUNT) -> tuple[int | None, int]:
    """Return ``(N, ball0_count)`` with ``N`` least such that ``B(0, rho)`` lies in ``E(N, rho/2)``.

    ``N`` is None when ``B(0, rho)`` has fewer than ``min_ball_count``
    members within the horizon (the finite stand-in for an infinite ball) or
    when no ``N`` in the first half of the horizon works: a cover that needs
    almost every index is an artifact of truncating an infinite ball.
    """
    _require_direction(nm)
    if not rho > 0:
        raise BadParameter("rho must be positive")
    ball0 = np.nonzero(nm.row(0) < rho)[0]
    count = len(ball0)
    if count < min_ball_count:
        return None, count
    uncovered = ball0
    for n in range(nm.horizon // 2 + 1):
        uncovered = uncovered[~(nm.row(n)[uncovered] < rho / 2)]
        if len(uncovered) == 0:
            return n, count
    return None, count


def covering_index(nm: NatMetric, rho: float, N: int) -> int:
    """Least ``M > N`` with ``d(0, M) < rho/2``, the index the lemma's proof uses."""
    r0 = nm.row(0)
    cands = np.nonzero(r0[N + 1:] < rho / 2)[0]
    if len(cands) == 0:
        raise BudgetExceeded(f"no M in ({N}, {nm.horizon}] with d(0, M) < {rho / 2}")
    return int(N + 1 + cands[0])


def uncovered_by(nm: NatMetric, rho: float, M: int) -> np.ndarray:
    """Indices ``n <= horizon`` not in ``E(M, rho)``."""
    rest = np.arange(nm.horizon + 1)
    for k in range(M + 1):
        rest = rest[~(nm.row(k)[rest] < rho)]
        if len(rest) == 0:
            break
    return rest


def find_covering_M(nm: NatMetric, rho: float, N: int,
                    min_ball_count: int = DEFAULT_MIN_BALL_COUNT) -> CalkaReport:
    """Pick ``M`` as in the lemma's proof and verify ``E(M, rho)`` covers the horizon.

    Raises :class:`CoverFailure` with the least uncovered index otherwise.
    """
    _require_direction(nm)
    count = int(np.sum(nm.row(0) < rho))
    M = covering_index(nm, rho, N)
    rest = uncovered_by(nm, rho, M)
    if len(rest):
        raise CoverFailure(f"index {int(rest[0])} is not in E({M}, {rho})", int(rest[0]))
    return CalkaReport(rho=rho, ball0_count=count, N=N, M=M, conclusion_verified_to=nm.horizon)


def run_lemma(nm: NatMetric, rho: float,
              min_ball_count: int = DEFAULT_MIN_BALL_COUNT) -> CalkaReport:
    """Hypothesis check followed by the cover verification when it applies."""
    N, count = check_hypothesis(nm, rho, min_ball_count)
    if N is None:
        return CalkaReport(rho=rho, ball0_count=count)
    return find_covering_M(nm, rho, N, min_ball_count)


def _union_mask(nm: NatMetric, n: int, rho: float) -> np.ndarray:
    mask = np.zeros(nm.horizon + 1, dtype=bool)
    for k in range(n + 1):
        mask |= nm.row(k) < rho
    return mask


def sublemma_check(nm: NatMetric, n: int, nu: int, m: int, rho: float,
                   tol: float = TOL_METRIC) -> bool:
    """Check the sublemma's conclusions ``nu < m - n`` and ``d(m-n, 0) <= d(m, n) < rho``.

    Raises :class:`PreconditionUnmet` naming the first failing hypothesis.
    The inequality ``d(m-n, 0) <= d(m, n)`` is tested up to ``tol``.
    """
    if nm.monotone_dir == ShiftDirection.NON_INCREASING:
        raise PreconditionUnmet("metric is NonIncreasingShift", "monotone_dir")
    if not (0 <= n < nu < m <= nm.horizon):
        raise PreconditionUnmet(f"need n < nu < m <= horizon, got {(n, nu, m)}", "order")
    if _union_mask(nm, n, rho)[nu]:
        raise PreconditionUnmet(f"nu={nu} lies in E({n}, {rho})", "nu_outside_E")
    dmn = nm.d(m, n)
    if not dmn < rho:
        raise PreconditionUnmet(f"m={m} is not in B({n}, {rho})", "m_in_ball")
    return bool(nu < m - n and nm.d(m - n, 0) <= dmn + tol and dmn < rho)


def scan_sublemma(nm: NatMetric, rho: float, horizon: int | None = None,
                  tol: float = TOL_METRIC) -> dict:
    """Evaluate the sublemma on every admissible triple ``n < nu < m <= horizon``.

    Per ``n`` the admissible ``nu`` and ``m`` sets are masks, so the triple
    count is exact while the work stays quadratic.  Returns the number of
    admissible triples and the first failing triple, if any.
    """
    if nm.monotone_dir == ShiftDirection.NON_INCREASING:
        raise PreconditionUnmet("metric is NonIncreasingShift", "monotone_dir")
    h = nm.horizon if horizon is None else min(horizon, nm.horizon)
    idx = np.arange(h + 1)
    row0 = nm.row(0)[:h + 1]
    e_mask = np.zeros(h + 1, dtype=bool)
    triples = 0
    first_failure = None
    for n in range(h + 1):
        rn = nm.row(n)[:h + 1]
        e_mask |= rn < rho
        nu_ok = (~e_mask) & (idx > n)
        ms = np.nonzero((rn < rho) & (idx > n))[0]
        if not len(ms) or not nu_ok.any():
            continue
        cum = np.cumsum(nu_ok)
        nus_idx = np.nonzero(nu_ok)[0]
        for m in ms:
            k = int(cum[m - 1])
            if k == 0:
                continue
            triples += k
            largest_nu = int(nus_idx[k - 1])
            dmn = rn[m]
            if not (largest_nu < m - n and row0[m - n] <= dmn + tol) and first_failure is None:
                first_failure = (n, largest_nu, int(m))
    return {"triples": triples, "passed": first_failure is None, "first_failure": first_failure}
