import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonexpansive.errors import BadParameter, InternalContradiction, NoRecurrentAnchor
from nonexpansive.limit_group import (DIVERGENT, FiniteSemigroup, accumulation_hausdorff,
                                      accumulation_points, accumulation_vs_group_orbit,
                                      audit_group_structure, audit_mono_to_iso,
                                      check_convergence_criterion, enumerate_semigroups,
                                      estimate_retraction, semigroup_is_group, transfer_bound)
from nonexpansive.maps import GOLDEN_ANGLE, MapSpec, make_map
from nonexpansive.metric_core import make_space
from nonexpansive.orbit_engine import compute_orbit, detect_recurrence, certify_limit_recurrent

from conftest import dmap, space
from oracles import all_associative_tables, rotated_point, satisfies_group_axioms


@pytest.fixture(scope="module")
def scale_est():
    s = space("euclidean", 1)
    m = dmap(s, "scale", c=0.5)
    return m, estimate_retraction(m, [[1.0], [-2.0], [0.0]], 10_000)


@pytest.fixture(scope="module")
def fifth_est():
    s = space("circle")
    m = dmap(s, "rotation", theta=2 * math.pi / 5)
    starts = [[1.0, 0.0], [0.0, 1.0], [math.cos(2.0), math.sin(2.0)]]
    return m, estimate_retraction(m, starts, 10_000)


@pytest.fixture(scope="module")
def golden_est():
    s = space("circle")
    m = dmap(s, "rotation", theta=GOLDEN_ANGLE)
    return m, estimate_retraction(m, [[1.0, 0.0]], 10_000, eps_recur=0.01)


class TestRetraction:
    def test_scale_collapses_to_zero(self, scale_est):
        _, est = scale_est
        assert [a.coordinates for a in est.anchors] == [(0.0,)]
        assert all(abs(v.coordinates[0]) <= 1e-6 for v in est.values)
        assert est.residual <= 1e-6

    def test_fifth_rotation_is_identity_on_sample(self, fifth_est):
        m, est = fifth_est
        assert all(k % 5 == 0 for k in est.return_sequence)
        assert est.return_sequence[:3] == [5, 10, 15]
        for s, v in zip(est.sample, est.values):
            assert m.space.distance(s, v) < 1e-9

    def test_product_rotation_times_scale(self):
        s = make_space({"name": "product", "params": {
            "factors": [{"name": "circle"}, {"name": "euclidean", "dim": 1}]}})
        m = make_map(MapSpec("product", {"components": [
            {"name": "rotation", "params": {"theta": 2 * math.pi / 5}},
            {"name": "scale", "params": {"c": 0.5}}]}), s)
        starts = [[1.0, 0.0, 3.0], [0.0, -1.0, -1.5]]
        est = estimate_retraction(m, starts, 2000)
        assert all(k % 5 == 0 for k in est.return_sequence)
        for st_, v in zip(starts, est.values):
            assert np.allclose(v.coordinates, st_[:2] + [0.0], atol=1e-9)

    def test_compact_starts_get_points(self):
        s = space("poincare-disk")
        m = dmap(s, "mobius-elliptic", theta=2 * math.pi / 6)
        est = estimate_retraction(m, [[0.3, 0.1], [0.0, 0.0]], 3000)
        assert DIVERGENT not in est.values

    def test_divergent_map_has_no_anchor(self, line):
        # bounded and unbounded orbits never coexist for a nonexpansive map,
        # so a divergent sample has nothing to anchor the retraction on
        with pytest.raises(NoRecurrentAnchor):
            estimate_retraction(dmap(line, "translation", v=1.0), [[0.0], [5.0]], 2000)

    def test_hyperbolic_has_no_anchor(self, disk):
        with pytest.raises(NoRecurrentAnchor):
            estimate_retraction(dmap(disk, "mobius-hyperbolic", a=0.5), [[0.0, 0.0]], 1000)

    def test_empty_starts(self, line):
        with pytest.raises(BadParameter):
            estimate_retraction(dmap(line, "scale"), [], 100)

    @pytest.mark.parametrize("fixture", ["scale_est", "fifth_est", "golden_est"])
    def test_idempotent_and_fixes_anchors(self, fixture, request):
        _, est = request.getfixturevalue(fixture)
        assert est.idempotence_defect() <= 1e-3
        assert est.anchor_fixing_defect() <= 1e-3
        assert est.residual <= est.eps_retract

    def test_transfer_bound(self, circle):
        m = dmap(circle, "rotation", theta=GOLDEN_ANGLE)
        a = circle.point([1, 0])
        p = circle.point([math.cos(0.01), math.sin(0.01)])
        from nonexpansive.maps import iterate
        k = 4181
        bound = transfer_bound(circle, a, p, iterate(m, a, k))
        assert circle.distance(iterate(m, p, k), p) <= bound + 1e-12


class TestGroupAudit:
    def test_quarter_rotation_cyclic_of_order_four(self, circle):
        m = dmap(circle, "rotation", theta=math.pi / 2)
        est = estimate_retraction(m, [[1.0, 0.0], [math.cos(1), math.sin(1)]], 10_000)
        audit = audit_group_structure(m, est, 5e-3)
        assert len(audit.element_net) == 4
        # the net is the set of quarter turns applied to the anchors
        exps = sorted(e % 4 for e in audit.exponents)
        assert exps == [0, 1, 2, 3]
        for d in (audit.composition_closure_defect, audit.identity_defect,
                  audit.inverse_defect, audit.generator_defect, audit.isometry_defect):
            assert d <= 1e-9

    def test_golden_rotation_circle_group(self, golden_est):
        m, est = golden_est
        audit = audit_group_structure(m, est, 0.05)
        # a greedy 0.05-net of the circle has between 2 pi / 0.1 and 2 pi / 0.05 points
        assert math.ceil(2 * math.pi / 0.1) <= len(audit.element_net) <= math.ceil(2 * math.pi / 0.05) + 1
        assert audit.composition_closure_defect <= 0.1
        assert audit.inverse_defect <= 0.1
        assert audit.passed(0.1)

    def test_scale_trivial_group(self, scale_est):
        m, est = scale_est
        audit = audit_group_structure(m, est, 5e-3)
        assert len(audit.element_net) == 1
        assert audit.passed(1e-12)


class TestConvergenceCriterion:
    def test_scale(self, scale_est):
        m, est = scale_est
        assert check_convergence_criterion(m, est)

    def test_fifth_rotation(self, fifth_est):
        m, est = fifth_est
        assert check_convergence_criterion(m, est)

    def test_elliptic(self, disk):
        m = dmap(disk, "mobius-elliptic", theta=2 * math.pi / 6, a=0.2)
        est = estimate_retraction(m, [[0.3, 0.1]], 3000)
        assert check_convergence_criterion(m, est)


class TestAccumulation:
    def test_scale(self, scale_est):
        m, est = scale_est
        assert accumulation_hausdorff(m, est, [1.0], 1e-3) == 0.0

    def test_fifth_rotation_exact(self, fifth_est, circle):
        m, est = fifth_est
        acc = accumulation_points(m, circle.point([1, 0]), est.horizon, 1e-3)
        roots = {tuple(np.round(rotated_point(2 * math.pi / 5, k), 9)) for k in range(5)}
        assert {tuple(np.round(p, 9)) for p in acc} == roots
        assert accumulation_hausdorff(m, est, [1.0, 0.0], 1e-3) <= 1e-9

    def test_golden(self, golden_est):
        m, est = golden_est
        assert accumulation_vs_group_orbit(m, est, [1.0, 0.0], 0.05)
        assert accumulation_hausdorff(m, est, [1.0, 0.0], 0.05) <= 0.15


class TestMonoToIso:
    def test_rotation(self, fifth_est):
        m, est = fifth_est
        rep = audit_mono_to_iso(m, est, 64, 0)
        assert rep.passed and rep.defect <= 1e-12

    def test_scale_vacuous(self, scale_est):
        m, est = scale_est
        rep = audit_mono_to_iso(m, est, 64, 0)
        assert rep.passed and rep.details["vacuous"]

    def test_blaschke_attracting_point(self, disk):
        m = dmap(disk, "blaschke", zeros=[0.0, 0.3])
        est = estimate_retraction(m, [[0.5, 0.2], [-0.4, 0.1]], 2000)
        assert len(est.anchors) == 1
        assert audit_mono_to_iso(m, est, 64, 0).details["vacuous"]


def test_recurrent_set_closed_on_circle(circle):
    # certified recurrent points converging to (1, 0): the limit is certified at the same eps
    m = dmap(circle, "rotation", theta=GOLDEN_ANGLE)
    for t in [0.1 / 2 ** j for j in range(5)] + [0.0]:
        o = compute_orbit(m, [math.cos(t), math.sin(t)], 5000)
        cert = detect_recurrence(o, 0.01)
        assert certify_limit_recurrent(o, cert, 0.02)


class TestSemigroups:
    def test_cyclic_three(self):
        t = tuple(tuple((i + j) % 3 for j in range(3)) for i in range(3))
        assert semigroup_is_group(FiniteSemigroup(3, t))

    def test_left_zero(self):
        assert not semigroup_is_group(FiniteSemigroup(2, ((0, 0), (1, 1))))

    def test_full_transformation_monoid(self):
        # maps of {0, 1} as tuples; composition (f * g)(x) = f(g(x))
        maps = list(itertools.product(range(2), repeat=2))
        idx = {f: i for i, f in enumerate(maps)}
        t = tuple(tuple(idx[tuple(f[g[x]] for x in range(2))] for g in maps) for f in maps)
        assert not semigroup_is_group(FiniteSemigroup(4, t))

    def test_rejects_non_associative(self):
        with pytest.raises(BadParameter):
            FiniteSemigroup(2, ((1, 0), (0, 0)))

    @pytest.mark.parametrize("n,count", [(1, 1), (2, 8), (3, 113), (4, 3492)])
    def test_enumeration_counts(self, n, count):
        assert sum(1 for _ in enumerate_semigroups(n)) == count

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_enumeration_matches_brute_force(self, n):
        assert set(enumerate_semigroups(n)) == set(all_associative_tables(n))

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_agrees_with_group_axioms(self, n):
        for t in enumerate_semigroups(n):
            assert semigroup_is_group(FiniteSemigroup(n, t)) == satisfies_group_axioms(t)

    def test_contradiction_is_raised(self, monkeypatch):
        import nonexpansive.limit_group as lg
        monkeypatch.setattr(lg, "_identity_and_inverses", lambda sg: False)
        with pytest.raises(InternalContradiction):
            lg.semigroup_is_group(FiniteSemigroup(1, ((0,),)))

    def test_csv(self, tmp_path):
        p = tmp_path / "z3.csv"
        p.write_text("0,1,2\n1,2,0\n2,0,1\n")
        assert semigroup_is_group(FiniteSemigroup.from_csv(p))
