import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonexpansive.errors import (AuditInconclusive, BadParameter, IncompatibleSpace,
                                 NotNonexpansive, UnknownMap)
from nonexpansive.maps import (GOLDEN_ANGLE, MapSpec, audit_ball_surjectivity,
                               audit_nonexpansive, compose, iterate, make_map)
from nonexpansive.metric_core import TOL_METRIC

from conftest import dmap, space
from oracles import blaschke_value, from_disk, rotated_point, to_disk

CATALOG = [
    (("euclidean", 1), "scale", {"c": 0.5}),
    (("euclidean", 2), "translation", {"v": [1.0, -2.0]}),
    (("integer-lattice", 1), "translation", {"v": 1}),
    (("circle", None), "rotation", {"theta": 2 * math.pi / 5}),
    (("circle", None), "rotation", {}),
    (("poincare-disk", None), "mobius-hyperbolic", {"a": 0.5}),
    (("poincare-disk", None), "mobius-elliptic", {"theta": 1.0, "a": [0.2, 0.1]}),
    (("poincare-disk", None), "mobius-parabolic", {"t": 1.0}),
    (("poincare-disk", None), "disk-automorphism", {"a": 0.3, "theta": 0.4}),
    (("poincare-disk", None), "blaschke", {"zeros": [0.0, 0.3]}),
    (("half-line", None), "translation", {"v": 2.0}),
    (("polydisc", 2), "product", {"components": [{"name": "mobius-hyperbolic", "params": {"a": 0.2}},
                                                 {"name": "blaschke", "params": {"zeros": [0, 0]}}]}),
]


def test_scale_halves(line):
    assert dmap(line, "scale", c=0.5)(line.point([2.0])).coordinates == (1.0,)


def test_quarter_rotation_has_order_four(circle, rng):
    m = dmap(circle, "rotation", theta=math.pi / 2)
    for x in circle.sample_array(rng, 20):
        p = circle.point(x)
        assert circle.distance(iterate(m, p, 4), p) < 1e-12


def test_hyperbolic_mobius_rule(disk):
    m = dmap(disk, "mobius-hyperbolic", a=0.5)
    z = 0.2 - 0.3j
    w = (z + 0.5) / (1 + 0.5 * z)
    assert np.allclose(m.rule(np.array([z.real, z.imag])), [w.real, w.imag], atol=1e-15)


def test_hyperbolic_mobius_preserves_distances(disk):
    report = audit_nonexpansive(dmap(disk, "mobius-hyperbolic", a=0.5), 1000, seed=0)
    assert report.passed
    assert report.isometry_defect <= TOL_METRIC


def test_unknown_and_incompatible(line, circle):
    with pytest.raises(UnknownMap):
        make_map(MapSpec("twist"), line)
    with pytest.raises(IncompatibleSpace):
        make_map(MapSpec("rotation"), line)
    with pytest.raises(IncompatibleSpace):
        make_map(MapSpec("scale", {"c": 0.5}), circle)


def test_expanding_affine_rejected(line):
    with pytest.raises(NotNonexpansive) as info:
        make_map(MapSpec("affine", {"a": 2.0}), line)
    assert info.value.report.defect > 0


def test_doubling_defect_equals_distance(line):
    m = make_map(MapSpec("affine", {"a": 2.0}), line, audit=False)
    report = audit_nonexpansive(m, 200, seed=3)
    a, b = report.witness
    assert not report.passed
    assert abs(report.defect - line.distance(a, b)) < 1e-9


def test_scale_defect_is_minus_half_distance(line):
    report = audit_nonexpansive(dmap(line, "scale", c=0.5), 200, seed=3)
    a, b = report.witness
    assert report.passed
    assert abs(report.defect + 0.5 * line.distance(a, b)) < 1e-12


def test_blaschke_rule_matches_product(disk, rng):
    m = dmap(disk, "blaschke", zeros=[0.0, 0.3])
    for x in disk.sample_array(rng, 30):
        z = complex(x[0], x[1])
        w = blaschke_value([0j, 0.3 + 0j], 0.0, z)
        assert np.allclose(m.rule(x), [w.real, w.imag], atol=1e-14)


def test_bad_disk_parameters(disk):
    with pytest.raises(BadParameter):
        make_map(MapSpec("mobius-hyperbolic", {"a": 1.2}), disk)
    with pytest.raises(BadParameter):
        make_map(MapSpec("blaschke", {"zeros": [[0.9, 0.9]]}), disk)


class TestIterate:
    def test_scale_three_steps(self, line):
        assert iterate(dmap(line, "scale", c=0.5), line.point([8.0]), 3).coordinates == (1.0,)

    def test_zero_steps(self, disk):
        p = disk.point([0.1, 0.2])
        assert iterate(dmap(disk, "blaschke", zeros=[0.3]), p, 0) == p

    def test_golden_angle_arithmetic(self, circle):
        q = iterate(dmap(circle, "rotation", theta=GOLDEN_ANGLE), circle.point([1, 0]), 1000)
        assert np.allclose(q.coordinates, rotated_point(GOLDEN_ANGLE, 1000), atol=1e-11)

    @given(st.integers(0, 40), st.integers(0, 40))
    def test_semigroup_law_bit_for_bit(self, j, k):
        s = space("poincare-disk")
        m = dmap(s, "mobius-elliptic", theta=0.7, a=0.3)
        p = s.point([0.1, -0.2])
        assert iterate(m, p, j + k) == iterate(m, iterate(m, p, j), k)

    def test_negative_steps(self, line):
        with pytest.raises(BadParameter):
            iterate(dmap(line, "scale"), line.point([1.0]), -1)


@pytest.mark.parametrize("sp,name,params", CATALOG)
@pytest.mark.parametrize("seed", range(5))
def test_catalog_maps_pass_audit(sp, name, params, seed):
    s = space(*sp)
    m = make_map(MapSpec(name, params), s)
    report = audit_nonexpansive(m, 10_000, seed)
    assert report.passed
    if m.claims_isometry:
        assert report.isometry_defect <= TOL_METRIC


def test_composition_stays_nonexpansive(disk, circle):
    pairs = [
        (dmap(disk, "blaschke", zeros=[0.0, 0.3]), dmap(disk, "mobius-hyperbolic", a=0.5)),
        (dmap(disk, "mobius-parabolic", t=0.5), dmap(disk, "mobius-elliptic")),
        (dmap(circle, "rotation", theta=1.0), dmap(circle, "rotation")),
    ]
    for f, g in pairs:
        assert audit_nonexpansive(compose(f, g), 1000, seed=1).passed


class TestBallSurjectivity:
    def test_identity(self, line):
        m = dmap(line, "identity")
        assert audit_ball_surjectivity(m, line.point([1.0]), 2.0, 20, 0).passed

    def test_rotation_against_analytic_inverse(self, circle):
        theta = 0.9
        m = dmap(circle, "rotation", theta=theta)
        report = audit_ball_surjectivity(m, circle.point([1, 0]), 0.5, 20, 0)
        assert report.passed
        q, p = report.witness
        inv = (math.cos(-theta) * q.coordinates[0] - math.sin(-theta) * q.coordinates[1],
               math.sin(-theta) * q.coordinates[0] + math.cos(-theta) * q.coordinates[1])
        assert np.allclose(p.coordinates, inv, atol=1e-6)

    def test_disk_automorphism_against_closed_form_inverse(self, disk):
        a = 0.4 - 0.2j
        m = dmap(disk, "disk-automorphism", a=[a.real, a.imag])
        report = audit_ball_surjectivity(m, disk.point([0, 0]), 1.0, 20, 0)
        assert report.passed
        q, p = report.witness
        expect = from_disk(a)(complex(*q.coordinates))
        assert abs(complex(*p.coordinates) - expect) < 1e-6
        assert abs(to_disk(a)(expect) - complex(*q.coordinates)) < 1e-12

    def test_lattice_translation(self, lattice):
        m = dmap(lattice, "translation", v=3)
        assert audit_ball_surjectivity(m, lattice.point([0]), 4.0, 10, 0).passed

    def test_requires_surjective_isometry(self, line):
        with pytest.raises(BadParameter):
            audit_ball_surjectivity(dmap(line, "scale", c=0.5), line.point([0.0]), 1.0, 5, 0)

    def test_radius_above_properness_radius(self, disk):
        with pytest.raises(BadParameter):
            audit_ball_surjectivity(dmap(disk, "identity"), disk.point([0, 0]), 20.0, 5, 0)

    def test_stalled_search_is_inconclusive(self, disk):
        m = dmap(disk, "disk-automorphism", a=0.3)
        with pytest.raises(AuditInconclusive):
            audit_ball_surjectivity(m, disk.point([0, 0]), 1.0, 3, 0, tol_solve=1e-300)
