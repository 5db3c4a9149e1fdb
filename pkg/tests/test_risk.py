import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roboost import (
    Distribution,
    InstanceSpace,
    Labeling,
    RiskReport,
    SamplingOracle,
    compose_inverse,
    derive_rng,
    empirical_robust_risk,
    line_metric,
    make_metric_ball,
    natural_error,
    point_mass_distribution,
    relation_from_sets,
    risk_report,
    robust_risk,
    robust_shattering_dim,
    robustness_mass,
    uniform_distribution,
)
from roboost.harness import bitstring_concepts, build_counterexample
from conftest import random_distribution, random_labeling, random_relation
from reference import ref_natural_error, ref_robust_risk, ref_shattered

LINE5 = InstanceSpace(5, (-1, 1))
BALL5 = make_metric_ball(LINE5, line_metric, 1)
STEP5 = Labeling(LINE5, (-1, -1, -1, 1, 1))


def test_robust_risk_zero_on_robust_support():
    d = uniform_distribution(LINE5, [0, 1, 4])
    assert robust_risk(STEP5, d, STEP5, BALL5) == 0.0


def test_robust_risk_point_mass_at_boundary():
    d = point_mass_distribution(LINE5, 2)
    assert robust_risk(STEP5, d, STEP5, BALL5) == 1.0


def test_robust_risk_constant_pair():
    h = Labeling(LINE5, (1,) * 5)
    d = uniform_distribution(LINE5)
    assert robust_risk(h, d, h, BALL5) == 0.0


def test_natural_error_exact_flip_mass():
    d = Distribution(LINE5, (0.25, 0.25, 0.25, 0.25, 0.0))
    h = STEP5.with_flips({1: 1})
    assert natural_error(h, d, STEP5) == 0.25
    assert natural_error(STEP5, d, STEP5) == 0.0


def test_robustness_mass_constant():
    h = Labeling(LINE5, (-1,) * 5)
    assert robustness_mass(h, uniform_distribution(LINE5), BALL5) == 1.0


def test_robustness_mass_step():
    assert robustness_mass(STEP5, uniform_distribution(LINE5), BALL5) == pytest.approx(3 / 5, abs=1e-12)


def test_gadget_sign_average_robustness_is_half():
    scn = build_counterexample(4)
    concepts = bitstring_concepts(scn.space, 4)
    masses = [robustness_mass(h, scn.dist, scn.relation) for h in concepts]
    assert math.fsum(masses) / len(masses) == pytest.approx(0.5, abs=1e-12)


def test_empirical_robust_risk_examples():
    sample = [(0, -1), (1, -1), (4, 1)]
    assert empirical_robust_risk(STEP5, sample, BALL5) == 0.0
    assert empirical_robust_risk(STEP5, [(2, -1)], BALL5) == 1.0
    with pytest.raises(ValueError):
        empirical_robust_risk(STEP5, [], BALL5)


def test_empirical_robust_risk_weighted_matches_definition():
    sample = [(0, -1), (2, -1), (4, 1)]
    weights = [0.2, 0.5, 0.3]
    val = empirical_robust_risk(STEP5, sample, BALL5, weights=weights)
    assert val == pytest.approx(0.5, abs=1e-12)  # only the boundary item errs


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_risks_match_reference(n, seed):
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n)
    space = rel.space
    h = random_labeling(rng, space)
    c = random_labeling(rng, space)
    d = random_distribution(rng, space)
    sets = [set(np.flatnonzero([(rel(x) >> z) & 1 for z in range(n)]).tolist()) for x in range(n)]
    assert robust_risk(h, d, c, rel) == pytest.approx(
        ref_robust_risk(h, list(d.mass), c.labels, sets), abs=1e-12
    )
    assert natural_error(h, d, c) == pytest.approx(
        ref_natural_error(h, list(d.mass), c.labels), abs=1e-12
    )


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_risk_decomposition_inequalities(n, seed):
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n, reflexive=True)
    space = rel.space
    h = random_labeling(rng, space)
    c = random_labeling(rng, space)
    d = random_distribution(rng, space)
    nat = natural_error(h, d, c)
    rob = robust_risk(h, d, c, rel)
    mass = robustness_mass(h, d, rel)
    assert nat <= rob + 1e-12
    assert rob <= nat + (1 - mass) + 1e-12
    closure_mass = robustness_mass(h, d, compose_inverse(rel))
    assert closure_mass <= mass + 1e-12


def test_risk_report_fields_and_validation():
    d = uniform_distribution(LINE5)
    rep = risk_report(STEP5, d, STEP5, BALL5, robustness_relation=compose_inverse(BALL5))
    assert rep.risk_relation == BALL5.name
    assert rep.robustness_relation.endswith(")")
    assert rep.natural_error <= rep.robust_risk
    with pytest.raises(ValueError):
        RiskReport(1.5, 0.0, 0.0, "U", "U")


def test_empirical_converges_to_exact():
    d = Distribution(LINE5, (0.3, 0.25, 0.2, 0.15, 0.1))
    exact = robust_risk(STEP5, d, STEP5, BALL5)
    oracle = SamplingOracle(d, STEP5, rng=derive_rng(99))
    sample = oracle.draw_many(10_000)
    emp = empirical_robust_risk(STEP5, sample, BALL5)
    assert abs(emp - exact) <= 0.02


def test_shattering_single_concept_is_zero():
    scn = build_counterexample(2)
    concepts = bitstring_concepts(scn.space, 2)[:1]
    assert robust_shattering_dim(concepts, scn.relation, cap=2) == 0


@pytest.mark.parametrize("k", [1, 2, 3])
def test_shattering_gadget_truncations(k):
    scn = build_counterexample(k)
    concepts = bitstring_concepts(scn.space, k)
    assert robust_shattering_dim(concepts, scn.relation, cap=k) == k
    # hand-verified witness: the pivots with their anchor pairs
    sets = [set(np.flatnonzero([(scn.relation(x) >> z) & 1 for z in range(scn.space.point_count)]).tolist())
            for x in range(scn.space.point_count)]
    witnesses = [3 * g + 2 for g in range(k)]
    anchors = [(3 * g, 3 * g + 1) for g in range(k)]
    assert ref_shattered(concepts, sets, witnesses, anchors, pos=1, neg=-1)


def test_shattering_cap_limits_search():
    scn = build_counterexample(3)
    concepts = bitstring_concepts(scn.space, 3)
    assert robust_shattering_dim(concepts, scn.relation, cap=2) == 2


def test_shattering_monotone_in_class(rng):
    for seed in range(8):
        r = np.random.default_rng(seed)
        rel = random_relation(r, 10, reflexive=True)
        concepts = [random_labeling(r, rel.space) for _ in range(6)]
        small = robust_shattering_dim(concepts[:3], rel, cap=2)
        large = robust_shattering_dim(concepts, rel, cap=2)
        assert small <= large


def test_shattering_guardrails():
    scn = build_counterexample(2)
    concepts = bitstring_concepts(scn.space, 2)
    with pytest.raises(ValueError):
        robust_shattering_dim(concepts, scn.relation, cap=5)
    big = InstanceSpace(30, (-1, 1))
    rel = make_metric_ball(big, line_metric, 1)
    with pytest.raises(ValueError):
        robust_shattering_dim([Labeling(big, (1,) * 30)], rel, cap=2)
    tri = InstanceSpace(3, (0, 1, 2))
    rel3 = relation_from_sets(tri, [{0}, {1}, {2}])
    with pytest.raises(ValueError):
        robust_shattering_dim([Labeling(tri, (0, 1, 2))], rel3, cap=1)
