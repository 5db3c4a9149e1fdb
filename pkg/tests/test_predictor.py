import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roboost import (
    ABSTAIN,
    CascadePredictor,
    InstanceSpace,
    Labeling,
    MajorityPredictor,
    cascade_predict,
    compose_inverse,
    forced_abstain_region,
    line_metric,
    majority_vote,
    make_metric_ball,
    mask_of,
    points_of,
    relation_from_sets,
    robust_region,
    selective_predict,
)
from conftest import random_labeling, random_relation
from reference import ref_robust_region, ref_selective

LINE5 = InstanceSpace(5, (-1, 1))
BALL5 = make_metric_ball(LINE5, line_metric, 1)
STEP5 = Labeling(LINE5, (-1, -1, -1, 1, 1))


def test_robust_region_constant():
    h = Labeling(LINE5, (1,) * 5)
    assert robust_region(h, BALL5) == LINE5.full_mask


def test_robust_region_step():
    assert points_of(robust_region(STEP5, BALL5)) == {0, 1, 4}


def test_robust_region_gadget_matching_anchors_only():
    space = InstanceSpace(6, (-1, 1))
    rel = relation_from_sets(
        space, [{0, 2}, {1, 2}, {2, 0, 1}, {3, 5}, {4, 5}, {5, 3, 4}]
    )
    # pivot signs (+, -): robust points are exactly the matching anchors
    h = Labeling(space, (1, -1, 1, 1, -1, -1))
    assert points_of(robust_region(h, rel)) == {0, 4}


def test_selective_agreeing_preimage():
    assert selective_predict(STEP5, BALL5, 0) == -1


def test_selective_disagreeing_preimage_abstains():
    assert selective_predict(STEP5, BALL5, 2) is ABSTAIN


def test_selective_constant_never_abstains():
    h = Labeling(LINE5, (1,) * 5)
    for z in range(5):
        assert selective_predict(h, BALL5, z) == 1


def test_selective_empty_preimage_abstains():
    space = InstanceSpace(3, (-1, 1))
    rel = relation_from_sets(space, [{0}, {0, 1}, {2}])  # nothing perturbs to... point 2? itself
    # build one point with an empty preimage
    rel2 = relation_from_sets(space, [{0}, {0}, {0}])
    h = Labeling(space, (1, 1, 1))
    assert selective_predict(h, rel2, 1) is ABSTAIN
    assert selective_predict(h, rel2, 2) is ABSTAIN


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_selective_matches_reference(n, seed):
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n)
    space = rel.space
    h = random_labeling(rng, space)
    sets = [points_of(rel(x)) for x in range(n)]
    for z in range(n):
        assert selective_predict(h, rel, z) is ref_selective(h.labels, sets, z, ABSTAIN) or \
            selective_predict(h, rel, z) == ref_selective(h.labels, sets, z, ABSTAIN)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_robust_region_matches_reference(n, seed):
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n)
    h = random_labeling(rng, rel.space)
    sets = [points_of(rel(x)) for x in range(n)]
    assert points_of(robust_region(h, rel)) == ref_robust_region(h.labels, sets)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_selective_guarantees_hold_exhaustively(n, seed):
    """Dual guarantee: no abstention (and agreement) on the closure-robust
    region; never a wrong label on any perturbation of any point."""
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n)
    h = random_labeling(rng, rel.space)
    closure = compose_inverse(rel)
    rob = robust_region(h, closure)
    for x in range(n):
        for z in points_of(rel(x)):
            out = selective_predict(h, rel, z)
            if (rob >> x) & 1:
                assert out == h(x)
            else:
                assert out is ABSTAIN or out == h(x)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_forced_abstain_is_closure_nonrobust_complement(n, seed):
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n)
    h = random_labeling(rng, rel.space)
    closure = compose_inverse(rel)
    assert forced_abstain_region(h, rel) == rel.space.full_mask & ~robust_region(h, closure)


def test_cascade_first_non_abstain():
    # stage 1 abstains at the pivot, stage 2 answers there
    space = InstanceSpace(3, (-1, 1))
    rel = relation_from_sets(space, [{0, 2}, {1, 2}, {2}])
    h1 = Labeling(space, (1, -1, 1))  # preimage of 2 is {0,1,2}: mixed, abstains
    h2 = Labeling(space, (1, 1, 1))
    cas = CascadePredictor((h1, h2), (rel,))
    assert cascade_predict(cas, 2) == 1
    assert cascade_predict(cas, 0) == 1  # stage 1 already decides


def test_cascade_first_stage_decision_shadows_later():
    space = InstanceSpace(3, (-1, 1))
    rel = relation_from_sets(space, [{0}, {1}, {2}])
    h1 = Labeling(space, (-1, -1, -1))
    h2 = Labeling(space, (1, 1, 1))
    cas = CascadePredictor((h1, h2), (rel,))
    for z in range(3):
        assert cas(z) == -1


def test_cascade_all_abstain_fallback_first_stage():
    space = InstanceSpace(3, (-1, 1))
    rel = relation_from_sets(space, [{0, 1, 2}, {0, 1, 2}, {0, 1, 2}])
    h1 = Labeling(space, (1, -1, 1))  # mixed everywhere: all queries abstain
    h2 = Labeling(space, (-1, 1, -1))
    cas = CascadePredictor((h1, h2), (rel,))
    for z in range(3):
        assert cas(z) == h1(z)
    fixed = CascadePredictor((h1, h2), (rel,), fallback=("fixed", -1))
    assert [fixed(z) for z in range(3)] == [-1, -1, -1]
    last = CascadePredictor((h1, h2), (rel,), fallback="last_stage")
    assert [last(z) for z in range(3)] == [-1, 1, -1]


def test_cascade_stage_property_under_earlier_abstention(rng):
    """If a stage is closure-robust at x and all earlier stages abstain on all
    of U(x), the cascade answers with that stage's label everywhere on U(x)."""
    for seed in range(40):
        r = np.random.default_rng(seed)
        rel = random_relation(r, 24)
        space = rel.space
        h1 = random_labeling(r, space)
        h2 = random_labeling(r, space)
        cas = CascadePredictor((h1, h2), (rel,))
        closure = compose_inverse(rel)
        rob2 = robust_region(h2, closure)
        from roboost import SelectiveClassifier

        sel1 = SelectiveClassifier(h1, rel)
        for x in range(24):
            if not (rob2 >> x) & 1:
                continue
            nb = points_of(rel(x))
            if nb and all(sel1(z) is ABSTAIN for z in nb):
                for z in nb:
                    assert cas(z) == h2(x)


def test_majority_basic():
    space = InstanceSpace(2, (-1, 1))
    votes = [Labeling(space, (1, 1)), Labeling(space, (1, -1)), Labeling(space, (-1, -1))]
    assert majority_vote(votes, 0) == 1
    assert majority_vote([votes[0]], 1) == 1


def test_majority_tie_breaks_to_earliest_label():
    space = InstanceSpace(1, (-1, 1))
    votes = [Labeling(space, (1,)), Labeling(space, (-1,))]
    assert majority_vote(votes, 0) == -1


def test_majority_empty_list_invalid():
    with pytest.raises(ValueError):
        majority_vote([], 0)
    with pytest.raises(ValueError):
        MajorityPredictor((), (-1, 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_majority_odd_binary_never_ties(k, seed):
    rng = np.random.default_rng(seed)
    space = InstanceSpace(4, (-1, 1))
    stages = [random_labeling(rng, space) for _ in range(2 * k - 1)]
    for z in range(4):
        counts = {y: sum(1 for h in stages if h(z) == y) for y in (-1, 1)}
        assert counts[-1] != counts[1]
        winner = majority_vote(stages, z)
        assert counts[winner] > (2 * k - 1) / 2


def test_cascade_determinism():
    space = InstanceSpace(4, (-1, 1))
    rel = relation_from_sets(space, [{0, 1}, {1, 2}, {2, 3}, {3}])
    h1 = Labeling(space, (1, -1, 1, -1))
    h2 = Labeling(space, (-1, -1, 1, 1))
    a = CascadePredictor((h1, h2), (rel,))
    b = CascadePredictor((h1, h2), (rel,))
    assert a.output_vector() == b.output_vector()
