import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roboost import (
    Distribution,
    EmptyEventError,
    InstanceSpace,
    Labeling,
    check_robust_realizable,
    compose_inverse,
    condition,
    grid_metric,
    invert,
    line_metric,
    make_metric_ball,
    mask_of,
    points_of,
    relation_from_sets,
    uniform_distribution,
)
from conftest import random_relation
from reference import ref_ball, ref_compose, ref_invert

LINE5 = InstanceSpace(5, (-1, 1))
LINE7 = InstanceSpace(7, (-1, 1))


def test_space_validation():
    with pytest.raises(ValueError):
        InstanceSpace(0, (-1, 1))
    with pytest.raises(ValueError):
        InstanceSpace(3, (1,))
    with pytest.raises(ValueError):
        InstanceSpace(3, (1, 1))


def test_metric_ball_line_unit():
    rel = make_metric_ball(LINE5, line_metric, 1)
    assert points_of(rel(2)) == {1, 2, 3}
    assert rel.is_reflexive and rel.is_symmetric


def test_metric_ball_zero_radius():
    rel = make_metric_ball(LINE5, line_metric, 0)
    for x in range(5):
        assert points_of(rel(x)) == {x}


def test_metric_ball_boundary_clipping():
    rel = make_metric_ball(LINE5, line_metric, 2)
    assert points_of(rel(0)) == {0, 1, 2}


def test_metric_ball_negative_radius():
    with pytest.raises(ValueError):
        make_metric_ball(LINE5, line_metric, -0.5)


def test_invert_definition_unfolding():
    space = InstanceSpace(2, (-1, 1))
    rel = relation_from_sets(space, [{0, 1}, {1}])
    inv = invert(rel)
    assert points_of(inv(0)) == {0}
    assert points_of(inv(1)) == {0, 1}


def test_invert_symmetric_fixed_point(rng):
    rel = random_relation(rng, 12, symmetric=True)
    assert invert(rel).neighbors == rel.neighbors


def test_invert_involution():
    space = InstanceSpace(2, (-1, 1))
    rel = relation_from_sets(space, [{0, 1}, {1}])
    assert invert(invert(rel)).neighbors == rel.neighbors


def test_compose_inverse_line_interior():
    rel = make_metric_ball(LINE7, line_metric, 1)
    closure = compose_inverse(rel)
    assert points_of(closure(3)) == {1, 2, 3, 4, 5}


def test_compose_inverse_line_boundary():
    # frozen from enumerating U(0)={0,1} and the union of preimages {0,1},{0,1,2}
    rel = make_metric_ball(LINE7, line_metric, 1)
    closure = compose_inverse(rel)
    assert points_of(closure(0)) == {0, 1, 2}


def test_compose_inverse_shared_pivot_gadget():
    # anchor+/anchor- both perturb to the pivot; closure of anchor+ is all three
    space = InstanceSpace(3, (-1, 1))
    rel = relation_from_sets(space, [{0, 2}, {1, 2}, {2, 0, 1}])
    closure = compose_inverse(rel)
    assert points_of(closure(0)) == {0, 1, 2}


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_invert_matches_reference_and_is_involution(n, seed):
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n)
    sets = [points_of(rel(x)) for x in range(n)]
    inv = invert(rel)
    expected = ref_invert(sets)
    for z in range(n):
        assert points_of(inv(z)) == expected[z]
        for x in range(n):
            assert ((rel(x) >> z) & 1) == ((inv(z) >> x) & 1)
    assert invert(inv).neighbors == rel.neighbors


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_compose_inverse_matches_reference(n, seed):
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n)
    sets = [points_of(rel(x)) for x in range(n)]
    closure = compose_inverse(rel)
    expected = ref_compose(sets)
    for x in range(n):
        assert points_of(closure(x)) == expected[x]
    assert closure.is_symmetric


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_compose_inverse_contains_reflexive_relation(n, seed):
    rng = np.random.default_rng(seed)
    rel = random_relation(rng, n, reflexive=True)
    closure = compose_inverse(rel)
    for x in range(n):
        assert rel(x) & ~closure(x) == 0
        assert (closure(x) >> x) & 1


@pytest.mark.parametrize("n,gamma", [(5, 1), (16, 2), (33, 3), (64, 1)])
def test_ball_doubling_on_path_metric(n, gamma):
    space = InstanceSpace(n, (-1, 1))
    ball = make_metric_ball(space, line_metric, gamma)
    doubled = make_metric_ball(space, line_metric, 2 * gamma)
    assert compose_inverse(ball).neighbors == doubled.neighbors


def test_ball_doubling_on_grid_metric():
    space = InstanceSpace(48, (-1, 1))
    metric = grid_metric((6, 8))
    for gamma in (1, 2):
        ball = make_metric_ball(space, metric, gamma)
        doubled = make_metric_ball(space, metric, 2 * gamma)
        assert compose_inverse(ball).neighbors == doubled.neighbors
        assert ref_ball(metric, gamma, 48) == [points_of(ball(x)) for x in range(48)]


def test_distribution_validation():
    with pytest.raises(ValueError):
        Distribution(LINE5, (0.5, 0.5, 0.1, 0.0, 0.0))
    with pytest.raises(ValueError):
        Distribution(LINE5, (1.5, -0.5, 0.0, 0.0, 0.0))
    d = Distribution(LINE5, (0.5, 0.25, 0.25, 0.0, 0.0))
    assert points_of(d.support) == {0, 1, 2}


def test_condition_uniform_restriction():
    d = uniform_distribution(InstanceSpace(4, (-1, 1)))
    c = condition(d, mask_of({1, 3}))
    assert c.mass == (0.0, 0.5, 0.0, 0.5)


def test_condition_full_support_identity():
    d = Distribution(LINE5, (0.2, 0.2, 0.2, 0.2, 0.2))
    c = condition(d, d.support)
    assert c.mass == d.mass


def test_condition_hand_normalization():
    space = InstanceSpace(4, (-1, 1))
    d = Distribution(space, (0.5, 0.25, 0.25, 0.0))
    c = condition(d, mask_of({1, 2, 3}))
    assert c.mass == (0.0, 0.5, 0.5, 0.0)


def test_condition_zero_mass_event():
    d = Distribution(LINE5, (0.5, 0.5, 0.0, 0.0, 0.0))
    with pytest.raises(EmptyEventError):
        condition(d, mask_of({3, 4}))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 32), st.integers(0, 2**32 - 1))
def test_condition_mass_one_support_subset(n, seed):
    from conftest import random_distribution

    rng = np.random.default_rng(seed)
    space = InstanceSpace(n, (-1, 1))
    d = random_distribution(rng, space)
    event = d.support & mask_of(range(0, n, 2))
    if d.mass_of(event) <= 1e-12:
        return
    c = condition(d, event)
    assert abs(math.fsum(c.mass) - 1.0) <= 1e-12
    assert c.support & ~event == 0


def test_robust_realizable_constant_concept(rng):
    rel = random_relation(rng, 10, reflexive=True)
    c = Labeling(rel.space, tuple([1] * 10))
    d = uniform_distribution(rel.space)
    assert check_robust_realizable(d, c, rel)


def test_robust_realizable_line_example():
    rel = make_metric_ball(LINE5, line_metric, 1)
    c = Labeling(LINE5, (-1, -1, -1, 1, 1))
    ok = uniform_distribution(LINE5, [0, 1, 4])
    bad = uniform_distribution(LINE5)
    assert check_robust_realizable(ok, c, rel)
    assert not check_robust_realizable(bad, c, rel)


def test_robust_realizable_gadget_zero_mass_pivot():
    space = InstanceSpace(3, (-1, 1))
    rel = relation_from_sets(space, [{0, 2}, {1, 2}, {2, 0, 1}])
    c = Labeling(space, (1, -1, 1))
    d = Distribution(space, (1.0, 0.0, 0.0))  # mass only on the matching anchor
    assert check_robust_realizable(d, c, rel)


def test_robust_realizable_space_mismatch():
    rel = make_metric_ball(LINE5, line_metric, 1)
    other = InstanceSpace(6, (-1, 1))
    c = Labeling(other, tuple([1] * 6))
    with pytest.raises(ValueError):
        check_robust_realizable(uniform_distribution(other), c, rel)
