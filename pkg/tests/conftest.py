import numpy as np
import pytest

from roboost import InstanceSpace, Labeling, PerturbationRelation, relation_from_sets


def random_relation(rng, n, *, density=0.15, reflexive=False, symmetric=False, allow_empty=True):
    sets = []
    for x in range(n):
        nb = set(np.flatnonzero(rng.random(n) < density).tolist())
        if not allow_empty and not nb:
            nb = {int(rng.integers(n))}
        if reflexive:
            nb.add(x)
        sets.append(nb)
    if symmetric:
        for x in range(n):
            for z in list(sets[x]):
                sets[z].add(x)
    space = InstanceSpace(n, (-1, 1))
    return relation_from_sets(space, sets)


def random_labeling(rng, space):
    return Labeling(space, tuple(space.labels[i] for i in rng.integers(0, len(space.labels), space.point_count)))


def random_distribution(rng, space, support_frac=0.7):
    n = space.point_count
    raw = rng.random(n) * (rng.random(n) < support_frac)
    if raw.sum() == 0:
        raw[int(rng.integers(n))] = 1.0
    raw = raw / raw.sum()
    # push the total to exactly 1.0 under fsum by adjusting the largest entry
    import math

    drift = 1.0 - math.fsum(raw.tolist())
    raw[int(np.argmax(raw))] += drift
    from roboost import Distribution

    return Distribution(space, tuple(raw.tolist()))


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
