"""Exact and empirical risk functionals, plus the robust shattering dimension.

All measure computations iterate over the support of the distribution only
and accumulate with compensated summation, so results are exact up to float
rounding (compared with tolerance PROB_TOL).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .space import (
    Distribution,
    Labeling,
    PerturbationRelation,
    PROB_TOL,
    bits,
)
from .predictor import robust_region

LabeledSample = Sequence[tuple[int, object]]


def as_predictor(predictor) -> Callable[[int], object]:
    """Accepts a Labeling, an expansion wrapper, or any point -> label callable."""
    if callable(predictor):
        return predictor
    raise TypeError(f"not a predictor: {predictor!r}")


def _errs_at(predict: Callable[[int], object], nb: int, truth) -> bool:
    """Whether some point of the bitmask nb is predicted differently from truth."""
    for z in bits(nb):
        if predict(z) != truth:
            return True
    return False


def robust_risk(
    predictor,
    dist: Distribution,
    concept: Labeling,
    relation: PerturbationRelation,
) -> float:
    """Mass of natural points with some misclassified allowed perturbation.

    Exactly sum over x in support of D(x) * [exists z in U(x): h(z) != c(x)].
    The predictor may be a plain labeling, a cascade, or a majority vote.
    """
    predict = as_predictor(predictor)
    fast = isinstance(predictor, Labeling)
    total = []
    for x in bits(dist.support):
        truth = concept(x)
        nb = relation.neighbors[x]
        if fast:
            wrong = nb & ~predictor.label_mask(truth) != 0
        else:
            wrong = _errs_at(predict, nb, truth)
        if wrong:
            total.append(dist.mass[x])
    return math.fsum(total)


def natural_error(predictor, dist: Distribution, concept: Labeling) -> float:
    """Mass of natural points the predictor mislabels."""
    predict = as_predictor(predictor)
    return math.fsum(
        dist.mass[x] for x in bits(dist.support) if predict(x) != concept(x)
    )


def robustness_mass(predictor: Labeling, dist: Distribution, relation: PerturbationRelation) -> float:
    """Mass of the robust region of the predictor under the given relation.

    Call with the shared-perturbation closure (compose_inverse) to measure the
    coverage parameter of a barely robust learner.
    """
    return dist.mass_of(robust_region(predictor, relation))


def empirical_robust_risk(
    predictor,
    sample: LabeledSample,
    relation: PerturbationRelation,
    weights: Sequence[float] | None = None,
) -> float:
    """Fraction (or weight) of sample items with a misclassified perturbation."""
    if len(sample) == 0:
        raise ValueError("empty sample")
    if weights is not None and len(weights) != len(sample):
        raise ValueError("one weight per sample item")
    predict = as_predictor(predictor)
    fast = isinstance(predictor, Labeling)
    hits = []
    for i, (x, y) in enumerate(sample):
        nb = relation.neighbors[x]
        if fast:
            wrong = nb & ~predictor.label_mask(y) != 0
        else:
            wrong = _errs_at(predict, nb, y)
        if wrong:
            hits.append(1.0 / len(sample) if weights is None else weights[i])
    return math.fsum(hits)


@dataclass(frozen=True)
class RiskReport:
    """Exact risk numbers for one predictor, tagged with the relations used."""

    robust_risk: float
    natural_error: float
    robustness_mass: float
    risk_relation: str
    robustness_relation: str

    def __post_init__(self):
        for v in (self.robust_risk, self.natural_error, self.robustness_mass):
            if not (-PROB_TOL <= v <= 1 + PROB_TOL):
                raise ValueError(f"risk value {v!r} outside [0, 1]")


def risk_report(
    predictor,
    dist: Distribution,
    concept: Labeling,
    relation: PerturbationRelation,
    robustness_relation: PerturbationRelation | None = None,
) -> RiskReport:
    rr = robustness_relation if robustness_relation is not None else relation
    rob_mass = (
        robustness_mass(predictor, dist, rr) if isinstance(predictor, Labeling) else _region_mass(predictor, dist, rr)
    )
    return RiskReport(
        robust_risk=robust_risk(predictor, dist, concept, relation),
        natural_error=natural_error(predictor, dist, concept),
        robustness_mass=rob_mass,
        risk_relation=relation.name,
        robustness_relation=rr.name,
    )


def _region_mass(predictor, dist: Distribution, relation: PerturbationRelation) -> float:
    # Robust region for a generic callable predictor, by direct enumeration.
    predict = as_predictor(predictor)
    n = dist.space.point_count
    outs = [predict(z) for z in range(n)]
    region = 0
    for x in range(n):
        if all(outs[z] == outs[x] for z in bits(relation.neighbors[x])):
            region |= 1 << x
    return dist.mass_of(region)


def robust_shattering_dim(
    concepts: Sequence[Labeling],
    relation: PerturbationRelation,
    cap: int = 4,
    allow_large: bool = False,
) -> int:
    """Largest k <= cap admitting a robustly shattered witness sequence.

    A sequence z_1..z_k is shattered when there are anchor pairs x_i^+, x_i^-
    with z_i in U(x_i^+) and U(x_i^-), and for every sign pattern some concept
    labels the whole perturbation set of each selected anchor with the
    pattern's sign. Witness points z_i are required distinct and the two
    anchors of a gadget must differ; anchors may repeat across gadgets.

    The search is exhaustive and exponential, hence hard-capped at cap <= 4
    and point_count <= 24 unless allow_large is set.
    """
    if not concepts:
        return 0
    space = relation.space
    if len(space.labels) != 2:
        raise ValueError("robust shattering is defined for binary label spaces")
    if not allow_large and (cap > 4 or space.point_count > 24):
        raise ValueError(
            "search capped at cap<=4 and point_count<=24; pass allow_large=True to override"
        )
    neg, pos = space.labels[0], space.labels[1]
    n = space.point_count
    full = (1 << len(concepts)) - 1

    # const[x][sign]: bitmask over concepts labeling all of U(x) with that sign.
    const: list[dict] = []
    for x in range(n):
        nb = relation.neighbors[x]
        entry = {}
        for sign in (pos, neg):
            m = 0
            for ci, h in enumerate(concepts):
                if nb & ~h.label_mask(sign) == 0:
                    m |= 1 << ci
            entry[sign] = m
        const.append(entry)

    inv = relation.inverse()
    gadgets: list[list[tuple[int, int]]] = []  # per witness point: (A, B) concept sets
    witness_points: list[int] = []
    for z in range(n):
        anchors = list(bits(inv.neighbors[z]))
        seen = set()
        options = []
        for xp in anchors:
            a = const[xp][pos]
            if not a:
                continue
            for xm in anchors:
                if xm == xp:
                    continue
                b = const[xm][neg]
                if b and (a, b) not in seen:
                    seen.add((a, b))
                    options.append((a, b))
        if options:
            witness_points.append(z)
            gadgets.append(options)

    best = 0
    total = len(witness_points)

    def dfs(start: int, patterns: list[int], depth: int) -> bool:
        nonlocal best
        best = max(best, depth)
        if depth == cap:
            return True
        for gi in range(start, total):
            if depth + (total - gi) <= best:
                break
            for a, b in gadgets[gi]:
                new = []
                ok = True
                for pm in patterns:
                    pa = pm & a
                    pb = pm & b
                    if not pa or not pb:
                        ok = False
                        break
                    new.append(pa)
                    new.append(pb)
                if ok and dfs(gi + 1, new, depth + 1):
                    return True
        return False

    dfs(0, [full], 0)
    return best
