"""Hypothesis evaluation: robust regions, selective classifiers, cascades, votes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .space import InstanceSpace, Labeling, PerturbationRelation, bits


class _Abstain:
    """Singleton abstention mark for selective classifiers."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ABSTAIN"


ABSTAIN = _Abstain()

# A selective output is either a label from the space or ABSTAIN.
SelectiveOutput = object


def robust_region(h: Labeling, relation: PerturbationRelation) -> int:
    """Bitmask of points where h is invariant over all allowed perturbations.

    x is in the region iff h(z) = h(x) for every z in U(x). Points with
    empty U(x) qualify vacuously.
    """
    region = 0
    for x in range(h.space.point_count):
        if relation.neighbors[x] & ~h.label_mask(h(x)) == 0:
            region |= 1 << x
    return region


def selective_predict(h: Labeling, relation: PerturbationRelation, z: int) -> SelectiveOutput:
    """Selective classifier built from h and U, evaluated at a query point z.

    Returns the label y when every point of the preimage U^-1(z) carries
    label y under h (and the preimage is nonempty); otherwise ABSTAIN.
    An empty preimage abstains: such a z is never a perturbation of any
    natural point, and abstention is the conservative total extension.
    """
    inv = relation.inverse().neighbors[z]
    if inv == 0:
        return ABSTAIN
    for y in h.space.labels:
        if inv & ~h.label_mask(y) == 0:
            return y
    return ABSTAIN


class SelectiveClassifier:
    """Eagerly evaluated selective classifier: output table over all points."""

    __slots__ = ("hypothesis", "relation", "outputs", "abstain_mask")

    def __init__(self, h: Labeling, relation: PerturbationRelation):
        self.hypothesis = h
        self.relation = relation
        outs = []
        abst = 0
        for z in range(h.space.point_count):
            out = selective_predict(h, relation, z)
            outs.append(out)
            if out is ABSTAIN:
                abst |= 1 << z
        self.outputs = tuple(outs)
        self.abstain_mask = abst

    def __call__(self, z: int) -> SelectiveOutput:
        return self.outputs[z]


def forced_abstain_region(h: Labeling, relation: PerturbationRelation) -> int:
    """Points x whose perturbation set can force the selective classifier to abstain.

    Returns {x : exists z in U(x) with G_h(z) = ABSTAIN}. This is exactly the
    complement of robust_region(h, compose_inverse(relation)); the direct
    construction here is kept independent so the two routes can cross-check.
    """
    abst = SelectiveClassifier(h, relation).abstain_mask
    region = 0
    for x in range(h.space.point_count):
        if relation.neighbors[x] & abst:
            region |= 1 << x
    return region


# Fallback rules applied when every cascade stage abstains. Any total rule
# preserves the cascade risk analysis (the all-abstain region is charged as
# error regardless); the default is the first stage's raw prediction, which
# keeps runs reproducible.
FALLBACK_FIRST_STAGE = "first_stage"
FALLBACK_LAST_STAGE = "last_stage"


@dataclass(frozen=True)
class CascadePredictor:
    """Ordered selective classifiers; the first non-abstaining stage decides.

    ``relations`` may hold a single relation shared by every stage or one
    relation per stage (used by the granular cascade). ``fallback`` is either
    FALLBACK_FIRST_STAGE, FALLBACK_LAST_STAGE, or ("fixed", label).
    """

    stages: tuple[Labeling, ...]
    relations: tuple[PerturbationRelation, ...]
    fallback: object = FALLBACK_FIRST_STAGE
    _selectives: tuple[SelectiveClassifier, ...] = field(init=False, default=())

    def __post_init__(self):
        if not self.stages:
            raise ValueError("cascade needs at least one stage")
        rels = self.relations
        if len(rels) == 1 and len(self.stages) > 1:
            rels = rels * len(self.stages)
        if len(rels) != len(self.stages):
            raise ValueError("need one relation, or one per stage")
        space = self.stages[0].space
        for h in self.stages:
            if h.space != space:
                raise ValueError("cascade stages must share a space")
        object.__setattr__(self, "relations", rels)
        sels = tuple(SelectiveClassifier(h, r) for h, r in zip(self.stages, rels))
        object.__setattr__(self, "_selectives", sels)

    def _fallback_label(self, z: int):
        if self.fallback == FALLBACK_FIRST_STAGE:
            return self.stages[0](z)
        if self.fallback == FALLBACK_LAST_STAGE:
            return self.stages[-1](z)
        if isinstance(self.fallback, tuple) and self.fallback[0] == "fixed":
            return self.fallback[1]
        raise ValueError(f"unknown fallback rule {self.fallback!r}")

    def __call__(self, z: int):
        for sel in self._selectives:
            out = sel(z)
            if out is not ABSTAIN:
                return out
        return self._fallback_label(z)

    def output_vector(self) -> tuple:
        return tuple(self(z) for z in range(self.stages[0].space.point_count))


def cascade_predict(cascade: CascadePredictor, z: int):
    """First non-abstaining stage's output, or the fallback if all abstain."""
    return cascade(z)


def _label_order_of(stages: Sequence, label_order) -> tuple:
    if label_order is not None:
        return tuple(label_order)
    for h in stages:
        space = getattr(h, "space", None)
        if space is not None:
            return tuple(space.labels)
    raise ValueError("label_order is required when no stage exposes a space")


def majority_vote(hypotheses: Sequence, z: int, label_order=None):
    """Plurality label of the stage predictions at z.

    Ties break toward the label earliest in the space's label ordering.
    """
    if not hypotheses:
        raise ValueError("majority vote over an empty list")
    order = _label_order_of(hypotheses, label_order)
    counts = {y: 0 for y in order}
    for h in hypotheses:
        counts[h(z)] += 1
    best = max(counts.values())
    for y in order:
        if counts[y] == best:
            return y
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class MajorityPredictor:
    """Majority vote over an ordered list of predictors (callables on points)."""

    stages: tuple
    label_order: tuple

    def __post_init__(self):
        if not self.stages:
            raise ValueError("majority vote needs at least one stage")

    def __call__(self, z: int):
        return majority_vote(self.stages, z, label_order=self.label_order)
