"""Learner contracts and their concrete realizations.

A learner is invoked with a labeled sample and a context. Pull-based learners
(the strong-to-barely converter) set ``needs_oracle`` and draw adaptively
from ``ctx.oracle`` instead; the fixed-sample interface is recovered by
draining the declared sample size up front. ``invoke`` never exceeds the
oracle budget it is granted.

The scripted coverage learner is a test double: it reads the exact current
conditional distribution from the context (an explicitly test-only privilege
granted by scenarios) and constructs a hypothesis that certifiably meets its
declared coverage and error numbers on that distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetExhaustedError, InfeasibleScriptError
from .predictor import robust_region
from .risk import empirical_robust_risk
from .space import (
    Distribution,
    InstanceSpace,
    Labeling,
    PerturbationRelation,
    PROB_TOL,
    bits,
    compose_inverse,
    mask_of,
)

BARELY_ROBUST = "barely_robust"
NOISE_TOLERANT = "noise_tolerant"
STRONG_ROBUST = "strong_robust"


@dataclass
class LearnContext:
    """Everything a learner may look at during one invocation.

    ``exact_dist``, ``base_dist`` and ``target`` are test-only privileges used
    by the scripted learner; black-box learners must ignore them. ``oracle``
    is a live conditional sampling stream for pull-based learners.
    """

    space: InstanceSpace
    relation: PerturbationRelation
    oracle: object = None
    exact_dist: Distribution | None = None
    base_dist: Distribution | None = None
    target: Labeling | None = None
    rng: np.random.Generator | None = None
    round_index: int = 0
    phase: str = "boost"
    scenario_meta: dict | None = None


class Learner:
    """Base learner contract: a kind tag, a sample-size schedule, and fit."""

    kind: str = BARELY_ROBUST
    needs_oracle: bool = False

    def sample_size(self, *, beta=None, eps=None, delta=None, eta=None) -> int:
        raise NotImplementedError

    def fit(self, sample, ctx: LearnContext) -> Labeling:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Empirical robust-risk minimization over an explicit finite class.
# ---------------------------------------------------------------------------


def erm_robust(
    concepts: Sequence[Labeling],
    sample: Sequence[tuple[int, object]],
    relation: PerturbationRelation,
) -> Labeling:
    """Minimizer of empirical robust risk over an explicit class.

    Ties break by list order; an empty sample returns the first class member.
    """
    if not concepts:
        raise ValueError("empty concept class")
    if len(sample) == 0:
        return concepts[0]
    best = None
    best_score = None
    for h in concepts:
        score = empirical_robust_risk(h, sample, relation)
        if best_score is None or score < best_score - PROB_TOL:
            best, best_score = h, score
    return best


class ErmRobustLearner(Learner):
    """Strongly robust learner realized by exhaustive empirical minimization.

    The sample-size schedule is the standard finite-class realizable bound
    ceil((ln|C| + ln(1/delta)) / eps), overridable per scenario.
    """

    kind = STRONG_ROBUST

    def __init__(
        self,
        concepts: Sequence[Labeling],
        *,
        eps: float = 1 / 3,
        delta: float = 1 / 3,
        sample_size_override: int | None = None,
    ):
        if not concepts:
            raise ValueError("empty concept class")
        self.concepts = list(concepts)
        self.eps = eps
        self.delta = delta
        self.sample_size_override = sample_size_override
        self._bad_cache: dict = {}

    def sample_size(self, *, beta=None, eps=None, delta=None, eta=None) -> int:
        if self.sample_size_override is not None:
            return self.sample_size_override
        e = eps if eps is not None else self.eps
        d = delta if delta is not None else self.delta
        return max(1, math.ceil((math.log(len(self.concepts)) + math.log(1 / d)) / e))

    def _bad_matrix(self, relation: PerturbationRelation, target: Labeling) -> np.ndarray:
        # bad[ci, x]: concept ci has some perturbation of x labeled != target(x)
        key = (relation.neighbors, target.labels)
        mat = self._bad_cache.get(key)
        if mat is None:
            n = relation.space.point_count
            mat = np.zeros((len(self.concepts), n), dtype=bool)
            for ci, h in enumerate(self.concepts):
                for x in range(n):
                    if relation.neighbors[x] & ~h.label_mask(target(x)):
                        mat[ci, x] = True
            self._bad_cache[key] = mat
        return mat

    def fit(self, sample, ctx: LearnContext) -> Labeling:
        if sample is None and ctx.oracle is not None:
            sample = ctx.oracle.draw_many(self.sample_size())
        if len(sample) == 0:
            return self.concepts[0]
        if ctx.target is not None and all(y == ctx.target(x) for x, y in sample):
            # fast path: scores via the cached per-point matrix
            bad = self._bad_matrix(ctx.relation, ctx.target)
            pts = np.fromiter((x for x, _ in sample), dtype=np.int64)
            scores = bad[:, pts].sum(axis=1)
            return self.concepts[int(np.argmin(scores))]
        return erm_robust(self.concepts, sample, ctx.relation)


# ---------------------------------------------------------------------------
# Label-conditional expansion of a robust predictor.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpansionPredictor:
    """Expansion of a base predictor to the doubled perturbation scale.

    The realized labeling puts ``target_label`` exactly on the union of
    shared-perturbation neighborhoods of the base predictor's robust points
    that carry the target label. In the binary construction every other point
    gets the opposite label; the multiclass variant keeps the base
    predictor's label off the union.
    """

    base: Labeling
    relation: PerturbationRelation
    target_label: object
    labeling: Labeling

    def __call__(self, x: int):
        return self.labeling(x)

    @property
    def labels(self):
        return self.labeling.labels

    @property
    def space(self):
        return self.labeling.space

    def label_mask(self, y) -> int:
        return self.labeling.label_mask(y)


def expand(
    base: Labeling,
    relation: PerturbationRelation,
    target_label,
    *,
    multiclass: bool = False,
) -> ExpansionPredictor:
    """Materialize the expanded predictor g for one target label.

    g(x) = target_label iff x shares a perturbation with some base-robust
    point labeled target_label. With a binary label set the complement gets
    the other label; with ``multiclass=True`` (experimental) the complement
    keeps the base prediction.
    """
    space = base.space
    if target_label not in space.labels:
        raise ValueError(f"unknown label {target_label!r}")
    if not multiclass and len(space.labels) != 2:
        raise ValueError("binary construction needs exactly two labels; use multiclass=True")
    closure = compose_inverse(relation)
    rob = robust_region(base, relation)
    union = 0
    for x in bits(rob & base.label_mask(target_label)):
        union |= closure.neighbors[x]
        union |= 1 << x
    if multiclass:
        labels = [
            target_label if (union >> x) & 1 else base(x)
            for x in range(space.point_count)
        ]
    else:
        other = space.labels[0] if space.labels[1] == target_label else space.labels[1]
        labels = [
            target_label if (union >> x) & 1 else other
            for x in range(space.point_count)
        ]
    return ExpansionPredictor(
        base=base,
        relation=relation,
        target_label=target_label,
        labeling=Labeling(space, tuple(labels)),
    )


# ---------------------------------------------------------------------------
# Strong-to-barely conversion.
# ---------------------------------------------------------------------------


class ConvertedLearner(Learner):
    """Wraps a strongly robust learner into a barely robust one.

    Training: draw the inner learner's sample and fit a predictor; then
    rejection-sample ceil((64/9) ln(1/delta)) points from the predictor's
    robust region, estimate which label dominates there, and output the
    expansion of the dominant label. The resulting contract is
    (beta=(1-eps)/2, 2*eps, 2*delta) measured against the
    shared-perturbation closure. The multiclass variant (experimental)
    picks the plurality label and yields beta=(1-eps)/|Y|.
    """

    kind = BARELY_ROBUST
    needs_oracle = True

    def __init__(
        self,
        inner: Learner,
        eps: float,
        delta: float,
        *,
        multiclass: bool = False,
        reject_cap: int = 100_000,
    ):
        if not (0 < eps < 0.25):
            raise ValueError("conversion requires eps in (0, 1/4)")
        if not (0 < delta < 1):
            raise ValueError("delta must be in (0, 1)")
        self.inner = inner
        self.eps = eps
        self.delta = delta
        self.multiclass = multiclass
        self.reject_cap = reject_cap
        self.last_estimate: dict | None = None

    def beta(self, space: InstanceSpace) -> float:
        if self.multiclass:
            return (1 - self.eps) / len(space.labels)
        return (1 - self.eps) / 2

    def estimate_size(self) -> int:
        return math.ceil((64 / 9) * math.log(1 / self.delta))

    def sample_size(self, *, beta=None, eps=None, delta=None, eta=None) -> int:
        inner_m = self.inner.sample_size(eps=self.eps, delta=self.delta)
        m_tilde = self.estimate_size()
        return inner_m + math.ceil(2 * m_tilde / (1 - self.eps))

    def fit(self, sample, ctx: LearnContext) -> ExpansionPredictor:
        oracle = ctx.oracle
        if oracle is None:
            raise ValueError("converted learner needs a live sampling oracle")
        space = ctx.space
        if not self.multiclass and len(space.labels) != 2:
            raise ValueError("binary conversion needs exactly two labels")
        inner_m = self.inner.sample_size(eps=self.eps, delta=self.delta)
        inner_sample = oracle.draw_many(inner_m)
        base = self.inner.fit(inner_sample, ctx)
        rob = robust_region(base, ctx.relation)
        accept = np.zeros(space.point_count, dtype=bool)
        for x in bits(rob):
            accept[x] = True

        m_tilde = self.estimate_size()
        counts = {y: 0 for y in space.labels}
        drawn = 0
        for _ in range(m_tilde):
            got = None
            if hasattr(oracle, "draw_until"):
                got = oracle.draw_until(accept, self.reject_cap)
                if got is not None:
                    x, _, used = got
                    drawn += used
            else:
                for used in range(1, self.reject_cap + 1):
                    x, _ = oracle.draw()
                    drawn += 1
                    if accept[x]:
                        got = (x, None, used)
                        break
            if got is None:
                raise BudgetExhaustedError(
                    f"robust-region rejection burned {self.reject_cap} draws",
                    drawn=drawn,
                    budget=self.reject_cap,
                )
            counts[base(got[0])] += 1

        if self.multiclass:
            best = max(counts.values())
            picked = next(y for y in space.labels if counts[y] == best)
        else:
            plus = space.labels[1]
            m_plus = counts[plus] / m_tilde
            picked = plus if m_plus >= 0.5 else space.labels[0]
        self.last_estimate = {"counts": dict(counts), "m_tilde": m_tilde, "picked": picked}
        return expand(base, ctx.relation, picked, multiclass=self.multiclass)


def convert_strong_to_barely(
    strong: Learner, eps: float, delta: float, *, multiclass: bool = False
) -> ConvertedLearner:
    """Barely robust learner from a strongly robust one (eps < 1/4)."""
    return ConvertedLearner(strong, eps, delta, multiclass=multiclass)


# ---------------------------------------------------------------------------
# The randomized learner for the impossibility family.
# ---------------------------------------------------------------------------


class RandomBitstringLearner(Learner):
    """Ignores its sample; labels each gadget's pivot with a random sign.

    Only valid on gadget-family scenarios: 3k points laid out as repeated
    (anchor+, anchor-, pivot) triples. Natural error is zero on any
    realizable distribution; the expected robust risk is exactly one half.
    """

    kind = BARELY_ROBUST

    def __init__(self, gadget_count: int, seed: int = 0):
        if gadget_count < 1:
            raise ValueError("gadget_count must be >= 1")
        self.gadget_count = gadget_count
        self.seed = seed

    def sample_size(self, *, beta=None, eps=None, delta=None, eta=None) -> int:
        return 0

    def fit(self, sample, ctx: LearnContext) -> Labeling:
        meta = ctx.scenario_meta or {}
        if meta.get("family") != "bitstring_gadgets" or meta.get("gadget_count") != self.gadget_count:
            raise ValueError("random bitstring learner requires a matching gadget scenario")
        space = ctx.space
        if space.point_count != 3 * self.gadget_count or len(space.labels) != 2:
            raise ValueError("gadget scenario shape mismatch")
        rng = ctx.rng
        if rng is None:
            from .sampling import derive_rng

            rng = derive_rng(self.seed)
        neg, pos = space.labels[0], space.labels[1]
        signs = rng.integers(0, 2, size=self.gadget_count)
        labels = []
        for g in range(self.gadget_count):
            labels.extend([pos, neg, pos if signs[g] else neg])
        return Labeling(space, tuple(labels))


def random_bitstring_learner(gadget_count: int, seed: int = 0) -> RandomBitstringLearner:
    return RandomBitstringLearner(gadget_count, seed)


# ---------------------------------------------------------------------------
# Scripted coverage learner (exact-guarantee test double).
# ---------------------------------------------------------------------------


class ScriptedCoverageLearner(Learner):
    """Meets its coverage/error contract exactly on the handed conditional.

    Construction: start from the labeler's labels; greedily protect the
    highest-mass support points whose shared-perturbation neighborhood is
    label-constant until the protected conditional mass reaches ``beta``;
    then destabilize every other support point by flipping one zero-mass
    neighborhood point that is neither protected nor a perturbation of any
    base-support point (so cascade fallbacks stay clean). Flips never touch
    support, so the realized conditional error against the labeler is zero.

    Scripts:
      * ``error_points``: points flipped during a pretraining invocation
        (used to hand pseudo-labelers a controlled error mass),
      * ``break_rounds``: rounds where only beta/2 gets covered, to exercise
        contract-violation flagging.
    """

    def __init__(
        self,
        beta: float,
        eps: float,
        *,
        eta: float | None = None,
        error_points: Sequence[int] = (),
        break_rounds: Sequence[int] = (),
        fallback_safe: bool = True,
    ):
        if not (0 < beta <= 1):
            raise ValueError("beta must be in (0, 1]")
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        self.beta = beta
        self.eps = eps
        self.eta = eta
        self.kind = NOISE_TOLERANT if eta is not None else BARELY_ROBUST
        self.error_points = tuple(error_points)
        self.break_rounds = tuple(break_rounds)
        self.fallback_safe = fallback_safe

    def sample_size(self, *, beta=None, eps=None, delta=None, eta=None) -> int:
        d = delta if delta is not None else 0.05
        return max(1, math.ceil(4 * math.log(2 / d)))

    def fit(self, sample, ctx: LearnContext) -> Labeling:
        dist = ctx.exact_dist
        target = ctx.target
        if dist is None or target is None:
            raise ValueError("scripted learner needs exact_dist and target in its context")
        space = ctx.space
        relation = ctx.relation
        closure = compose_inverse(relation)
        labels = list(target.labels)

        if ctx.phase == "pretrain":
            # Pseudo-labeler invocation: keep every neighborhood label-constant
            # (full coverage, which over-delivers the contract) and apply only
            # the scripted error flips. Destabilizing here would poison the
            # stabilizability of later rounds, whose target is this output.
            for x in self.error_points:
                labels[x] = self._other_label(space, labels[x])
            return Labeling(space, tuple(labels))

        goal = self.beta / 2 if ctx.round_index in self.break_rounds else self.beta

        # greedy protection of high-mass points with label-constant closures
        order = sorted(dist.support_points(), key=lambda x: (-dist.mass[x], x))
        protected = 0
        covered: list[float] = []
        selected = 0
        acc = 0.0
        for x in order:
            if acc >= goal:
                break
            hood = closure.neighbors[x] | (1 << x)
            lab = labels[x]
            if all(labels[j] == lab for j in bits(hood)):
                protected |= hood
                selected |= 1 << x
                covered.append(dist.mass[x])
                acc = math.fsum(covered)
        if acc < goal and ctx.round_index not in self.break_rounds:
            raise InfeasibleScriptError(
                f"cannot cover mass {self.beta} on this conditional (got {acc})"
            )

        forbidden = protected
        if self.fallback_safe:
            base = ctx.base_dist or dist
            for x in bits(base.support):
                forbidden |= relation.neighbors[x]

        # destabilize what was not selected
        for x in order:
            if (selected >> x) & 1:
                continue
            hood = closure.neighbors[x]
            lab = labels[x]
            if any(labels[j] != lab for j in bits(hood)):
                continue  # already non-robust
            for cand in bits(hood & ~forbidden):
                if dist.mass[cand] <= PROB_TOL:
                    labels[cand] = self._other_label(space, lab)
                    break

        return Labeling(space, tuple(labels))

    @staticmethod
    def _other_label(space: InstanceSpace, lab):
        for y in space.labels:
            if y != lab:
                return y
        raise AssertionError("label set has a single element")


def scripted_oracle_learner(
    beta: float,
    eps: float,
    *,
    eta: float | None = None,
    **script,
) -> ScriptedCoverageLearner:
    """Scripted test double meeting (beta, eps) exactly; eta enables the
    noise-tolerant variant."""
    return ScriptedCoverageLearner(beta, eps, eta=eta, **script)
