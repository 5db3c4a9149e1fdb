"""Boosting procedures: residual-coverage cascade boosting, multiplicative
weights over the robust loss, their two-layer combination, the unlabeled
variant, and the multi-granularity cascade.

All round/sample counts that come out of real-valued formulas are ceilinged;
sample sizes are integers and ceilings preserve every inequality used in the
analyses. Measured per-round quantities are exact (computed on the full
distribution, not estimated), which is what makes the per-seed assertions in
the test suite possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BudgetExhaustedError,
    EmptyEventError,
    EmptyRegionSignal,
    WeakLearnerFailureError,
)
from .learners import LearnContext, Learner
from .predictor import (
    CascadePredictor,
    FALLBACK_FIRST_STAGE,
    MajorityPredictor,
    forced_abstain_region,
    robust_region,
)
from .risk import natural_error, robustness_mass
from .sampling import ConditionalOracle, ReplayOracle, region_bool
from .space import (
    Distribution,
    Labeling,
    PerturbationRelation,
    PROB_TOL,
    bits,
    check_robust_realizable,
    compose_inverse,
    condition,
    make_metric_ball,
)

FLAG_COVERAGE = "coverage-contract"
FLAG_ERROR = "error-contract"


@dataclass
class RoundRecord:
    """Diagnostics for one boosting round; exact unless marked otherwise."""

    t: int
    draws: int
    accepted: int
    beta_t: float | None = None
    cond_error: float | None = None
    p_t: float | None = None
    flags: tuple[str, ...] = ()
    retries: int = 0
    weighted_risk: float | None = None
    normalizer_drift: float | None = None
    relation_name: str | None = None
    level_robust_mass: float | None = None
    new_coverage: float | None = None


@dataclass
class BoostRun:
    """Full record of one boosting execution."""

    procedure: str
    rounds: list[RoundRecord]
    stages_completed: int
    draws_labeled: int
    draws_unlabeled: int
    oracle_calls: int
    outcome: object
    seed: int | None
    params: dict
    terminated_early: bool = False

    @property
    def flagged(self) -> bool:
        return any(r.flags for r in self.rounds)

    @property
    def flagged_rounds(self) -> list[int]:
        return [r.t for r in self.rounds if r.flags]


def _abstain_forcing_mask(
    stages: Sequence[Labeling], relations: Sequence[PerturbationRelation], full: int
) -> int:
    """Points on which every stage so far can be forced to abstain."""
    mask = full
    for h, rel in zip(stages, relations):
        mask &= forced_abstain_region(h, rel)
    return mask


def rejection_sampling(
    stages: Sequence[Labeling],
    relations: PerturbationRelation | Sequence[PerturbationRelation],
    m: int,
    oracle,
    per_point_budget: int,
) -> list[tuple[int, object]]:
    """Sample m points from the region where every stage is forceable to abstain.

    With no stages any draw qualifies. Returns the empty list as soon as one
    accept costs more than ``per_point_budget`` draws: a near-empty target
    region, and the caller's signal to terminate safely. A hard oracle budget
    still surfaces as BudgetExhaustedError.
    """
    if isinstance(relations, PerturbationRelation):
        relations = [relations] * len(stages)
    space = oracle.dist.space
    mask = _abstain_forcing_mask(stages, relations, space.full_mask)
    accept = region_bool(mask, space.point_count)
    out: list[tuple[int, object]] = []
    for _ in range(m):
        got = oracle.draw_until(accept, per_point_budget)
        if got is None:
            return []
        x, y, _ = got
        out.append((x, y))
    return out


def _cascade_rounds(
    oracle,
    learner: Learner,
    *,
    procedure: str,
    relations: Sequence[PerturbationRelation],
    closures: Sequence[PerturbationRelation],
    total_rounds: int,
    m: int,
    per_point_budget: int,
    beta: float,
    learner_eps: float,
    fallback,
    rng: np.random.Generator | None,
    scenario_meta: dict | None,
    seed: int | None,
    params: dict,
    track_levels: bool = False,
) -> BoostRun:
    """Shared engine: residual rejection sampling, learner calls, exact records."""
    dist: Distribution = oracle.dist
    target: Labeling | None = oracle.labeler
    space = dist.space
    full = space.full_mask

    stages: list[Labeling] = []
    used_relations: list[PerturbationRelation] = []
    records: list[RoundRecord] = []
    region = full  # points where all stages so far are forceable to abstain
    coverage_mask = 0
    terminated_early = False
    calls = 0
    initial_drawn = oracle.drawn

    for t in range(1, total_rounds + 1):
        rel = relations[t - 1]
        closure = closures[t - 1]
        accept = region_bool(region, space.point_count)
        draws_before = oracle.drawn

        ctx = LearnContext(
            space=space,
            relation=rel,
            exact_dist=None,
            base_dist=dist,
            target=target,
            rng=rng,
            round_index=t,
            phase="boost",
            scenario_meta=scenario_meta,
        )

        if learner.needs_oracle:
            cond = ConditionalOracle(oracle, accept, per_point_budget, max_accepts=m)
            ctx.oracle = cond
            try:
                ctx.exact_dist = condition(dist, region)
            except EmptyEventError:
                ctx.exact_dist = None
            try:
                h = learner.fit(None, ctx)
            except EmptyRegionSignal:
                terminated_early = True
                records.append(
                    RoundRecord(
                        t=t,
                        draws=oracle.drawn - draws_before,
                        accepted=getattr(cond, "accepted", 0),
                        relation_name=rel.name,
                    )
                )
                break
            accepted = cond.accepted
        else:
            sample = rejection_sampling(stages, used_relations, m, oracle, per_point_budget)
            if not sample:
                terminated_early = True
                records.append(
                    RoundRecord(
                        t=t,
                        draws=oracle.drawn - draws_before,
                        accepted=0,
                        relation_name=rel.name,
                    )
                )
                break
            ctx.exact_dist = condition(dist, region)
            h = learner.fit(sample, ctx)
            accepted = len(sample)

        calls += 1
        cond_dist = ctx.exact_dist
        beta_t = robustness_mass(h, cond_dist, closure)
        cond_err = natural_error(h, cond_dist, target) if target is not None else None

        flags = []
        if beta_t < beta - PROB_TOL:
            flags.append(FLAG_COVERAGE)
        if cond_err is not None and cond_err > learner_eps + PROB_TOL:
            flags.append(FLAG_ERROR)

        stages.append(h)
        used_relations.append(rel)
        region &= forced_abstain_region(h, rel)
        p_t = dist.mass_of(region)

        record = RoundRecord(
            t=t,
            draws=oracle.drawn - draws_before,
            accepted=accepted,
            beta_t=beta_t,
            cond_error=cond_err,
            p_t=p_t,
            flags=tuple(flags),
            relation_name=rel.name,
        )
        if track_levels:
            # guaranteed coverage at this level: robustness against the
            # doubled-scale closure, which certifies the level's own radius
            level_mask = robust_region(h, closure)
            record.level_robust_mass = dist.mass_of(level_mask)
            record.new_coverage = dist.mass_of(level_mask & ~coverage_mask)
            coverage_mask |= level_mask
        records.append(record)

    if not stages:
        raise BudgetExhaustedError(
            "no stage was ever trained", drawn=oracle.drawn, budget=None
        )

    cascade = CascadePredictor(tuple(stages), tuple(used_relations), fallback=fallback)
    return BoostRun(
        procedure=procedure,
        rounds=records,
        stages_completed=len(stages),
        draws_labeled=oracle.drawn - initial_drawn,
        draws_unlabeled=0,
        oracle_calls=calls,
        outcome=cascade,
        seed=seed,
        params=params,
        terminated_early=terminated_early,
    )


def beta_roboost(
    oracle,
    learner: Learner,
    beta: float,
    eps: float,
    delta: float,
    relation: PerturbationRelation,
    *,
    fallback=FALLBACK_FIRST_STAGE,
    learner_eps: float | None = None,
    learner_delta: float | None = None,
    rng: np.random.Generator | None = None,
    scenario_meta: dict | None = None,
    seed: int | None = None,
    check_realizable: bool = True,
) -> BoostRun:
    """Boost a barely robust learner into a low-robust-risk cascade.

    Runs ceil(ln(2/eps)/beta) rounds. Each round rejection-samples the region
    where all current stages are forceable to abstain and calls the learner on
    that conditional; the learner's coverage guarantee must hold against the
    shared-perturbation closure of ``relation``. Rounds where the measured
    conditional coverage or error falls short of the contract are flagged but
    the run continues; bounds are asserted on unflagged runs only.
    """
    if not (0 < beta <= 1):
        raise ValueError("beta must be in (0, 1]")
    if not (0 < eps < 1) or not (0 < delta < 1):
        raise ValueError("eps and delta must be in (0, 1)")
    if check_realizable and oracle.labeler is not None:
        if not check_robust_realizable(oracle.dist, oracle.labeler, relation):
            raise ValueError("distribution is not robustly realizable for this relation")

    T = math.ceil(math.log(2 / eps) / beta)
    eps_a = learner_eps if learner_eps is not None else beta * eps / 2
    delta_a = learner_delta if learner_delta is not None else delta / (2 * T)
    m = max(
        learner.sample_size(beta=beta, eps=eps_a, delta=delta_a, eta=getattr(learner, "eta", None)),
        math.ceil(4 * math.log(2 * T / delta)),
    )
    per_point_budget = math.ceil(4 / eps)
    closure = compose_inverse(relation)
    params = {
        "beta": beta,
        "eps": eps,
        "delta": delta,
        "rounds_cap": T,
        "round_sample_size": m,
        "per_point_budget": per_point_budget,
        "learner_eps": eps_a,
        "learner_delta": delta_a,
        "draw_cap": 4 * T * m / eps,
    }
    return _cascade_rounds(
        oracle,
        learner,
        procedure="roboost",
        relations=[relation] * T,
        closures=[closure] * T,
        total_rounds=T,
        m=m,
        per_point_budget=per_point_budget,
        beta=beta,
        learner_eps=eps_a,
        fallback=fallback,
        rng=rng,
        scenario_meta=scenario_meta,
        seed=seed,
        params=params,
    )


def _robust_correct_points(h, space, relation: PerturbationRelation, truth: Labeling) -> int:
    """Bitmask of points whose whole perturbation set h labels with the truth."""
    if isinstance(h, Labeling) or hasattr(h, "label_mask"):
        region = 0
        for x in range(space.point_count):
            if relation.neighbors[x] & ~h.label_mask(truth(x)) == 0:
                region |= 1 << x
        return region
    outs = [h(z) for z in range(space.point_count)]
    region = 0
    for x in range(space.point_count):
        if all(outs[z] == truth(x) for z in bits(relation.neighbors[x])):
            region |= 1 << x
    return region


def alpha_boost(
    sample: Sequence[tuple[int, object]],
    weak_learner: Learner,
    relation: PerturbationRelation,
    delta: float,
    rng: np.random.Generator,
    *,
    rounds: int | None = None,
    step: float = 0.125,
    seed: int | None = None,
    scenario_meta: dict | None = None,
) -> tuple[MajorityPredictor, BoostRun]:
    """Multiplicative-weights boosting of a weak robust learner over a sample.

    Keeps a distribution over the sample; each round resamples m0 items,
    fits the weak learner (retrying up to ceil(log3(2T/delta)) times until
    its exact weighted robust risk is at most 1/3), then downweights
    robustly-correct items by exp(-2*step). After 1 + ceil(48 ln|S|) rounds
    the majority vote has zero empirical robust risk and every item's
    robust-vote margin exceeds one half.
    """
    if len(sample) == 0:
        raise ValueError("empty sample")
    space = relation.space
    n_items = len(sample)
    T = rounds if rounds is not None else 1 + math.ceil(48 * math.log(n_items))
    retry_cap = max(1, math.ceil(math.log(2 * T / delta) / math.log(3)))
    m0 = weak_learner.sample_size(eps=1 / 3, delta=1 / 3)

    pts = np.fromiter((x for x, _ in sample), dtype=np.int64)
    weights = np.full(n_items, 1.0 / n_items)
    decay = math.exp(-2 * step)

    stages = []
    rc_history = []
    records = []
    truth_by_point: dict[int, object] = {}
    for x, y in sample:
        if truth_by_point.get(x, y) != y:
            raise ValueError("sample carries conflicting labels for one point")
        truth_by_point[x] = y
    truth = Labeling(
        space,
        tuple(
            truth_by_point.get(x, space.labels[0]) for x in range(space.point_count)
        ),
    )

    for t in range(1, T + 1):
        attempts = 0
        h = None
        rc_items = None
        risk = None
        while True:
            attempts += 1
            idx = rng.choice(n_items, size=m0, p=weights, replace=True)
            resample = [sample[i] for i in idx]
            ctx = LearnContext(
                space=space,
                relation=relation,
                rng=rng,
                round_index=t,
                target=truth,
                scenario_meta=scenario_meta,
            )
            try:
                cand = weak_learner.fit(resample, ctx)
            except (BudgetExhaustedError, EmptyRegionSignal):
                cand = None
            if cand is not None:
                rc_mask = _robust_correct_points(cand, space, relation, truth)
                rc = np.fromiter(((rc_mask >> int(x)) & 1 for x in pts), dtype=bool)
                risk = float(np.sum(weights[~rc]))
                if risk <= 1 / 3 + PROB_TOL:
                    h, rc_items = cand, rc
                    break
            if attempts > retry_cap:
                raise WeakLearnerFailureError(t, attempts)

        stages.append(h)
        rc_history.append(rc_items)
        weights = np.where(rc_items, weights * decay, weights)
        z_t = float(weights.sum())
        weights = weights / z_t
        records.append(
            RoundRecord(
                t=t,
                draws=0,
                accepted=m0,
                weighted_risk=risk,
                retries=attempts - 1,
                normalizer_drift=abs(float(weights.sum()) - 1.0),
                relation_name=relation.name,
            )
        )

    margins = np.mean(np.stack(rc_history), axis=0)
    maj = MajorityPredictor(tuple(stages), tuple(space.labels))
    run = BoostRun(
        procedure="alpha",
        rounds=records,
        stages_completed=len(stages),
        draws_labeled=0,
        draws_unlabeled=0,
        oracle_calls=len(stages),
        outcome=maj,
        seed=seed,
        params={
            "rounds": T,
            "retry_cap": retry_cap,
            "m0": m0,
            "step": step,
            "delta": delta,
            "min_margin": float(margins.min()),
        },
        terminated_early=False,
    )
    return maj, run


class _CascadeAsWeakLearner(Learner):
    """Adapter: a full residual-cascade run over a replayed sample acts as the
    weak robust learner inside the two-layer combination."""

    kind = "strong_robust"

    def __init__(
        self,
        barely: Learner,
        relation: PerturbationRelation,
        beta: float,
        concept: Labeling | None = None,
    ):
        self.barely = barely
        self.relation = relation
        self.beta = beta
        self.concept = concept
        self.t0 = math.ceil(math.log(6) / beta)
        inner_m = max(
            barely.sample_size(beta=beta, eps=beta / 6, delta=(1 / 3) / (2 * self.t0)),
            math.ceil(4 * math.log(6 * self.t0)),
        )
        self.budget = self.t0 * inner_m * math.ceil(4 / (1 / 3))

    def sample_size(self, *, beta=None, eps=None, delta=None, eta=None) -> int:
        return self.budget

    def fit(self, sample, ctx: LearnContext):
        items = list(sample)
        weight = 1.0 / len(items)
        mass = [0.0] * ctx.space.point_count
        labels: dict[int, object] = {}
        for x, y in items:
            mass[x] += weight
            labels[x] = y
        dist = Distribution(ctx.space, tuple(mass))
        if self.concept is not None:
            labeler = self.concept
        else:
            labeler = Labeling(
                ctx.space,
                tuple(labels.get(x, ctx.space.labels[0]) for x in range(ctx.space.point_count)),
            )
        oracle = ReplayOracle(items, dist=dist)
        oracle.labeler = labeler
        run = beta_roboost(
            oracle,
            self.barely,
            self.beta,
            1 / 3,
            1 / 3,
            self.relation,
            rng=ctx.rng,
            scenario_meta=ctx.scenario_meta,
            check_realizable=False,
        )
        return run.outcome


def two_layer_boost(
    learner: Learner,
    oracle,
    eps: float,
    delta: float,
    relation: PerturbationRelation,
    *,
    sample_size: int = 64,
    rng: np.random.Generator,
    seed: int | None = None,
    scenario_meta: dict | None = None,
) -> tuple[MajorityPredictor, BoostRun]:
    """Two layers: residual cascades as weak robust learners, then
    multiplicative-weights boosting over them.

    The barely robust learner must declare the fixed contract
    (beta, beta/6, beta/(6 ln 6)); with those numbers a cascade run with
    (1/3, 1/3) targets and ceil(ln(6)/beta) rounds is a valid weak robust
    learner. The outer empirical sample size is a scenario parameter here;
    final quality is asserted by exact measure on the output vote.
    """
    beta = getattr(learner, "beta", None)
    if beta is None:
        raise ValueError("learner must expose its coverage parameter beta")
    declared_eps = getattr(learner, "eps", None)
    if declared_eps is None or abs(declared_eps - beta / 6) > 1e-9:
        raise ValueError("two-layer combination expects learner error beta/6")
    inner = _CascadeAsWeakLearner(learner, relation, beta, concept=oracle.labeler)
    sample = oracle.draw_many(sample_size)
    maj, run = alpha_boost(
        sample,
        inner,
        relation,
        delta,
        rng,
        seed=seed,
        scenario_meta=scenario_meta,
    )
    run.procedure = "two_layer"
    run.draws_labeled = oracle.drawn
    run.params.update(
        {
            "beta": beta,
            "inner_rounds": inner.t0,
            "inner_budget": inner.budget,
            "sample_size": sample_size,
            "eps": eps,
        }
    )
    return maj, run


def beta_uroboost(
    labeled_oracle,
    unlabeled_oracle,
    learner: Learner,
    beta: float,
    eps: float,
    delta: float,
    relation: PerturbationRelation,
    *,
    eta: float,
    fallback=FALLBACK_FIRST_STAGE,
    rng: np.random.Generator | None = None,
    scenario_meta: dict | None = None,
    seed: int | None = None,
) -> BoostRun:
    """Boost robustness using one labeled batch plus unlabeled draws.

    Trains a pseudo-labeler on a single batch of m(eta, beta, beta*eps/4,
    delta/2) labeled samples, then runs the residual cascade boost against
    the pseudo-labeled distribution with a noise-tolerant learner. Labeled
    and unlabeled draw counters are kept separate.
    """
    if eta + PROB_TOL < beta * eps / 4:
        raise ValueError("noise tolerance must cover the pseudo-labeling error scale")
    from .sampling import PseudoLabelingOracle

    m_lab = learner.sample_size(eta=eta, beta=beta, eps=beta * eps / 4, delta=delta / 2)
    pre_sample = labeled_oracle.draw_many(m_lab)
    dist = labeled_oracle.dist
    ctx = LearnContext(
        space=dist.space,
        relation=relation,
        exact_dist=dist,
        base_dist=dist,
        target=labeled_oracle.labeler,
        rng=rng,
        round_index=0,
        phase="pretrain",
        scenario_meta=scenario_meta,
    )
    pseudo_labeler = learner.fit(pre_sample, ctx)

    pseudo_oracle = PseudoLabelingOracle(unlabeled_oracle, pseudo_labeler)
    run = beta_roboost(
        pseudo_oracle,
        learner,
        beta,
        eps,
        delta / 2,
        relation,
        fallback=fallback,
        learner_eps=beta * eps / 4,
        rng=rng,
        scenario_meta=scenario_meta,
        seed=seed,
        check_realizable=False,
    )
    run.procedure = "uroboost"
    run.draws_labeled = labeled_oracle.drawn
    run.draws_unlabeled = unlabeled_oracle.drawn
    run.oracle_calls += 1  # the pretraining call
    run.params.update(
        {
            "eta": eta,
            "labeled_batch": m_lab,
            "pseudo_labeler_error": natural_error(pseudo_labeler, dist, labeled_oracle.labeler),
            "pseudo_labeler_labels": list(pseudo_labeler.labels),
        }
    )
    return run


def granular_boost(
    oracle,
    learner: Learner,
    metric: Callable[[int, int], float],
    gamma: float,
    levels: int,
    beta: float,
    *,
    eps: float = 0.25,
    delta: float = 0.05,
    fallback=FALLBACK_FIRST_STAGE,
    rng: np.random.Generator | None = None,
    scenario_meta: dict | None = None,
    seed: int | None = None,
) -> BoostRun:
    """Cascade boosting with a halving radius schedule gamma, gamma/2, ...

    Level t protects a metric ball of radius gamma/2^(t-1); the learner's
    coverage contract is measured against the doubled ball at each level.
    The run reports per-level robust masses and the union coverage, which is
    at least 1 - (1-beta)^levels when every level meets its contract.

    ``eps`` and ``delta`` only size the per-round sampling budgets; the
    schedule length is fixed by ``levels``.
    """
    if levels < 1:
        raise ValueError("need at least one level")
    space = oracle.dist.space
    relations = [
        make_metric_ball(space, metric, gamma / (2**lvl), name=f"ball(r={gamma / (2 ** lvl):g})")
        for lvl in range(levels)
    ]
    closures = [compose_inverse(rel) for rel in relations]
    if oracle.labeler is not None and not check_robust_realizable(
        oracle.dist, oracle.labeler, relations[0]
    ):
        raise ValueError("distribution is not robustly realizable at the coarsest level")
    m = max(
        learner.sample_size(beta=beta, eps=eps, delta=delta / (2 * levels)),
        math.ceil(4 * math.log(2 * levels / delta)),
    )
    per_point_budget = math.ceil(4 / eps)
    params = {
        "beta": beta,
        "levels": levels,
        "gamma": gamma,
        "round_sample_size": m,
        "per_point_budget": per_point_budget,
        "radii": [gamma / (2**lvl) for lvl in range(levels)],
    }
    run = _cascade_rounds(
        oracle,
        learner,
        procedure="granular",
        relations=relations,
        closures=closures,
        total_rounds=levels,
        m=m,
        per_point_budget=per_point_budget,
        beta=beta,
        learner_eps=eps,
        fallback=fallback,
        rng=rng,
        scenario_meta=scenario_meta,
        seed=seed,
        params=params,
        track_levels=True,
    )
    mask = 0
    dist = oracle.dist
    for h, rel in zip(run.outcome.stages, run.outcome.relations):
        mask |= robust_region(h, compose_inverse(rel))
    run.params["coverage"] = dist.mass_of(mask)
    run.params["coverage_points"] = sorted(bits(mask))
    return run
