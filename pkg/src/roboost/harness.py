"""Scenario construction, experiment execution, and report emission.

A scenario file is a single JSON document (schema version 1):

    {
      "schema_version": 1,
      "name": "...",                       # free-form identifier
      "family": "...",                     # builder family tag
      "space": {"point_count": N, "labels": [..]},
      "relation": {"neighbors": [[..], ..], "name": "U"}
                | {"metric": "line", "radius": R}
                | {"metric": "grid", "shape": [r, c], "radius": R},
      "distribution": [..decimal masses..],
      "concept": [..one label per point..],
      "learner": {"kind": ..., ...},
      "params": {...procedure parameters...},
      "fallback": "first_stage" | "last_stage" | {"fixed": label},
      "seed": 0,
      "named_points": {"name": index, ...},
      "meta": {...family metadata...}
    }

Reports are canonical JSON (sorted keys, two-space indent) so replaying the
same (scenario, seed, trials) triple produces byte-identical files; timing is
printed to stderr, never written into the report.
"""

from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .boost import (
    BoostRun,
    alpha_boost,
    beta_roboost,
    beta_uroboost,
    granular_boost,
    two_layer_boost,
)
from .errors import BudgetExhaustedError, EmptyRegionSignal, ScenarioError, WeakLearnerFailureError
from .learners import (
    ConvertedLearner,
    ErmRobustLearner,
    LearnContext,
    RandomBitstringLearner,
    ScriptedCoverageLearner,
)
from .predictor import robust_region
from .risk import (
    empirical_robust_risk,
    natural_error,
    risk_report,
    robust_risk,
    robust_shattering_dim,
    robustness_mass,
)
from .sampling import SamplingOracle, derive_rng
from .space import (
    Distribution,
    InstanceSpace,
    Labeling,
    PerturbationRelation,
    PROB_TOL,
    bits,
    check_robust_realizable,
    compose_inverse,
    grid_metric,
    line_metric,
    make_metric_ball,
    relation_from_sets,
)

SCHEMA_VERSION = 1

PROCEDURES = (
    "roboost",
    "alpha",
    "two_layer",
    "uroboost",
    "granular",
    "convert",
    "counterexample-eval",
)


@dataclass
class Scenario:
    """A fully resolved scenario: objects plus the raw document for echoing."""

    name: str
    family: str
    space: InstanceSpace
    relation: PerturbationRelation
    dist: Distribution
    concept: Labeling
    learner_config: dict
    params: dict
    fallback: object
    seed: int
    named_points: dict
    meta: dict
    raw: dict

    def to_json(self) -> dict:
        return self.raw


@dataclass
class AssertionResult:
    tag: str
    passed: bool
    detail: str
    failing_trials: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "tag": self.tag,
            "passed": self.passed,
            "detail": self.detail,
            "failing_trials": self.failing_trials,
        }


@dataclass
class Report:
    scenario: dict
    procedure: str
    trials: int
    base_seed: int
    parameters: dict
    assertions: list[AssertionResult]
    trial_rows: list[dict]
    passed: bool

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "procedure": self.procedure,
            "trials": self.trials,
            "base_seed": self.base_seed,
            "parameters": _jsonable(self.parameters),
            "assertions": [a.to_json() for a in self.assertions],
            "trial_rows": _jsonable(self.trial_rows),
            "passed": self.passed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items() if _is_plain(v)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj if _is_plain(v)]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _is_plain(v) -> bool:
    return isinstance(v, (dict, list, tuple, str, int, float, bool, type(None), np.integer, np.floating))


# ---------------------------------------------------------------------------
# Scenario loading and validation.
# ---------------------------------------------------------------------------


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ScenarioError(f"{where}.{key}", "missing required field")
    return doc[key]


def load_scenario(doc: dict) -> Scenario:
    """Validate a scenario document and resolve it into live objects."""
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError("$.schema_version", f"unsupported version {version}")

    sp = _require(doc, "space", "$")
    n = _require(sp, "point_count", "$.space")
    labels = _require(sp, "labels", "$.space")
    try:
        space = InstanceSpace(int(n), tuple(labels))
    except ValueError as exc:
        raise ScenarioError("$.space", str(exc)) from exc

    rel_doc = _require(doc, "relation", "$")
    relation = _load_relation(space, rel_doc, "$.relation")

    mass = _require(doc, "distribution", "$")
    if len(mass) != space.point_count:
        raise ScenarioError("$.distribution", f"expected {space.point_count} masses, got {len(mass)}")
    try:
        dist = Distribution(space, tuple(float(v) for v in mass))
    except ValueError as exc:
        raise ScenarioError("$.distribution", str(exc)) from exc

    clabels = _require(doc, "concept", "$")
    if len(clabels) != space.point_count:
        raise ScenarioError("$.concept", f"expected {space.point_count} labels, got {len(clabels)}")
    try:
        concept = Labeling(space, tuple(clabels))
    except ValueError as exc:
        raise ScenarioError("$.concept", str(exc)) from exc

    fallback = doc.get("fallback", "first_stage")
    if isinstance(fallback, dict):
        if set(fallback) != {"fixed"}:
            raise ScenarioError("$.fallback", "object form must be {'fixed': label}")
        fallback = ("fixed", fallback["fixed"])
    elif fallback not in ("first_stage", "last_stage"):
        raise ScenarioError("$.fallback", f"unknown fallback {fallback!r}")

    scenario = Scenario(
        name=doc.get("name", "unnamed"),
        family=doc.get("family", "custom"),
        space=space,
        relation=relation,
        dist=dist,
        concept=concept,
        learner_config=doc.get("learner", {}),
        params=doc.get("params", {}),
        fallback=fallback,
        seed=int(doc.get("seed", 0)),
        named_points=doc.get("named_points", {}),
        meta=doc.get("meta", {}),
        raw=doc,
    )
    if not check_robust_realizable(dist, concept, relation):
        raise ScenarioError("$.concept", "distribution is not robustly realizable for the relation")
    return scenario


def _load_relation(space: InstanceSpace, doc: dict, where: str) -> PerturbationRelation:
    if "neighbors" in doc:
        sets = doc["neighbors"]
        if len(sets) != space.point_count:
            raise ScenarioError(where, f"expected {space.point_count} adjacency lists")
        try:
            return relation_from_sets(space, sets, name=doc.get("name", "U"))
        except ValueError as exc:
            raise ScenarioError(where, str(exc)) from exc
    metric_name = doc.get("metric")
    radius = doc.get("radius")
    if metric_name is None or radius is None:
        raise ScenarioError(where, "need either neighbors or metric+radius")
    if metric_name == "line":
        metric = line_metric
    elif metric_name == "grid":
        shape = doc.get("shape")
        if not shape or len(shape) != 2 or shape[0] * shape[1] != space.point_count:
            raise ScenarioError(f"{where}.shape", "grid shape must multiply to point_count")
        metric = grid_metric((int(shape[0]), int(shape[1])))
    else:
        raise ScenarioError(f"{where}.metric", f"unknown metric {metric_name!r}")
    try:
        return make_metric_ball(space, metric, float(radius), name=doc.get("name"))
    except ValueError as exc:
        raise ScenarioError(where, str(exc)) from exc


def load_scenario_file(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}:{exc.lineno}", exc.msg) from exc
    return load_scenario(doc)


def build_learner(scenario: Scenario):
    cfg = scenario.learner_config
    kind = cfg.get("kind")
    if kind == "scripted":
        return ScriptedCoverageLearner(
            beta=float(cfg["beta"]),
            eps=float(cfg.get("eps", 0.0)),
            eta=(float(cfg["eta"]) if "eta" in cfg and cfg["eta"] is not None else None),
            error_points=tuple(cfg.get("error_points", ())),
            break_rounds=tuple(cfg.get("break_rounds", ())),
            fallback_safe=bool(cfg.get("fallback_safe", True)),
        )
    if kind == "erm_strong":
        return ErmRobustLearner(
            _concept_class(scenario, cfg.get("class", {"family": "thresholds"})),
            eps=float(cfg.get("eps", 1 / 3)),
            delta=float(cfg.get("delta", 1 / 3)),
            sample_size_override=cfg.get("sample_size_override"),
        )
    if kind == "converted":
        inner_cfg = cfg.get("inner", {"kind": "erm_strong"})
        inner = ErmRobustLearner(
            _concept_class(scenario, inner_cfg.get("class", {"family": "thresholds"})),
            eps=float(cfg["eps"]),
            delta=float(cfg["delta"]),
            sample_size_override=inner_cfg.get("sample_size_override"),
        )
        return ConvertedLearner(
            inner,
            float(cfg["eps"]),
            float(cfg["delta"]),
            multiclass=bool(cfg.get("multiclass", False)),
        )
    if kind == "random_bitstring":
        return RandomBitstringLearner(int(cfg["gadget_count"]))
    raise ScenarioError("$.learner.kind", f"unknown learner kind {kind!r}")


def _concept_class(scenario: Scenario, cfg: dict) -> list[Labeling]:
    family = cfg.get("family", "thresholds")
    space = scenario.space
    if family == "thresholds":
        neg, pos = space.labels[0], space.labels[1]
        return [
            Labeling(space, tuple(pos if x >= j else neg for x in range(space.point_count)))
            for j in range(space.point_count + 1)
        ]
    if family == "bitstrings":
        k = int(cfg.get("gadget_count", scenario.meta.get("gadget_count", 0)))
        return bitstring_concepts(space, k)
    if family == "explicit":
        return [Labeling(space, tuple(ls)) for ls in cfg["labelings"]]
    raise ScenarioError("$.learner.class.family", f"unknown class family {family!r}")


# ---------------------------------------------------------------------------
# Scenario builders.
# ---------------------------------------------------------------------------


def build_twin_blocks(
    gadget_count: int = 32,
    *,
    beta: float = 0.25,
    eps: float = 0.1,
    delta: float = 0.05,
    eta: float | None = None,
    masses: Sequence[float] | None = None,
    error_gadgets: Sequence[int] = (),
    break_rounds: Sequence[int] = (),
    labels: tuple = (-1, 1),
    name: str | None = None,
    seed: int = 0,
) -> Scenario:
    """World of independent three-point gadgets: anchor, zero-mass twin, pivot.

    The anchor's perturbation set is {anchor, pivot}; the twin shares the
    pivot, so it sits in the anchor's shared-perturbation closure without
    being reachable by the adversary. Flipping a twin destabilizes exactly
    one anchor at zero distribution mass, which lets the scripted learner
    hit any coverage target on any conditional.
    """
    if gadget_count < 1:
        raise ValueError("need at least one gadget")
    if masses is None:
        masses = [1.0 / gadget_count] * gadget_count
    if len(masses) != gadget_count:
        raise ValueError("one mass per gadget")
    n = 3 * gadget_count
    space = InstanceSpace(n, tuple(labels))
    neighbors = []
    mass = [0.0] * n
    clabels = []
    anchors, twins, pivots = [], [], []
    for g in range(gadget_count):
        a, w, z = 3 * g, 3 * g + 1, 3 * g + 2
        anchors.append(a)
        twins.append(w)
        pivots.append(z)
        neighbors.append([a, z])
        neighbors.append([w, z])
        neighbors.append([z])
        mass[a] = float(masses[g])
        lab = labels[g % 2]
        clabels.extend([lab, lab, lab])
    error_points = []
    for g in error_gadgets:
        error_points.extend([3 * g, 3 * g + 1, 3 * g + 2])
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": name or f"twin-blocks-{gadget_count}",
        "family": "twin_blocks",
        "space": {"point_count": n, "labels": list(labels)},
        "relation": {"neighbors": neighbors, "name": "U"},
        "distribution": mass,
        "concept": clabels,
        "learner": {
            "kind": "scripted",
            "beta": beta,
            "eps": beta * eps / 2,
            "eta": eta,
            "error_points": error_points,
            "break_rounds": list(break_rounds),
        },
        "params": {"beta": beta, "eps": eps, "delta": delta, "eta": eta},
        "fallback": "first_stage",
        "seed": seed,
        "named_points": {
            **{f"anchor{g}": 3 * g for g in range(gadget_count)},
            **{f"twin{g}": 3 * g + 1 for g in range(gadget_count)},
            **{f"pivot{g}": 3 * g + 2 for g in range(gadget_count)},
        },
        "meta": {
            "family": "twin_blocks",
            "gadget_count": gadget_count,
            "anchors": anchors,
            "twins": twins,
            "pivots": pivots,
            "error_gadgets": list(error_gadgets),
        },
    }
    return load_scenario(doc)


def build_threshold_line(
    *,
    n: int = 32,
    gamma: float = 1,
    cut: int = 16,
    support: dict[int, float] | None = None,
    labels: tuple = (-1, 1),
    learner: dict | None = None,
    params: dict | None = None,
    name: str | None = None,
    seed: int = 0,
) -> Scenario:
    """Threshold concept on a line world with a mass-free margin band."""
    if support is None:
        support = {3: 0.08, 5: 0.10, 8: 0.32, 23: 0.32, 26: 0.10, 28: 0.08}
    neg, pos = labels
    mass = [0.0] * n
    for x, m in support.items():
        mass[x] = m
    clabels = [pos if x >= cut else neg for x in range(n)]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": name or f"threshold-line-{n}",
        "family": "threshold_line",
        "space": {"point_count": n, "labels": list(labels)},
        "relation": {"metric": "line", "radius": gamma},
        "distribution": mass,
        "concept": clabels,
        "learner": learner or {"kind": "erm_strong", "class": {"family": "thresholds"}},
        "params": params or {},
        "fallback": "first_stage",
        "seed": seed,
        "named_points": {"cut": cut},
        "meta": {"family": "threshold_line", "cut": cut, "gamma": gamma},
    }
    return load_scenario(doc)


def build_granular_line(
    *,
    n: int = 64,
    gamma: float = 4,
    levels: int = 3,
    beta: float = 0.4,
    support: dict[int, float] | None = None,
    labels: tuple = (-1, 1),
    name: str | None = None,
    seed: int = 0,
) -> Scenario:
    """Line world with widely spaced support blocks for the halving schedule."""
    if support is None:
        support = {8: 0.4, 25: 0.3, 42: 0.2, 59: 0.1}
    block = 17
    mass = [0.0] * n
    for x, m in support.items():
        mass[x] = m
    clabels = [labels[(x // block) % 2] for x in range(n)]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": name or f"granular-line-{n}",
        "family": "granular_line",
        "space": {"point_count": n, "labels": list(labels)},
        "relation": {"metric": "line", "radius": gamma},
        "distribution": mass,
        "concept": clabels,
        "learner": {"kind": "scripted", "beta": beta, "eps": 0.0},
        "params": {"beta": beta, "gamma": gamma, "levels": levels},
        "fallback": "first_stage",
        "seed": seed,
        "named_points": {},
        "meta": {"family": "granular_line", "block": block},
    }
    return load_scenario(doc)


def bitstring_concepts(space: InstanceSpace, gadget_count: int) -> list[Labeling]:
    """All sign assignments to the gadget pivots (anchors are fixed)."""
    neg, pos = space.labels[0], space.labels[1]
    out = []
    for code in range(2**gadget_count):
        labels = []
        for g in range(gadget_count):
            labels.extend([pos, neg, pos if (code >> g) & 1 else neg])
        out.append(Labeling(space, tuple(labels)))
    return out


def build_counterexample(
    gadget_count: int,
    realizable_labels: Sequence[int] | None = None,
    masses: Sequence[float] | None = None,
    *,
    labels: tuple = (-1, 1),
    name: str | None = None,
    seed: int = 0,
) -> Scenario:
    """The impossibility family: per gadget, two anchors sharing one pivot.

    Points per gadget g: anchor+ at 3g, anchor- at 3g+1, pivot at 3g+2 with
    U(anchor+)={anchor+, pivot}, U(anchor-)={anchor-, pivot}, and
    U(pivot)={pivot, anchor+, anchor-}. The concept family is every sign
    assignment to the pivots; the distribution sits on the anchor matching
    each gadget's realizable sign, so pivots and opposite anchors carry zero
    mass.
    """
    if gadget_count < 1:
        raise ValueError("need at least one gadget")
    neg, pos = labels
    if realizable_labels is None:
        realizable_labels = [pos if g % 2 == 0 else neg for g in range(gadget_count)]
    if len(realizable_labels) != gadget_count:
        raise ValueError("one realizable sign per gadget")
    if any(y not in (neg, pos) for y in realizable_labels):
        raise ValueError("realizable signs must come from the label set")
    if masses is None:
        masses = [1.0 / gadget_count] * gadget_count
    if len(masses) != gadget_count:
        raise ValueError("one mass per gadget")
    total = math.fsum(masses)
    if abs(total - 1.0) > PROB_TOL:
        raise ValueError(f"gadget masses sum to {total!r}, expected 1")

    n = 3 * gadget_count
    space = InstanceSpace(n, tuple(labels))
    neighbors = []
    mass = [0.0] * n
    clabels = []
    for g in range(gadget_count):
        ap, am, z = 3 * g, 3 * g + 1, 3 * g + 2
        neighbors.append([ap, z])
        neighbors.append([am, z])
        neighbors.append([z, ap, am])
        y = realizable_labels[g]
        mass[ap if y == pos else am] = float(masses[g])
        clabels.extend([pos, neg, y])
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": name or f"counterexample-{gadget_count}",
        "family": "bitstring_gadgets",
        "space": {"point_count": n, "labels": list(labels)},
        "relation": {"neighbors": neighbors, "name": "U"},
        "distribution": mass,
        "concept": clabels,
        "learner": {"kind": "random_bitstring", "gadget_count": gadget_count},
        "params": {"gadget_count": gadget_count},
        "fallback": "first_stage",
        "seed": seed,
        "named_points": {
            **{f"anchor+{g}": 3 * g for g in range(gadget_count)},
            **{f"anchor-{g}": 3 * g + 1 for g in range(gadget_count)},
            **{f"pivot{g}": 3 * g + 2 for g in range(gadget_count)},
        },
        "meta": {
            "family": "bitstring_gadgets",
            "gadget_count": gadget_count,
            "realizable_labels": list(realizable_labels),
            "gadget_masses": list(masses),
        },
    }
    return load_scenario(doc)


# ---------------------------------------------------------------------------
# Experiment execution.
# ---------------------------------------------------------------------------


def _round_rows(run: BoostRun) -> list[dict]:
    rows = []
    for r in run.rounds:
        rows.append(
            {
                "t": r.t,
                "draws": r.draws,
                "accepted": r.accepted,
                "beta_t": r.beta_t,
                "cond_error": r.cond_error,
                "p_t": r.p_t,
                "flags": list(r.flags),
                "retries": r.retries,
                "weighted_risk": r.weighted_risk,
                "normalizer_drift": r.normalizer_drift,
                "relation_name": r.relation_name,
                "level_robust_mass": r.level_robust_mass,
                "new_coverage": r.new_coverage,
            }
        )
    return rows


def _trial_seed(base_seed: int, trial: int) -> int:
    return (base_seed * 1_000_003 + trial) & 0xFFFFFFFFFFFFFFFF


def _trial_roboost(scenario: Scenario, trial: int, base_seed: int) -> dict:
    params = scenario.params
    oracle = SamplingOracle(scenario.dist, scenario.concept, rng=derive_rng(base_seed, trial, 0))
    learner = build_learner(scenario)
    run = beta_roboost(
        oracle,
        learner,
        float(params["beta"]),
        float(params["eps"]),
        float(params["delta"]),
        scenario.relation,
        fallback=scenario.fallback,
        rng=derive_rng(base_seed, trial, 1),
        scenario_meta=scenario.meta,
        seed=_trial_seed(base_seed, trial),
    )
    closure = compose_inverse(scenario.relation)
    rep = risk_report(
        run.outcome, scenario.dist, scenario.concept, scenario.relation, robustness_relation=closure
    )
    return {
        "trial": trial,
        "seed": _trial_seed(base_seed, trial),
        "rounds": _round_rows(run),
        "stages_completed": run.stages_completed,
        "terminated_early": run.terminated_early,
        "draws_labeled": run.draws_labeled,
        "draws_unlabeled": run.draws_unlabeled,
        "flags": sorted({f for r in run.rounds for f in r.flags}),
        "robust_risk": rep.robust_risk,
        "natural_error": rep.natural_error,
        "robustness_mass": rep.robustness_mass,
        "derived": {k: run.params[k] for k in ("rounds_cap", "round_sample_size", "draw_cap", "learner_eps")},
    }


def _assert_roboost(rows: list[dict], scenario: Scenario, trials: int) -> list[AssertionResult]:
    params = scenario.params
    beta = float(params["beta"])
    eps = float(params["eps"])
    delta = float(params["delta"])
    out = []

    contraction_bad = []
    for row in rows:
        clean = True
        for rec in row["rounds"]:
            if rec["p_t"] is None:
                continue
            clean = clean and not rec["flags"]
            if clean and rec["p_t"] > (1 - beta) ** rec["t"] + PROB_TOL:
                contraction_bad.append(row["trial"])
                break
    out.append(
        AssertionResult(
            "contraction-bound",
            not contraction_bad,
            "exact residual mass <= (1-beta)^t on every contract-clean prefix",
            contraction_bad,
        )
    )

    cascade_bad = []
    final_bad = []
    for row in rows:
        if row["flags"]:
            continue
        t_star = row["stages_completed"]
        eps_a = row["derived"]["learner_eps"]
        bound = eps_a / beta + (1 - beta) ** t_star
        if row["robust_risk"] > bound + PROB_TOL:
            cascade_bad.append(row["trial"])
        if row["robust_risk"] > eps + PROB_TOL:
            final_bad.append(row["trial"])
    out.append(
        AssertionResult(
            "cascade-risk-bound",
            not cascade_bad,
            "exact risk <= learner_eps/beta + (1-beta)^t* on unflagged seeds",
            cascade_bad,
        )
    )
    out.append(
        AssertionResult(
            "final-risk",
            not final_bad,
            f"exact robust risk <= {eps} on unflagged seeds",
            final_bad,
        )
    )

    cap_violations = [
        row["trial"]
        for row in rows
        if row["draws_labeled"] + row["draws_unlabeled"] > row["derived"]["draw_cap"] + PROB_TOL
    ]
    allowance = delta / 2 + 3 * math.sqrt(delta / trials)
    out.append(
        AssertionResult(
            "sample-budget",
            len(cap_violations) <= allowance * trials,
            f"draw cap 4Tm/eps exceeded on {len(cap_violations)}/{trials} trials (allowed {allowance:.4f})",
            cap_violations,
        )
    )
    return out


def _trial_uroboost(scenario: Scenario, trial: int, base_seed: int) -> dict:
    params = scenario.params
    labeled = SamplingOracle(scenario.dist, scenario.concept, rng=derive_rng(base_seed, trial, 0))
    unlabeled = SamplingOracle(scenario.dist, None, rng=derive_rng(base_seed, trial, 2))
    learner = build_learner(scenario)
    run = beta_uroboost(
        labeled,
        unlabeled,
        learner,
        float(params["beta"]),
        float(params["eps"]),
        float(params["delta"]),
        scenario.relation,
        eta=float(params["eta"]),
        fallback=scenario.fallback,
        rng=derive_rng(base_seed, trial, 1),
        scenario_meta=scenario.meta,
        seed=_trial_seed(base_seed, trial),
    )
    closure = compose_inverse(scenario.relation)
    rep = risk_report(
        run.outcome, scenario.dist, scenario.concept, scenario.relation, robustness_relation=closure
    )
    return {
        "trial": trial,
        "seed": _trial_seed(base_seed, trial),
        "rounds": _round_rows(run),
        "stages_completed": run.stages_completed,
        "terminated_early": run.terminated_early,
        "draws_labeled": run.draws_labeled,
        "draws_unlabeled": run.draws_unlabeled,
        "labeled_batch": run.params["labeled_batch"],
        "pseudo_labeler_error": run.params["pseudo_labeler_error"],
        "flags": sorted({f for r in run.rounds for f in r.flags}),
        "robust_risk": rep.robust_risk,
        "natural_error": rep.natural_error,
        "robustness_mass": rep.robustness_mass,
        "derived": {k: run.params[k] for k in ("rounds_cap", "round_sample_size", "draw_cap", "learner_eps")},
    }


def _assert_uroboost(rows: list[dict], scenario: Scenario, trials: int) -> list[AssertionResult]:
    params = scenario.params
    eps = float(params["eps"])
    out = []
    batch_bad = [r["trial"] for r in rows if r["draws_labeled"] != r["labeled_batch"]]
    out.append(
        AssertionResult(
            "labeled-batch",
            not batch_bad,
            "labeled draws equal exactly one pretraining batch",
            batch_bad,
        )
    )
    risk_bad = [r["trial"] for r in rows if r["robust_risk"] > eps + PROB_TOL]
    out.append(
        AssertionResult(
            "final-risk",
            not risk_bad,
            f"exact robust risk <= {eps} on every trial",
            risk_bad,
        )
    )
    beta = float(params["beta"])
    contraction_bad = []
    for row in rows:
        clean = True
        for rec in row["rounds"]:
            if rec["p_t"] is None:
                continue
            clean = clean and not rec["flags"]
            if clean and rec["p_t"] > (1 - beta) ** rec["t"] + PROB_TOL:
                contraction_bad.append(row["trial"])
                break
    out.append(
        AssertionResult(
            "contraction-bound",
            not contraction_bad,
            "exact residual mass <= (1-beta)^t against the pseudo-labeled target",
            contraction_bad,
        )
    )
    return out


def _trial_convert(scenario: Scenario, trial: int, base_seed: int) -> dict:
    params = scenario.params
    eps = float(params["eps"])
    delta = float(params["delta"])
    oracle = SamplingOracle(scenario.dist, scenario.concept, rng=derive_rng(base_seed, trial, 0))
    learner = build_learner(scenario)
    if not isinstance(learner, ConvertedLearner):
        raise ScenarioError("$.learner.kind", "convert procedure needs a converted learner")
    ctx = LearnContext(
        space=scenario.space,
        relation=scenario.relation,
        oracle=oracle,
        target=scenario.concept,
        rng=derive_rng(base_seed, trial, 1),
        scenario_meta=scenario.meta,
    )
    expanded = learner.fit(None, ctx)
    closure = compose_inverse(scenario.relation)
    base_risk = robust_risk(expanded.base, scenario.dist, scenario.concept, scenario.relation)
    rob = robustness_mass(expanded.labeling, scenario.dist, closure)
    nat = natural_error(expanded, scenario.dist, scenario.concept)
    return {
        "trial": trial,
        "seed": _trial_seed(base_seed, trial),
        "draws_labeled": oracle.drawn,
        "draws_unlabeled": 0,
        "base_robust_risk": base_risk,
        "picked_label": expanded.target_label,
        "robustness_mass": rob,
        "natural_error": nat,
        "robust_risk": robust_risk(expanded, scenario.dist, scenario.concept, scenario.relation),
        "contract_ok": bool(rob >= (1 - eps) / 2 - PROB_TOL and nat <= 2 * eps + PROB_TOL),
        "rounds": [],
        "flags": [],
    }


def _assert_convert(rows: list[dict], scenario: Scenario, trials: int) -> list[AssertionResult]:
    eps = float(scenario.params["eps"])
    delta = float(scenario.params["delta"])
    failures = [r["trial"] for r in rows if not r["contract_ok"]]
    allowance = 2 * delta + 3 * math.sqrt(delta / trials)
    return [
        AssertionResult(
            "converter-contract",
            len(failures) <= allowance * trials,
            f"coverage >= {(1 - eps) / 2:.4f} against the closure and error <= {2 * eps}"
            f" on {trials - len(failures)}/{trials} trials (allowed failures {allowance:.4f})",
            failures,
        )
    ]


def _trial_alpha(scenario: Scenario, trial: int, base_seed: int) -> dict:
    params = scenario.params
    sample_size = int(params.get("sample_size", 16))
    delta = float(params.get("delta", 0.05))
    oracle = SamplingOracle(scenario.dist, scenario.concept, rng=derive_rng(base_seed, trial, 0))
    sample = oracle.draw_many(sample_size)
    learner = build_learner(scenario)
    maj, run = alpha_boost(
        sample,
        learner,
        scenario.relation,
        delta,
        derive_rng(base_seed, trial, 1),
        seed=_trial_seed(base_seed, trial),
        scenario_meta=scenario.meta,
    )
    emp = empirical_robust_risk(maj, sample, scenario.relation)
    heldout = robust_risk(maj, scenario.dist, scenario.concept, scenario.relation)
    max_drift = max((r.normalizer_drift or 0.0) for r in run.rounds)
    return {
        "trial": trial,
        "seed": _trial_seed(base_seed, trial),
        "rounds": [],
        "round_count": run.stages_completed,
        "draws_labeled": oracle.drawn,
        "draws_unlabeled": 0,
        "empirical_robust_risk": emp,
        "min_margin": run.params["min_margin"],
        "max_normalizer_drift": max_drift,
        "robust_risk": heldout,
        "natural_error": natural_error(maj, scenario.dist, scenario.concept),
        "retries_total": sum(r.retries for r in run.rounds),
        "flags": [],
    }


def _assert_alpha(rows: list[dict], scenario: Scenario, trials: int) -> list[AssertionResult]:
    out = []
    emp_bad = [r["trial"] for r in rows if r["empirical_robust_risk"] > PROB_TOL]
    out.append(
        AssertionResult(
            "empirical-zero", not emp_bad, "majority vote has zero empirical robust risk", emp_bad
        )
    )
    margin_bad = [r["trial"] for r in rows if r["min_margin"] <= 0.5]
    out.append(
        AssertionResult(
            "vote-margin", not margin_bad, "minimum robust-vote margin exceeds 1/2", margin_bad
        )
    )
    drift_bad = [r["trial"] for r in rows if r["max_normalizer_drift"] > 1e-9]
    out.append(
        AssertionResult(
            "weights-normalized", not drift_bad, "weights renormalize to 1 within 1e-9", drift_bad
        )
    )
    tol = float(scenario.params.get("heldout_risk", 0.1))
    frac = float(scenario.params.get("heldout_fraction", 0.95))
    heldout_bad = [r["trial"] for r in rows if r["robust_risk"] > tol + PROB_TOL]
    out.append(
        AssertionResult(
            "heldout-risk",
            len(heldout_bad) <= (1 - frac) * trials,
            f"held-out exact robust risk <= {tol} on at least {frac:.0%} of trials",
            heldout_bad,
        )
    )
    return out


def _trial_two_layer(scenario: Scenario, trial: int, base_seed: int) -> dict:
    params = scenario.params
    oracle = SamplingOracle(scenario.dist, scenario.concept, rng=derive_rng(base_seed, trial, 0))
    learner = build_learner(scenario)
    maj, run = two_layer_boost(
        learner,
        oracle,
        float(params["eps"]),
        float(params["delta"]),
        scenario.relation,
        sample_size=int(params.get("sample_size", 64)),
        rng=derive_rng(base_seed, trial, 1),
        seed=_trial_seed(base_seed, trial),
        scenario_meta=scenario.meta,
    )
    return {
        "trial": trial,
        "seed": _trial_seed(base_seed, trial),
        "rounds": [],
        "round_count": run.stages_completed,
        "draws_labeled": run.draws_labeled,
        "draws_unlabeled": 0,
        "min_margin": run.params["min_margin"],
        "robust_risk": robust_risk(maj, scenario.dist, scenario.concept, scenario.relation),
        "natural_error": natural_error(maj, scenario.dist, scenario.concept),
        "flags": [],
    }


def _assert_two_layer(rows: list[dict], scenario: Scenario, trials: int) -> list[AssertionResult]:
    eps = float(scenario.params["eps"])
    bad = [r["trial"] for r in rows if r["robust_risk"] > eps + PROB_TOL]
    return [
        AssertionResult(
            "final-risk", not bad, f"exact robust risk of the vote <= {eps}", bad
        )
    ]


def _trial_granular(scenario: Scenario, trial: int, base_seed: int) -> dict:
    params = scenario.params
    oracle = SamplingOracle(scenario.dist, scenario.concept, rng=derive_rng(base_seed, trial, 0))
    learner = build_learner(scenario)
    run = granular_boost(
        oracle,
        learner,
        line_metric,
        float(params["gamma"]),
        int(params["levels"]),
        float(params["beta"]),
        rng=derive_rng(base_seed, trial, 1),
        scenario_meta=scenario.meta,
        seed=_trial_seed(base_seed, trial),
    )
    # independent certification of level 1 at the full radius
    level1_ok = True
    if run.stages_completed >= 1:
        h1 = run.outcome.stages[0]
        rel1 = run.outcome.relations[0]
        closure1 = compose_inverse(rel1)
        covered1 = robust_region(h1, closure1)
        for x in bits(covered1):
            for z in bits(rel1.neighbors[x]):
                if h1(z) != h1(x):
                    level1_ok = False
    return {
        "trial": trial,
        "seed": _trial_seed(base_seed, trial),
        "rounds": _round_rows(run),
        "stages_completed": run.stages_completed,
        "draws_labeled": run.draws_labeled,
        "draws_unlabeled": 0,
        "coverage": run.params["coverage"],
        "level_masses": [r.level_robust_mass for r in run.rounds if r.level_robust_mass is not None],
        "level1_certified": level1_ok,
        "robust_risk": robust_risk(
            run.outcome, scenario.dist, scenario.concept, run.outcome.relations[0]
        ),
        "natural_error": natural_error(run.outcome, scenario.dist, scenario.concept),
        "flags": sorted({f for r in run.rounds for f in r.flags}),
    }


def _assert_granular(rows: list[dict], scenario: Scenario, trials: int) -> list[AssertionResult]:
    beta = float(scenario.params["beta"])
    levels = int(scenario.params["levels"])
    bound = 1 - (1 - beta) ** levels
    out = []
    cov_bad = [r["trial"] for r in rows if not r["flags"] and r["coverage"] < bound - PROB_TOL]
    out.append(
        AssertionResult(
            "coverage-bound",
            not cov_bad,
            f"union coverage >= {bound:.6f} on unflagged trials",
            cov_bad,
        )
    )
    cert_bad = [r["trial"] for r in rows if not r["level1_certified"]]
    out.append(
        AssertionResult(
            "level1-certified",
            not cert_bad,
            "every level-1 covered point rechecked robust at the full radius",
            cert_bad,
        )
    )
    return out


def _trial_counterexample(scenario: Scenario, trial: int, base_seed: int) -> dict:
    learner = build_learner(scenario)
    ctx = LearnContext(
        space=scenario.space,
        relation=scenario.relation,
        rng=derive_rng(base_seed, trial, 1),
        scenario_meta=scenario.meta,
    )
    h = learner.fit([], ctx)
    rep = risk_report(h, scenario.dist, scenario.concept, scenario.relation)
    return {
        "trial": trial,
        "seed": _trial_seed(base_seed, trial),
        "rounds": [],
        "draws_labeled": 0,
        "draws_unlabeled": 0,
        "robust_risk": rep.robust_risk,
        "natural_error": rep.natural_error,
        "robustness_mass": rep.robustness_mass,
        "flags": [],
    }


def _assert_counterexample(rows: list[dict], scenario: Scenario, trials: int) -> list[AssertionResult]:
    out = []
    nat_bad = [r["trial"] for r in rows if r["natural_error"] > PROB_TOL]
    out.append(
        AssertionResult(
            "bitstring-natural-error",
            not nat_bad,
            "exact natural error is zero on every seed",
            nat_bad,
        )
    )
    # closed-form expectation: each gadget errs with probability exactly 1/2
    masses = scenario.meta["gadget_masses"]
    closed = math.fsum(m * 0.5 for m in masses)
    out.append(
        AssertionResult(
            "bitstring-exact-mean",
            abs(closed - 0.5) <= PROB_TOL,
            f"closed-form expected robust risk {closed!r} equals 1/2 within 1e-12",
            [],
        )
    )
    mean = math.fsum(r["robust_risk"] for r in rows) / len(rows)
    out.append(
        AssertionResult(
            "bitstring-mc-mean",
            abs(mean - 0.5) <= 0.02,
            f"Monte Carlo mean robust risk {mean:.4f} within 0.02 of 1/2 over {trials} seeds",
            [],
        )
    )
    k = int(scenario.meta["gadget_count"])
    dims_ok = True
    detail = []
    for kk in (1, 2, 3):
        if kk > k:
            break
        sub = build_counterexample(kk, labels=tuple(scenario.space.labels))
        concepts = bitstring_concepts(sub.space, kk)
        dim = robust_shattering_dim(concepts, sub.relation, cap=kk)
        detail.append(f"k={kk}:dim={dim}")
        dims_ok = dims_ok and dim == kk
    out.append(
        AssertionResult(
            "shattering-dim",
            dims_ok,
            "exhaustive search certifies dimension k on truncations (" + ", ".join(detail) + ")",
            [],
        )
    )
    return out


_TRIALS = {
    "roboost": _trial_roboost,
    "alpha": _trial_alpha,
    "two_layer": _trial_two_layer,
    "uroboost": _trial_uroboost,
    "granular": _trial_granular,
    "convert": _trial_convert,
    "counterexample-eval": _trial_counterexample,
}

_ASSERTS = {
    "roboost": _assert_roboost,
    "alpha": _assert_alpha,
    "two_layer": _assert_two_layer,
    "uroboost": _assert_uroboost,
    "granular": _assert_granular,
    "convert": _assert_convert,
    "counterexample-eval": _assert_counterexample,
}


def run_scenario(
    scenario: Scenario,
    procedure: str,
    trials: int,
    base_seed: int | None = None,
    *,
    workers: int = 1,
) -> Report:
    """Execute seeded independent trials and evaluate every applicable assertion.

    Trial rows are assembled by trial index, so reports are byte-identical
    across replays of the same (scenario, seed, trials) regardless of worker
    scheduling.
    """
    if procedure not in _TRIALS:
        raise ScenarioError("$.procedure", f"unknown procedure {procedure!r}; choose from {PROCEDURES}")
    if trials < 1:
        raise ValueError("need at least one trial")
    seed = scenario.seed if base_seed is None else base_seed
    trial_fn = _TRIALS[procedure]

    started = time.monotonic()
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                i: pool.submit(trial_fn, scenario, i, seed) for i in range(trials)
            }
            rows = [futures[i].result() for i in range(trials)]
    else:
        rows = [trial_fn(scenario, i, seed) for i in range(trials)]
    elapsed = time.monotonic() - started

    assertions = _ASSERTS[procedure](rows, scenario, trials)
    passed = all(a.passed for a in assertions)
    print(
        f"[roboost] {scenario.name}/{procedure}: {trials} trials in {elapsed:.2f}s, "
        + ("all assertions passed" if passed else "ASSERTION FAILURES"),
        file=sys.stderr,
    )
    for a in assertions:
        status = "pass" if a.passed else "FAIL"
        print(f"[roboost]   {status} {a.tag}: {a.detail}", file=sys.stderr)

    return Report(
        scenario=scenario.to_json(),
        procedure=procedure,
        trials=trials,
        base_seed=seed,
        parameters=dict(scenario.params),
        assertions=assertions,
        trial_rows=rows,
        passed=passed,
    )


def write_report(report: Report, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.dumps())


def write_csv(report: Report, path: str) -> None:
    """Flat per-round rows for plotting; final risks repeat on each row."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "trial",
                "procedure",
                "round",
                "beta_t",
                "p_t",
                "draws_labeled",
                "draws_unlabeled",
                "robust_risk",
                "natural_error",
            ]
        )
        for row in report.trial_rows:
            rounds = row.get("rounds") or [None]
            for rec in rounds:
                writer.writerow(
                    [
                        row["trial"],
                        report.procedure,
                        rec["t"] if rec else 0,
                        rec["beta_t"] if rec else None,
                        rec["p_t"] if rec else None,
                        row.get("draws_labeled", 0),
                        row.get("draws_unlabeled", 0),
                        row.get("robust_risk"),
                        row.get("natural_error"),
                    ]
                )


def report_diff(a: dict, b: dict) -> list[str]:
    """Structured difference between two report documents."""
    diffs: list[str] = []

    def walk(x, y, path):
        if type(x) is not type(y):
            diffs.append(f"{path}: type {type(x).__name__} != {type(y).__name__}")
            return
        if isinstance(x, dict):
            for k in sorted(set(x) | set(y)):
                if k not in x:
                    diffs.append(f"{path}.{k}: only in second")
                elif k not in y:
                    diffs.append(f"{path}.{k}: only in first")
                else:
                    walk(x[k], y[k], f"{path}.{k}")
        elif isinstance(x, list):
            if len(x) != len(y):
                diffs.append(f"{path}: length {len(x)} != {len(y)}")
            for i, (xi, yi) in enumerate(zip(x, y)):
                walk(xi, yi, f"{path}[{i}]")
        else:
            if x != y:
                diffs.append(f"{path}: {x!r} != {y!r}")

    walk(a, b, "$")
    return diffs
