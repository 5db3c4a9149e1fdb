"""Seeded sampling oracles over exact distributions, with draw budgeting.

One generator family is used everywhere: numpy's PCG64 seeded through
SeedSequence. Sub-streams derive deterministically as
``SeedSequence((base_seed, *key))``, so a (scenario seed, trial index) pair
always replays the same draw sequence. Inverse-CDF sampling over the point
index ordering makes each draw O(log n) and exact up to float rounding of the
cumulative sums.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetExhaustedError, EmptyRegionSignal
from .space import Distribution, Labeling, bits

_CHUNK = 512


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic child generator for (seed, key...)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *key))))


def region_bool(mask: int, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=bool)
    for x in bits(mask):
        out[x] = True
    return out


class SamplingOracle:
    """Budgeted, seeded i.i.d. sampler for a Distribution.

    Draws points with probability exactly equal to their mass via inverse-CDF
    lookup; attaches labels from ``labeler`` when present. The ``drawn``
    counter is monotone and never silently exceeds ``budget``. Uniform
    variates are pre-generated in chunks but consumed strictly in order, so
    the draw sequence depends only on (distribution, seed).
    """

    def __init__(
        self,
        dist: Distribution,
        labeler: Labeling | None = None,
        *,
        rng: np.random.Generator | None = None,
        seed: int | None = None,
        budget: int | None = None,
    ):
        if rng is None:
            rng = derive_rng(0 if seed is None else seed)
        self.dist = dist
        self.labeler = labeler
        self.budget = budget
        self.drawn = 0
        self._rng = rng
        mass = np.asarray(dist.mass, dtype=np.float64)
        self._cdf = np.cumsum(mass)
        self._total = float(self._cdf[-1])
        self._buf = np.empty(0, dtype=np.float64)
        self._pos = 0

    # -- internals ---------------------------------------------------------

    def _refill(self, at_least: int) -> None:
        have = len(self._buf) - self._pos
        if have >= at_least:
            return
        fresh = self._rng.random(max(_CHUNK, at_least - have))
        self._buf = np.concatenate([self._buf[self._pos:], fresh])
        self._pos = 0

    def _peek(self, k: int) -> np.ndarray:
        self._refill(k)
        return self._buf[self._pos : self._pos + k]

    def _advance(self, k: int) -> None:
        self._pos += k

    def _take(self, k: int) -> np.ndarray:
        out = self._peek(k)
        self._advance(k)
        return out

    def _charge(self, k: int) -> None:
        if self.budget is not None and self.drawn + k > self.budget:
            raise BudgetExhaustedError(
                f"oracle budget {self.budget} exhausted", drawn=self.drawn, budget=self.budget
            )
        self.drawn += k

    def _points_from(self, us: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._cdf, us * self._total, side="right").clip(
            0, self.dist.space.point_count - 1
        )

    # -- public API --------------------------------------------------------

    def remaining(self) -> int | None:
        return None if self.budget is None else self.budget - self.drawn

    def draw(self) -> tuple[int, object]:
        """One labeled draw: (point, label) or (point, None) without a labeler."""
        self._charge(1)
        x = int(self._points_from(self._take(1))[0])
        return x, (self.labeler(x) if self.labeler is not None else None)

    def draw_many(self, k: int) -> list[tuple[int, object]]:
        self._charge(k)
        pts = self._points_from(self._take(k))
        if self.labeler is None:
            return [(int(x), None) for x in pts]
        return [(int(x), self.labeler(int(x))) for x in pts]

    def draw_until(
        self, accept: np.ndarray, max_draws: int | None = None
    ) -> tuple[int, object, int] | None:
        """Draw until a point with accept[point] is sampled.

        Returns (point, label, draws_used), or None if max_draws draws were
        burned without a hit. Draws are charged as consumed, including on the
        None path.
        """
        used = 0
        while True:
            cap = _CHUNK if max_draws is None else min(_CHUNK, max_draws - used)
            if cap <= 0:
                return None
            if self.budget is not None:
                cap = min(cap, self.budget - self.drawn)
                if cap <= 0:
                    raise BudgetExhaustedError(
                        f"oracle budget {self.budget} exhausted",
                        drawn=self.drawn,
                        budget=self.budget,
                    )
            us = self._peek(cap)
            pts = self._points_from(us)
            hits = accept[pts]
            idx = int(np.argmax(hits)) if hits.any() else -1
            consumed = idx + 1 if idx >= 0 else cap
            # consume only what was actually drawn; the rest stays buffered
            self._advance(consumed)
            self._charge(consumed)
            used += consumed
            if idx >= 0:
                x = int(pts[idx])
                return x, (self.labeler(x) if self.labeler is not None else None), used


class PseudoLabelingOracle:
    """Wraps an unlabeled oracle and labels each draw with a fixed predictor."""

    def __init__(self, base: SamplingOracle, labeler: Labeling):
        self.base = base
        self.labeler = labeler

    @property
    def dist(self) -> Distribution:
        return self.base.dist

    @property
    def drawn(self) -> int:
        return self.base.drawn

    def draw(self) -> tuple[int, object]:
        x, _ = self.base.draw()
        return x, self.labeler(x)

    def draw_many(self, k: int) -> list[tuple[int, object]]:
        return [(x, self.labeler(x)) for x, _ in self.base.draw_many(k)]

    def draw_until(self, accept: np.ndarray, max_draws: int | None = None):
        got = self.base.draw_until(accept, max_draws)
        if got is None:
            return None
        x, _, used = got
        return x, self.labeler(x), used


class ConditionalOracle:
    """Serves draws from the base oracle conditioned on an accept region.

    Each accepted point may cost at most ``per_accept_budget`` base draws;
    exceeding that raises EmptyRegionSignal, the safe-termination signal for
    boosting rounds. The ``accepted`` counter tracks conditional draws; raw
    consumption is visible on the base oracle.
    """

    def __init__(
        self,
        base,
        accept: np.ndarray,
        per_accept_budget: int,
        max_accepts: int | None = None,
    ):
        if per_accept_budget < 1:
            raise ValueError("per-accept budget must be at least 1")
        self.base = base
        self.accept = accept
        self.per_accept_budget = per_accept_budget
        self.max_accepts = max_accepts
        self.accepted = 0

    @property
    def dist(self) -> Distribution:
        return self.base.dist

    def draw(self) -> tuple[int, object]:
        if self.max_accepts is not None and self.accepted >= self.max_accepts:
            raise BudgetExhaustedError(
                f"conditional point budget {self.max_accepts} exhausted",
                drawn=self.accepted,
                budget=self.max_accepts,
            )
        got = self.base.draw_until(self.accept, self.per_accept_budget)
        if got is None:
            raise EmptyRegionSignal(
                f"no accept within {self.per_accept_budget} draws",
                attempts=self.accepted + 1,
                drawn=self.base.drawn,
            )
        x, y, _ = got
        self.accepted += 1
        return x, y

    def draw_many(self, k: int) -> list[tuple[int, object]]:
        return [self.draw() for _ in range(k)]


class ReplayOracle:
    """Replays a fixed labeled sample in order; used to hand an i.i.d. sample
    to a procedure that expects a pull-based oracle."""

    def __init__(self, items: Sequence[tuple[int, object]], dist: Distribution | None = None):
        self._items = list(items)
        self._cursor = 0
        self.dist = dist
        self.labeler = None

    @property
    def drawn(self) -> int:
        return self._cursor

    def draw(self) -> tuple[int, object]:
        if self._cursor >= len(self._items):
            raise BudgetExhaustedError(
                "replay stream exhausted", drawn=self._cursor, budget=len(self._items)
            )
        item = self._items[self._cursor]
        self._cursor += 1
        return item

    def draw_many(self, k: int) -> list[tuple[int, object]]:
        return [self.draw() for _ in range(k)]

    def draw_until(self, accept: np.ndarray, max_draws: int | None = None):
        used = 0
        while max_draws is None or used < max_draws:
            x, y = self.draw()
            used += 1
            if accept[x]:
                return x, y, used
        return None


def geometric_tail_check(
    p: float, m: int, trials: int, seed: int = 0
) -> float:
    """Empirical exceedance rate of {sum of m geometrics(p) > 2m/p}.

    Theory bounds the rate by exp(-m/4); this is the Monte Carlo counterpart
    used in sample-complexity accounting tests.
    """
    if not (0 < p <= 1):
        raise ValueError("acceptance probability must be in (0, 1]")
    if m < 1:
        raise ValueError("batch size must be >= 1")
    rng = derive_rng(seed, 0x6E0)
    totals = rng.geometric(p, size=(trials, m)).sum(axis=1)
    return float(np.mean(totals > 2 * m / p))
