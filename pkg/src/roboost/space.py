"""Finite instance spaces, perturbation relations, distributions, labelings.

Everything here is exact and enumerable. Point sets are represented as
integer bitmasks (bit ``i`` set means point ``i`` is in the set), which keeps
relation algebra and robust-region computations cheap enough for exhaustive
checks at n <= 64 and beyond. All types are immutable after construction and
safe to share across threads.

Probability comparisons throughout the package use an absolute tolerance of
``PROB_TOL`` (1e-12) after compensated summation with ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

from .errors import EmptyEventError

PROB_TOL = 1e-12


def mask_of(points: Iterable[int]) -> int:
    """Bitmask of a collection of point indices."""
    m = 0
    for p in points:
        m |= 1 << p
    return m


def bits(mask: int) -> Iterator[int]:
    """Iterate the point indices of a bitmask, ascending."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def popcount(mask: int) -> int:
    return mask.bit_count()


def points_of(mask: int) -> frozenset[int]:
    return frozenset(bits(mask))


@dataclass(frozen=True)
class InstanceSpace:
    """A finite instance space: points 0..point_count-1 and an ordered label set.

    The label ordering is meaningful: plurality ties in majority votes break
    toward the earliest label.
    """

    point_count: int
    labels: tuple

    def __post_init__(self):
        if self.point_count < 1:
            raise ValueError("point_count must be >= 1")
        if len(self.labels) < 2:
            raise ValueError("need at least two labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be distinct")
        if any(lab is None for lab in self.labels):
            raise ValueError("None is reserved and cannot be a label")

    @property
    def full_mask(self) -> int:
        return (1 << self.point_count) - 1

    def check_point(self, x: int) -> None:
        if not (0 <= x < self.point_count):
            raise ValueError(f"point {x} outside space of size {self.point_count}")


@dataclass(frozen=True)
class PerturbationRelation:
    """Set-valued map x -> U(x) over a finite space, as per-point bitmasks.

    ``is_reflexive`` and ``is_symmetric`` are computed once at construction by
    exhaustive check. Reflexivity is not required: ball constructors always
    produce reflexive relations, but hand-built relations may omit x from
    U(x), and U(x) may even be empty.
    """

    space: InstanceSpace
    neighbors: tuple[int, ...]
    name: str = "U"
    is_reflexive: bool = field(init=False, default=False)
    is_symmetric: bool = field(init=False, default=False)

    def __post_init__(self):
        n = self.space.point_count
        if len(self.neighbors) != n:
            raise ValueError("need one neighbor set per point")
        full = self.space.full_mask
        for x, nb in enumerate(self.neighbors):
            if nb & ~full:
                raise ValueError(f"U({x}) contains indices outside the space")
        refl = all((self.neighbors[x] >> x) & 1 for x in range(n))
        sym = all(
            ((self.neighbors[x] >> z) & 1) == ((self.neighbors[z] >> x) & 1)
            for x in range(n)
            for z in range(x + 1, n)
        )
        object.__setattr__(self, "is_reflexive", refl)
        object.__setattr__(self, "is_symmetric", sym)

    def __call__(self, x: int) -> int:
        return self.neighbors[x]

    def inverse(self) -> "PerturbationRelation":
        """The preimage relation: inverse()(z) = {x : z in U(x)}.

        Cached after first use; the cache is written once and read-only
        afterwards, so concurrent readers are safe.
        """
        cached = self.__dict__.get("_inverse")
        if cached is None:
            n = self.space.point_count
            inv = [0] * n
            for x, nb in enumerate(self.neighbors):
                for z in bits(nb):
                    inv[z] |= 1 << x
            cached = PerturbationRelation(self.space, tuple(inv), name=f"{self.name}^-1")
            object.__setattr__(self, "_inverse", cached)
        return cached

    def neighbor_sets(self) -> list[list[int]]:
        """Adjacency lists, for serialization."""
        return [sorted(bits(nb)) for nb in self.neighbors]


def relation_from_sets(
    space: InstanceSpace, sets: Sequence[Iterable[int]], name: str = "U"
) -> PerturbationRelation:
    return PerturbationRelation(space, tuple(mask_of(s) for s in sets), name=name)


def invert(relation: PerturbationRelation) -> PerturbationRelation:
    """Preimage relation; satisfies z in U(x) iff x in invert(U)(z)."""
    return relation.inverse()


def compose_inverse(relation: PerturbationRelation) -> PerturbationRelation:
    """The shared-perturbation closure: result(x) = union of U^-1(z) over z in U(x).

    result(x) is the set of natural points that share at least one allowed
    perturbation with x. For metric balls of radius g this is the radius-2g
    ball. The result is always symmetric.
    """
    inv = relation.inverse()
    out = []
    for x in range(relation.space.point_count):
        acc = 0
        for z in bits(relation.neighbors[x]):
            acc |= inv.neighbors[z]
        out.append(acc)
    return PerturbationRelation(
        relation.space, tuple(out), name=f"{relation.name}^-1({relation.name})"
    )


def line_metric(i: int, j: int) -> float:
    return abs(i - j)


def grid_metric(shape: tuple[int, int]) -> Callable[[int, int], float]:
    """Shortest-path metric on an r x c lattice (Manhattan distance)."""
    rows, cols = shape

    def metric(i: int, j: int) -> float:
        ri, ci = divmod(i, cols)
        rj, cj = divmod(j, cols)
        return abs(ri - rj) + abs(ci - cj)

    return metric


def make_metric_ball(
    space: InstanceSpace,
    metric: Callable[[int, int], float],
    radius: float,
    name: str | None = None,
) -> PerturbationRelation:
    """Ball relation U(x) = {z : metric(x, z) <= radius}.

    The metric must be symmetric, nonnegative, and zero on the diagonal, so
    the result is reflexive and symmetric.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    n = space.point_count
    nb = []
    for x in range(n):
        m = 0
        for z in range(n):
            if metric(x, z) <= radius:
                m |= 1 << z
        nb.append(m)
    return PerturbationRelation(
        space, tuple(nb), name=name or f"ball(r={radius:g})"
    )


@dataclass(frozen=True)
class Labeling:
    """A total labeling of the space. Used for both concepts and hypotheses."""

    space: InstanceSpace
    labels: tuple

    def __post_init__(self):
        if len(self.labels) != self.space.point_count:
            raise ValueError("labeling must cover every point")
        valid = set(self.space.labels)
        for x, lab in enumerate(self.labels):
            if lab not in valid:
                raise ValueError(f"label {lab!r} at point {x} not in the label set")
        masks = {y: 0 for y in self.space.labels}
        for x, lab in enumerate(self.labels):
            masks[lab] |= 1 << x
        object.__setattr__(self, "_masks", masks)

    def __call__(self, x: int):
        return self.labels[x]

    def label_mask(self, y) -> int:
        """Bitmask of points carrying label y."""
        return self._masks[y]

    def with_flips(self, flips: dict[int, object]) -> "Labeling":
        new = list(self.labels)
        for x, y in flips.items():
            new[x] = y
        return Labeling(self.space, tuple(new))


Concept = Labeling
Hypothesis = Labeling


@dataclass(frozen=True)
class Distribution:
    """Exact probability vector over the points of a space.

    The mass must sum to 1 within PROB_TOL; the support is exactly the set of
    points with strictly positive mass.
    """

    space: InstanceSpace
    mass: tuple[float, ...]
    support: int = field(init=False, default=0)

    def __post_init__(self):
        if len(self.mass) != self.space.point_count:
            raise ValueError("need one mass per point")
        if any(m < 0 for m in self.mass):
            raise ValueError("negative mass")
        total = math.fsum(self.mass)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"mass sums to {total!r}, expected 1 within {PROB_TOL}")
        object.__setattr__(self, "support", mask_of(x for x, m in enumerate(self.mass) if m > 0))

    def point_mass(self, x: int) -> float:
        return self.mass[x]

    def mass_of(self, region: int) -> float:
        """Exact mass of a bitmask region (compensated summation)."""
        return math.fsum(self.mass[x] for x in bits(region & self.support))

    def support_points(self) -> list[int]:
        return list(bits(self.support))


def uniform_distribution(space: InstanceSpace, points: Iterable[int] | None = None) -> Distribution:
    pts = list(points) if points is not None else list(range(space.point_count))
    if not pts:
        raise ValueError("uniform distribution needs a nonempty point set")
    mass = [0.0] * space.point_count
    w = 1.0 / len(pts)
    for p in pts:
        mass[p] = w
    return Distribution(space, tuple(mass))


def point_mass_distribution(space: InstanceSpace, x: int) -> Distribution:
    space.check_point(x)
    mass = [0.0] * space.point_count
    mass[x] = 1.0
    return Distribution(space, tuple(mass))


def condition(dist: Distribution, event: int) -> Distribution:
    """Restrict a distribution to a bitmask event and renormalize.

    Raises EmptyEventError when the event mass is below PROB_TOL, so boosting
    loops can use it as a clean termination signal.
    """
    ev_mass = dist.mass_of(event)
    if ev_mass <= PROB_TOL:
        raise EmptyEventError(f"event has mass {ev_mass!r}")
    new = [
        (dist.mass[x] / ev_mass if (event >> x) & 1 else 0.0)
        for x in range(dist.space.point_count)
    ]
    return Distribution(dist.space, tuple(new))


def check_robust_realizable(
    dist: Distribution, concept: Labeling, relation: PerturbationRelation
) -> bool:
    """True iff the concept is perturbation-invariant on every support point.

    Exact check: for every x in support and every z in U(x), c(z) = c(x).
    """
    if concept.space is not dist.space and concept.space != dist.space:
        raise ValueError("distribution and concept live on different spaces")
    if relation.space is not dist.space and relation.space != dist.space:
        raise ValueError("distribution and relation live on different spaces")
    for x in bits(dist.support):
        if relation.neighbors[x] & ~concept.label_mask(concept(x)):
            return False
    return True
