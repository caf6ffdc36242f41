"""Metric families, colored covers, decomposition chains and partitions of unity.

Covers of integer boxes are built from products of half-open intervals of
length r: along each axis consecutive intervals alternate parity, and the color
of a block is its tuple of parities.  Blocks of one color are then at distance
r + 1 from each other, so each color class is r-disjoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .metric_space import (
    FiniteMetricSpace,
    PointSubset,
    SpaceError,
    diameter,
    first_violation,
    neighborhood,
    same_space,
)
from .operators import ScalarField

WEIGHT_TOL = 1e-9


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MetricFamily:
    space: FiniteMetricSpace
    members: tuple[PointSubset, ...]
    labels: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))
        for m in self.members:
            if not same_space(m.space, self.space):
                raise SpaceError("family member from a different space")

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def bound(self) -> float:
        """Largest member diameter (0 for an empty family)."""
        return max((diameter(m) for m in self.members if m), default=0.0)


@dataclass(frozen=True, eq=False)
class ColoredCover:
    """k color classes of subsets; each class should be `scale`-disjoint."""

    space: FiniteMetricSpace
    colors: tuple[tuple[PointSubset, ...], ...]
    scale: float
    domain: PointSubset | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "colors", tuple(tuple(c) for c in self.colors))
        if self.domain is None:
            object.__setattr__(self, "domain", self.space.full())

    @property
    def k(self) -> int:
        return len(self.colors)

    @property
    def bound(self) -> float:
        return max((diameter(m) for c in self.colors for m in c if m), default=0.0)

    def members(self) -> list[tuple[int, int, PointSubset]]:
        return [(i, j, m) for i, c in enumerate(self.colors) for j, m in enumerate(c)]

    def family(self, color: int) -> MetricFamily:
        return MetricFamily(self.space, self.colors[color])

    def union(self) -> PointSubset:
        mask = np.zeros(self.space.n, dtype=bool)
        for _, _, m in self.members():
            mask |= m.mask
        return PointSubset(self.space, mask)


@dataclass(frozen=True)
class DecompositionReport:
    passed: bool
    failures: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.passed


def verify_r_decomposition(parent: PointSubset, cover: ColoredCover, radius: float) -> DecompositionReport:
    """Check parent = union of the color classes, each an R-disjoint union of members."""
    failures = []
    union = cover.union()
    if not union.issubset(parent):
        failures.append("members leave the parent set")
    if not parent.issubset(union):
        missing = (parent - union).points
        failures.append(f"not a cover: point {int(missing[0])} is uncovered")
    for i, members in enumerate(cover.colors):
        bad = first_violation([m for m in members if m], radius)
        if bad is not None:
            a, b, d = bad
            failures.append(
                f"color {i}: members {a} and {b} at distance {d:g} are not {radius:g}-disjoint (strict)"
            )
    return DecompositionReport(not failures, tuple(failures))


def _box_blocks(space: FiniteMetricSpace, points: np.ndarray, r: int, anchor: np.ndarray):
    """Group points of a box into r-blocks anchored at `anchor`; yields (color, members)."""
    d = len(space.dims)
    block = (space.coords[points] - anchor) // r
    parity = block % 2
    color = (parity * (2 ** np.arange(d - 1, -1, -1))).sum(axis=1)
    colors: list[list[PointSubset]] = [[] for _ in range(2 ** d)]
    keys, inverse = np.unique(block, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for b in range(len(keys)):  # np.unique sorts keys lexicographically
        sel = points[inverse == b]
        colors[int(color[inverse == b][0])].append(space.subset(sel))
    return colors


def decompose_zd(space: FiniteMetricSpace, r: int) -> ColoredCover:
    """2^d-colored cover of an l-infinity box by r-blocks; each color is r-disjoint."""
    if space.kind != "zd_box":
        raise DecompositionError("decompose_zd needs a box space")
    if space.norm != "linf":
        raise DecompositionError("decompose_zd needs the l-infinity metric")
    r = int(r)
    if r <= 0:
        raise DecompositionError("r must be a positive integer")
    colors = _box_blocks(space, np.arange(space.n), r, np.zeros(len(space.dims), dtype=np.int64))
    return ColoredCover(space, tuple(tuple(c) for c in colors), float(r))


def split_member(member: PointSubset, r: int) -> ColoredCover:
    """Re-decompose a box-shaped subset by r-blocks anchored at its least corner."""
    space = member.space
    pts = member.points
    anchor = space.coords[pts].min(axis=0)
    colors = _box_blocks(space, pts, int(r), anchor)
    return ColoredCover(space, tuple(tuple(c) for c in colors), float(r), domain=member)


def thicken(family: MetricFamily, radius: float) -> MetricFamily:
    """Replace every member Y by N_S(Y)."""
    if radius < 0:
        raise DecompositionError("thickening radius must be nonnegative")
    return MetricFamily(family.space, tuple(neighborhood(m, radius) for m in family), family.labels)


# ---------------------------------------------------------------------------
# chains


@dataclass(frozen=True, eq=False)
class ChainStage:
    """One decomposition step: members with their color and parent index."""

    radius: float
    members: tuple[PointSubset, ...]
    colors: tuple[int, ...]
    parents: tuple[int, ...]
    k: int

    def children_cover(self, space: FiniteMetricSpace, parent_index: int, parent: PointSubset) -> ColoredCover:
        groups: list[list[PointSubset]] = [[] for _ in range(self.k)]
        for m, c, p in zip(self.members, self.colors, self.parents):
            if p == parent_index:
                groups[c].append(m)
        return ColoredCover(space, tuple(tuple(g) for g in groups), self.radius, domain=parent)


@dataclass(frozen=True, eq=False)
class DecompositionChain:
    space: FiniteMetricSpace
    stages: tuple[ChainStage, ...]

    @property
    def depth(self) -> int:
        return len(self.stages)

    def members(self, n: int) -> tuple[PointSubset, ...]:
        """Members of stage n; stage 0 is the single set X."""
        return (self.space.full(),) if n == 0 else self.stages[n - 1].members

    @property
    def terminal_bound(self) -> float:
        return max((diameter(m) for m in self.members(self.depth) if m), default=0.0)

    def radii(self) -> list[float]:
        return [s.radius for s in self.stages]


def _stage_from_covers(radius: float, covers: Sequence[tuple[int, ColoredCover]], k: int) -> ChainStage:
    members, colors, parents = [], [], []
    for parent, cover in covers:
        for i, j, m in cover.members():
            members.append(m)
            colors.append(i)
            parents.append(parent)
    return ChainStage(float(radius), tuple(members), tuple(colors), tuple(parents), k)


def build_chain(space: FiniteMetricSpace, schedule: Sequence[float]) -> DecompositionChain:
    """Chain X = X_0 -> X_1 -> ... with X_{n-1} R_n-decomposing over X_n.

    On Z boxes a schedule of length m gives an m-stage binary chain: the last
    stage uses blocks of length ceil(R_m) and earlier stages use blocks at least
    twice as long as the next, each member split at its own least point.  On
    Z^d boxes with d >= 2 a single 2^d-colored stage at ceil(max R) is used.
    Graph spaces get single-member stages {X}, which decompose trivially.
    """
    schedule = [float(r) for r in schedule]
    for n in range(1, len(schedule)):
        if not schedule[n] > schedule[n - 1]:
            raise DecompositionError(
                f"schedule must increase: stage {n + 1} radius {schedule[n]:g} <= {schedule[n - 1]:g}"
            )
    if any(r < 0 for r in schedule):
        raise DecompositionError("schedule radii must be nonnegative")
    if not schedule:
        chain = DecompositionChain(space, ())
        return chain
    if space.kind != "zd_box":
        stages = tuple(ChainStage(r, (space.full(),), (0,), (0,), 2) for r in schedule)
        return DecompositionChain(space, stages)
    if space.norm != "linf":
        raise DecompositionError("stage 1 unachievable: box chains need the l-infinity metric")
    d = len(space.dims)
    k = 2 ** d
    if d >= 2:
        r = max(1, math.ceil(max(schedule)))
        cover = decompose_zd(space, r)
        chain = DecompositionChain(space, (_stage_from_covers(max(schedule), [(0, cover)], k),))
        return chain
    lengths = [max(1, math.ceil(schedule[-1]))]
    for r in reversed(schedule[:-1]):
        lengths.insert(0, max(math.ceil(r), 1, 2 * lengths[0]))
    stages = [_stage_from_covers(schedule[0], [(0, decompose_zd(space, lengths[0]))], k)]
    for n in range(1, len(schedule)):
        prev = stages[-1]
        covers = [(p, split_member(m, lengths[n])) for p, m in enumerate(prev.members)]
        stages.append(_stage_from_covers(schedule[n], covers, k))
    return DecompositionChain(space, tuple(stages))


def verify_chain(chain: DecompositionChain) -> DecompositionReport:
    failures = []
    for n, stage in enumerate(chain.stages, start=1):
        for p, parent in enumerate(chain.members(n - 1)):
            rep = verify_r_decomposition(parent, stage.children_cover(chain.space, p, parent), stage.radius)
            failures.extend(f"stage {n}, parent {p}: {f}" for f in rep.failures)
    return DecompositionReport(not failures, tuple(failures))


# ---------------------------------------------------------------------------
# partitions of unity


@dataclass(frozen=True)
class PartitionPiece:
    color: int
    member: int
    field: ScalarField
    owner: PointSubset


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    pieces: tuple[PartitionPiece, ...]
    mode: str = "indicator"

    def fields(self, color: int | None = None) -> list[ScalarField]:
        return [p.field for p in self.pieces if color is None or p.color == color]

    def color_sum(self, color: int) -> np.ndarray:
        space = self.pieces[0].field.space
        out = np.zeros(space.n)
        for p in self.pieces:
            if p.color == color:
                out += p.field.values
        return out

    def total(self) -> np.ndarray:
        return np.sum([p.field.values for p in self.pieces], axis=0)


def indicator_partition(cover: ColoredCover) -> PartitionOfUnity:
    """Assign each point to its first (color, member) containing it; return the indicators."""
    space = cover.space
    owner = np.full(space.n, -1)
    members = cover.members()
    for idx, (_, _, m) in enumerate(members):
        owner[(owner < 0) & m.mask] = idx
    domain = cover.domain.mask
    if (owner[domain] < 0).any():
        x = int(np.flatnonzero(domain & (owner < 0))[0])
        raise DecompositionError(f"not a cover: point {x} is uncovered")
    pieces = tuple(
        PartitionPiece(i, j, ScalarField(space, (owner == idx).astype(float)), m)
        for idx, (i, j, m) in enumerate(members)
    )
    return PartitionOfUnity(pieces, "indicator")


def bump_field(space: FiniteMetricSpace, subset: PointSubset, lip: float) -> ScalarField:
    """x -> clamp(1 - L d(x, S), 0, 1): 1 on S, L-Lipschitz, support within N_{1/L}(S)."""
    if lip <= 0:
        raise DecompositionError("L must be positive")
    if not subset:
        raise DecompositionError("bump around an empty set")
    return ScalarField(space, np.clip(1.0 - lip * space.distance_to(subset), 0.0, 1.0))


# ---------------------------------------------------------------------------
# nuclear-dimension witness


def _lexmin(member: PointSubset) -> int:
    return int(member.points[0])


@dataclass(frozen=True, eq=False)
class DimNucFactorization:
    """Point evaluations down, partition-weighted sums up."""

    space: FiniteMetricSpace
    cover: ColoredCover
    partition: PartitionOfUnity
    samples: tuple[tuple[int, ...], ...]

    @property
    def scale_bound(self) -> float:
        return self.cover.bound

    def psi(self, f: ScalarField | np.ndarray) -> list[np.ndarray]:
        vals = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
        return [vals[np.array(s, dtype=np.int64)] for s in self.samples]

    def phi(self, color: int, weights: np.ndarray) -> ScalarField:
        out = np.zeros(self.space.n)
        fields = self.partition.fields(color)
        for w, e in zip(weights, fields):
            out += w * e.values
        return ScalarField(self.space, out)

    def composite(self, f: ScalarField | np.ndarray) -> ScalarField:
        down = self.psi(f)
        out = np.zeros(self.space.n)
        for i, lam in enumerate(down):
            out += self.phi(i, lam).values
        return ScalarField(self.space, out)

    def composite_error(self, f: ScalarField | np.ndarray) -> float:
        vals = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
        return float(np.abs(self.composite(vals).values - vals).max())


def dimnuc_factorization(space: FiniteMetricSpace, cover: ColoredCover,
                         sample_rule: Callable[[PointSubset], int] = _lexmin) -> DimNucFactorization:
    partition = indicator_partition(cover)
    samples = []
    for i in range(cover.k):
        row = []
        for piece in partition.pieces:
            if piece.color != i:
                continue
            supp = piece.field.support
            if not supp:
                raise DecompositionError(f"member {piece.member} of color {i} owns no points")
            x = sample_rule(supp)
            if x not in supp:
                raise DecompositionError("sample point outside the field's support")
            row.append(x)
        samples.append(tuple(row))
    return DimNucFactorization(space, cover, partition, tuple(samples))


@dataclass(frozen=True)
class CoverExtraction:
    assignment: tuple[int, ...]
    contained: tuple[bool, ...]

    @property
    def certified(self) -> bool:
        return all(self.contained)


def dimnuc_cover_extract(f_fields: Sequence[np.ndarray], e_fields: Sequence[np.ndarray],
                         weights: np.ndarray, eta: float) -> CoverExtraction:
    """For each i pick j(i) with weights[i, j(i)] >= 1/m and verify
    {e_i > m eta} is contained in {f_j(i) > 0} by scanning every point.

    weights has shape (n, m): row i holds lambda_{i, 1..m}.
    """
    f = np.asarray(f_fields, dtype=float)
    e = np.asarray(e_fields, dtype=float)
    lam = np.asarray(weights, dtype=float)
    m, n = len(f), len(e)
    if lam.shape != (n, m):
        raise DecompositionError(f"weights must have shape ({n}, {m}), got {lam.shape}")
    if eta < 0:
        raise DecompositionError("eta must be nonnegative")
    if (f < 0).any() or (e < 0).any() or (lam < 0).any():
        raise DecompositionError("hypothesis violated: fields and weights must be nonnegative")
    rows = lam.sum(axis=1)
    if np.abs(rows - 1).max(initial=0) > WEIGHT_TOL:
        i = int(np.abs(rows - 1).argmax())
        raise DecompositionError(f"hypothesis violated: weights of row {i} sum to {rows[i]!r}, not 1")
    approx = lam.T @ e  # (m, points)
    gap = np.abs(f - approx).max(axis=1) if f.size else np.zeros(m)
    if (gap > eta + 1e-12).any():
        j = int(gap.argmax())
        raise DecompositionError(
            f"hypothesis violated: f_{j} differs from sum_i lambda_ij e_i by {gap[j]:g} > eta={eta:g}"
        )
    assignment, contained = [], []
    for i in range(n):
        j = int(np.flatnonzero(lam[i] >= lam[i].max())[0])
        assignment.append(j)
        high = e[i] > m * eta
        contained.append(bool(np.all(f[j][high] > 0)))
    return CoverExtraction(tuple(assignment), tuple(contained))
