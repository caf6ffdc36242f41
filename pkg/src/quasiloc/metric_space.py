"""Finite uniformly discrete metric spaces and the geometric queries built on them.

Two kinds of space are supported: integer boxes in Z^d under the l-infinity or
l1 norm, and connected unweighted graphs under the hop metric.  Distances are
stored as an exact integer matrix, so every query below is a vectorised scan.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

NORMS = ("linf", "l1")


class SpaceError(ValueError):
    """Raised for malformed space descriptors or cross-space operations."""


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """A finite point set with an exact integer metric of separation at least 1.

    Points are the indices ``0..n-1``.  For boxes the ordering is row-major, so
    index order coincides with lexicographic order of coordinates.
    """

    kind: str
    dist: np.ndarray = field(repr=False)
    dims: tuple[int, ...] = ()
    norm: str = "linf"
    edges: tuple[tuple[int, int], ...] = field(default=(), repr=False)
    coords: np.ndarray | None = field(default=None, repr=False)
    base_point: int = 0

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def diameter(self) -> int:
        return int(self.dist.max()) if self.n else 0

    def descriptor(self) -> dict:
        if self.kind == "zd_box":
            return {"kind": "zd_box", "dims": list(self.dims), "norm": self.norm}
        return {"kind": "graph", "n": self.n, "edges": [list(e) for e in self.edges]}

    def subset(self, points: Iterable[int] | np.ndarray) -> "PointSubset":
        return PointSubset.from_points(self, points)

    def full(self) -> "PointSubset":
        return PointSubset(self, np.ones(self.n, dtype=bool))

    def empty(self) -> "PointSubset":
        return PointSubset(self, np.zeros(self.n, dtype=bool))

    def index_of(self, coord: Sequence[int]) -> int:
        """Row-major index of a box coordinate."""
        if self.kind != "zd_box":
            raise SpaceError("coordinates only exist on box spaces")
        return int(np.ravel_multi_index(tuple(coord), self.dims))

    def distance_to(self, subset: "PointSubset") -> np.ndarray:
        """d(x, Z) for every point x; +inf everywhere when Z is empty."""
        _check_same_space(self, subset.space)
        if not subset.mask.any():
            return np.full(self.n, np.inf)
        return self.dist[:, subset.mask].min(axis=1).astype(float)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def zd_box(dims: Sequence[int], norm: str = "linf") -> FiniteMetricSpace:
    """Integer box ``[0,dims[0]) x ... `` with the l-infinity or l1 metric."""
    dims = tuple(int(k) for k in dims)
    if not dims:
        raise SpaceError("box needs at least one dimension")
    if any(k < 1 for k in dims):
        raise SpaceError(f"box dims must be >= 1, got {list(dims)}")
    if norm not in NORMS:
        raise SpaceError(f"norm must be one of {NORMS}, got {norm!r}")
    grids = np.meshgrid(*[np.arange(k) for k in dims], indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    diff = np.abs(coords[:, None, :] - coords[None, :, :])
    dist = diff.max(axis=2) if norm == "linf" else diff.sum(axis=2)
    return FiniteMetricSpace(
        kind="zd_box",
        dist=_freeze(dist.astype(np.int64)),
        dims=dims,
        norm=norm,
        coords=_freeze(coords),
    )


def graph(n: int, edges: Iterable[Sequence[int]]) -> FiniteMetricSpace:
    """Connected unweighted graph with the shortest-path hop metric."""
    n = int(n)
    if n < 1:
        raise SpaceError("graph needs n >= 1")
    clean: list[tuple[int, int]] = []
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n and 0 <= v < n):
            raise SpaceError(f"edge {(u, v)} out of range for n={n}")
        clean.append((u, v))
    if clean:
        u, v = np.array(clean).T
        adj = coo_matrix((np.ones(len(clean)), (u, v)), shape=(n, n)).tocsr()
    else:
        adj = coo_matrix((n, n)).tocsr()
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise SpaceError("not proper/connected: graph has %d components" % ncomp)
    dist = shortest_path(adj, method="D", directed=False, unweighted=True)
    return FiniteMetricSpace(
        kind="graph", dist=_freeze(np.rint(dist).astype(np.int64)), edges=tuple(clean)
    )


def path_graph(n: int) -> FiniteMetricSpace:
    return graph(n, [(i, i + 1) for i in range(n - 1)])


def build_space(spec: dict) -> FiniteMetricSpace:
    """Build a space from its JSON descriptor."""
    kind = spec.get("kind")
    if kind == "zd_box":
        return zd_box(spec.get("dims", []), spec.get("norm", "linf"))
    if kind == "graph":
        return graph(spec["n"], spec.get("edges", []))
    raise SpaceError(f"unknown space kind {kind!r}")


def same_space(a: FiniteMetricSpace, b: FiniteMetricSpace) -> bool:
    return a is b or (a.kind == b.kind and a.n == b.n and a.descriptor() == b.descriptor())


def _check_same_space(a: FiniteMetricSpace, b: FiniteMetricSpace) -> None:
    if not same_space(a, b):
        raise SpaceError("objects belong to different spaces")


@dataclass(frozen=True, eq=False)
class PointSubset:
    """A subset of a space, stored as a boolean membership mask."""

    space: FiniteMetricSpace
    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.space.n,):
            raise SpaceError("mask length does not match the space")
        object.__setattr__(self, "mask", _freeze(mask.copy()))

    @classmethod
    def from_points(cls, space: FiniteMetricSpace, points) -> "PointSubset":
        mask = np.zeros(space.n, dtype=bool)
        idx = np.asarray(list(points) if not isinstance(points, np.ndarray) else points,
                         dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= space.n):
            raise SpaceError("point index out of range")
        mask[idx] = True
        return cls(space, mask)

    @property
    def points(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __bool__(self) -> bool:
        return bool(self.mask.any())

    def __contains__(self, x: int) -> bool:
        return bool(self.mask[x])

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, PointSubset)
            and same_space(other.space, self.space)
            and bool(np.array_equal(other.mask, self.mask))
        )

    def __hash__(self) -> int:
        return hash((self.space.n, self.mask.tobytes()))

    def __or__(self, other: "PointSubset") -> "PointSubset":
        _check_same_space(self.space, other.space)
        return PointSubset(self.space, self.mask | other.mask)

    def __and__(self, other: "PointSubset") -> "PointSubset":
        _check_same_space(self.space, other.space)
        return PointSubset(self.space, self.mask & other.mask)

    def __sub__(self, other: "PointSubset") -> "PointSubset":
        _check_same_space(self.space, other.space)
        return PointSubset(self.space, self.mask & ~other.mask)

    def complement(self) -> "PointSubset":
        return PointSubset(self.space, ~self.mask)

    def issubset(self, other: "PointSubset") -> bool:
        _check_same_space(self.space, other.space)
        return not bool((self.mask & ~other.mask).any())

    def __repr__(self) -> str:
        pts = self.points
        shown = ", ".join(map(str, pts[:8])) + (", ..." if len(pts) > 8 else "")
        return f"PointSubset({{{shown}}}, n={len(pts)})"


def neighborhood(subset: PointSubset, radius: float) -> PointSubset:
    """N_R(Z) = {x : d(x, Z) <= R}; empty in, empty out."""
    if radius < 0:
        raise SpaceError("radius must be nonnegative")
    return PointSubset(subset.space, subset.space.distance_to(subset) <= radius)


def set_distance(first: PointSubset, second: PointSubset) -> float:
    """Infimum of pairwise distances, +inf when either set is empty."""
    _check_same_space(first.space, second.space)
    if not first or not second:
        return float("inf")
    return float(first.space.dist[np.ix_(first.mask, second.mask)].min())


def is_r_disjoint(family: Sequence[PointSubset], radius: float) -> bool:
    """True iff every distinct pair of members is at distance strictly > radius."""
    return first_violation(family, radius) is None


def first_violation(family: Sequence[PointSubset], radius: float) -> tuple[int, int, float] | None:
    """The first pair (i, j, distance) with distance <= radius, if any."""
    if not family:
        return None
    space = family[0].space
    for member in family[1:]:
        _check_same_space(space, member.space)
    nonempty = [i for i, m in enumerate(family) if m]
    if len(nonempty) < 2:
        return None
    # rows: d(x, member); one column-restricted min per member gives all pair distances
    to_member = np.stack([space.distance_to(family[i]) for i in nonempty])
    pair = np.stack([to_member[:, family[j].mask].min(axis=1) for j in nonempty], axis=1)
    bad = np.argwhere(np.triu(pair <= radius, k=1))
    if not len(bad):
        return None
    a, b = bad[0]
    return nonempty[a], nonempty[b], float(pair[a, b])


def diameter(subset: PointSubset) -> float:
    """Largest pairwise distance inside a nonempty subset."""
    if not subset:
        raise SpaceError("diameter of an empty set is undefined")
    sub = subset.space.dist[np.ix_(subset.mask, subset.mask)]
    return float(sub.max())


@dataclass(frozen=True, eq=False)
class CoarseMap:
    """A total function between two finite spaces, given as an index array."""

    domain: FiniteMetricSpace
    codomain: FiniteMetricSpace
    images: np.ndarray

    def __post_init__(self) -> None:
        img = np.asarray(self.images, dtype=np.int64)
        if img.shape != (self.domain.n,):
            raise SpaceError("map must assign an image to every domain point")
        if img.size and (img.min() < 0 or img.max() >= self.codomain.n):
            raise SpaceError("image index out of range")
        object.__setattr__(self, "images", _freeze(img.copy()))

    @classmethod
    def from_function(cls, domain, codomain, fn: Callable[[int], int]) -> "CoarseMap":
        return cls(domain, codomain, np.array([fn(x) for x in range(domain.n)]))


@dataclass(frozen=True)
class CoarseProfile:
    radii: tuple[float, ...]
    moduli: tuple[float, ...]
    cobounded: bool
    max_fiber_diameter: float


def coarse_profile(phi: CoarseMap, radii: Sequence[float]) -> CoarseProfile:
    """Exact bornologous modulus S(R) and the largest fiber diameter."""
    d_dom = phi.domain.dist
    d_img = phi.codomain.dist[np.ix_(phi.images, phi.images)]
    moduli = tuple(float(d_img[d_dom <= r].max()) if (d_dom <= r).any() else 0.0
                   for r in radii)
    fiber = 0.0
    for y in np.unique(phi.images):
        members = phi.images == y
        fiber = max(fiber, float(d_dom[np.ix_(members, members)].max()))
    return CoarseProfile(tuple(float(r) for r in radii), moduli, True, fiber)


def uniformly_bounded_check(space: FiniteMetricSpace, pairs: Iterable[Sequence[int]]) -> float:
    """Largest distance over a set of point pairs (0 for no pairs)."""
    arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    if not len(arr):
        return 0.0
    return float(space.dist[arr[:, 0], arr[:, 1]].max())


def identity_closeness(space: FiniteMetricSpace, self_map: np.ndarray) -> float:
    """sup_x d(m(x), x) for a self-map given as an index array."""
    self_map = np.asarray(self_map, dtype=np.int64)
    return uniformly_bounded_check(space, np.stack([self_map, np.arange(space.n)], axis=1))


def box_points(dims: Sequence[int]) -> list[tuple[int, ...]]:
    return list(product(*[range(k) for k in dims]))
