"""Higson-function constructions on Z^d with lazily evaluated fields.

Infinite objects are evaluation rules plus declared moduli.  Every claim about
behaviour at infinity is checked on finite boxes or annuli whose radii come
from the construction's own constants.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


class HigsonError(ValueError):
    """A precondition or declared modulus is contradicted."""


# ---------------------------------------------------------------------------
# virtual space


@dataclass(frozen=True)
class VirtualSpace:
    """Z^d with the l-infinity or l1 metric and base point at the origin."""

    d: int
    norm: str = "linf"

    def __post_init__(self) -> None:
        if self.d < 1:
            raise HigsonError("dimension must be at least 1")
        if self.norm not in ("linf", "l1"):
            raise HigsonError(f"unknown norm {self.norm!r}")

    def length(self, v: np.ndarray) -> np.ndarray:
        v = np.abs(np.asarray(v))
        return v.max(axis=-1) if self.norm == "linf" else v.sum(axis=-1)

    def dist(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return self.length(np.asarray(p) - np.asarray(q))

    def box(self, radius: int) -> np.ndarray:
        """All lattice points with every coordinate in [-radius, radius]."""
        r = int(radius)
        axes = [np.arange(-r, r + 1)] * self.d
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1).astype(np.int64)

    def shell(self, inner: int, outer: int) -> np.ndarray:
        """Points with inner <= |x| <= outer, enumerated exactly."""
        if self.d == 1:
            lo, hi = max(int(inner), 0), int(outer)
            if hi < lo:
                return np.zeros((0, 1), dtype=np.int64)
            pos = np.arange(lo, hi + 1)
            pts = np.concatenate([-pos[::-1], pos]) if lo > 0 else np.concatenate([-pos[:0:-1], pos])
            return pts[:, None].astype(np.int64)
        pts = self.box(outer)
        n = self.length(pts)
        return pts[(n >= inner) & (n <= outer)]

    def sample_shell(self, inner: int, outer: int, count: int, seed: int = 0) -> np.ndarray:
        """Seeded sample of points with inner <= |x| <= outer (linf norm only)."""
        if self.norm != "linf":
            raise HigsonError("shell sampling is implemented for the l-infinity norm")
        rng = np.random.default_rng(seed)
        radii = rng.integers(max(int(inner), 0), int(outer) + 1, size=count)
        pts = rng.integers(-radii[:, None], radii[:, None] + 1, size=(count, self.d))
        axis = rng.integers(0, self.d, size=count)
        sign = np.where(rng.random(count) < 0.5, -1, 1)
        pts[np.arange(count), axis] = sign * radii
        return pts.astype(np.int64)

    @lru_cache(maxsize=64)
    def offsets(self, radius: int) -> tuple[np.ndarray, np.ndarray]:
        """Lattice offsets with norm <= radius and their lengths, sorted by length."""
        r = int(radius)
        pts = np.array(list(itertools.product(range(-r, r + 1), repeat=self.d)), dtype=np.int64)
        lens = self.length(pts)
        keep = lens <= r
        pts, lens = pts[keep], lens[keep]
        order = np.argsort(lens, kind="stable")
        return pts[order], lens[order]

    def unit_steps(self) -> np.ndarray:
        """Half of the distance-1 offsets (one of each +/- pair)."""
        pts, lens = self.offsets(1)
        steps = pts[lens == 1]
        first = np.array([next(c for c in s if c != 0) for s in steps])
        return steps[first > 0]


# ---------------------------------------------------------------------------
# lazy fields


Rule = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class LazyField:
    """A pure evaluation rule with a declared sup bound.

    modulus(L), when given, is a radius M such that the field is L-Lipschitz
    outside the open ball B_M.  oscillation(n), when given, is a radius outside
    of which points at distance < n + 1 differ by less than 1/(2(n + 1)).
    """

    space: VirtualSpace
    rule: Rule
    sup_bound: float
    name: str = "field"
    nonnegative: bool = False
    modulus: Callable[[float], float | None] | None = None
    oscillation: Callable[[int], float] | None = None

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.space.d)
        vals = np.asarray(self.rule(pts), dtype=float)
        if vals.shape != (pts.shape[0],):
            raise HigsonError(f"{self.name}: rule returned shape {vals.shape}")
        if (np.abs(vals) > self.sup_bound + 1e-12).any():
            raise HigsonError(f"{self.name}: value exceeds declared sup bound {self.sup_bound}")
        return vals


def _ball_dist(space: VirtualSpace, pts: np.ndarray, radius: float) -> np.ndarray:
    """Lattice distance from each point to the closed ball of the given radius."""
    return np.maximum(space.length(pts) - math.floor(radius), 0)


def base_bump(space: VirtualSpace, radius: float) -> LazyField:
    """e_R(x) = max(0, 1 - d(x, B_R)/R): 1 on B_R, 0 outside B_2R, 1/R-Lipschitz."""
    if not radius > 0:
        raise HigsonError("bump radius must be positive")

    def rule(pts):
        return np.maximum(0.0, 1.0 - _ball_dist(space, pts, radius) / radius)

    return LazyField(space, rule, 1.0, f"e_{radius:g}", nonnegative=True,
                     modulus=lambda L: 0.0 if L >= 1.0 / radius else None)


def _bump_values(space: VirtualSpace, pts: np.ndarray, radius: float) -> np.ndarray:
    if radius <= 0:
        return np.zeros(pts.shape[0])
    return np.maximum(0.0, 1.0 - _ball_dist(space, pts, radius) / radius)


def constant_field(space: VirtualSpace, c: float) -> LazyField:
    return LazyField(space, lambda p: np.full(p.shape[0], float(c)), abs(float(c)), f"const({c:g})",
                     nonnegative=c >= 0, modulus=lambda L: 0.0, oscillation=lambda n: 0.0)


def sinlog_field(space: VirtualSpace) -> LazyField:
    """(1 + sin(log(1 + |x|)))/2.

    Its oscillation over distance t outside B_r is at most t / (2(1 + r)).
    """

    def rule(pts):
        return 0.5 * (1.0 + np.sin(np.log1p(space.length(pts))))

    return LazyField(space, rule, 1.0, "sinlog", nonnegative=True,
                     modulus=lambda L: max(0.0, 1.0 / (2.0 * L) - 1.0),
                     oscillation=lambda n: float(n * (n + 1)))


def angular_field(space: VirtualSpace, axis: int = 0) -> LazyField:
    """(1 + x_axis / max(|x|_2, 1))/2, a corona-detecting function for d >= 2.

    Outside the euclidean r-ball, x/|x|_2 moves by at most |x - y|_2 / r.
    """
    if space.d < 2:
        raise HigsonError("angular field needs d >= 2")
    root = math.sqrt(space.d)

    def rule(pts):
        e = np.maximum(np.sqrt((pts.astype(float) ** 2).sum(axis=1)), 1.0)
        return 0.5 * (1.0 + pts[:, axis] / e)

    return LazyField(space, rule, 1.0, f"angular{axis}", nonnegative=True,
                     modulus=lambda L: max(root, root / (2.0 * L)),
                     oscillation=lambda n: float(math.floor(root * n * (n + 1)) + 1))


def builtin_field(space: VirtualSpace, name: str, **params) -> LazyField:
    if name == "const":
        return constant_field(space, float(params.get("c", 1.0)))
    if name == "zero":
        return constant_field(space, 0.0)
    if name == "sinlog":
        return sinlog_field(space)
    if name == "angular":
        return angular_field(space, int(params.get("axis", 0)))
    raise HigsonError(f"unknown built-in field {name!r}; choose const, zero, sinlog or angular")


# ---------------------------------------------------------------------------
# Lipschitz measurement


@dataclass(frozen=True)
class LipschitzMeasure:
    """Largest difference quotient seen, and a certified upper bound when exhaustive."""

    lower: float
    upper: float
    pair: tuple[tuple[int, ...], tuple[int, ...]] | None
    exhaustive: bool


def lipschitz_on_box(f: LazyField, radius: int) -> LipschitzMeasure:
    """Exact Lipschitz constant on the box: the metric is a path metric of unit
    steps whose geodesics stay inside the box, so unit steps suffice."""
    space = f.space
    pts = space.box(radius)
    vals = f(pts)
    best, pair = 0.0, None
    side = 2 * radius + 1
    grid = vals.reshape((side,) * space.d)
    for step in space.unit_steps():
        src = tuple(slice(max(0, -s), side - max(0, s)) for s in step)
        dst = tuple(slice(max(0, s), side - max(0, -s)) for s in step)
        diff = np.abs(grid[dst] - grid[src])
        if diff.size and diff.max() > best:
            best = float(diff.max())
            at = np.unravel_index(int(diff.argmax()), diff.shape)
            x = tuple(int(i + s.start - radius) for i, s in zip(at, src))
            y = tuple(int(a + b) for a, b in zip(x, step))
            pair = (x, y)
    return LipschitzMeasure(best, best, pair, True)


def lipschitz_scan(f: LazyField, points: np.ndarray, inside: Callable[[np.ndarray], np.ndarray],
                   reach: int, exhaustive: bool) -> LipschitzMeasure:
    """Difference quotients over pairs (x, x + delta) with |delta| <= reach, both in the region.

    When points enumerate the whole region, pairs farther apart than reach
    change by at most osc/(reach + 1), so max(scan, osc/(reach + 1)) is an
    upper bound for the Lipschitz constant on the region.
    """
    space = f.space
    pts = points[inside(points)]
    if pts.shape[0] == 0:
        return LipschitzMeasure(0.0, 0.0, None, exhaustive)
    vals = f(pts)
    offs, lens = space.offsets(reach)
    best, pair = 0.0, None
    for delta, t in zip(offs, lens):
        if t == 0:
            continue
        q = pts + delta
        ok = inside(q)
        if not ok.any():
            continue
        ratio = np.abs(f(q[ok]) - vals[ok]) / t
        i = int(ratio.argmax())
        if ratio[i] > best:
            best = float(ratio[i])
            pair = (tuple(int(c) for c in pts[ok][i]), tuple(int(c) for c in q[ok][i]))
    osc = float(vals.max() - vals.min())
    upper = max(best, osc / (reach + 1)) if exhaustive else math.inf
    return LipschitzMeasure(best, upper, pair, exhaustive)


def lipschitz_outside(f: LazyField, inner: float, box: int, target: float | None = None,
                      reach: int | None = None) -> LipschitzMeasure:
    """Lipschitz constant of f on {x in box : |x| >= inner}."""
    space = f.space
    pts = space.box(box)
    if reach is None:
        osc_guess = 2.0 * f.sup_bound
        reach = max(1, math.ceil(osc_guess / target)) if target else 8

    def inside(q):
        return (np.abs(q).max(axis=1) <= box) & (space.length(q) >= inner)

    return lipschitz_scan(f, pts, inside, reach, exhaustive=True)


# ---------------------------------------------------------------------------
# Higson -> Lipschitz-Higson splitting


def _level_count(v: np.ndarray, n: int) -> np.ndarray:
    """#{i in 1..n : i/n <= v}, computed with the same float comparison as the definition."""
    c = np.clip(np.floor(v * n), 0, n).astype(np.int64)
    up = (c < n) & ((c + 1) / n <= v)
    c[up] += 1
    down = (c > 0) & (c / n > v)
    c[down] -= 1
    return c


@dataclass(frozen=True, eq=False)
class HigsonSplit:
    """f = sum_n f_n is Lipschitz-Higson and f - g vanishes at infinity."""

    g: LazyField
    radii: tuple[float, ...]  # R_0 = 0, R_1, ..., R_stages
    f: LazyField
    residual: LazyField
    rule: str

    @property
    def stages(self) -> int:
        return len(self.radii) - 1

    def piece_g(self, n: int, pts: np.ndarray) -> np.ndarray:
        """g_n = (e_{R_n} - e_{R_{n-1}}) g, with e_{R_0} = 0."""
        space = self.g.space
        outer = _bump_values(space, pts, self.radii[n])
        inner = _bump_values(space, pts, self.radii[n - 1]) if n >= 2 else 0.0
        return (outer - inner) * self.g(pts)

    def piece_f(self, n: int, pts: np.ndarray) -> np.ndarray:
        """f_n = (1/n) sum_i max(1 - d(x, A_i)/n, 0), A_i = {g_n >= i/n}; f_1 = g_1."""
        if n == 1:
            return self.piece_g(1, pts)
        space = self.g.space
        offs, lens = space.offsets(n - 1)
        # running max of the level count over offsets of length <= t
        total = np.zeros(pts.shape[0])
        reached = np.zeros(pts.shape[0], dtype=np.int64)
        for t in range(n):
            shell = offs[lens == t]
            best = reached.copy()
            for delta in shell:
                best = np.maximum(best, _level_count(self.piece_g(n, pts + delta), n))
            total += (1.0 - t / n) * (best - reached)
            reached = best
        return total / n

    def active(self, n: int, pts: np.ndarray) -> np.ndarray:
        """Points where g_n or f_n can be nonzero."""
        r = self.g.space.length(pts)
        lo = self.radii[n - 1] - n if n >= 2 else -math.inf
        return (r > lo) & (r < 2 * self.radii[n] + n)

    def evaluate_f(self, pts: np.ndarray) -> np.ndarray:
        out = np.zeros(pts.shape[0])
        for n in range(1, self.stages + 1):
            m = self.active(n, pts)
            if m.any():
                out[m] += self.piece_f(n, pts[m])
        return out

    def annulus(self, m: int) -> tuple[int, int]:
        """Radii between which only f_m, f_{m+1}, g_m, g_{m+1} are nonzero."""
        if not 2 <= m < self.stages:
            raise HigsonError(f"stage {m} annulus needs 2 <= m < {self.stages}")
        lo = 2 * self.radii[m - 1] + m
        hi = 2 * self.radii[m] - m - 2
        return int(math.ceil(lo)), int(math.floor(hi))

    def tail_start(self, n0: int) -> float:
        """f equals sum_{n >= n0} f_n at |x| >= this radius."""
        return 2 * self.radii[n0 - 1] + n0


def split_radii(oscillation: Callable[[int], float], stages: int, rule: str = "safe") -> tuple[float, ...]:
    """R_0 = 0 and R_n >= max(2(n+1), 2R_{n-1}, oracle(n)).

    The "safe" rule also demands R_n >= 2n(n+1), which keeps the bump ramp of
    e_{R_n} below 1/(2(n+1)) across n + 1 steps, so g_{n+1} oscillates by less
    than 1/(n+1) at that scale.  The "minimal" rule omits it.
    """
    if rule not in ("safe", "minimal"):
        raise HigsonError(f"unknown radius rule {rule!r}")
    radii = [0.0]
    for n in range(1, stages + 1):
        need = [2.0 * (n + 1), 2.0 * radii[-1], float(math.ceil(oscillation(n)))]
        if rule == "safe":
            need.append(2.0 * n * (n + 1))
        radii.append(max(need))
    return tuple(radii)


def check_oscillation(g: LazyField, n: int, radius: float, width: int | None = None,
                      samples: int = 4000, seed: int = 0) -> None:
    """Confirm on a band beyond the radius that points at distance <= n differ by
    less than 1/(2(n+1)); raise on a counterexample."""
    space = g.space
    inner = int(math.ceil(radius))
    outer = inner + (width if width is not None else 4 * (n + 1))
    if space.d == 1:
        pts = space.shell(inner, outer)
    else:
        pts = space.sample_shell(inner, outer, samples, seed)
    vals = g(pts)
    offs, lens = space.offsets(n)
    bound = 1.0 / (2 * (n + 1))
    for delta, t in zip(offs, lens):
        if t == 0:
            continue
        q = pts + delta
        ok = space.length(q) >= radius
        if not ok.any():
            continue
        diff = np.abs(g(q[ok]) - vals[ok])
        i = int(diff.argmax())
        if diff[i] >= bound:
            x, y = pts[ok][i], q[ok][i]
            raise HigsonError(
                f"oscillation oracle fails at n={n}: |g{tuple(x)} - g{tuple(y)}| = {diff[i]:.3g}"
                f" >= {bound:.3g} outside radius {radius:g}"
            )


def measured_oscillation(g: LazyField, box: int, n_max: int) -> Callable[[int], float]:
    """Oscillation oracle read off the box: for each n, one past the largest
    radius at which a violating pair (distance <= n) is seen."""
    space = g.space
    pts = space.box(box)
    vals = g(pts)
    norms = space.length(pts)
    table = {}
    for n in range(1, n_max + 1):
        bound = 1.0 / (2 * (n + 1))
        worst = -1.0
        offs, lens = space.offsets(n)
        for delta, t in zip(offs, lens):
            if t == 0:
                continue
            q = pts + delta
            ok = np.abs(q).max(axis=1) <= box
            bad = np.abs(g(q[ok]) - vals[ok]) >= bound
            if bad.any():
                m = np.minimum(norms[ok][bad], space.length(q[ok][bad]))
                worst = max(worst, float(m.max()))
        rho = worst + 1.0
        if rho > box - 2 * (n + 1):
            raise HigsonError(f"oscillation at scale {n} not resolved inside box radius {box}")
        table[n] = max(rho, 0.0)

    def oracle(n: int) -> float:
        if n not in table:
            raise HigsonError(f"measured oracle covers n <= {n_max}, asked for {n}")
        return table[n]

    return oracle


def higson_split(g: LazyField, stages: int, oscillation: Callable[[int], float] | None = None,
                 rule: str = "safe", check: bool = True) -> HigsonSplit:
    """Split a positive-contraction Higson function g as f + (g - f) with f Lipschitz-Higson."""
    if not g.nonnegative or g.sup_bound > 1.0:
        raise HigsonError("g must be a declared positive contraction; rescale it first")
    oracle = oscillation or g.oscillation
    if oracle is None:
        raise HigsonError(f"{g.name} has no oscillation oracle; use measured_oscillation")
    radii = split_radii(oracle, stages, rule)
    if check:
        for n in range(1, stages + 1):
            check_oscillation(g, n, oracle(n))
    holder: dict[str, HigsonSplit] = {}

    def f_rule(pts):
        return holder["s"].evaluate_f(pts)

    def r_rule(pts):
        return holder["s"].evaluate_f(pts) - g(pts)

    space = g.space
    f = LazyField(space, f_rule, 2.0, f"split({g.name})", nonnegative=True)
    residual = LazyField(space, r_rule, 3.0, f"residual({g.name})")
    split = HigsonSplit(g, radii, f, residual, rule)
    holder["s"] = split
    return split


@dataclass(frozen=True)
class SplitStageCheck:
    n: int
    sup_gap: float  # sup |f_n - g_n| on the checked points
    bound: float
    exhaustive: bool

    @property
    def passed(self) -> bool:
        return self.sup_gap <= self.bound + 1e-12


def check_split_stage(split: HigsonSplit, n: int, samples: int | None = None, seed: int = 0) -> SplitStageCheck:
    """Measure sup |f_n - g_n| over the region where either can be nonzero."""
    space = split.g.space
    lo = max(0, int(math.floor(split.radii[n - 1] - n))) if n >= 2 else 0
    hi = int(math.ceil(2 * split.radii[n] + n))
    if samples is None:
        pts, exhaustive = space.shell(lo, hi), True
    else:
        pts, exhaustive = space.sample_shell(lo, hi, samples, seed), False
    gap = float(np.abs(split.piece_f(n, pts) - split.piece_g(n, pts)).max()) if len(pts) else 0.0
    return SplitStageCheck(n, gap, 1.0 / n, exhaustive)


@dataclass(frozen=True)
class ResidualCheck:
    m: int
    inner: int
    outer: int
    sup: float
    bound: float
    points: int
    exhaustive: bool

    @property
    def passed(self) -> bool:
        return self.sup <= self.bound + 1e-6


def residual_on_annulus(split: HigsonSplit, m: int, samples: int | None = None, seed: int = 0) -> ResidualCheck:
    """sup |f - g| on the stage-m annulus, where only two stages contribute."""
    inner, outer = split.annulus(m)
    space = split.g.space
    if samples is None:
        pts, exhaustive = space.shell(inner, outer), True
    else:
        pts, exhaustive = space.sample_shell(inner, outer, samples, seed), False
    sup = float(np.abs(split.residual(pts)).max()) if len(pts) else 0.0
    return ResidualCheck(m, inner, outer, sup, 2.0 / m, int(pts.shape[0]), exhaustive)


# ---------------------------------------------------------------------------
# very Lipschitz sequences


@dataclass(frozen=True, eq=False)
class VLSequence:
    """Finite prefix f_1..f_K with a declared modulus L -> n_0(L) (1-based) or None."""

    fields: tuple[LazyField, ...]
    modulus: Callable[[float], int | None]
    name: str = "sequence"

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def sup_bound(self) -> float:
        return max((f.sup_bound for f in self.fields), default=0.0)


def sinusoid_sequence(space: VirtualSpace, length: int) -> VLSequence:
    """f_k(x) = (1 + sin(x_1/k))/2, which is 1/(2k)-Lipschitz."""

    def make(k):
        return LazyField(space, lambda p: 0.5 * (1.0 + np.sin(p[:, 0] / k)), 1.0, f"sin(x/{k})",
                         nonnegative=True)

    return VLSequence(tuple(make(k) for k in range(1, length + 1)),
                      lambda L: max(1, math.ceil(1.0 / (2.0 * L))), "sinusoid")


def ramp_sequence(space: VirtualSpace, length: int) -> VLSequence:
    """f_n(x) = clip(x_1/n, 0, 1), with Lipschitz constant exactly 1/n."""

    def make(n):
        return LazyField(space, lambda p: np.clip(p[:, 0] / n, 0.0, 1.0), 1.0, f"ramp/{n}",
                         nonnegative=True)

    return VLSequence(tuple(make(n) for n in range(1, length + 1)),
                      lambda L: max(1, math.ceil(1.0 / L - 1e-12)), "ramp")


def constant_sequence(space: VirtualSpace, length: int, c: float = 1.0) -> VLSequence:
    return VLSequence(tuple(constant_field(space, c) for _ in range(length)), lambda L: 1, "constant")


@dataclass(frozen=True)
class ModulusRow:
    lip: float
    measured: int | None
    declared: int | None


@dataclass(frozen=True)
class ModulusTable:
    rows: tuple[ModulusRow, ...]
    constants: tuple[float, ...]
    box: int

    def to_dict(self) -> dict:
        return {
            "box": self.box,
            "constants": list(self.constants),
            "rows": [{"L": r.lip, "measured_n0": r.measured, "declared_n0": r.declared} for r in self.rows],
        }


def vl_modulus_check(seq: VLSequence, lips: Sequence[float], box: int) -> ModulusTable:
    """Measure each f_k's Lipschitz constant on the box and compare with the declared modulus."""
    measures = [lipschitz_on_box(f, box) for f in seq.fields]
    consts = tuple(m.upper for m in measures)
    rows = []
    for L in lips:
        measured = None
        for start in range(len(consts), 0, -1):
            if consts[start - 1] > L + 1e-12:
                break
            measured = start
        declared = seq.modulus(L)
        if declared is not None:
            for k in range(declared, len(consts) + 1):
                if consts[k - 1] > L + 1e-12:
                    x, y = measures[k - 1].pair
                    raise HigsonError(
                        f"declared n0({L:g}) = {declared} but f_{k} has constant {consts[k - 1]:.6g}"
                        f" at the pair {x}, {y}"
                    )
        rows.append(ModulusRow(float(L), measured, declared))
    return ModulusTable(tuple(rows), consts, box)


def vl_to_higson(seq: VLSequence, indices: Sequence[int], radii: Sequence[float],
                 base_radius: float = 0.0) -> LazyField:
    """g = sum_i f_{k_i} (e_{R_i} - e_{3R_{i-1}}) with R_0 = base_radius.

    base_radius = 0 means e_0 = 0, so g = f_{k_1} e_{R_1} near the base point.
    """
    radii = [float(base_radius)] + [float(r) for r in radii]
    if len(indices) != len(radii) - 1:
        raise HigsonError("need one subsequence index per radius")
    if any(r <= 0 for r in radii[1:]) or base_radius < 0:
        raise HigsonError("radii must be positive")
    for i in range(1, len(radii)):
        if radii[i] < 6 * radii[i - 1]:
            raise HigsonError(f"radius condition fails: R_{i} = {radii[i]:g} < 6 R_{i - 1} = {6 * radii[i - 1]:g}")
    ks = [int(k) for k in indices]
    if any(b <= a for a, b in zip(ks, ks[1:])) or ks and (ks[0] < 1 or ks[-1] > len(seq)):
        raise HigsonError("subsequence indices must increase within the prefix")
    space = seq.fields[0].space

    def rule(pts):
        out = np.zeros(pts.shape[0])
        active = np.zeros(pts.shape[0], dtype=np.int64)
        for i in range(1, len(radii)):
            weight = _bump_values(space, pts, radii[i]) - _bump_values(space, pts, 3 * radii[i - 1])
            live = weight != 0
            if live.any():
                out[live] += seq.fields[ks[i - 1] - 1](pts[live]) * weight[live]
                active += live
        if (active > 1).any():
            raise HigsonError("two annular summands overlap at an evaluated point")
        return out

    def modulus(L: float) -> float | None:
        i0 = higson_start_index(seq, ks, radii, L)
        return None if i0 is None else radii[i0]

    return LazyField(space, rule, seq.sup_bound, f"g[{seq.name}]",
                     nonnegative=all(f.nonnegative for f in seq.fields), modulus=modulus)


def higson_start_index(seq: VLSequence, indices: Sequence[int], radii: Sequence[float], L: float) -> int | None:
    """Least i0 with 3R_{i0-1} > 2/L and k_i >= n_0(L/2) for all i >= i0.

    radii includes R_0.  Returns None when the prefix is too short.
    """
    n0 = seq.modulus(L / 2)
    if n0 is None:
        return None
    for i0 in range(1, len(radii)):
        if 3 * radii[i0 - 1] > 2.0 / L and all(k >= n0 for k in indices[i0 - 1:]):
            return i0
    return None


def higson_to_vl(g: LazyField, radii: Sequence[float]) -> VLSequence:
    """f_k = (1 - e_{R_k}) g, declared VL from g's Lipschitz-Higson modulus."""
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii):
        raise HigsonError("radii must be positive")
    bad = [k for k in range(1, len(radii)) if radii[k] <= radii[k - 1]]
    if bad:
        raise HigsonError(f"radii must strictly increase: R_{bad[0] + 1} = {radii[bad[0]]:g}")
    if g.modulus is None:
        raise HigsonError(f"{g.name} has no declared Lipschitz-Higson modulus")
    space = g.space

    def make(r):
        return LazyField(space, lambda p: (1.0 - _bump_values(space, p, r)) * g(p), g.sup_bound,
                         f"(1-e_{r:g}){g.name}", nonnegative=g.nonnegative)

    def modulus(L: float) -> int | None:
        m = g.modulus(L / 2)
        if m is None:
            return None
        need = max(m, 2.0 / L)
        for k, r in enumerate(radii, start=1):
            if r >= need:
                return k
        return None

    return VLSequence(tuple(make(r) for r in radii), modulus, f"F[{g.name}]")
