"""Certified approximation of quasi-local operators by finite-propagation ones.

One induction step takes an operator and a k-colored cover whose color classes
are (4/L + 4)-disjoint, and splits the operator into k^2 block-diagonal pieces:

* diagonal pieces cut e_i a e_i down along the indicator partition of color i;
* off-diagonal pieces swap L-Lipschitz hats across the product, then cut down
  along the intersections of the (1/L + 1)-neighborhoods of the two colors.

If a commutes up to eps with every L-Lipschitz field, the pieces sum to within
k(3k - 2) eps of a.  The pipeline applies the step stage by stage down a
decomposition chain with the eps_n / R_n schedule, so the errors telescope.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .decomposition import (
    ColoredCover,
    DecompositionChain,
    DecompositionError,
    build_chain,
)
from .metric_space import PointSubset, first_violation, neighborhood
from .operators import (
    CommutCertificate,
    Operator,
    OperatorError,
    ScalarField,
    block_cutdown,
    commut_certificate,
    op_norm,
    op_norm_bracket,
    propagation,
)


class ApproximationError(ValueError):
    """A mathematical precondition of the pipeline is not met."""


def error_constant(k: int) -> int:
    """k diagonal terms at eps plus k^2 - k swapped terms at 3 eps."""
    return k * (3 * k - 2)


# ---------------------------------------------------------------------------
# one step on a single block


@dataclass
class _LocalPiece:
    matrix: np.ndarray
    labels: np.ndarray  # block label per local point, -1 outside every block
    owners: dict[int, int]  # block label -> index of the owning cover member


def _step_on_block(dist: np.ndarray, sub: np.ndarray, members: Sequence[tuple[int, np.ndarray]],
                   k: int, lip: float) -> list[list[_LocalPiece]]:
    """Run the induction step on one block; members are (color, local mask) pairs."""
    size = sub.shape[0]
    owner = np.full(size, -1)
    for idx, (_, mask) in enumerate(members):
        owner[(owner < 0) & mask] = idx
    if (owner < 0).any():
        raise ApproximationError("cover does not cover the block")
    member_color = np.array([c for c, _ in members])
    point_color = member_color[owner]
    reach = 1.0 / lip + 1.0

    def dist_to(mask: np.ndarray) -> np.ndarray:
        return dist[:, mask].min(axis=1) if mask.any() else np.full(size, np.inf)

    # label of the (1/L + 1)-neighborhood each point sits in, per color
    near = np.full((k, size), -1)
    for idx, (c, mask) in enumerate(members):
        inside = dist_to(mask) <= reach
        if (near[c][inside] >= 0).any():
            raise ApproximationError(f"color {c}: neighborhoods of members overlap")
        near[c][inside] = idx

    indicator = np.stack([(point_color == i).astype(float) for i in range(k)])
    hat = np.stack([np.clip(1.0 - lip * dist_to(point_color == i), 0.0, 1.0) for i in range(k)])

    out: list[list[_LocalPiece]] = [[None] * k for _ in range(k)]  # type: ignore[list-item]
    for i in range(k):
        for j in range(k):
            if i == j:
                labels = np.where(point_color == i, owner, -1)
                same = (labels[:, None] == labels[None, :]) & (labels[:, None] >= 0)
                mat = np.where(same, sub, 0)
                owners = {int(b): int(b) for b in np.unique(labels[labels >= 0])}
            else:
                left = indicator[i] * hat[j]
                right = hat[i] * indicator[j]
                swapped = left[:, None] * sub * right[None, :]
                both = (near[i] >= 0) & (near[j] >= 0)
                pair = np.where(both, near[i] * len(members) + near[j], -1)
                same = (pair[:, None] == pair[None, :]) & (pair[:, None] >= 0)
                mat = np.where(same, swapped, 0)
                labels = pair
                owners = {int(b): int(b) // len(members) for b in np.unique(pair[pair >= 0])}
            out[i][j] = _LocalPiece(mat, labels, owners)
    return out


def _check_color_disjointness(cover: ColoredCover, radius: float) -> None:
    for i, members in enumerate(cover.colors):
        bad = first_violation([m for m in members if m], radius)
        if bad is not None:
            a, b, d = bad
            raise ApproximationError(
                f"color {i}: members {a} and {b} are at distance {d:g}, need > {radius:g}"
            )


@dataclass(frozen=True)
class InductionResult:
    pieces: tuple[Operator, ...]
    blocks: tuple[tuple[PointSubset, ...], ...]
    realized_error: float
    bound: float
    k: int

    @property
    def total(self) -> Operator:
        out = np.zeros_like(self.pieces[0].matrix)
        for p in self.pieces:
            out = out + p.matrix
        return Operator(self.pieces[0].space, out)


def induction_step(a: Operator, cover: ColoredCover, lip: float, eps: float) -> InductionResult:
    """Split a into k^2 pieces, block diagonal w.r.t. N_{1/L+1}(cover members).

    The bound k(3k-2) eps holds when a commutes up to eps with every real
    L-Lipschitz field of sup norm at most 1.
    """
    if lip <= 0 or eps < 0:
        raise ApproximationError("need L > 0 and eps >= 0")
    space = a.space
    _check_color_disjointness(cover, 4.0 / lip + 4.0)
    members = [(i, m.mask) for i, _, m in cover.members()]
    k = cover.k
    local = _step_on_block(space.dist.astype(float), a.matrix, members, k, lip)
    pieces, blocks = [], []
    for i in range(k):
        for j in range(k):
            lp = local[i][j]
            pieces.append(Operator(space, lp.matrix))
            blocks.append(tuple(PointSubset(space, lp.labels == b) for b in sorted(lp.owners)))
    total = np.sum([p.matrix for p in pieces], axis=0)
    realized = op_norm(a.matrix - total)
    return InductionResult(tuple(pieces), tuple(blocks), realized, error_constant(k) * eps, k)


@dataclass(frozen=True)
class MaskCheck:
    passed: bool
    message: str = ""


def check_block_diagonal(piece: Operator, blocks: Sequence[PointSubset], cover: ColoredCover,
                         lip: float) -> MaskCheck:
    """Exact mask check: blocks disjoint, each inside some N_{1/L+1}(member),
    piece equal to its own cutdown along the blocks, and every nonzero entry
    joining two points of a common thickened member."""
    space = piece.space
    reach = 1.0 / lip + 1.0
    thick = [neighborhood(m, reach).mask for _, _, m in cover.members() if m]
    seen = np.zeros(space.n, dtype=bool)
    for b in blocks:
        if (seen & b.mask).any():
            return MaskCheck(False, "blocks overlap")
        seen |= b.mask
        if not any(not (b.mask & ~t).any() for t in thick):
            return MaskCheck(False, "a block leaves every thickened member")
    if blocks:
        cut = block_cutdown(piece, [ScalarField.indicator(b) for b in blocks])
        if not np.array_equal(cut.matrix, piece.matrix):
            return MaskCheck(False, "piece has entries between different blocks")
    allowed = np.zeros((space.n, space.n), dtype=bool)
    for t in thick:
        allowed |= t[:, None] & t[None, :]
    if (np.abs(piece.matrix)[~allowed] > 0).any():
        return MaskCheck(False, "nonzero entry outside the thickened cover pattern")
    return MaskCheck(True)


# ---------------------------------------------------------------------------
# commuting cutdowns


@dataclass(frozen=True)
class CutdownCheck:
    lhs: float
    eps: float
    passed: bool


def verify_commute_cutdown(a: Operator, parts: Sequence[ScalarField], lip: float, eps: float) -> CutdownCheck:
    """||e a e - theta(a)|| <= eps + 1e-8 for (2/L)-disjoint positive contractions."""
    supports = [p.support for p in parts]
    bad = first_violation([s for s in supports if s], 2.0 / lip)
    if bad is not None:
        raise ApproximationError(f"parts {bad[0]} and {bad[1]} are not {2.0 / lip:g}-disjoint")
    e = np.sum([p.values for p in parts], axis=0)
    eae = e[:, None] * a.matrix * e[None, :]
    theta = block_cutdown(a, parts).matrix
    lhs = op_norm(eae - theta) if np.any(eae - theta) else 0.0
    return CutdownCheck(lhs, eps, lhs <= eps + 1e-8)


# ---------------------------------------------------------------------------
# schedule and pipeline


@dataclass(frozen=True)
class ScheduleStage:
    n: int
    eps_n: float
    lip: float
    radius: float
    certificate: CommutCertificate


@dataclass(frozen=True)
class ApproximationSchedule:
    eps: float
    k: int
    stages: tuple[ScheduleStage, ...]

    def telescoped(self) -> float:
        """sum_n C_k eps_n (k^2)^(n-1), which equals eps (1 - 2^-m)."""
        c, p = error_constant(self.k), self.k ** 2
        return sum(c * s.eps_n * p ** (s.n - 1) for s in self.stages)

    def thickening(self, upto: int | None = None) -> float:
        """sum over the first stages of (1/L_n + 1)."""
        stages = self.stages if upto is None else self.stages[:upto]
        return sum(1.0 / s.lip + 1.0 for s in stages)


def stage_eps(eps: float, n: int, k: int = 2) -> float:
    """eps / (2^n C_k (k^2)^(n-1)); for k = 2 this is eps / (2 * 8^n)."""
    return eps / (2 ** n * error_constant(k) * (k * k) ** (n - 1))


Certifier = Callable[[Operator, float], CommutCertificate]


def real_field_certificate(a: Operator, eps: float) -> CommutCertificate:
    return commut_certificate(a, eps, field_class="real")


def build_schedule(a: Operator, eps: float, stages: int, k: int = 2,
                   certifier: Certifier = real_field_certificate) -> ApproximationSchedule:
    if eps <= 0:
        raise ApproximationError("eps must be positive")
    out = []
    spent = 0.0
    for n in range(1, stages + 1):
        e_n = stage_eps(eps, n, k)
        cert = certifier(a, e_n)
        lip = cert.lip
        radius = 4.0 * (1.0 / lip + 1.0) + 2.0 * spent
        out.append(ScheduleStage(n, e_n, lip, radius, cert))
        spent += 1.0 / lip + 1.0
    sched = ApproximationSchedule(eps, k, tuple(out))
    expected = eps * (1 - 2.0 ** -stages)
    if abs(sched.telescoped() - expected) > 1e-12 * max(1.0, eps):
        raise ApproximationError("schedule does not telescope")
    return sched


@dataclass(frozen=True)
class ApproximationReport:
    input_digest: str
    eps: float
    k: int
    schedule: ApproximationSchedule
    chain_radii: tuple[float, ...]
    stage_piece_counts: tuple[int, ...]
    stage_errors: tuple[float, ...]
    certified_bound: float
    realized_error: float
    output_propagation: float
    propagation_bound: float
    terminal_bound: float
    trivial: bool = False

    def to_dict(self) -> dict:
        return {
            "input_digest": self.input_digest,
            "eps": self.eps,
            "colors": self.k,
            "schedule": [
                {"n": s.n, "eps_n": s.eps_n, "L_n": s.lip, "R_n": s.radius,
                 "certificate": s.certificate.to_dict()}
                for s in self.schedule.stages
            ],
            "chain_radii": list(self.chain_radii),
            "stages": [
                {"piece_count": c, "realized_error": e}
                for c, e in zip(self.stage_piece_counts, self.stage_errors)
            ],
            "certified_bound": self.certified_bound,
            "realized_error": self.realized_error,
            "output_propagation": self.output_propagation,
            "propagation_bound": self.propagation_bound,
            "terminal_bound": self.terminal_bound,
            "telescoped": self.schedule.telescoped(),
            "trivial": self.trivial,
        }


def operator_digest(a: Operator) -> str:
    h = hashlib.sha256()
    h.update(repr(a.space.descriptor()).encode())
    h.update(np.ascontiguousarray(a.matrix).tobytes())
    return h.hexdigest()


@dataclass
class _Block:
    idx: np.ndarray
    sub: np.ndarray
    parent: int


def _dense(space_n: int, blocks: Sequence[_Block]) -> np.ndarray:
    out = np.zeros((space_n, space_n), dtype=np.complex128)
    for b in blocks:
        out[np.ix_(b.idx, b.idx)] += b.sub
    return out


def approximate(a: Operator, eps: float, chain: DecompositionChain | None = None,
                stages: int = 1, certifier: Certifier = real_field_certificate,
                allow_zero: bool = True) -> tuple[Operator, ApproximationReport]:
    """Approximate a within eps by a finite-propagation operator.

    Certificates for every eps_n are computed up front from a; the chain must
    have stage radii at least R_n.  Without a chain, box spaces build one.
    When ||a|| < eps and allow_zero is set, b' = 0 is returned directly.
    """
    space = a.space
    if eps <= 0:
        raise ApproximationError("eps must be positive")
    if allow_zero:
        lo, hi = op_norm_bracket(a) if np.any(a.matrix) else (0.0, 0.0)
        if hi < eps:
            return Operator.zeros(space), ApproximationReport(
                input_digest=operator_digest(a), eps=eps, k=_box_colors(space),
                schedule=ApproximationSchedule(eps, _box_colors(space), ()), chain_radii=(),
                stage_piece_counts=(), stage_errors=(), certified_bound=hi, realized_error=lo,
                output_propagation=0.0, propagation_bound=0.0, terminal_bound=0.0, trivial=True,
            )
    depth = chain.depth if chain is not None else stages
    if depth < 1:
        raise ApproximationError("need at least one decomposition stage")
    k = chain.stages[0].k if chain is not None else _box_colors(space)
    if chain is not None and any(s.k != k for s in chain.stages):
        raise ApproximationError("all chain stages must use the same color count")
    sched = build_schedule(a, eps, depth, k, certifier)
    required = [s.radius for s in sched.stages]
    if chain is None:
        try:
            chain = build_chain(space, required)
        except DecompositionError as exc:
            raise ApproximationError(str(exc)) from exc
    available = chain.radii()
    if chain.depth < depth:
        raise ApproximationError(
            f"chain too shallow: {chain.depth} stage(s) available, schedule needs {depth}"
            f" (required {required}, available {available})"
        )
    short = [n for n, (have, need) in enumerate(zip(available, required), 1) if have < need]
    if short:
        n = short[0]
        raise ApproximationError(
            f"chain too shallow: stage {n} has radius {available[n - 1]:g}, schedule requires {required[n - 1]:g}"
            f" (required {required}, available {available})"
        )

    dist = space.dist.astype(float)
    pieces: list[list[_Block]] = [[_Block(np.arange(space.n), a.matrix.copy(), 0)]]
    previous = a.matrix
    counts, errors = [], []
    spent = 0.0
    for n, st in enumerate(sched.stages, start=1):
        stage = chain.stages[n - 1]
        thick_children = [
            neighborhood(m, spent).mask if spent > 0 else m.mask for m in stage.members
        ]
        new_pieces: list[list[_Block]] = []
        for piece in pieces:
            per_pair: list[list[_Block]] = [[] for _ in range(k * k)]
            for blk in piece:
                children = [c for c, p in enumerate(stage.parents) if p == blk.parent]
                members = [(stage.colors[c], thick_children[c][blk.idx]) for c in children]
                members = [(c, m) for c, m in members if m.any()]
                _verify_block_disjoint(dist, blk.idx, members, k, 4.0 / st.lip + 4.0, n)
                local = _step_on_block(dist[np.ix_(blk.idx, blk.idx)], blk.sub, members, k, st.lip)
                child_ids = [c for c in children if thick_children[c][blk.idx].any()]
                for i in range(k):
                    for j in range(k):
                        lp = local[i][j]
                        for label, owner in sorted(lp.owners.items()):
                            sel = lp.labels == label
                            per_pair[i * k + j].append(
                                _Block(blk.idx[sel], lp.matrix[np.ix_(sel, sel)], child_ids[owner])
                            )
            new_pieces.extend(per_pair)
        pieces = new_pieces
        current = np.zeros((space.n, space.n), dtype=np.complex128)
        for piece in pieces:
            current += _dense(space.n, piece)
        diff = previous - current
        errors.append(op_norm(diff) if np.any(diff) else 0.0)
        counts.append(len(pieces))
        previous = current
        spent += 1.0 / st.lip + 1.0

    b = Operator(space, previous)
    diff = a.matrix - previous
    realized = op_norm(diff) if np.any(diff) else 0.0
    terminal = chain.terminal_bound
    report = ApproximationReport(
        input_digest=operator_digest(a),
        eps=eps,
        k=k,
        schedule=sched,
        chain_radii=tuple(available),
        stage_piece_counts=tuple(counts),
        stage_errors=tuple(errors),
        certified_bound=sched.telescoped(),
        realized_error=realized,
        output_propagation=propagation(b),
        propagation_bound=terminal + 2.0 * sched.thickening(),
        terminal_bound=terminal,
    )
    return b, report


def _box_colors(space) -> int:
    return 2 ** len(space.dims) if space.kind == "zd_box" else 2


def _verify_block_disjoint(dist: np.ndarray, idx: np.ndarray, members, k: int, radius: float, stage: int) -> None:
    sub = dist[np.ix_(idx, idx)]
    for color in range(k):
        masks = [m for c, m in members if c == color]
        for s in range(len(masks)):
            for t in range(s + 1, len(masks)):
                d = sub[np.ix_(masks[s], masks[t])].min()
                if d <= radius:
                    raise ApproximationError(
                        f"stage {stage}, color {color}: members at distance {d:g}, need > {radius:g}"
                    )


def approximate_multicolor(a: Operator, eps: float, k: int | None = None,
                           certifier: Certifier = real_field_certificate) -> tuple[Operator, ApproximationReport]:
    """Single induction step over a 2^d-colored product cover of a box."""
    space = a.space
    if space.kind != "zd_box":
        raise ApproximationError("multicolor approximation needs a box space")
    natural = 2 ** len(space.dims)
    if k is not None and k != natural:
        raise ApproximationError(f"boxes of dimension {len(space.dims)} use {natural} product colors, not {k}")
    sched = build_schedule(a, eps, 1, natural, certifier)
    chain = build_chain(space, [sched.stages[0].radius])
    return approximate(a, eps, chain, certifier=certifier)


def nearest_band(a: Operator, radius: float) -> Operator:
    """Baseline: zero every entry with d(x, y) > radius."""
    return Operator(a.space, np.where(a.space.dist <= radius, a.matrix, 0))
