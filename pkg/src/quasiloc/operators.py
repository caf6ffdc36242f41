"""Dense operator numerics on l2 of a finite metric space.

Operators are complex matrices indexed by the canonical point order of a
space.  Diagonal multipliers are real scalar fields.  Norms are computed by a
deterministic restarted Lanczos iteration on a a*, which yields a bracket
[lo, hi] on the largest singular value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .metric_space import FiniteMetricSpace, PointSubset, SpaceError, is_r_disjoint, same_space


class OperatorError(ValueError):
    """Raised when an operator or field violates an operation's preconditions."""


class NormConvergenceError(RuntimeError):
    pass


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _same_space(a: FiniteMetricSpace, b: FiniteMetricSpace) -> None:
    if not same_space(a, b):
        raise SpaceError("objects belong to different spaces")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real function on the points of a space, acting as a diagonal multiplier."""

    space: FiniteMetricSpace
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.space.n,):
            raise OperatorError("field length does not match the space")
        if not np.all(np.isfinite(vals)):
            raise OperatorError("field has non-finite values")
        object.__setattr__(self, "values", _freeze(vals.copy()))

    @classmethod
    def constant(cls, space: FiniteMetricSpace, c: float) -> "ScalarField":
        return cls(space, np.full(space.n, float(c)))

    @classmethod
    def indicator(cls, subset: PointSubset) -> "ScalarField":
        return cls(subset.space, subset.mask.astype(float))

    @property
    def support(self) -> PointSubset:
        return PointSubset(self.space, self.values != 0)

    @property
    def lipschitz(self) -> float:
        """max over x != y of |f(x) - f(y)| / d(x, y)."""
        return lipschitz_constant(self.space, self.values)

    @property
    def sup(self) -> float:
        return float(np.abs(self.values).max()) if self.space.n else 0.0

    @property
    def is_contraction(self) -> bool:
        return self.sup <= 1.0

    @property
    def is_positive_contraction(self) -> bool:
        return bool(np.all(self.values >= 0)) and self.is_contraction


def lipschitz_constant(space: FiniteMetricSpace, values: np.ndarray) -> float:
    if space.n < 2:
        return 0.0
    diff = np.abs(values[:, None] - values[None, :])
    off = space.dist > 0
    return float((diff[off] / space.dist[off]).max())


@dataclass(frozen=True, eq=False)
class Operator:
    """A dense complex matrix on l2 of a space."""

    space: FiniteMetricSpace
    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=np.complex128)
        n = self.space.n
        if mat.shape != (n, n):
            raise OperatorError(f"operator shape {mat.shape} does not match {n} points")
        if not np.all(np.isfinite(mat)):
            raise OperatorError("operator has non-finite entries")
        object.__setattr__(self, "matrix", _freeze(mat.copy()))

    @classmethod
    def zeros(cls, space: FiniteMetricSpace) -> "Operator":
        return cls(space, np.zeros((space.n, space.n)))

    @classmethod
    def identity(cls, space: FiniteMetricSpace) -> "Operator":
        return cls(space, np.eye(space.n))

    def __add__(self, other: "Operator") -> "Operator":
        _same_space(self.space, other.space)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _same_space(self.space, other.space)
        return Operator(self.space, self.matrix - other.matrix)

    def scaled(self, c: complex) -> "Operator":
        return Operator(self.space, self.matrix * c)


@dataclass(frozen=True, eq=False)
class BlockStructure:
    """Pairwise disjoint blocks; the projections p_j are their indicators."""

    blocks: tuple[PointSubset, ...]

    def __post_init__(self) -> None:
        blocks = tuple(self.blocks)
        if not blocks:
            raise OperatorError("block structure needs at least one block")
        space = blocks[0].space
        seen = np.zeros(space.n, dtype=bool)
        for b in blocks:
            _same_space(space, b.space)
            if (seen & b.mask).any():
                raise OperatorError("blocks overlap")
            seen |= b.mask
        object.__setattr__(self, "blocks", blocks)

    @property
    def space(self) -> FiniteMetricSpace:
        return self.blocks[0].space

    @property
    def covers(self) -> bool:
        return bool(np.all(np.any([b.mask for b in self.blocks], axis=0)))

    def labels(self) -> np.ndarray:
        lab = np.full(self.space.n, -1)
        for j, b in enumerate(self.blocks):
            lab[b.mask] = j
        return lab

    @classmethod
    def from_labels(cls, space: FiniteMetricSpace, labels: Sequence[int]) -> "BlockStructure":
        labels = np.asarray(labels)
        return cls(tuple(PointSubset(space, labels == j) for j in np.unique(labels[labels >= 0])))


# ---------------------------------------------------------------------------
# norms

_START_SEED = 0x5EED


def _start_vector(n: int) -> np.ndarray:
    # all-ones plus a fixed pseudo-random component, so no eigenvector is missed by symmetry
    rng = np.random.default_rng(_START_SEED)
    g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v = np.ones(n) / math.sqrt(n) + 0.5 * g / np.linalg.norm(g)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class NormBracket:
    lo: float
    hi: float
    left_vector: np.ndarray = field(repr=False)
    restarts: int = 0

    @property
    def value(self) -> float:
        return self.lo


def top_singular(mat: np.ndarray, tol: float = 1e-9, krylov: int = 40,
                 max_restarts: int = 400) -> NormBracket:
    """Largest singular value of a dense matrix as a bracket [lo, hi].

    lo = ||a* u|| for the final unit vector u, a true lower bound; hi adds the
    residual of the Ritz pair of a a*.  Iterates until hi - lo <= tol * hi.
    """
    if not 0 < tol <= 1e-3:
        raise OperatorError("tol must lie in (0, 1e-3]")
    mat = np.asarray(mat)
    if not np.all(np.isfinite(mat)):
        raise OperatorError("operator has non-finite entries")
    rows = mat.shape[0]
    if mat.size == 0:
        return NormBracket(0.0, 0.0, np.zeros(rows))
    scale = float(np.abs(mat).max())
    if scale == 0.0:
        return NormBracket(0.0, 0.0, _start_vector(rows))
    b = mat / scale
    bh = b.conj().T
    v = _start_vector(rows)
    m = min(krylov, rows)
    for restart in range(max_restarts):
        basis = np.empty((rows, m), dtype=np.complex128)
        alpha = np.zeros(m)
        beta = np.zeros(m)
        basis[:, 0] = v
        k = m
        for j in range(m):
            w = b @ (bh @ basis[:, j])
            alpha[j] = np.vdot(basis[:, j], w).real
            prev = basis[:, : j + 1]
            w -= prev @ (prev.conj().T @ w)
            w -= prev @ (prev.conj().T @ w)
            beta[j] = np.linalg.norm(w)
            if j + 1 < m:
                if beta[j] <= 1e-13 * max(np.abs(alpha[: j + 1]).max(), 1e-300):
                    k = j + 1
                    break
                basis[:, j + 1] = w / beta[j]
        tri = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        _, vecs = np.linalg.eigh(tri)
        y = basis[:, :k] @ vecs[:, -1]
        y /= np.linalg.norm(y)
        z = bh @ y
        rho = float(np.vdot(z, z).real)
        res = float(np.linalg.norm(b @ z - rho * y))
        lo, hi = math.sqrt(rho), math.sqrt(rho + res)
        if hi - lo <= tol * hi or rho == 0.0:
            return NormBracket(lo * scale, hi * scale, y, restart)
        v = y
    raise NormConvergenceError(f"norm iteration did not reach tol={tol} (bracket {lo * scale}, {hi * scale})")


def _matrix(a) -> np.ndarray:
    return a.matrix if isinstance(a, Operator) else np.asarray(a)


def op_norm_bracket(a, tol: float = 1e-9) -> tuple[float, float]:
    br = top_singular(_matrix(a), tol)
    return br.lo, br.hi


def op_norm(a, tol: float = 1e-9) -> float:
    """Largest singular value (the certified lower end of the bracket)."""
    return top_singular(_matrix(a), tol).lo


def norm_lower(mat: np.ndarray, iters: int = 25) -> tuple[float, np.ndarray]:
    """Cheap certified lower bound ||a* u|| from a few power steps on a a*."""
    mat = np.asarray(mat)
    if mat.size == 0 or not np.any(mat):
        return 0.0, np.zeros(mat.shape[0])
    u = _start_vector(mat.shape[0])
    best = 0.0
    for _ in range(iters):
        z = mat.conj().T @ u
        best = max(best, float(np.linalg.norm(z)))
        w = mat @ z
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        u = w / nw
    return best, u


# ---------------------------------------------------------------------------
# multipliers and propagation


def mul_diag(f: ScalarField, a: Operator, g: ScalarField) -> Operator:
    """Entrywise f(x) a_xy g(y)."""
    _same_space(f.space, a.space)
    _same_space(g.space, a.space)
    return Operator(a.space, f.values[:, None] * a.matrix * g.values[None, :])


def commutator_diag(a: Operator, f: ScalarField) -> Operator:
    """[a, f] = a diag(f) - diag(f) a, entrywise a_xy (f(y) - f(x))."""
    _same_space(f.space, a.space)
    return Operator(a.space, a.matrix * (f.values[None, :] - f.values[:, None]))


def far_part(a: Operator, radius: float) -> Operator:
    """Keep entries with d(x, y) > radius (strict)."""
    if radius < 0:
        raise OperatorError("radius must be nonnegative")
    return Operator(a.space, np.where(a.space.dist > radius, a.matrix, 0))


def propagation(a: Operator, zero_tol: float = 0.0) -> float:
    """Largest d(x, y) over entries with |a_xy| > zero_tol."""
    nz = np.abs(a.matrix) > zero_tol
    return float(a.space.dist[nz].max()) if nz.any() else 0.0


def eps_prop_upper(a: Operator, radius: float, tol: float = 1e-9) -> float:
    """nu_R(a) = ||far part||, a sound upper bound on the R-separated pair norms."""
    far = np.where(a.space.dist > radius, a.matrix, 0)
    return top_singular(far, tol).hi if np.any(far) else 0.0


@dataclass(frozen=True)
class ProbeWitness:
    value: float
    source: PointSubset
    target: PointSubset
    kind: str


def _probe_sets(space: FiniteMetricSpace, radius: float, max_centres: int, max_levels: int):
    n = space.n
    stride = max(1, n // max_centres)
    centres = range(0, n, stride)
    diam = space.diameter
    levels = sorted({int(round(t)) for t in np.linspace(0, diam, max_levels)})
    for c in centres:
        for t in levels:
            yield "ball", space.dist[c] <= t
    if space.kind == "zd_box":
        for axis, size in enumerate(space.dims):
            cuts = sorted({int(round(t)) for t in np.linspace(0, size - 1, max_levels)})
            col = space.coords[:, axis]
            for t in cuts:
                yield "halfspace", col <= t
                yield "halfspace", col >= t


def eps_prop_lower(a: Operator, radius: float, max_centres: int = 16,
                   max_levels: int = 16) -> ProbeWitness:
    """Certified lower bound on the epsilon-propagation modulus at radius R.

    Probes are singletons, balls and coordinate half-spaces A, each paired with
    B = X minus N_R(A).  Every value is a Rayleigh lower bound on ||chi_A a chi_B||.
    """
    space = a.space
    mat = a.matrix
    far = space.dist > radius
    empty = space.empty()
    # singletons on either side, exactly: row / column norms of the far pattern
    rows = np.linalg.norm(np.where(far, mat, 0), axis=1)
    cols = np.linalg.norm(np.where(far, mat, 0), axis=0)
    best = ProbeWitness(0.0, empty, empty, "none")
    if rows.size and rows.max() > 0:
        x = int(rows.argmax())
        best = ProbeWitness(float(rows[x]), space.subset([x]), PointSubset(space, far[x]), "singleton")
    if cols.size and cols.max() > best.value:
        y = int(cols.argmax())
        best = ProbeWitness(float(cols[y]), PointSubset(space, far[:, y]), space.subset([y]), "singleton")
    for kind, amask in _probe_sets(space, radius, max_centres, max_levels):
        if not amask.any():
            continue
        bmask = space.dist[amask].min(axis=0) > radius
        if not bmask.any():
            continue
        val, _ = norm_lower(mat[np.ix_(amask, bmask)])
        if val > best.value:
            best = ProbeWitness(val, PointSubset(space, amask), PointSubset(space, bmask), kind)
    if best.value > 0:
        sub = mat[np.ix_(best.source.mask, best.target.mask)]
        best = ProbeWitness(top_singular(sub).lo, best.source, best.target, best.kind)
    return best


# ---------------------------------------------------------------------------
# block cutdowns and conditional expectations


def _block_labels(parts: Sequence[ScalarField]) -> tuple[np.ndarray, np.ndarray]:
    if not parts:
        raise OperatorError("need at least one field")
    space = parts[0].space
    labels = np.full(space.n, -1)
    weights = np.zeros(space.n)
    for j, e in enumerate(parts):
        _same_space(space, e.space)
        if not e.is_positive_contraction:
            raise OperatorError(f"field {j} is not a positive contraction")
        supp = e.values != 0
        clash = supp & (labels >= 0)
        if clash.any():
            raise OperatorError(f"field {j} overlaps field {labels[clash][0]}")
        labels[supp] = j
        weights[supp] = e.values[supp]
    return labels, weights


def block_cutdown(a: Operator, parts: Sequence[ScalarField]) -> Operator:
    """theta(a) = sum_j e_j a e_j for positive contractions with disjoint supports."""
    labels, weights = _block_labels(parts)
    _same_space(a.space, parts[0].space)
    same = (labels[:, None] == labels[None, :]) & (labels[:, None] >= 0)
    return Operator(a.space, np.where(same, a.matrix * np.outer(weights, weights), 0))


def block_norms(a: Operator, parts: Sequence[ScalarField], tol: float = 1e-9) -> list[float]:
    """op_norm(e_j a e_j) for every part, computed on the support block only."""
    out = []
    for e in parts:
        supp = e.values != 0
        w = e.values[supp]
        out.append(op_norm(w[:, None] * a.matrix[np.ix_(supp, supp)] * w[None, :], tol) if supp.any() else 0.0)
    return out


def block_expectation(a: Operator, structure: BlockStructure) -> Operator:
    """E_D(a) = sum_j p_j a p_j."""
    _same_space(a.space, structure.space)
    lab = structure.labels()
    same = (lab[:, None] == lab[None, :]) & (lab[:, None] >= 0)
    return Operator(a.space, np.where(same, a.matrix, 0))


def _sign_patterns(count: int) -> Iterable[np.ndarray]:
    for bits in product((1.0, -1.0), repeat=count):
        yield np.array(bits)


def sign_unitary_average(a: Operator, structure: BlockStructure) -> Operator:
    """Average of u a u over all 2^J sign unitaries u = sum_j (+-1) p_j (brute force)."""
    lab = structure.labels()
    J = len(structure.blocks)
    acc = np.zeros_like(a.matrix)
    for signs in _sign_patterns(J):
        s = np.where(lab >= 0, signs[np.maximum(lab, 0)], 0.0)
        acc += s[:, None] * a.matrix * s[None, :]
    return Operator(a.space, acc / 2 ** J)


@dataclass(frozen=True)
class SignSup:
    value: float
    signs: tuple[float, ...]
    exhaustive: bool
    patterns: int


def sign_group_sup(a: Operator, structure: BlockStructure, samples: int = 4096,
                   seed: int = 0, exhaustive_limit: int = 20) -> SignSup:
    """sup over sign unitaries u of ||[a, u]||; a lower bound when sampled."""
    lab = structure.labels()
    J = len(structure.blocks)
    exhaustive = J <= exhaustive_limit
    if exhaustive:
        # u and -u give the same commutator, so fix the first sign
        patterns = (np.concatenate(([1.0], s)) for s in _sign_patterns(J - 1))
        total = 2 ** (J - 1)
    else:
        rng = np.random.default_rng(seed)
        patterns = (rng.choice([1.0, -1.0], size=J) for _ in range(samples))
        total = samples
    best, best_signs = 0.0, (1.0,) * J
    for signs in patterns:
        s = np.where(lab >= 0, signs[np.maximum(lab, 0)], 0.0)
        comm = a.matrix * (s[None, :] - s[:, None])
        val = top_singular(comm).lo if np.any(comm) else 0.0
        if val > best:
            best, best_signs = val, tuple(float(v) for v in signs)
    return SignSup(best, best_signs, exhaustive, total)


# ---------------------------------------------------------------------------
# Lipschitz commutation


def lip_regularize(f: ScalarField, lip: float) -> ScalarField:
    """x -> min_y f(y) + L d(x, y): the largest L-Lipschitz minorant of f."""
    if lip <= 0:
        raise OperatorError("Lipschitz constant must be positive")
    return ScalarField(f.space, _inf_convolve(f.space, f.values, lip))


def _inf_convolve(space: FiniteMetricSpace, values: np.ndarray, lip: float) -> np.ndarray:
    return (values[None, :] + lip * space.dist).min(axis=1)


def _commutator_triplet(mat: np.ndarray, f: np.ndarray):
    comm = mat * (f[None, :] - f[:, None])
    if not np.any(comm):
        return 0.0, None, None
    br = top_singular(comm, tol=1e-7)
    u = br.left_vector
    v = comm.conj().T @ u
    nv = np.linalg.norm(v)
    return br.lo, u, (v / nv if nv else v)


@dataclass(frozen=True)
class CommutSearch:
    value: float
    witness: ScalarField
    restart: int


def commut_lower(a: Operator, lip: float, restarts: int = 6, seed: int = 0,
                 iters: int = 40, positive: bool = False) -> CommutSearch:
    """Lower bound on sup ||[a, f]|| over real L-Lipschitz f with |f| <= 1.

    Starts from distance ramps at the heaviest weighted entries and from seeded
    random fields, then alternates projected gradient steps with a coordinate
    sweep over the largest gradient entries.  Every iterate is projected with
    lip_regularize and clamped, so the witness is always feasible.
    """
    if lip <= 0:
        raise OperatorError("Lipschitz constant must be positive")
    space = a.space
    mat = a.matrix
    dist = space.dist.astype(float)
    low = 0.0 if positive else -1.0

    def project(f: np.ndarray) -> np.ndarray:
        return np.clip(_inf_convolve(space, np.clip(f, low, 1.0), lip), low, 1.0)

    starts: list[np.ndarray] = []
    weight = np.abs(mat) * np.minimum(1.0 - low, lip * dist)
    if weight.any():
        flat = np.argsort(weight, axis=None)[::-1][:3]
        for idx in flat:
            x, y = np.unravel_index(idx, weight.shape)
            if weight[x, y] > 0:
                starts.append(np.clip(low + lip * dist[x], low, 1.0))
                starts.append(np.clip(low + lip * dist[y], low, 1.0))
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        starts.append(rng.uniform(low, 1.0, space.n))

    best = CommutSearch(0.0, ScalarField.constant(space, 0.0), -1)
    for k, f0 in enumerate(starts):
        f = project(f0)
        val, u, v = _commutator_triplet(mat, f)
        for _ in range(iters):
            if u is None:
                break
            grad = (np.conj(mat.conj().T @ u) * v - np.conj(u) * (mat @ v)).real
            gmax = np.abs(grad).max()
            if gmax == 0:
                break
            improved = False
            for t in 2.0 ** -np.arange(0, 10):
                cand = project(f + t * (1.0 - low) * grad / gmax)
                cval, cu, cv = _commutator_triplet(mat, cand)
                if cval > val * (1 + 1e-12):
                    f, val, u, v, improved = cand, cval, cu, cv, True
                    break
            if not improved:
                improved = False
                for z in np.argsort(np.abs(grad))[::-1][:8]:
                    others = np.arange(space.n) != z
                    lo_z = max(low, float((f[others] - lip * dist[z, others]).max(initial=low)))
                    hi_z = min(1.0, float((f[others] + lip * dist[z, others]).min(initial=1.0)))
                    for target in (lo_z, hi_z):
                        cand = f.copy()
                        cand[z] = target
                        cval, cu, cv = _commutator_triplet(mat, cand)
                        if cval > val * (1 + 1e-12):
                            f, val, u, v, improved = cand, cval, cu, cv, True
                if not improved:
                    break
        if val > best.value:
            best = CommutSearch(val, ScalarField(space, f), k)
    return best


def schur_commut_bound(a: Operator, lip: float) -> float:
    """Certified upper bound on ||[a, f]|| over complex L-Lipschitz contractions.

    |f(y) - f(x)| <= min(2, L d(x, y)), so the Schur test on the weighted
    absolute matrix bounds every such commutator.
    """
    w = np.abs(a.matrix) * np.minimum(2.0, lip * a.space.dist)
    return float(math.sqrt(w.sum(axis=1).max() * w.sum(axis=0).max())) if w.size else 0.0


@dataclass(frozen=True)
class CommutCertificate:
    """a in Commut(L, eps): ||[a, f]|| < eps for every L-Lipschitz field in scope.

    provenance is "from_propagation" (level-set recipe, proven for positive
    contractions), "schur" (proven for all contractions) or "asserted".
    """

    lip: float
    eps: float
    provenance: str
    radius: float | None = None
    levels: int | None = None
    nu: float | None = None
    norm_scale: float = 1.0
    field_class: str = "positive"

    def to_dict(self) -> dict:
        return {
            "L": self.lip, "eps": self.eps, "provenance": self.provenance, "R": self.radius,
            "N": self.levels, "nu": self.nu, "norm_scale": self.norm_scale,
            "field_class": self.field_class,
        }


def level_count(eps: float, norm_scale: float = 1.0) -> int:
    """Smallest integer N with 6 s / N < eps / 2."""
    if eps <= 0:
        raise OperatorError("eps must be positive")
    n = math.floor(12.0 * norm_scale / eps) + 1
    while n > 1 and 6.0 * norm_scale / (n - 1) < eps / 2:
        n -= 1
    while not 6.0 * norm_scale / n < eps / 2:
        n += 1
    return n


def commut_certificate(a: Operator, eps: float, field_class: str = "positive") -> CommutCertificate:
    """Turn a propagation bound into a Lipschitz-commutation certificate.

    N is the smallest integer with 6 s / N < eps / 2, where s = max(1, ||a||)
    (s = 1 for contractions); R is the smallest distance value with
    nu_R(a) <= eps / (2 N^2); L = 1 / (2 R N), or 1 when R = 0.
    field_class "real" runs the recipe at eps / 2: a real field f with |f| <= 1
    is 2h - 1 for a positive h, so [a, f] = 2 [a, h].
    """
    if eps <= 0:
        raise OperatorError("eps must be positive")
    if field_class not in ("positive", "real"):
        raise OperatorError("field_class must be 'positive' or 'real'")
    target = eps if field_class == "positive" else eps / 2
    scale = max(1.0, op_norm_bracket(a)[1])
    levels = level_count(target, scale)
    threshold = target / (2 * levels * levels)
    dist = a.space.dist
    mat = a.matrix
    radius, nu = float(a.space.diameter), 0.0
    for r in np.unique(dist):
        far = np.where(dist > r, mat, 0)
        if not np.any(far):
            radius, nu = float(r), 0.0
            break
        if np.abs(far).max() > threshold:
            continue
        frob = float(np.linalg.norm(far))
        val = frob if frob <= threshold else top_singular(far).hi
        if val <= threshold:
            radius, nu = float(r), val
            break
    lip = 1.0 if radius == 0 else 1.0 / (2 * radius * levels)
    return CommutCertificate(lip, eps, "from_propagation", radius, levels, nu, scale, field_class)


def schur_certificate(a: Operator, eps: float, lip_max: float = 1.0) -> CommutCertificate:
    """Largest L (by bisection) whose Schur bound on the commutator is below eps."""
    if schur_commut_bound(a, lip_max) < eps:
        return CommutCertificate(lip_max, eps, "schur", field_class="complex")
    lo, hi = 0.0, lip_max
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if schur_commut_bound(a, mid) < eps:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise OperatorError("no positive L certifies this eps")
    return CommutCertificate(lo, eps, "schur", field_class="complex")


@dataclass(frozen=True)
class LevelSetPartition:
    fields: tuple[ScalarField, ...]
    classes: np.ndarray
    levels: int

    def reconstruction(self) -> np.ndarray:
        """sum_i (i / N) e_i."""
        return (self.classes + 1) / self.levels

    def reconstruction_error(self, f: ScalarField) -> float:
        return float(np.abs(f.values - self.reconstruction()).max())


def level_set_partition(f: ScalarField, levels: int, radius: float | None = None) -> LevelSetPartition:
    """Indicators of A_1 = f^-1[0, 1/N] and A_i = f^-1((i-1)/N, i/N].

    When radius is given and f is (2 R N)^-1-Lipschitz, classes two or more
    apart are checked to be R-disjoint.
    """
    if levels < 2:
        raise OperatorError("need at least 2 levels")
    vals = f.values
    if vals.min(initial=0) < 0 or vals.max(initial=0) > 1:
        raise OperatorError("level sets need a field with values in [0, 1]")
    classes = np.clip(np.ceil(vals * levels).astype(int), 1, levels) - 1
    space = f.space
    fields = tuple(ScalarField(space, (classes == i).astype(float)) for i in range(levels))
    if radius is not None and radius > 0 and f.lipschitz <= 1.0 / (2 * radius * levels):
        sets = [e.support for e in fields]
        for i in range(levels):
            for j in range(i + 2, levels):
                if sets[i] and sets[j] and not is_r_disjoint([sets[i], sets[j]], radius):
                    raise OperatorError(f"level sets {i + 1} and {j + 1} are not {radius}-disjoint")
    return LevelSetPartition(fields, _freeze(classes), levels)


# ---------------------------------------------------------------------------
# generators

PROFILES = ("exp", "gauss", "band")


def parse_profile(profile) -> tuple[str, float]:
    """Accept ("exp", 1.0) or "exp:1.0"."""
    if isinstance(profile, str):
        name, _, arg = profile.partition(":")
        profile = (name, float(arg) if arg else 1.0)
    name, param = profile
    if name not in PROFILES:
        raise OperatorError(f"unknown decay profile {name!r}")
    return name, float(param)


def decay_weights(dist: np.ndarray, profile) -> np.ndarray:
    name, param = parse_profile(profile)
    d = dist.astype(float)
    if name == "exp":
        return np.exp(-param * d)
    if name == "gauss":
        return np.exp(-((d / param) ** 2))
    return (d <= param).astype(float)


def random_decay_operator(space: FiniteMetricSpace, profile, seed: int) -> Operator:
    """a_xy = profile(d(x, y)) z_xy with z standard complex Gaussian from PCG64(seed)."""
    rng = np.random.default_rng(seed)
    n = space.n
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    return Operator(space, decay_weights(space.dist, profile) * z)


def as_contraction(a: Operator) -> Operator:
    """a / ||a|| (using the upper end of the bracket) when ||a|| > 1."""
    hi = op_norm_bracket(a)[1]
    return a.scaled(1.0 / hi) if hi > 1 else a
