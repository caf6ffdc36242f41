"""Seeded verification suites shared by `quasiloc verify` and the acceptance tests.

Each suite returns a SuiteResult whose cases carry the measured quantities.
All randomness comes from one numpy Generator built from the suite seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import higson as hg
from .approximation import (
    approximate,
    approximate_multicolor,
    check_block_diagonal,
    error_constant,
    induction_step,
    verify_commute_cutdown,
)
from .decomposition import decompose_zd, dimnuc_cover_extract, dimnuc_factorization
from .metric_space import zd_box
from .operators import (
    BlockStructure,
    Operator,
    ScalarField,
    as_contraction,
    block_cutdown,
    block_expectation,
    block_norms,
    commut_certificate,
    commut_lower,
    commutator_diag,
    level_set_partition,
    lip_regularize,
    op_norm,
    random_decay_operator,
    sign_group_sup,
    sign_unitary_average,
)

NORM_TOL = 1e-11


@dataclass
class CaseResult:
    label: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"label": self.label, "passed": self.passed, "detail": _plain(self.detail)}


@dataclass
class SuiteResult:
    name: str
    criterion: int
    seed: int
    cases: list[CaseResult]

    @property
    def passed(self) -> bool:
        return bool(self.cases) and all(c.passed for c in self.cases)

    @property
    def failures(self) -> list[CaseResult]:
        return [c for c in self.cases if not c.passed]

    def to_dict(self) -> dict:
        return {
            "suite": self.name,
            "criterion": self.criterion,
            "seed": self.seed,
            "passed": self.passed,
            "case_count": len(self.cases),
            "failure_count": len(self.failures),
            "cases": [c.to_dict() for c in self.cases],
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


# ---------------------------------------------------------------------------


def suite_cutdown(seed: int) -> list[CaseResult]:
    """Norm of a block cutdown equals the largest block norm."""
    rng = np.random.default_rng(seed)
    space = zd_box([128])
    profiles = ["exp:0.5", "exp:2", "gauss:3", "band:4"]
    out = []
    for t in range(100):
        prof = profiles[t % len(profiles)]
        a = random_decay_operator(space, prof, _child_seed(rng))
        J = int(rng.integers(2, 9))
        labels = rng.integers(-1, J, size=space.n)
        parts = [ScalarField.indicator(space.subset(np.flatnonzero(labels == j)))
                 for j in range(J) if (labels == j).any()]
        lhs = op_norm(block_cutdown(a, parts), NORM_TOL)
        rhs = max(block_norms(a, parts, NORM_TOL))
        gap = abs(lhs - rhs)
        out.append(CaseResult(f"op{t}:{prof}:J={J}", gap <= 1e-8, {"theta_norm": lhs, "max_block": rhs, "gap": gap}))
    return out


def suite_expectation(seed: int) -> list[CaseResult]:
    """Pinching equals the sign-unitary average, and its distance to a is
    bounded by the largest sign-unitary commutator."""
    rng = np.random.default_rng(seed)
    space = zd_box([32])
    out = []
    for t in range(50):
        J = 2 + t % 9
        labels = rng.integers(0, J, size=space.n)
        labels[rng.permutation(space.n)[:J]] = np.arange(J)
        D = BlockStructure.from_labels(space, labels)
        a = random_decay_operator(space, "exp:0.3", _child_seed(rng))
        ea = block_expectation(a, D)
        avg = sign_unitary_average(a, D)
        entry_gap = float(np.abs(ea.matrix - avg.matrix).max())
        dist = op_norm((ea - a).matrix, NORM_TOL)
        sup = sign_group_sup(a, D)
        ok = entry_gap <= 1e-12 and dist <= sup.value + 1e-8
        out.append(CaseResult(f"op{t}:J={J}", ok, {
            "entry_gap": entry_gap, "expectation_distance": dist, "sign_sup": sup.value,
            "exhaustive": sup.exhaustive,
        }))
    return out


def _separated_parts(space, sep: float, rng: np.random.Generator) -> list[ScalarField]:
    """Random positive contractions on intervals of the first axis, consecutive
    intervals more than sep apart."""
    coord = space.coords[:, 0]
    length = space.dims[0]
    gap = math.floor(sep) + 1
    parts, start = [], 0
    while start < length:
        width = int(rng.integers(1, 65))
        stop = min(start + width, length)
        mask = (coord >= start) & (coord < stop)
        vals = np.where(mask, rng.uniform(0.05, 1.0, size=space.n), 0.0)
        parts.append(ScalarField(space, vals))
        start = stop - 1 + gap + 1
    return parts


def suite_corollary43(seed: int) -> list[CaseResult]:
    """||e a e - theta(a)|| <= eps for (2/L)-disjoint families at certified (L, eps)."""
    rng = np.random.default_rng(seed)
    space = zd_box([512])
    out = []
    for t in range(50):
        eps = (0.25, 0.5)[t % 2]
        a = as_contraction(random_decay_operator(space, "exp:10", _child_seed(rng)))
        cert = commut_certificate(a, eps, field_class="real")
        parts = _separated_parts(space, 2.0 / cert.lip, rng)
        chk = verify_commute_cutdown(a, parts, cert.lip, eps)
        out.append(CaseResult(f"op{t}:eps={eps}", chk.passed, {
            "lhs": chk.lhs, "eps": eps, "L": cert.lip, "parts": len(parts),
        }))
    return out


def suite_induction(seed: int) -> list[CaseResult]:
    """One induction step on a 2-colored cover at the required disjointness."""
    rng = np.random.default_rng(seed)
    space = zd_box([512])
    profiles = ["band:1", "exp:10"]
    out = []
    for t in range(50):
        eps = (1.0, 0.5)[t % 2]
        prof = profiles[(t // 2) % 2]
        a = as_contraction(random_decay_operator(space, prof, _child_seed(rng)))
        cert = commut_certificate(a, eps, field_class="real")
        r = math.ceil(4.0 / cert.lip + 4.0)
        cover = decompose_zd(space, r)
        res = induction_step(a, cover, cert.lip, eps)
        masks = [check_block_diagonal(p, b, cover, cert.lip) for p, b in zip(res.pieces, res.blocks)]
        ok = res.realized_error <= 8 * eps and all(m.passed for m in masks)
        out.append(CaseResult(f"op{t}:{prof}:eps={eps}", ok, {
            "realized": res.realized_error, "bound": 8 * eps, "L": cert.lip,
            "members": [len(f) for f in cover.colors],
            "mask_failures": [m.message for m in masks if not m.passed],
        }))
    return out


def _pipeline_case(label, b, report, eps) -> CaseResult:
    d = report.to_dict()
    m = len(report.schedule.stages)
    tele = report.schedule.telescoped()
    k = report.k
    expected = eps * (1 - 2.0 ** -m)
    ok = (
        report.realized_error <= eps
        and report.realized_error <= report.certified_bound + 1e-6
        and report.output_propagation <= report.propagation_bound
        and abs(tele - expected) <= 1e-12
        and tele < eps
    )
    return CaseResult(label, ok, {
        "colors": k, "stages": m, "realized": report.realized_error, "certified": report.certified_bound,
        "telescoped": tele, "output_propagation": report.output_propagation,
        "propagation_bound": report.propagation_bound,
        "radii": [s["R_n"] for s in d["schedule"]], "piece_counts": list(report.stage_piece_counts),
        "error_constant": error_constant(k),
    })


def suite_pipeline(seed: int) -> list[CaseResult]:
    """End-to-end approximation on a line (1 and 2 stages) and a square (4 colors)."""
    rng = np.random.default_rng(seed)
    line, square = zd_box([512]), zd_box([32, 32])
    out = []
    for prof in ("exp:40", "exp:1"):
        for rep in range(2):
            for eps in (0.1, 0.2):
                a = as_contraction(random_decay_operator(line, prof, _child_seed(rng)))
                for stages in (1, 2):
                    b, rpt = approximate(a, eps, stages=stages)
                    out.append(_pipeline_case(f"line:{prof}:{rep}:eps={eps}:m={stages}", b, rpt, eps))
                a2 = as_contraction(random_decay_operator(square, prof, _child_seed(rng)))
                b, rpt = approximate_multicolor(a2, eps, 4)
                out.append(_pipeline_case(f"square:{prof}:{rep}:eps={eps}:k=4", b, rpt, eps))
    return out


def suite_commut(seed: int) -> list[CaseResult]:
    """Level-set route to Lipschitz commutation, and the commutator search
    against certified L."""
    rng = np.random.default_rng(seed)
    out = []
    # quantitative propagation -> commutation
    line = zd_box([512])
    for t in range(20):
        eps = 1.0
        a = as_contraction(random_decay_operator(line, ("exp:1", "gauss:2")[t % 2], _child_seed(rng)))
        cert = commut_certificate(a, eps)
        N, R, L = cert.levels, cert.radius, cert.lip
        noise = lip_regularize(ScalarField(line, rng.uniform(0, 1, line.n)), L).values
        centre, sign = rng.integers(0, line.n), rng.choice([-1.0, 1.0])
        ramp = np.clip(0.5 + sign * L * (line.coords[:, 0] - centre), 0, 1)
        f = ScalarField(line, np.clip(np.maximum(noise, ramp), 0, 1))
        part = level_set_partition(f, N, radius=R)
        comm = op_norm(commutator_diag(a, f).matrix, NORM_TOL)
        bound = 2 / N + eps / 2 + 4 / N
        recon = part.reconstruction_error(f)
        ok = N == 13 and comm <= bound and recon <= 1 / N + 1e-15
        out.append(CaseResult(f"levels{t}", ok, {
            "N": N, "R": R, "L": L, "commutator": comm, "bound": bound, "reconstruction": recon,
            "classes_used": int(len(np.unique(part.classes))),
        }))
    # commutator search never beats the certificate
    small = zd_box([64])
    for t in range(50):
        eps = (0.5, 1.0)[t % 2]
        prof = ("exp:1", "band:2")[(t // 2) % 2]
        a = as_contraction(random_decay_operator(small, prof, _child_seed(rng)))
        cert = commut_certificate(a, eps)
        search = commut_lower(a, cert.lip, seed=_child_seed(rng))
        out.append(CaseResult(f"sandwich{t}:{prof}:eps={eps}", search.value <= eps, {
            "lower": search.value, "eps": eps, "L": cert.lip,
        }))
    # single-entry operators have a two-variable optimum
    for t in range(10):
        x, y = (int(v) for v in rng.choice(small.n, size=2, replace=False))
        c = complex(rng.normal(), rng.normal())
        L = float(rng.choice([0.01, 0.05, 0.2, 1.0]))
        mat = np.zeros((small.n, small.n), dtype=complex)
        mat[x, y] = c
        exact = abs(c) * min(2.0, L * small.dist[x, y])
        search = commut_lower(Operator(small, mat), L, seed=_child_seed(rng))
        out.append(CaseResult(f"single{t}", abs(search.value - exact) <= 1e-6, {
            "found": search.value, "exact": exact, "d": int(small.dist[x, y]), "L": L,
        }))
    return out


def suite_higson(seed: int) -> list[CaseResult]:
    """Bumps, the two transfer constructions, and the Higson splitting."""
    out = []
    for d, norm in ((1, "linf"), (2, "linf"), (2, "l1")):
        V = hg.VirtualSpace(d, norm)
        for R in (1.0, 2.0, 3.5, 7.0):
            e = hg.base_bump(V, R)
            box = math.ceil(4 * R)
            pts = V.box(box)
            vals = e(pts)
            r = V.length(pts)
            lip = hg.lipschitz_on_box(e, box).upper
            ok = bool((vals[r <= R] == 1).all() and (vals[r >= 2 * R] == 0).all() and lip <= 1 / R + 1e-12)
            out.append(CaseResult(f"bump:d={d}:{norm}:R={R:g}", ok, {"lipschitz": lip, "bound": 1 / R}))

    V1 = hg.VirtualSpace(1)
    seq = hg.sinusoid_sequence(V1, 40)
    ks, radii = [2, 4, 8, 16], [3.0, 18.0, 108.0, 648.0]
    g = hg.vl_to_higson(seq, ks, radii)
    full = [0.0] + radii
    for L in (1.0, 0.5, 0.25):
        i0 = hg.higson_start_index(seq, ks, full, L)
        m = hg.lipschitz_outside(g, full[i0], int(2 * radii[-1]) + 8, target=L)
        out.append(CaseResult(f"vl_to_higson:L={L:g}", m.upper <= L, {
            "i0": i0, "outside_radius": full[i0], "lipschitz_upper": m.upper, "lipschitz_seen": m.lower,
        }))

    lips = [1.0, 0.5, 0.25, 0.125]
    for name, base in (("sinlog", hg.sinlog_field(V1)), ("roundtrip", g)):
        F = hg.higson_to_vl(base, [float(2 ** k) for k in range(1, 12)])
        try:
            table = hg.vl_modulus_check(F, lips, 4 * 2 ** 11)
            sup_ok = F.sup_bound <= base.sup_bound
            out.append(CaseResult(f"higson_to_vl:{name}", sup_ok, {"rows": table.to_dict()["rows"]}))
        except hg.HigsonError as exc:
            out.append(CaseResult(f"higson_to_vl:{name}", False, {"error": str(exc)}))

    V2 = hg.VirtualSpace(2)
    for name, gfield, space_d in (
        ("const", hg.constant_field(V1, 0.5), 1),
        ("sinlog", hg.sinlog_field(V1), 1),
        ("angular", hg.angular_field(V2), 2),
    ):
        split = hg.higson_split(gfield, 17)
        for m in (4, 8, 16):
            samples = None if space_d == 1 or m == 4 else 4000
            chk = hg.residual_on_annulus(split, m, samples=samples, seed=seed)
            out.append(CaseResult(f"split:{name}:m={m}", chk.passed, {
                "annulus": [chk.inner, chk.outer], "sup": chk.sup, "bound": chk.bound,
                "points": chk.points, "exhaustive": chk.exhaustive,
            }))
    return out


def suite_dimnuc(seed: int) -> list[CaseResult]:
    """Factorization through point evaluations, and the cover extractor."""
    rng = np.random.default_rng(seed)
    space = zd_box([256])
    out = []
    for r in (4, 16):
        cover = decompose_zd(space, r)
        fac = dimnuc_factorization(space, cover)
        S = fac.scale_bound
        for c in (0.0, 1.0, 0.37):
            err = fac.composite_error(np.full(space.n, c))
            out.append(CaseResult(f"const:r={r}:c={c}", err == 0.0, {"error": err}))
        for eps in (0.1, 0.5):
            for t in range(5):
                f = lip_regularize(ScalarField(space, rng.uniform(0, 1, space.n)), eps / S)
                err = fac.composite_error(f)
                out.append(CaseResult(f"lip:r={r}:eps={eps}:{t}", err <= eps + 1e-12, {
                    "error": err, "S": S, "lipschitz": f.lipschitz,
                }))
    for t in range(100):
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        P = int(rng.integers(3, 10))
        e = rng.uniform(0, 1, (n, P)) * (rng.random((n, P)) > 0.3)
        lam = rng.dirichlet(np.ones(m), size=n)
        eta = float(rng.uniform(0, 0.2))
        base = lam.T @ e
        f = np.clip(base + rng.uniform(-eta, eta, base.shape), 0, None)
        f = np.where((base <= eta) & (rng.random(base.shape) < 0.5), 0.0, f)
        ext = dimnuc_cover_extract(f, e, lam, eta)
        # exhaustive scan over all j confirms the chosen index works
        valid = [[bool(np.all(f[j][e[i] > m * eta] > 0)) for j in range(m)] for i in range(n)]
        ok = ext.certified and all(valid[i][ext.assignment[i]] for i in range(n)) and all(
            lam[i, ext.assignment[i]] >= 1 / m - 1e-15 for i in range(n))
        out.append(CaseResult(f"extract{t}:m={m}:n={n}", ok, {"assignment": list(ext.assignment), "valid": valid}))
    return out


SUITES: dict[str, tuple[int, Callable[[int], list[CaseResult]]]] = {
    "cutdown": (1, suite_cutdown),
    "expectation": (2, suite_expectation),
    "corollary43": (3, suite_corollary43),
    "induction": (4, suite_induction),
    "pipeline": (5, suite_pipeline),
    "commut": (7, suite_commut),
    "higson": (8, suite_higson),
    "dimnuc": (9, suite_dimnuc),
}


def run_suite(name: str, seed: int = 0) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    criterion, fn = SUITES[name]
    return SuiteResult(name, criterion, seed, fn(seed))
