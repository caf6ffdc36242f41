"""File formats: space/operator/cover/chain JSON, binary operators, CSV profiles."""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .decomposition import ChainStage, ColoredCover, DecompositionChain
from .metric_space import FiniteMetricSpace, PointSubset, build_space
from .operators import Operator

MAGIC = b"COARSEOP"


class FormatError(ValueError):
    pass


def atomic_write(path: str | os.PathLike, data: str | bytes) -> None:
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_json(path: str | os.PathLike):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


# spaces


def space_to_json(space: FiniteMetricSpace) -> dict:
    return space.descriptor()


def load_space(path: str | os.PathLike) -> FiniteMetricSpace:
    spec = _read_json(path)
    if not isinstance(spec, dict):
        raise FormatError(f"{path}: space descriptor must be an object")
    return build_space(spec)


# operators


def operator_to_json(a: Operator) -> dict:
    m = a.matrix
    return {"n": int(m.shape[0]), "re": m.real.ravel().tolist(), "im": m.imag.ravel().tolist()}


def operator_from_json(space: FiniteMetricSpace, obj: dict) -> Operator:
    try:
        n = int(obj["n"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros(n * n)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed operator JSON: {exc}") from exc
    if re.size != n * n or im.size != n * n:
        raise FormatError(f"operator JSON declares n={n} but carries {re.size} real and {im.size} imaginary entries")
    if n != space.n:
        raise FormatError(f"operator has n={n} but the space has {space.n} points")
    return Operator(space, (re + 1j * im).reshape(n, n))


def operator_to_bytes(a: Operator) -> bytes:
    m = np.ascontiguousarray(a.matrix, dtype=np.complex128)
    return MAGIC + struct.pack("<I", m.shape[0]) + m.astype("<c16").tobytes()


def operator_from_bytes(space: FiniteMetricSpace, data: bytes) -> Operator:
    if not data.startswith(MAGIC):
        raise FormatError("binary operator must start with COARSEOP")
    (n,) = struct.unpack_from("<I", data, len(MAGIC))
    body = data[len(MAGIC) + 4:]
    if len(body) != 16 * n * n:
        raise FormatError(f"binary operator declares n={n} but carries {len(body)} payload bytes")
    if n != space.n:
        raise FormatError(f"operator has n={n} but the space has {space.n} points")
    return Operator(space, np.frombuffer(body, dtype="<c16").astype(np.complex128).reshape(n, n))


def load_operator(space: FiniteMetricSpace, path: str | os.PathLike) -> Operator:
    raw = Path(path).read_bytes()
    if raw.startswith(MAGIC):
        return operator_from_bytes(space, raw)
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: neither COARSEOP binary nor JSON") from exc
    return operator_from_json(space, obj)


def save_operator(a: Operator, path: str | os.PathLike) -> None:
    if str(path).endswith(".json"):
        atomic_write(path, dump_json(operator_to_json(a)))
    else:
        atomic_write(path, operator_to_bytes(a))


# profiles


def profile_csv(rows: Iterable[tuple[float, float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["R", "nu_upper", "nu_lower"])
    for r, up, lo in rows:
        w.writerow([f"{r:g}", repr(float(up)), repr(float(lo))])
    return buf.getvalue()


def parse_profile_csv(text: str) -> list[tuple[float, float, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["R", "nu_upper", "nu_lower"]:
        raise FormatError("profile CSV must start with the header R,nu_upper,nu_lower")
    return [(float(a), float(b), float(c)) for a, b, c in rows[1:]]


# covers and chains


def _members_json(colors: Sequence[Sequence[PointSubset]]) -> list[list[list[int]]]:
    return [[m.points.tolist() for m in fam] for fam in colors]


def cover_to_json(cover: ColoredCover) -> dict:
    return {"R": cover.scale, "colors": _members_json(cover.colors)}


def cover_from_json(space: FiniteMetricSpace, obj: dict) -> ColoredCover:
    try:
        colors = tuple(tuple(space.subset(m) for m in fam) for fam in obj["colors"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed cover JSON: {exc}") from exc
    return ColoredCover(space, colors, float(obj.get("R", 0.0)))


def _color_major(stage: ChainStage) -> list[int]:
    """Member indices in the order they are written: by color, then original order."""
    return sorted(range(len(stage.members)), key=lambda i: stage.colors[i])


def chain_to_json(chain: DecompositionChain) -> list[dict]:
    """Members are grouped by color, so parent indices refer to the previous
    stage's members in that written order."""
    out = []
    renumber = {0: 0}  # stage 0 is the single set X
    for st in chain.stages:
        fams: list[list[list[int]]] = [[] for _ in range(st.k)]
        parents: list[list[int]] = [[] for _ in range(st.k)]
        for i in _color_major(st):
            fams[st.colors[i]].append(st.members[i].points.tolist())
            parents[st.colors[i]].append(renumber[st.parents[i]])
        out.append({"R": st.radius, "families": fams, "parents": parents})
        renumber = {old: new for new, old in enumerate(_color_major(st))}
    return out


def chain_from_json(space: FiniteMetricSpace, obj: list) -> DecompositionChain:
    """Parents may be omitted; each member then attaches to the first
    previous-stage member containing it."""
    if not isinstance(obj, list):
        raise FormatError("chain JSON must be an array of stages")
    stages: list[ChainStage] = []
    previous: tuple[PointSubset, ...] = (space.full(),)
    for n, st in enumerate(obj, start=1):
        try:
            fams = st["families"]
            radius = float(st["R"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"stage {n}: {exc}") from exc
        given = st.get("parents")
        members, colors, parents = [], [], []
        for c, fam in enumerate(fams):
            for j, pts in enumerate(fam):
                m = space.subset(pts)
                if given is not None:
                    p = int(given[c][j])
                else:
                    p = next((i for i, q in enumerate(previous) if m.issubset(q)), -1)
                    if p < 0:
                        raise FormatError(f"stage {n}: member {j} of color {c} lies in no previous member")
                members.append(m)
                colors.append(c)
                parents.append(p)
        stages.append(ChainStage(radius, tuple(members), tuple(colors), tuple(parents), len(fams)))
        previous = tuple(members)
    return DecompositionChain(space, tuple(stages))
