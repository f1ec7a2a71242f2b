"""Plain-text mesh and cochain files.

Mesh grammar::

    surf v=<V> f=<F>
    n <id> [x y [z]]          (V lines)
    t <a> <b> <c>             (F lines, counterclockwise)
    hole <n0> <n1> ... <nk>   (one line per interior hole loop)

Cochain grammar::

    c1 <surface-digest>
    e <u> <v> <value>         (one line per edge, u < v)

Floats are written with ``repr`` so a read/write cycle is byte-exact.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .cochain import Cochain1
from .complex import CombinatorialSurface, build_surface


class FormatError(ValueError):
    pass


def _f(x) -> str:
    return repr(float(x))


def format_mesh(s: CombinatorialSurface) -> str:
    lines = [f"surf v={s.n_nodes} f={s.n_faces}"]
    for i in range(s.n_nodes):
        if s.coords is None:
            lines.append(f"n {i}")
        else:
            lines.append(f"n {i} " + " ".join(_f(x) for x in s.coords[i]))
    for a, b, c in s.faces:
        lines.append(f"t {a} {b} {c}")
    for loop in s.hole_loops:
        lines.append("hole " + " ".join(str(v) for v in loop))
    return "\n".join(lines) + "\n"


def parse_mesh(text: str) -> CombinatorialSurface:
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0][0] != "surf":
        raise FormatError("mesh must start with a 'surf v=<V> f=<F>' header")
    try:
        header = dict(tok.split("=", 1) for tok in lines[0][1:])
        n_v, n_f = int(header["v"]), int(header["f"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad mesh header: {' '.join(lines[0])}") from exc

    coords, faces, holes = {}, [], []
    for no, tok in enumerate(lines[1:], start=2):
        kind = tok[0]
        try:
            if kind == "n":
                coords[int(tok[1])] = [float(x) for x in tok[2:]]
            elif kind == "t":
                faces.append([int(x) for x in tok[1:4]])
            elif kind == "hole":
                holes.append([int(x) for x in tok[1:]])
            else:
                raise FormatError(f"line {no}: unknown record '{kind}'")
        except (ValueError, IndexError) as exc:
            raise FormatError(f"line {no}: malformed '{' '.join(tok)}'") from exc
    if len(coords) != n_v or sorted(coords) != list(range(n_v)):
        raise FormatError(f"expected node lines 0..{n_v - 1}, got {len(coords)}")
    if len(faces) != n_f:
        raise FormatError(f"header says {n_f} faces, found {len(faces)}")
    dims = {len(c) for c in coords.values()}
    if len(dims) != 1:
        raise FormatError("nodes mix coordinate dimensions")
    dim = dims.pop()
    xyz = None
    if dim:
        if dim not in (2, 3):
            raise FormatError(f"coordinates must have 2 or 3 components, got {dim}")
        xyz = np.array([coords[i] for i in range(n_v)])
    return build_surface(faces, coords=xyz, hole_marks=holes or None)


def format_cochain(w: Cochain1) -> str:
    s = w.surface
    lines = [f"c1 {s.digest}"]
    for (u, v), x in zip(s.edges, w.values):
        lines.append(f"e {u} {v} {_f(x)}")
    return "\n".join(lines) + "\n"


def parse_cochain(text: str, s: CombinatorialSurface) -> Cochain1:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0][0] != "c1" or len(lines[0]) != 2:
        raise FormatError("cochain must start with 'c1 <surface-digest>'")
    if lines[0][1] != s.digest:
        raise FormatError(
            f"cochain belongs to surface {lines[0][1]}, not {s.digest}")
    values = np.full(s.n_edges, np.nan)
    for tok in lines[1:]:
        if tok[0] != "e" or len(tok) != 4:
            raise FormatError(f"malformed cochain line '{' '.join(tok)}'")
        u, v = int(tok[1]), int(tok[2])
        if u >= v:
            raise FormatError(f"edge ({u}, {v}) is not in canonical order")
        try:
            e, _ = s.edge_index(u, v)
        except KeyError as exc:
            raise FormatError(str(exc)) from exc
        values[e] = float(tok[3])
    if np.isnan(values).any():
        raise FormatError(f"{int(np.isnan(values).sum())} edges missing from cochain")
    return Cochain1(s, values)


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_mesh(s: CombinatorialSurface, path) -> None:
    atomic_write(path, format_mesh(s))


def read_mesh(path) -> CombinatorialSurface:
    return parse_mesh(Path(path).read_text())


def write_cochain(w: Cochain1, path) -> None:
    atomic_write(path, format_cochain(w))


def read_cochain(path, s: CombinatorialSurface) -> Cochain1:
    return parse_cochain(Path(path).read_text(), s)
