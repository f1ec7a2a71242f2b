"""Double cover of a bounded surface, glued to a mirror copy along its boundary."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cochain import Cochain0, Cochain1, Cochain2
from .complex import CombinatorialSurface, SurfaceError, build_surface

SYMMETRY_TOL = 1e-9


class AsymmetryWarning(UserWarning):
    def __init__(self, asymmetry: float):
        super().__init__(f"cochain is not sheet-symmetric: asymmetry {asymmetry!r}")
        self.asymmetry = asymmetry


@dataclass(frozen=True, eq=False)
class DoubleCoverMap:
    """Sheet maps between a bounded surface and its closed double cover.

    ``node_map[v] = (sheet-0 id, sheet-1 id)``; the two coincide on
    boundary nodes.  ``edge_map`` and ``face_map`` index cover edges and
    faces the same way (boundary edges are shared, faces never are).
    Sheet-1 faces carry reversed orientation.
    """

    original: CombinatorialSurface
    cover: CombinatorialSurface
    node_map: np.ndarray
    edge_map: np.ndarray
    face_map: np.ndarray

    @property
    def involution(self) -> np.ndarray:
        """Sheet-swap permutation of the cover's nodes."""
        tau = np.arange(self.cover.n_nodes)
        tau[self.node_map[:, 0]] = self.node_map[:, 1]
        tau[self.node_map[:, 1]] = self.node_map[:, 0]
        return tau


def double_cover(s: CombinatorialSurface) -> DoubleCoverMap:
    if s.is_closed:
        raise SurfaceError("surface is already closed; refusing to double it")
    if len(s.chord_edges):
        u, v = s.edges[s.chord_edges[0]]
        raise SurfaceError(
            f"interior edge ({u}, {v}) joins two boundary nodes; its two "
            "sheet copies would coincide in the cover")

    bnd = s.boundary_nodes
    sheet1 = np.arange(s.n_nodes)
    interior = np.flatnonzero(~bnd)
    sheet1[interior] = s.n_nodes + np.arange(len(interior))
    node_map = np.stack([np.arange(s.n_nodes), sheet1], axis=1)

    f0 = s.faces
    f1 = sheet1[f0][:, [0, 2, 1]]
    coords = None
    if s.coords is not None:
        coords = np.concatenate([s.coords, s.coords[interior]])
    cover = build_surface(np.concatenate([f0, f1]), coords=coords)

    e0 = [cover.edge_index(int(u), int(v))[0] for u, v in s.edges]
    e1 = [cover.edge_index(int(sheet1[u]), int(sheet1[v]))[0] for u, v in s.edges]
    edge_map = np.stack([e0, e1], axis=1)
    face_map = np.stack([np.arange(s.n_faces), s.n_faces + np.arange(s.n_faces)], axis=1)
    for a in (node_map, edge_map, face_map):
        a.setflags(write=False)
    return DoubleCoverMap(s, cover, node_map, edge_map, face_map)


def _sheet1_edge_signs(m: DoubleCoverMap) -> np.ndarray:
    # +1 where the sheet-1 copy keeps the canonical direction of the original
    n1 = m.node_map[:, 1]
    u, v = m.original.edges[:, 0], m.original.edges[:, 1]
    return np.where(n1[u] < n1[v], 1.0, -1.0)


def mirror(c, m: DoubleCoverMap):
    """Extend a cochain on the original to a sheet-symmetric one on the cover.

    0- and 1-forms are copied unchanged along the involution (so boundary
    edges keep their value); 2-forms change sign on sheet 1 because those
    faces are oppositely oriented.
    """
    if c.surface is not m.original:
        raise ValueError("cochain is not defined on the covered surface")
    if isinstance(c, Cochain0):
        out = np.empty(m.cover.n_nodes)
        out[m.node_map[:, 0]] = c.values
        out[m.node_map[:, 1]] = c.values
        return Cochain0(m.cover, out)
    if isinstance(c, Cochain1):
        out = np.empty(m.cover.n_edges)
        out[m.edge_map[:, 1]] = c.values * _sheet1_edge_signs(m)
        out[m.edge_map[:, 0]] = c.values
        return Cochain1(m.cover, out)
    if isinstance(c, Cochain2):
        out = np.empty(m.cover.n_faces)
        out[m.face_map[:, 0]] = c.values
        out[m.face_map[:, 1]] = -c.values
        return Cochain2(m.cover, out)
    raise TypeError(f"cannot mirror {type(c).__name__}")


def mirror_one_form(w: Cochain1, m: DoubleCoverMap) -> Cochain1:
    return mirror(w, m)


def asymmetry(c, m: DoubleCoverMap) -> float:
    """Largest deviation of a cover cochain from sheet symmetry."""
    if c.surface is not m.cover:
        raise ValueError("cochain is not defined on the cover")
    x = c.values
    if isinstance(c, Cochain0):
        d = x[m.node_map[:, 1]] - x[m.node_map[:, 0]]
    elif isinstance(c, Cochain1):
        d = x[m.edge_map[:, 1]] * _sheet1_edge_signs(m) - x[m.edge_map[:, 0]]
    elif isinstance(c, Cochain2):
        d = x[m.face_map[:, 1]] + x[m.face_map[:, 0]]
    else:
        raise TypeError(f"cannot measure {type(c).__name__}")
    return float(np.max(np.abs(d))) if len(d) else 0.0


def restrict(c, m: DoubleCoverMap, tol: float = SYMMETRY_TOL):
    """Read a cover cochain back on sheet 0, warning if it is not symmetric."""
    asym = asymmetry(c, m)
    if asym > tol:
        warnings.warn(AsymmetryWarning(asym), stacklevel=2)
    x = c.values
    if isinstance(c, Cochain0):
        return Cochain0(m.original, x[m.node_map[:, 0]])
    if isinstance(c, Cochain1):
        return Cochain1(m.original, x[m.edge_map[:, 0]])
    return Cochain2(m.original, x[m.face_map[:, 0]])
