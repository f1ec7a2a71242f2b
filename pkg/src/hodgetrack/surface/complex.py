"""Oriented triangulated 2-complexes with marked boundary loops.

A :class:`CombinatorialSurface` is built from a list of counterclockwise
node triples.  Edges are stored once, under the canonical orientation
``u < v``; every other structure (edge/face incidence, boundary loops,
node and dual adjacency, the sparse coboundary matrices) is derived from
the face list and frozen.

Boundary loops are oriented so that the surface lies on their right.  In
a planar layout this means interior holes are traversed counterclockwise
and the outer boundary clockwise.
"""

from __future__ import annotations

import hashlib
from collections import deque
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class SurfaceError(ValueError):
    """Raised when a face list does not describe a valid oriented surface."""


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class CombinatorialSurface:
    """Immutable oriented triangulated surface, possibly with boundary.

    Parameters
    ----------
    faces : array_like, shape (F, 3)
        Node triples in counterclockwise order.  Node ids must be dense
        (``0..V-1``, each used by at least one face).
    coords : array_like, shape (V, 2) or (V, 3), optional
        Node positions.  Only geometry-dependent operations need them.
    hole_marks : sequence of node sequences, optional
        Each marker selects the boundary loop containing all of its nodes
        as an interior hole.  Required when there are two or more
        boundary loops and no coordinates.

    Use :func:`build_surface` rather than calling this directly.
    """

    def __init__(self, faces, coords=None, hole_marks=None):
        faces = np.asarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) == 0:
            raise SurfaceError("face list must be a non-empty (F, 3) array")
        n_nodes = int(faces.max()) + 1
        if faces.min() < 0:
            raise SurfaceError("negative node id")
        used = np.zeros(n_nodes, dtype=bool)
        used[faces.ravel()] = True
        if not used.all():
            raise SurfaceError(
                f"node ids are not dense: {int((~used).sum())} ids unused")
        if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) \
                or np.any(faces[:, 0] == faces[:, 2]):
            raise SurfaceError("degenerate face with a repeated node")
        if coords is not None:
            coords = np.asarray(coords, dtype=float)
            if coords.ndim != 2 or coords.shape[0] != n_nodes or coords.shape[1] not in (2, 3):
                raise SurfaceError(
                    f"coords must have shape ({n_nodes}, 2|3), got {coords.shape}")
            coords = _frozen(coords)

        self.faces = _frozen(faces)
        self.coords = coords
        self.n_nodes = n_nodes
        self.n_faces = len(faces)
        self._build_edges()
        self._build_loops(hole_marks)
        self._check_connected()
        self._check_euler()

    # ------------------------------------------------------------------
    # construction

    def _build_edges(self):
        f = self.faces
        # directed half-edges a->b, b->c, c->a of every face
        tails = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
        heads = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
        owner = np.tile(np.arange(self.n_faces), 3)

        lo = np.minimum(tails, heads)
        hi = np.maximum(tails, heads)
        key = lo * self.n_nodes + hi
        uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            bad = uniq[counts > 2][0]
            raise SurfaceError(
                f"non-manifold edge ({bad // self.n_nodes}, {bad % self.n_nodes}) "
                f"has {int(counts.max())} incident faces")

        n_edges = len(uniq)
        left = np.full(n_edges, -1, dtype=np.int64)
        right = np.full(n_edges, -1, dtype=np.int64)
        forward = tails < heads
        for side, mask in ((left, forward), (right, ~forward)):
            idx = inverse[mask]
            if len(np.unique(idx)) != len(idx):
                e = idx[np.argmax(np.bincount(idx))]
                u, v = divmod(int(uniq[e]), self.n_nodes)
                raise SurfaceError(
                    f"inconsistent orientation: edge ({u}, {v}) is traversed "
                    "in the same direction by two faces")
            side[idx] = owner[mask]

        self.edges = _frozen(np.stack([uniq // self.n_nodes, uniq % self.n_nodes], axis=1))
        self.edge_faces = _frozen(np.stack([left, right], axis=1))
        self.n_edges = n_edges
        self._edge_lookup = {(int(u), int(v)): i for i, (u, v) in enumerate(self.edges)}
        # face_edges[f, i] is the edge of the i-th side of face f; the sign
        # is +1 when the face traverses it canonically
        self.face_edges = _frozen(inverse.reshape(3, self.n_faces).T)
        self.face_edge_signs = _frozen(
            np.where(forward, 1, -1).reshape(3, self.n_faces).T.astype(np.int8))

    def _build_loops(self, hole_marks):
        left, right = self.edge_faces[:, 0], self.edge_faces[:, 1]
        bmask = (left < 0) | (right < 0)
        self.boundary_edges = _frozen(np.flatnonzero(bmask))

        # induced orientation follows the single incident face
        nxt = {}
        for e in self.boundary_edges:
            u, v = (int(x) for x in self.edges[e])
            a, b = (u, v) if left[e] >= 0 else (v, u)
            if a in nxt:
                raise SurfaceError(
                    f"boundary loops are not vertex-disjoint at node {a}")
            nxt[a] = b
        if len(set(nxt.values())) != len(nxt):
            raise SurfaceError("boundary loops are not vertex-disjoint")

        loops = []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            cur = nxt[start]
            while cur != start:
                loop.append(cur)
                seen.add(cur)
                cur = nxt[cur]
            # reverse so the surface lies to the right of the loop
            loops.append(_canonical_cycle(loop[::-1]))
        loops.sort(key=lambda lp: lp[0])
        self.boundary_loops = tuple(tuple(lp) for lp in loops)

        on_boundary = np.zeros(self.n_nodes, dtype=bool)
        on_boundary[list(seen)] = True
        self.boundary_nodes = _frozen(on_boundary)

        self.hole_loops = self._select_holes(hole_marks)
        outer = [lp for lp in self.boundary_loops if lp not in self.hole_loops]
        self.outer_loops = tuple(outer)

    def _select_holes(self, hole_marks):
        loops = self.boundary_loops
        if hole_marks is not None:
            holes = []
            for mark in hole_marks:
                mark = set(int(x) for x in mark)
                hits = [lp for lp in loops if mark <= set(lp)]
                if len(hits) != 1:
                    raise SurfaceError(
                        f"hole marker {sorted(mark)[:6]} matches {len(hits)} boundary loops")
                if hits[0] not in holes:
                    holes.append(hits[0])
            holes.sort(key=lambda lp: lp[0])
            return tuple(holes)
        if len(loops) <= 1:
            return ()
        if self.coords is None:
            raise SurfaceError(
                f"{len(loops)} boundary loops but neither coordinates nor "
                "hole marks to tell the outer boundary from holes")
        extents = []
        for lp in loops:
            pts = self.coords[list(lp)]
            extents.append(float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))))
        outer = int(np.argmax(extents))
        return tuple(lp for i, lp in enumerate(loops) if i != outer)

    def _check_connected(self):
        if self.n_nodes == 1:
            return
        n_comp, _ = sp.csgraph.connected_components(self.adjacency, directed=False)
        if n_comp != 1:
            raise SurfaceError(f"node graph is disconnected ({n_comp} components)")

    def _check_euler(self):
        chi = self.euler_characteristic
        # second count: per-node share of edges and faces
        deg = self.degree.astype(float)
        faces_at = np.bincount(self.faces.ravel(), minlength=self.n_nodes).astype(float)
        chi_local = float(np.sum(1.0 - deg / 2.0 + faces_at / 3.0))
        if abs(chi_local - chi) > 1e-9 * max(1, self.n_nodes):
            raise SurfaceError(f"Euler characteristic mismatch: {chi} vs {chi_local}")
        twice_genus = 2 - chi - len(self.boundary_loops)
        if twice_genus < 0 or twice_genus % 2:
            raise SurfaceError(
                f"chi={chi} with {len(self.boundary_loops)} boundary loops "
                "is not an orientable surface")

    # ------------------------------------------------------------------
    # derived quantities

    @property
    def euler_characteristic(self) -> int:
        return self.n_nodes - self.n_edges + self.n_faces

    @property
    def genus(self) -> int:
        return (2 - self.euler_characteristic - len(self.boundary_loops)) // 2

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_loops) == 0

    @property
    def first_betti(self) -> int:
        """Rank of H1 for this connected surface."""
        if self.is_closed:
            return 2 * self.genus
        return 2 * self.genus + len(self.boundary_loops) - 1

    def edge_index(self, u: int, v: int) -> tuple[int, int]:
        """Return ``(edge id, sign)`` for the directed edge ``u -> v``."""
        if u < v:
            e = self._edge_lookup.get((u, v))
            sign = 1
        else:
            e = self._edge_lookup.get((v, u))
            sign = -1
        if e is None:
            raise KeyError(f"({u}, {v}) is not an edge")
        return e, sign

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._edge_lookup

    @cached_property
    def D0(self) -> sp.csr_matrix:
        """Coboundary on 0-cochains, shape (E, V): row e=(u,v) is v - u."""
        e = np.arange(self.n_edges)
        rows = np.concatenate([e, e])
        cols = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        vals = np.concatenate([-np.ones(self.n_edges), np.ones(self.n_edges)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_edges, self.n_nodes))

    @cached_property
    def D1(self) -> sp.csr_matrix:
        """Coboundary on 1-cochains, shape (F, E), with the face's CCW signs."""
        rows = np.repeat(np.arange(self.n_faces), 3)
        cols = self.face_edges.ravel()
        vals = self.face_edge_signs.ravel().astype(float)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_faces, self.n_edges))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        a = sp.csr_matrix(
            (np.ones(2 * self.n_edges), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(self.n_nodes, self.n_nodes))
        a.sort_indices()
        return a

    @cached_property
    def dual_adjacency(self) -> sp.csr_matrix:
        inner = np.flatnonzero((self.edge_faces >= 0).all(axis=1))
        l, r = self.edge_faces[inner, 0], self.edge_faces[inner, 1]
        a = sp.csr_matrix(
            (np.ones(2 * len(inner)), (np.concatenate([l, r]), np.concatenate([r, l]))),
            shape=(self.n_faces, self.n_faces))
        a.sort_indices()
        return a

    @cached_property
    def degree(self) -> np.ndarray:
        return _frozen(np.diff(self.adjacency.indptr))

    @cached_property
    def node_adjacency(self) -> tuple[tuple[int, ...], ...]:
        a = self.adjacency
        return tuple(tuple(int(x) for x in a.indices[a.indptr[i]:a.indptr[i + 1]])
                     for i in range(self.n_nodes))

    @cached_property
    def dual_neighbors(self) -> tuple[tuple[int, ...], ...]:
        a = self.dual_adjacency
        return tuple(tuple(int(x) for x in a.indices[a.indptr[i]:a.indptr[i + 1]])
                     for i in range(self.n_faces))

    @cached_property
    def chord_edges(self) -> np.ndarray:
        """Interior edges whose two endpoints both lie on the boundary."""
        inner = (self.edge_faces >= 0).all(axis=1)
        b = self.boundary_nodes
        both = b[self.edges[:, 0]] & b[self.edges[:, 1]]
        return _frozen(np.flatnonzero(inner & both))

    @cached_property
    def digest(self) -> str:
        from .meshio import format_mesh
        return hashlib.sha256(format_mesh(self).encode()).hexdigest()[:16]

    def __repr__(self):
        return (f"CombinatorialSurface(V={self.n_nodes}, E={self.n_edges}, "
                f"F={self.n_faces}, loops={len(self.boundary_loops)}, "
                f"holes={len(self.hole_loops)}, genus={self.genus})")


def _canonical_cycle(cycle):
    i = int(np.argmin(cycle))
    return list(cycle[i:]) + list(cycle[:i])


def build_surface(faces, coords=None, hole_marks=None) -> CombinatorialSurface:
    """Validate a triangle list and return the derived surface.

    Raises :class:`SurfaceError` for non-manifold edges, inconsistent
    orientation, pinched boundaries, a disconnected node graph, or an
    ambiguous outer loop.
    """
    return CombinatorialSurface(faces, coords=coords, hole_marks=hole_marks)


def bfs_distances(s: CombinatorialSurface, source: int) -> np.ndarray:
    dist = np.full(s.n_nodes, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    nbrs = s.node_adjacency
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def shortest_path(s: CombinatorialSurface, source: int, target: int) -> list[int]:
    """Fewest-hop node path, ties broken towards lower neighbour ids."""
    if source == target:
        return [source]
    parent = np.full(s.n_nodes, -1, dtype=np.int64)
    parent[source] = source
    queue = deque([source])
    nbrs = s.node_adjacency
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if parent[w] < 0:
                parent[w] = u
                if w == target:
                    queue.clear()
                    break
                queue.append(w)
    if parent[target] < 0:
        raise ValueError(f"no path from {source} to {target}")
    path = [target]
    while path[-1] != source:
        path.append(int(parent[path[-1]]))
    return path[::-1]
