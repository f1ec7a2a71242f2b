"""Centralized reference computations used to check the gossip path.

Nothing here is decentralized: exact sparse solves of the two Poisson
systems, the dimension of the harmonic space from the 1-Hodge Laplacian,
integer homology signatures from a tree-cotree decomposition, and
geometric winding numbers.
"""

from __future__ import annotations

import weakref
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .hodge import DecompositionResult, random_one_form
from .surface import (
    Cochain0,
    Cochain1,
    Cochain2,
    CombinatorialSurface,
    d0,
    delta2,
    double_cover,
    mirror_one_form,
    residual_norms,
    restrict,
)

__all__ = [
    "HomologySignature",
    "TreeCotree",
    "direct_basis",
    "direct_solve",
    "harmonic_dim",
    "homology_cycles",
    "swept_angles",
    "tree_cotree",
    "tree_cotree_signature",
    "walk_signature",
    "winding_geometric",
    "winding_numbers",
]

DIRECT_NODE_LIMIT = 5000
HARMONIC_EDGE_LIMIT = 2000


def _pinned_solve(L, b, pin):
    """Solve a singular Laplacian system with one unknown fixed to 0."""
    n = L.shape[0]
    if pin is None:
        return spla.spsolve(L.tocsc(), b)
    keep = np.ones(n, dtype=bool)
    keep[pin] = False
    x = np.zeros(n)
    x[keep] = spla.spsolve(L[keep][:, keep].tocsc(), b[keep])
    # centre so sheet-symmetric inputs give sheet-symmetric potentials
    return x - x.mean()


def direct_solve(s: CombinatorialSurface, w: Cochain1, mode: str = "auto") -> DecompositionResult:
    """Exact Hodge decomposition by sparse LU.

    ``mode`` is ``"closed"`` (closed surfaces), ``"bounded"`` (absent
    faces act as zero-valued, so ``D1 D1^T`` is nonsingular), ``"cover"``
    (solve on the double cover and restrict, like the gossip route) or
    ``"auto"``, which picks ``closed`` or ``bounded``.
    """
    if w.surface is not s:
        raise ValueError("form is not defined on this surface")
    if s.n_nodes > DIRECT_NODE_LIMIT:
        raise ValueError(f"direct solve is limited to {DIRECT_NODE_LIMIT} nodes")
    if mode == "auto":
        mode = "closed" if s.is_closed else "bounded"
    if mode == "cover":
        m = double_cover(s)
        inner = direct_solve(m.cover, mirror_one_form(w, m), mode="closed")
        f, g, df, dg, h = (restrict(c, m, tol=1e-7)
                           for c in (inner.f, inner.g, inner.df, inner.dg, inner.h))
        return DecompositionResult(
            omega=w, f=f, g=g, df=df, dg=dg, h=h, iters_f=0, iters_g=0,
            err_dh=inner.err_dh, err_delta_h=inner.err_delta_h,
            err_dh_rms=inner.err_dh_rms, err_delta_h_rms=inner.err_delta_h_rms,
            converged_f=True, converged_g=True)
    if mode == "closed" and not s.is_closed:
        raise ValueError("closed mode needs a closed surface")
    if mode not in ("closed", "bounded"):
        raise ValueError(f"unknown mode {mode!r}")

    D0, D1 = s.D0, s.D1
    x = w.values
    f = _pinned_solve((D0.T @ D0).tocsr(), D0.T @ x, 0)
    g = _pinned_solve((D1 @ D1.T).tocsr(), D1 @ x, 0 if s.is_closed else None)
    fc, gc = Cochain0(s, f), Cochain2(s, g)
    df, dg = d0(fc), delta2(gc)
    h = Cochain1(s, x - df.values - dg.values)
    res = residual_norms(h)
    return DecompositionResult(
        omega=w, f=fc, g=gc, df=df, dg=dg, h=h, iters_f=0, iters_g=0,
        err_dh=res.err_dh, err_delta_h=res.err_delta_h,
        err_dh_rms=res.err_dh_rms, err_delta_h_rms=res.err_delta_h_rms,
        converged_f=True, converged_g=True)


def harmonic_dim(s: CombinatorialSurface, rtol: float = 1e-8) -> int:
    """Nullity of ``D0 D0^T + D1^T D1`` (absent faces contribute nothing)."""
    if s.n_edges > HARMONIC_EDGE_LIMIT:
        raise ValueError(f"harmonic_dim is limited to {HARMONIC_EDGE_LIMIT} edges")
    L = (s.D0 @ s.D0.T + s.D1.T @ s.D1).toarray()
    ev = sla.eigvalsh(L)
    scale = max(float(ev[-1]), 1.0)
    return int(np.sum(ev < rtol * scale))


# ----------------------------------------------------------------------
# tree-cotree homology signatures


@dataclass(frozen=True, eq=False)
class TreeCotree:
    """Primal spanning tree, dual spanning tree and the leftover generators.

    ``cocycles`` has one integer column per generator edge: it is 1 on
    that generator, 0 on the other generators and on primal tree edges,
    and closed (sums to 0 around every face).
    """

    tree_edges: np.ndarray
    cotree_edges: np.ndarray
    generators: np.ndarray
    cocycles: np.ndarray


@dataclass(frozen=True)
class HomologySignature:
    """Integer H1 coordinates of a closed walk against a tree-cotree basis."""

    values: tuple

    def __sub__(self, other):
        return HomologySignature(tuple(a - b for a, b in zip(self.values, other.values)))

    def __add__(self, other):
        return HomologySignature(tuple(a + b for a, b in zip(self.values, other.values)))

    def is_zero(self) -> bool:
        return not any(self.values)

    def __len__(self):
        return len(self.values)


_TC_CACHE: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def tree_cotree(s: CombinatorialSurface) -> TreeCotree:
    hit = _TC_CACHE.get(s)
    if hit is not None:
        return hit

    in_tree = np.zeros(s.n_edges, dtype=bool)
    seen = np.zeros(s.n_nodes, dtype=bool)
    seen[0] = True
    queue = deque([0])
    nbrs = s.node_adjacency
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if not seen[v]:
                seen[v] = True
                in_tree[s.edge_index(u, v)[0]] = True
                queue.append(v)

    # dual BFS; on a bounded surface a virtual face stands for the outside
    F = s.n_faces
    virtual = F if not s.is_closed else None
    root = virtual if virtual is not None else 0
    ef = s.edge_faces
    star = {}
    if virtual is not None:
        star[virtual] = sorted(int(e) for e in s.boundary_edges)

    def face_edges(f):
        return star[f] if f == virtual else sorted(int(e) for e in s.face_edges[f])

    def across(f, e):
        a, b = ef[e]
        if f == virtual:
            return int(a if a >= 0 else b)
        other = b if a == f else a
        return int(other) if other >= 0 else virtual

    n_dual = F + (virtual is not None)
    parent_edge = -np.ones(n_dual, dtype=np.int64)
    dseen = np.zeros(n_dual, dtype=bool)
    dseen[root] = True
    order = [root]
    in_cotree = np.zeros(s.n_edges, dtype=bool)
    queue = deque([root])
    while queue:
        f = queue.popleft()
        for e in face_edges(f):
            if in_tree[e] or in_cotree[e]:
                continue
            g = across(f, e)
            if not dseen[g]:
                dseen[g] = True
                in_cotree[e] = True
                parent_edge[g] = e
                order.append(g)
                queue.append(g)

    generators = np.flatnonzero(~in_tree & ~in_cotree)
    k = len(generators)
    Z = np.zeros((s.n_edges, k), dtype=np.int64)
    Z[generators, np.arange(k)] = 1
    # fix each cotree edge so its child face closes, deepest faces first
    for f in reversed(order):
        if f == root:
            continue
        e = parent_edge[f]
        fe, sg = s.face_edges[f], s.face_edge_signs[f].astype(np.int64)
        i = int(np.flatnonzero(fe == e)[0])
        total = np.zeros(k, dtype=np.int64)
        for j in range(3):
            if j != i:
                total += sg[j] * Z[fe[j]]
        Z[e] = -sg[i] * total
    tc = TreeCotree(np.flatnonzero(in_tree), np.flatnonzero(in_cotree), generators, Z)
    for a in (tc.tree_edges, tc.cotree_edges, tc.generators, tc.cocycles):
        a.setflags(write=False)
    _TC_CACHE[s] = tc
    return tc


def homology_cycles(s: CombinatorialSurface) -> list[list[int]]:
    """One closed node walk per generator edge: tree path, edge, tree path back."""
    tc = tree_cotree(s)
    parent = -np.ones(s.n_nodes, dtype=np.int64)
    parent[0] = 0
    tree_nbrs = {}
    for e in tc.tree_edges:
        u, v = (int(x) for x in s.edges[e])
        tree_nbrs.setdefault(u, []).append(v)
        tree_nbrs.setdefault(v, []).append(u)
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in sorted(tree_nbrs.get(u, [])):
            if parent[v] < 0:
                parent[v] = u
                queue.append(v)

    def to_root(v):
        out = [v]
        while out[-1] != 0:
            out.append(int(parent[out[-1]]))
        return out

    cycles = []
    for e in tc.generators:
        u, v = (int(x) for x in s.edges[e])
        up = to_root(u)[::-1]
        down = to_root(v)
        cycles.append(up + down)
    return cycles


def _walk_counts(s: CombinatorialSurface, nodes) -> np.ndarray:
    """Signed canonical traversal count of each edge along a node walk."""
    counts = np.zeros(s.n_edges, dtype=np.int64)
    for u, v in zip(nodes, nodes[1:]):
        e, sign = s.edge_index(int(u), int(v))
        counts[e] += sign
    return counts


def tree_cotree_signature(cycle, s: CombinatorialSurface) -> HomologySignature:
    """Integer homology coordinates of a closed node walk."""
    nodes = list(getattr(cycle, "nodes", cycle))
    if len(nodes) < 2 or nodes[0] != nodes[-1]:
        raise ValueError("tree-cotree signature needs a closed walk")
    tc = tree_cotree(s)
    return HomologySignature(tuple(int(x) for x in _walk_counts(s, nodes) @ tc.cocycles))


def walk_signature(walk, s: CombinatorialSurface) -> np.ndarray:
    """Tree-cotree coordinates of an open walk.

    Only differences between walks with shared endpoints are homology
    invariants; the signature of ``a`` followed by ``b`` reversed is
    ``walk_signature(a) - walk_signature(b)``.
    """
    nodes = list(getattr(walk, "nodes", walk))
    return _walk_counts(s, nodes) @ tree_cotree(s).cocycles


# ----------------------------------------------------------------------
# geometry


def winding_numbers(points, anchors, raw: bool = False) -> np.ndarray:
    """Winding number of a closed polyline about each anchor point.

    The polyline is closed automatically.  Raises if it passes through an
    anchor.
    """
    pts = np.asarray(points, dtype=float)[:, :2]
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if anchors.size == 0:
        return np.zeros(0, dtype=float if raw else np.int64)
    if not np.allclose(pts[0], pts[-1]):
        pts = np.concatenate([pts, pts[:1]])
    out = np.empty(len(anchors))
    for i, a in enumerate(anchors):
        rel = pts - a
        r = np.hypot(rel[:, 0], rel[:, 1])
        if np.any(r < 1e-12):
            raise ValueError(f"polyline passes through anchor {a.tolist()}")
        ang = np.arctan2(rel[:, 1], rel[:, 0])
        step = np.diff(ang)
        step = (step + np.pi) % (2 * np.pi) - np.pi
        out[i] = step.sum() / (2 * np.pi)
    return out if raw else np.rint(out).astype(np.int64)


def swept_angles(points, anchors) -> np.ndarray:
    """Total signed angle (in turns) an open polyline sweeps about each anchor.

    For two polylines with shared endpoints the winding number of the
    first followed by the second reversed is the difference of these.
    """
    pts = np.asarray(points, dtype=float)[:, :2]
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    out = np.zeros(len(anchors)) if anchors.size else np.zeros(0)
    for i, a in enumerate(anchors if anchors.size else []):
        rel = pts - a
        if np.any(np.hypot(rel[:, 0], rel[:, 1]) < 1e-12):
            raise ValueError(f"polyline passes through anchor {a.tolist()}")
        step = np.diff(np.arctan2(rel[:, 1], rel[:, 0]))
        out[i] = ((step + np.pi) % (2 * np.pi) - np.pi).sum() / (2 * np.pi)
    return out


def winding_geometric(cycle, hole_anchor_points, s: CombinatorialSurface) -> np.ndarray:
    """Winding of a closed node walk about each anchor, from coordinates."""
    nodes = list(getattr(cycle, "nodes", cycle))
    if nodes[0] != nodes[-1]:
        raise ValueError("winding needs a closed walk")
    if s.coords is None:
        raise ValueError("surface has no coordinates")
    if s.coords.shape[1] != 2 and not np.allclose(s.coords[:, 2:], 0):
        raise ValueError("geometric winding is defined for planar coordinates only")
    return winding_numbers(s.coords[nodes, :2], hole_anchor_points)


# ----------------------------------------------------------------------
# reference basis


def direct_basis(s: CombinatorialSurface, seed: int = 0, mode: str = "auto",
                 canonical: bool = True, max_draws: int = 50):
    """Harmonic basis from exact solves of random forms.

    Draws random forms until ``first_betti`` independent harmonic parts
    are found, then (optionally) canonicalizes against the hole loops.
    """
    from .basis import HarmonicBasis, canonicalize

    k = s.first_betti
    if k == 0:
        from .basis import TrivialHomologyError
        raise TrivialHomologyError("surface has trivial first homology")
    forms, seeds = [], []
    for i in range(max_draws):
        sd = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        h = direct_solve(s, random_one_form(s, sd), mode=mode).h
        trial = np.array([f.values for f in forms] + [h.values])
        if np.linalg.matrix_rank(trial, tol=1e-8 * np.abs(trial).max()) == len(trial):
            forms.append(h)
            seeds.append(sd)
        if len(forms) == k:
            break
    else:
        raise RuntimeError(f"only {len(forms)} of {k} independent forms after {max_draws} draws")
    b = HarmonicBasis(tuple(forms), eps=0.0, seeds=tuple(seeds))
    if canonical and s.hole_loops and len(s.hole_loops) == k:
        b = canonicalize(b, s.hole_loops)
    return b
