"""Harmonic 1-form bases from repeated randomized decompositions.

Fresh random 1-forms are decomposed one after another and their harmonic
parts kept whenever they raise the numerical rank of the collection, as
seen on a small set of probe edges around one node.  Once a run of
candidates adds nothing, the collection spans the harmonic space and its
size is the number of holes (the first Betti number on closed surfaces).
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .hodge import GossipConfig, decompose_many, random_one_form
from .surface import (
    Cochain1,
    CombinatorialSurface,
    double_cover,
    format_cochain,
    parse_cochain,
)

__all__ = [
    "HarmonicBasis",
    "SingularPeriodsError",
    "TrivialHomologyError",
    "auto_mu",
    "build_basis",
    "canonicalize",
    "candidate_seed",
    "format_basis",
    "hole_count",
    "independence_rank",
    "parse_basis",
    "periods",
    "probe_edges",
]

RANK_RTOL = 1e-6
# absolute rank floor in units of eps; dependent draws leave pivots of up
# to ~60 eps (period rows sum solver noise along whole loops), while
# genuinely new forms give pivots above 1e-2
RANK_NOISE = 500.0
CANONICAL_COND_MAX = 1e8


class TrivialHomologyError(ValueError):
    """The surface carries no nonzero harmonic 1-form."""


class SingularPeriodsError(ValueError):
    """The period matrix over the hole loops cannot be inverted reliably."""


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    """Ordered harmonic forms with their provenance.

    ``period_matrix[i, j]`` is the period of ``forms[j]`` over
    ``loops[i]``; it is present whenever loops were supplied.
    """

    forms: tuple
    eps: float
    seeds: tuple
    canonical: bool = False
    period_matrix: np.ndarray | None = None
    loops: tuple | None = None

    def __post_init__(self):
        if not self.forms:
            raise TrivialHomologyError("a harmonic basis needs at least one form")
        s = self.forms[0].surface
        if any(f.surface is not s for f in self.forms):
            raise ValueError("basis forms live on different surfaces")

    @property
    def k(self) -> int:
        return len(self.forms)

    @property
    def surface(self) -> CombinatorialSurface:
        return self.forms[0].surface

    @functools.cached_property
    def matrix(self) -> np.ndarray:
        """Forms as columns, shape (E, k); read-only."""
        m = np.stack([f.values for f in self.forms], axis=1)
        m.flags.writeable = False
        return m

    def __len__(self):
        return self.k


def candidate_seed(seed: int, i: int) -> int:
    """Seed of the i-th random candidate form drawn under a base seed."""
    return int(np.random.SeedSequence([int(seed), int(i)]).generate_state(1, np.uint64)[0])


def probe_edges(s: CombinatorialSurface, v: int, m_prime: int) -> list[int]:
    """First ``m_prime`` edges around ``v`` in (hop, edge id) order.

    An edge's hop is one more than the BFS distance from ``v`` of its
    nearer endpoint, so the edges at ``v`` come first, then the edges
    leaving its neighbours, and so on.
    """
    if m_prime < 1:
        raise ValueError("m_prime must be >= 1")
    if m_prime > s.n_edges:
        raise ValueError(f"surface has only {s.n_edges} edges, cannot pick {m_prime}")
    from .surface import bfs_distances

    dist = bfs_distances(s, int(v))
    hop = np.minimum(dist[s.edges[:, 0]], dist[s.edges[:, 1]]) + 1
    order = np.lexsort((np.arange(s.n_edges), hop))
    return [int(e) for e in order[:m_prime]]


def independence_rank(forms, probes, tol: float = RANK_RTOL, atol: float = 0.0,
                      extra_rows=None) -> int:
    """Numerical rank of the probe-edge samples of ``forms``.

    Columns are forms, rows are probe edges (plus ``extra_rows`` stacked
    below when given).  A pivot counts when it exceeds both ``tol`` times
    the largest column norm and ``atol``.
    """
    forms = list(forms)
    if not forms:
        return 0
    probes = np.asarray(probes, dtype=np.int64)
    W = np.stack([np.asarray(f.values)[probes] for f in forms], axis=1)
    if extra_rows is not None:
        W = np.vstack([W, np.asarray(extra_rows, dtype=float).reshape(-1, len(forms))])
    if len(W) < len(forms):
        raise ValueError("need at least as many probe rows as forms")
    norms = np.linalg.norm(W, axis=0)
    top = float(norms.max())
    if top == 0.0:
        return 0
    R = sla.qr(W, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    return int(np.sum(diag > max(tol * top, atol)))


def periods(w: Cochain1, loops) -> np.ndarray:
    """Signed sum of ``w`` along each loop (closed automatically)."""
    s = w.surface
    out = np.empty(len(loops))
    x = w.values
    for i, loop in enumerate(loops):
        nodes = list(loop)
        if nodes[0] != nodes[-1]:
            nodes.append(nodes[0])
        u = np.asarray(nodes[:-1])
        v = np.asarray(nodes[1:])
        total = 0.0
        for a, b in zip(u, v):
            try:
                e, sign = s.edge_index(int(a), int(b))
            except KeyError as exc:
                raise ValueError(f"loop {i} uses non-edge ({a}, {b})") from exc
            total += sign * x[e]
        out[i] = total
    return out


def period_matrix(forms, loops) -> np.ndarray:
    """``P[i, j]`` = period of ``forms[j]`` over ``loops[i]``."""
    return np.stack([periods(f, loops) for f in forms], axis=1)


def canonicalize(b: HarmonicBasis, hole_loops) -> HarmonicBasis:
    """Recombine the forms so that form i has period delta_ij over loop j."""
    loops = tuple(tuple(lp) for lp in hole_loops)
    if len(loops) != b.k:
        raise ValueError(f"{b.k} forms but {len(loops)} hole loops")
    lam = period_matrix(b.forms, loops)
    cond = np.linalg.cond(lam)
    if not np.isfinite(cond) or cond > CANONICAL_COND_MAX:
        raise SingularPeriodsError(
            f"period matrix condition number {cond:.3g} exceeds {CANONICAL_COND_MAX:g}")
    # eta = W inv(lam): the periods of eta over the loops are lam @ inv(lam) = I
    eta = b.matrix @ np.linalg.inv(lam)
    s = b.surface
    forms = tuple(Cochain1(s, eta[:, i]) for i in range(b.k))
    return replace(b, forms=forms, canonical=True,
                   period_matrix=period_matrix(forms, loops), loops=loops)


def auto_mu(b: HarmonicBasis, loops=None, max_winding: int = 2) -> float:
    """Automatic class threshold from the basis periods over the hole loops.

    The smaller of half the smallest nonzero |period| and half the
    smallest sigma any nonzero winding difference (entries up to
    ``max_winding`` in size) would produce.  A canonical basis gives 0.5.
    """
    loops = loops if loops is not None else (b.loops or b.surface.hole_loops)
    if not loops:
        raise ValueError("automatic threshold needs hole loops")
    P = period_matrix(b.forms, loops)
    A = np.abs(P)
    smallest = float(A[A > 1e-3 * A.max()].min())
    # sigma of a class difference n (windings round the loops) is max|P^T n|
    k = len(loops)
    if (2 * max_winding + 1) ** k <= 200_000:
        grid = np.array(np.meshgrid(*[np.arange(-max_winding, max_winding + 1)] * k,
                                    indexing="ij")).reshape(k, -1).T
        grid = grid[np.any(grid != 0, axis=1)]
        lattice = float(np.abs(grid @ P).max(axis=1).min())
        smallest = min(smallest, lattice)
    return smallest / 2.0


def build_basis(s: CombinatorialSurface, cfg: GossipConfig, confirmations: int = 5,
                probe_node: int | None = None, use_loops: bool = True,
                max_candidates: int = 400, batch: int = 4,
                canonical: bool = False) -> HarmonicBasis:
    """Grow a harmonic basis until ``confirmations`` draws in a row add nothing.

    Candidates are drawn with :func:`candidate_seed` from ``cfg.seed`` and
    decomposed ``batch`` at a time; acceptance is still decided one
    candidate at a time, in draw order.  When ``use_loops`` is set, the
    periods over the hole loops (plus a full set of tree-cotree generator
    cycles when the surface has handles) are stacked under the probe
    samples: a global check that a single node could not make.
    """
    if confirmations < 1:
        raise ValueError("confirmations must be >= 1")
    cover = None if s.is_closed else double_cover(s)
    if probe_node is None:
        interior = np.flatnonzero(~s.boundary_nodes)
        probe_node = int(interior[0]) if len(interior) else 0
    loops = None
    if use_loops:
        loops = list(s.hole_loops)
        if s.genus > 0:
            # hole loops cannot see handles; add a full set of H1 generators
            from .oracle import homology_cycles
            loops += homology_cycles(s)
        loops = loops or None
    atol = RANK_NOISE * cfg.eps

    forms, seeds = [], []
    quiet, drawn = 0, 0
    probes = probe_edges(s, probe_node, min(max(2 * (len(forms) + 1), 8), s.n_edges))
    while quiet < confirmations:
        if drawn >= max_candidates:
            raise RuntimeError(
                f"basis still growing after {max_candidates} candidates (k={len(forms)})")
        n = min(batch, max_candidates - drawn)
        cand_seeds = [candidate_seed(cfg.seed, drawn + i) for i in range(n)]
        results = decompose_many(
            s, [random_one_form(s, sd) for sd in cand_seeds], cfg, cover=cover)
        for sd, res in zip(cand_seeds, results):
            drawn += 1
            trial = forms + [res.h]
            extra = period_matrix(trial, loops) if loops else None
            if independence_rank(trial, probes, atol=atol, extra_rows=extra) > len(forms):
                forms.append(res.h)
                seeds.append(sd)
                quiet = 0
                m_prime = min(max(2 * (len(forms) + 1), 8), s.n_edges)
                probes = probe_edges(s, probe_node, m_prime)
            else:
                quiet += 1
            if quiet >= confirmations:
                break
    if not forms:
        raise TrivialHomologyError(
            "no harmonic component found: the surface has trivial first homology")
    b = HarmonicBasis(tuple(forms), eps=cfg.eps, seeds=tuple(seeds))
    if s.hole_loops:
        b = replace(b, period_matrix=period_matrix(b.forms, s.hole_loops),
                    loops=tuple(s.hole_loops))
    if canonical:
        if not s.hole_loops:
            raise ValueError("canonical basis needs hole loops")
        b = canonicalize(b, s.hole_loops)
    return b


def hole_count(s: CombinatorialSurface, cfg: GossipConfig, **kw) -> int:
    """Size of the basis found by :func:`build_basis`; 0 for trivial homology."""
    try:
        return build_basis(s, cfg, **kw).k
    except TrivialHomologyError:
        return 0


def format_basis(b: HarmonicBasis) -> str:
    doc = {
        "surface_hash": b.surface.digest,
        "eps": b.eps,
        "seeds": [int(x) for x in b.seeds],
        "canonical": b.canonical,
        "period_matrix": None if b.period_matrix is None else b.period_matrix.tolist(),
        "loops": None if b.loops is None else [list(map(int, lp)) for lp in b.loops],
        "forms": [format_cochain(f) for f in b.forms],
    }
    return json.dumps(doc, indent=1) + "\n"


def parse_basis(text: str, s: CombinatorialSurface) -> HarmonicBasis:
    doc = json.loads(text)
    if doc.get("surface_hash") != s.digest:
        raise ValueError(f"basis belongs to surface {doc.get('surface_hash')}, not {s.digest}")
    forms = tuple(parse_cochain(block, s) for block in doc["forms"])
    pm = doc.get("period_matrix")
    loops = doc.get("loops")
    return HarmonicBasis(
        forms=forms,
        eps=float(doc["eps"]),
        seeds=tuple(int(x) for x in doc["seeds"]),
        canonical=bool(doc["canonical"]),
        period_matrix=None if pm is None else np.array(pm, dtype=float),
        loops=None if loops is None else tuple(tuple(lp) for lp in loops),
    )
