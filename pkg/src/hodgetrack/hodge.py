"""Decentralized Hodge decomposition by synchronous gossip (Jacobi) rounds.

Every node (for the exact part) or face (for the coexact part) repeatedly
replaces its value by the average of its neighbours' previous-round values
corrected by the local divergence or curl of the input form.  Bounded
surfaces are handled on their double cover with a mirrored input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .surface import (
    Cochain0,
    Cochain1,
    Cochain2,
    CombinatorialSurface,
    DoubleCoverMap,
    d0,
    delta2,
    double_cover,
    mirror_one_form,
    residual_norms,
    restrict,
)

__all__ = [
    "DecompositionResult",
    "GossipConfig",
    "decompose",
    "decompose_many",
    "random_one_form",
    "residual_norms",
    "solve_f",
    "solve_g",
]


@dataclass(frozen=True)
class GossipConfig:
    """Gossip solver settings.

    ``stop_rule="global"`` stops every node together once the largest
    per-round change falls below ``eps``; with ``"local"`` a node skips
    its update (and sends nothing) while neither it nor any neighbour
    moved by ``eps`` in the previous round.
    """

    eps: float = 1e-6
    max_rounds: int = 1_000_000
    seed: int = 0
    damping: float = 1.0
    stop_rule: str = "global"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.stop_rule not in ("global", "local"):
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    """One Hodge run: ``omega = df + dg + h`` edge by edge.

    Residuals are measured where the solve ran (the double cover for a
    bounded input).  ``msgs_*`` count one message per neighbour per
    active node per round.
    """

    omega: Cochain1
    f: Cochain0
    g: Cochain2
    df: Cochain1
    dg: Cochain1
    h: Cochain1
    iters_f: int
    iters_g: int
    err_dh: float
    err_delta_h: float
    err_dh_rms: float
    err_delta_h_rms: float
    converged_f: bool
    converged_g: bool
    msgs_f: int = 0
    msgs_g: int = 0

    @property
    def converged(self) -> bool:
        return self.converged_f and self.converged_g

    def stats(self) -> dict:
        return {
            "iters_f": self.iters_f,
            "iters_g": self.iters_g,
            "err_dh": self.err_dh,
            "err_delta_h": self.err_delta_h,
            "err_dh_rms": self.err_dh_rms,
            "err_delta_h_rms": self.err_delta_h_rms,
            "msgs_f": self.msgs_f,
            "msgs_g": self.msgs_g,
            "converged": self.converged,
        }


def random_one_form(s: CombinatorialSurface, seed, u=None) -> Cochain1:
    """Average of per-node uniform draws in [-1, 1] along each edge.

    ``u`` overrides the random node values (test hook).
    """
    if u is None:
        u = np.random.default_rng(seed).uniform(-1.0, 1.0, s.n_nodes)
    else:
        u = np.asarray(u, dtype=float)
    return Cochain1(s, (u[s.edges[:, 0]] + u[s.edges[:, 1]]) / 2.0)


def _gossip(adj, deg, rhs, cfg: GossipConfig):
    """Synchronous Jacobi rounds ``x <- (A x + rhs) / deg`` from ``x = 0``.

    ``rhs`` has one column per independent problem; each column stops on
    its own, so a batched column is bit-identical to a solo run.
    Returns ``(x, iters, converged, messages)``.
    """
    n, m = rhs.shape
    x = np.zeros((n, m))
    iters = np.zeros(m, dtype=np.int64)
    msgs = np.zeros(m, dtype=np.int64)
    active = np.ones(m, dtype=bool)
    hot = np.ones((n, m), dtype=bool)
    deg = deg.astype(float)[:, None]
    degi = deg[:, 0].astype(np.int64)
    local = cfg.stop_rule == "local"

    for rnd in range(1, cfg.max_rounds + 1):
        cols = np.flatnonzero(active)
        xa = x[:, cols]
        new = (adj @ xa + rhs[:, cols]) / deg
        if cfg.damping != 1.0:
            new = xa + cfg.damping * (new - xa)
        if local:
            # a node sleeps until it or a neighbour moved by eps last round
            h = hot[:, cols]
            awake = h | ((adj @ h.astype(float)) > 0)
            msgs[cols] += degi @ awake
            new = np.where(awake, new, xa)
        else:
            msgs[cols] += int(degi.sum())
        change = np.abs(new - xa)
        if local:
            hot[:, cols] = change >= cfg.eps
        done = change.max(axis=0) < cfg.eps if n else np.ones(len(cols), bool)
        x[:, cols] = new
        iters[cols] = rnd
        active[cols[done]] = False
        if not active.any():
            break
    return x, iters, ~active, msgs


def _require_closed(s):
    if not s.is_closed:
        raise ValueError("gossip solvers run on closed surfaces; decompose() "
                         "double-covers bounded ones")


def _solve_f_batch(s, W, cfg):
    # node potential: deg f_i - sum_j f_j = -sum_j w(i->j)
    rhs = (s.D0.T @ W).reshape(s.n_nodes, -1)
    return _gossip(s.adjacency, s.degree, rhs, cfg)


def _solve_g_batch(s, W, cfg):
    # face potential: 3 g_i - sum_j g_j = (d w)_i under g(left) - g(right)
    rhs = (s.D1 @ W).reshape(s.n_faces, -1)
    deg = np.full(s.n_faces, 3)
    return _gossip(s.dual_adjacency, deg, rhs, cfg)


def solve_f(s: CombinatorialSurface, w: Cochain1, cfg: GossipConfig):
    """Gossip solve of ``delta d f = delta w``; returns ``(f, iters, converged)``."""
    _require_closed(s)
    x, it, ok, _ = _solve_f_batch(s, w.values[:, None], cfg)
    return Cochain0(s, x[:, 0]), int(it[0]), bool(ok[0])


def solve_g(s: CombinatorialSurface, w: Cochain1, cfg: GossipConfig):
    """Gossip solve of ``d delta g = d w`` on the dual graph."""
    _require_closed(s)
    x, it, ok, _ = _solve_g_batch(s, w.values[:, None], cfg)
    return Cochain2(s, x[:, 0]), int(it[0]), bool(ok[0])


def decompose_many(s: CombinatorialSurface, forms, cfg: GossipConfig,
                   cover: DoubleCoverMap | None = None) -> list[DecompositionResult]:
    """Decompose several forms in one batched gossip run.

    Each form is solved independently (own stop rule, own counts); the
    batch only shares the sparse products.
    """
    forms = list(forms)
    if not forms:
        return []
    for w in forms:
        if w.surface is not s:
            raise ValueError("form is not defined on this surface")
    if s.is_closed:
        work = s
        inputs = forms
    else:
        if cover is None:
            cover = double_cover(s)
        work = cover.cover
        inputs = [mirror_one_form(w, cover) for w in forms]

    W = np.stack([w.values for w in inputs], axis=1)
    F, it_f, ok_f, msg_f = _solve_f_batch(work, W, cfg)
    G, it_g, ok_g, msg_g = _solve_g_batch(work, W, cfg)

    results = []
    for j, (w, wc) in enumerate(zip(forms, inputs)):
        f = Cochain0(work, F[:, j])
        g = Cochain2(work, G[:, j])
        df, dg = d0(f), delta2(g)
        h = Cochain1(work, wc.values - df.values - dg.values)
        res = residual_norms(h)
        if work is not s:
            f, g, df, dg, h = (restrict(c, cover) for c in (f, g, df, dg, h))
        results.append(DecompositionResult(
            omega=w, f=f, g=g, df=df, dg=dg, h=h,
            iters_f=int(it_f[j]), iters_g=int(it_g[j]),
            err_dh=res.err_dh, err_delta_h=res.err_delta_h,
            err_dh_rms=res.err_dh_rms, err_delta_h_rms=res.err_delta_h_rms,
            converged_f=bool(ok_f[j]), converged_g=bool(ok_g[j]),
            msgs_f=int(msg_f[j]), msgs_g=int(msg_g[j]),
        ))
    return results


def decompose(s: CombinatorialSurface, w: Cochain1, cfg: GossipConfig,
              cover: DoubleCoverMap | None = None) -> DecompositionResult:
    """Split ``w`` into exact, coexact and harmonic parts by gossip."""
    return decompose_many(s, [w], cfg, cover=cover)[0]

