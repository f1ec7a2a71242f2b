"""Trajectory signatures (T-tuples) and homology-class decisions.

A trajectory's T-tuple is its start node, end node and the vector of its
path sums against every form of a harmonic basis.  Two trajectories with
the same endpoints are in the same class when their path-sum vectors
differ by less than a threshold ``mu`` in every component.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .basis import HarmonicBasis, auto_mu
from .oracle import swept_angles, walk_signature
from .surface import Cochain1, CombinatorialSurface, shortest_path

__all__ = [
    "Bucket",
    "BucketReport",
    "ClassifierConfig",
    "EndpointMismatch",
    "SnapWarning",
    "TTuple",
    "Trajectory",
    "bucketize",
    "compare_with_oracle",
    "format_comparison_csv",
    "format_report_csv",
    "format_report_json",
    "format_trajectories",
    "parse_trajectories",
    "path_integral",
    "same_class",
    "sigma",
    "snap_trace",
    "t_tuple",
    "winding_vector",
]

UNRELIABLE_ROUNDING = 0.25


class EndpointMismatch(ValueError):
    """Two trajectories were compared that do not share both endpoints."""


class SnapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Node walk ``nodes[0] -> ... -> nodes[-1]``; repeats are allowed."""

    id: str
    nodes: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(v) for v in self.nodes))
        if len(self.nodes) < 2:
            raise ValueError(f"trajectory {self.id!r} needs at least one hop")

    @property
    def source(self) -> int:
        return self.nodes[0]

    @property
    def target(self) -> int:
        return self.nodes[-1]

    @property
    def is_closed(self) -> bool:
        return self.nodes[0] == self.nodes[-1]

    def reversed(self) -> Trajectory:
        return Trajectory(f"{self.id}~r", self.nodes[::-1])

    def then(self, other: Trajectory) -> Trajectory:
        if self.target != other.source:
            raise ValueError("trajectories do not chain: end of first != start of second")
        return Trajectory(f"{self.id}+{other.id}", self.nodes + other.nodes[1:])

    def validate(self, s: CombinatorialSurface) -> Trajectory:
        for u, v in zip(self.nodes, self.nodes[1:]):
            if not s.has_edge(u, v):
                raise ValueError(f"trajectory {self.id!r}: ({u}, {v}) is not an edge")
        return self


def _hops(s: CombinatorialSurface, nodes):
    idx = np.empty(len(nodes) - 1, dtype=np.int64)
    sgn = np.empty(len(nodes) - 1)
    for i, (u, v) in enumerate(zip(nodes, nodes[1:])):
        try:
            idx[i], sgn[i] = s.edge_index(u, v)
        except KeyError as exc:
            raise ValueError(f"({u}, {v}) is not an edge of the surface") from exc
    return idx, sgn


def _nodes(gamma):
    return gamma.nodes if isinstance(gamma, Trajectory) else tuple(int(v) for v in gamma)


def path_integral(w: Cochain1, gamma) -> float:
    """Signed sum of ``w`` along the hops of ``gamma``."""
    idx, sgn = _hops(w.surface, _nodes(gamma))
    return math.fsum(sgn * w.values[idx])


@dataclass(frozen=True, eq=False)
class TTuple:
    s: int
    t: int
    h: np.ndarray

    def __sub__(self, other: TTuple) -> np.ndarray:
        if (self.s, self.t) != (other.s, other.t):
            raise EndpointMismatch(
                f"endpoints ({self.s}, {self.t}) and ({other.s}, {other.t}) differ")
        return self.h - other.h


def t_tuple(gamma, b: HarmonicBasis) -> TTuple:
    nodes = _nodes(gamma)
    idx, sgn = _hops(b.surface, nodes)
    # correctly rounded sums: reversing a walk negates h exactly
    terms = sgn[:, None] * b.matrix[idx]
    return TTuple(nodes[0], nodes[-1], np.array([math.fsum(c) for c in terms.T]))


@dataclass(frozen=True)
class ClassifierConfig:
    """``mu=None`` selects the automatic threshold from the basis periods.

    Pairs whose sigma lies within a factor ``near_ratio`` of ``mu`` are
    flagged as near-threshold.
    """

    mu: float | None = None
    quantize: bool = False
    near_ratio: float = 2.0

    def __post_init__(self):
        if self.mu is not None and not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.near_ratio < 1:
            raise ValueError("near_ratio must be >= 1")

    def threshold(self, b: HarmonicBasis) -> float:
        return self.mu if self.mu is not None else auto_mu(b)


def _tt(x, b):
    return x if isinstance(x, TTuple) else t_tuple(x, b)


def sigma(g1, g2, b: HarmonicBasis) -> float:
    """Largest absolute path-sum difference over the basis forms."""
    diff = _tt(g1, b) - _tt(g2, b)
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def same_class(g1, g2, b: HarmonicBasis, cfg: ClassifierConfig = ClassifierConfig()) -> bool:
    return sigma(g1, g2, b) < cfg.threshold(b)


def winding_vector(cycle, b: HarmonicBasis) -> tuple[np.ndarray, float]:
    """Rounded path sums of a closed walk against a canonical basis.

    Returns the integer vector and the largest rounding distance; a
    distance above 0.25 means the rounding is not trustworthy.
    """
    nodes = _nodes(cycle)
    if nodes[0] != nodes[-1]:
        raise ValueError("winding vector needs a closed walk")
    if not b.canonical:
        raise ValueError("winding vector needs a canonical basis")
    alpha = t_tuple(nodes, b).h
    rounded = np.rint(alpha)
    resid = float(np.max(np.abs(alpha - rounded))) if alpha.size else 0.0
    if resid > UNRELIABLE_ROUNDING:
        warnings.warn(f"winding rounding residual {resid:.3f} is unreliable", stacklevel=2)
    return rounded.astype(np.int64), resid


# ----------------------------------------------------------------------
# bucketing


@dataclass(frozen=True)
class Bucket:
    key: str
    s: int
    t: int
    ids: tuple


@dataclass(frozen=True, eq=False)
class BucketReport:
    buckets: tuple
    mu: float | None
    quantized: bool
    near_pairs: tuple = ()
    max_residual: float = 0.0
    summary: dict = field(default_factory=dict)

    def labels(self) -> dict:
        """Trajectory id -> bucket key."""
        return {i: bk.key for bk in self.buckets for i in bk.ids}


def _summary(buckets, n):
    sizes = [len(bk.ids) for bk in buckets]
    return {
        "n_trajectories": n,
        "n_buckets": len(buckets),
        "max_bucket": max(sizes) if sizes else 0,
        "n_singletons": sum(1 for x in sizes if x == 1),
    }


class _UnionFind:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, a):
        while self.p[a] != a:
            self.p[a] = self.p[self.p[a]]
            a = self.p[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.p[max(ra, rb)] = min(ra, rb)


def bucketize(trajs, b: HarmonicBasis, cfg: ClassifierConfig = ClassifierConfig()) -> BucketReport:
    """Group trajectories by endpoints, then by homology class.

    With ``cfg.quantize`` and a canonical basis the class key is the
    rounded difference of path sums to the group's first trajectory
    (in id order).  Otherwise pairs are merged by union-find under
    :func:`same_class`.
    """
    trajs = sorted(trajs, key=lambda g: g.id)
    quant = cfg.quantize and b.canonical
    if cfg.quantize and not b.canonical:
        raise ValueError("quantized bucketing needs a canonical basis")
    mu = None if quant else (cfg.threshold(b) if trajs else cfg.mu)
    groups: dict = {}
    tts = {}
    for g in trajs:
        tt = t_tuple(g, b)
        tts[g.id] = tt
        groups.setdefault((tt.s, tt.t), []).append(g.id)

    buckets, near, max_res = [], [], 0.0
    for (s_, t_) in sorted(groups):
        ids = groups[(s_, t_)]
        if quant:
            ref = tts[ids[0]].h
            keyed: dict = {}
            for i in ids:
                d = tts[i].h - ref
                r = np.rint(d)
                max_res = max(max_res, float(np.max(np.abs(d - r))) if d.size else 0.0)
                keyed.setdefault(tuple(int(x) for x in r), []).append(i)
            for key in sorted(keyed):
                buckets.append(Bucket(f"{s_}-{t_}:{list(key)}", s_, t_, tuple(keyed[key])))
        else:
            H = np.stack([tts[i].h for i in ids])
            uf = _UnionFind(len(ids))
            for a in range(len(ids)):
                sig = np.max(np.abs(H[a + 1:] - H[a]), axis=1) if a + 1 < len(ids) else []
                for off, sv in enumerate(sig):
                    c = a + 1 + off
                    if mu / cfg.near_ratio < sv < mu * cfg.near_ratio:
                        near.append((ids[a], ids[c], float(sv)))
                    if sv < mu:
                        uf.union(a, c)
            members: dict = {}
            for a in range(len(ids)):
                members.setdefault(uf.find(a), []).append(ids[a])
            for n, root in enumerate(sorted(members)):
                buckets.append(Bucket(f"{s_}-{t_}#{n}", s_, t_, tuple(members[root])))
    return BucketReport(
        buckets=tuple(buckets), mu=mu, quantized=quant, near_pairs=tuple(near),
        max_residual=max_res, summary=_summary(buckets, len(trajs)))


def format_report_json(r: BucketReport) -> str:
    doc = {
        "buckets": [{"key": bk.key, "s": bk.s, "t": bk.t, "ids": list(bk.ids)}
                    for bk in r.buckets],
        "summary": r.summary,
        "mu": r.mu,
        "quantized": r.quantized,
        "near_pairs": [list(p) for p in r.near_pairs],
    }
    return json.dumps(doc, indent=1) + "\n"


def format_report_csv(r: BucketReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trajectory", "bucket", "s", "t"])
    for bk in r.buckets:
        for i in bk.ids:
            w.writerow([i, bk.key, bk.s, bk.t])
    return buf.getvalue()


# ----------------------------------------------------------------------
# coordinate traces


def snap_trace(points, s: CombinatorialSurface, snap_radius: float | None = None,
               id: str = "trace") -> Trajectory:
    """Map sample points to nearest nodes and join them by shortest paths.

    Points farther than ``snap_radius`` (default three times the median
    edge length) from every node raise a :class:`SnapWarning` but are
    snapped anyway.
    """
    if s.coords is None:
        raise ValueError("snapping needs node coordinates")
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("trace has no points")
    xy = s.coords[:, : pts.shape[1]]
    dist, near = cKDTree(xy).query(pts)
    if snap_radius is None:
        e = s.edges
        snap_radius = 3.0 * float(np.median(np.linalg.norm(xy[e[:, 0]] - xy[e[:, 1]], axis=1)))
    far = int(np.sum(dist > snap_radius))
    if far:
        warnings.warn(SnapWarning(
            f"{far} trace points lie farther than {snap_radius:.4g} from any node"), stacklevel=2)
    seq = [int(near[0])]
    for v in near[1:]:
        if int(v) != seq[-1]:
            seq.append(int(v))
    if len(seq) < 2:
        raise ValueError("trace snaps to a single node; a trajectory needs two distinct nodes")
    nodes = [seq[0]]
    for a, c in zip(seq, seq[1:]):
        nodes += shortest_path(s, a, c)[1:]
    return Trajectory(id, tuple(nodes))


def parse_trajectories(text: str, s: CombinatorialSurface | None = None) -> list[Trajectory]:
    """JSON lines of ``{"id", "nodes"}`` or ``{"id", "points"}`` records."""
    out = []
    for no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"trajectory line {no}: {exc.msg}") from exc
        tid = str(rec.get("id", f"t{no}"))
        if "nodes" in rec:
            g = Trajectory(tid, rec["nodes"])
            if s is not None:
                g.validate(s)
        elif "points" in rec:
            if s is None:
                raise ValueError("point traces need a surface to snap to")
            g = snap_trace(rec["points"], s, id=tid)
        else:
            raise ValueError(f"trajectory line {no} has neither 'nodes' nor 'points'")
        out.append(g)
    ids = [g.id for g in out]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate trajectory ids")
    return out


def format_trajectories(trajs) -> str:
    return "".join(json.dumps({"id": g.id, "nodes": list(g.nodes)}) + "\n" for g in trajs)


# ----------------------------------------------------------------------
# cross-check against the combinatorial and geometric oracles


def compare_with_oracle(trajs, b: HarmonicBasis, mu: float, anchors=None) -> list[dict]:
    """Decide every same-endpoint pair three ways.

    For each pair the classifier's ``sigma < mu`` is compared with
    equality of tree-cotree signatures of the closed difference and,
    when ``anchors`` are given (planar domains), with a zero geometric
    winding vector about them.  Pairs come in id order.
    """
    s = b.surface
    trajs = sorted(trajs, key=lambda g: g.id)
    tts = {g.id: t_tuple(g, b) for g in trajs}
    groups: dict = {}
    for g in trajs:
        groups.setdefault((g.source, g.target), []).append(g)
    # both oracles are additive along walks, so per-walk values suffice
    shared = [g for grp in groups.values() if len(grp) > 1 for g in grp]
    sig = {g.id: walk_signature(g, s) for g in shared}
    turn = {}
    if anchors is not None:
        if s.coords is None:
            raise ValueError("geometric check needs node coordinates")
        turn = {g.id: swept_angles(s.coords[list(g.nodes), :2], anchors) for g in shared}
    rows = []
    for x in range(len(trajs)):
        for y in range(x + 1, len(trajs)):
            a, c = trajs[x], trajs[y]
            if (a.source, a.target) != (c.source, c.target):
                continue
            sg = float(np.max(np.abs(tts[a.id] - tts[c.id]))) if b.k else 0.0
            same_tc = not np.any(sig[a.id] - sig[c.id])
            same_geo = None
            if anchors is not None:
                same_geo = not np.any(np.rint(turn[a.id] - turn[c.id]))
            same_cls = sg < mu
            agree = same_cls == same_tc and (same_geo is None or same_geo == same_tc)
            rows.append({"a": a.id, "b": c.id, "sigma": sg, "classifier": same_cls,
                         "tree_cotree": same_tc, "geometric": same_geo, "agree": agree})
    return rows


def format_comparison_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a", "b", "sigma", "classifier", "tree_cotree", "geometric", "agree"])
    for r in rows:
        geo = "" if r["geometric"] is None else int(r["geometric"])
        w.writerow([r["a"], r["b"], repr(r["sigma"]), int(r["classifier"]),
                    int(r["tree_cotree"]), geo, int(r["agree"])])
    return buf.getvalue()
