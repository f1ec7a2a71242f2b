"""Experiment sweeps over generated domains.

Every cell of a sweep (one domain at one eps) decomposes ``seeds`` random
1-forms and summarizes iteration counts, residuals and message counts as
min/max/avg/std rows.  Per-seed raw logs are always kept so the summary
can be recomputed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .basis import build_basis
from .classify import Trajectory, t_tuple
from .hodge import GossipConfig, decompose_many, random_one_form
from .netgen import DomainSpec, grid_domain, sided_paths
from .oracle import tree_cotree_signature
from .surface import atomic_write, double_cover

__all__ = [
    "ClassificationSpec",
    "ClassificationStudy",
    "ExperimentSpec",
    "StatRow",
    "SweepResult",
    "run_accuracy_sweep",
    "run_classification_study",
    "run_convergence_sweep",
    "run_randomness_study",
    "stat_row",
]

ALL_METRICS = ("iters_f", "iters_g", "err_dh", "err_delta_h", "err_dh_rms",
               "err_delta_h_rms", "msgs_f", "msgs_g")
ITER_METRICS = ("iters_f", "iters_g", "msgs_f", "msgs_g")
ERROR_METRICS = ("err_dh", "err_delta_h", "err_dh_rms", "err_delta_h_rms")


def _domain(d) -> DomainSpec:
    return d if isinstance(d, DomainSpec) else DomainSpec(**d)


@dataclass(frozen=True)
class ExperimentSpec:
    """Sweep definition: every domain is run at every eps with ``seeds`` forms.

    ``seeds`` defaults to the desk-scale 20; pass 100 for the full
    protocol.  Form ``i`` of a cell uses seed ``seed_base + i``.
    """

    domains: tuple
    eps: tuple
    seeds: int = 20
    seed_base: int = 0
    metrics: tuple = ALL_METRICS
    max_rounds: int = 1_000_000
    damping: float = 1.0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "domains", tuple(_domain(d) for d in self.domains))
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if not self.domains or not self.eps:
            raise ValueError("an experiment needs at least one domain and one eps")
        if self.seeds < 2:
            raise ValueError("seeds must be >= 2 for a standard deviation")
        bad = set(self.metrics) - set(ALL_METRICS)
        if bad:
            raise ValueError(f"unknown metrics {sorted(bad)}")

    @classmethod
    def from_json(cls, doc: dict) -> ExperimentSpec:
        doc = dict(doc)
        doc["domains"] = tuple(DomainSpec(**d) for d in doc["domains"])
        for key in ("eps", "metrics"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass(frozen=True)
class StatRow:
    """Summary of one sweep cell; ``stats[m] = (min, max, avg, std, std/avg %)``."""

    n_h: int
    n_v: int
    eps: float
    stats: dict
    n_ok: int
    n_failed: int
    domain_seed: int = 0

    def avg(self, metric: str) -> float:
        return self.stats[metric][2]

    def ratio(self, metric: str) -> float:
        return self.stats[metric][4]


def stat_row(values) -> tuple:
    """(min, max, avg, sample std, std/avg in percent)."""
    x = np.asarray(values, dtype=float)
    avg = float(x.mean())
    std = float(x.std(ddof=1)) if len(x) > 1 else 0.0
    pct = 100.0 * std / avg if avg != 0 else (0.0 if std == 0 else math.inf)
    return (float(x.min()), float(x.max()), avg, std, pct)


@dataclass(eq=False)
class SweepResult:
    rows: list
    raw: list
    metrics: tuple
    axis: str = "eps"

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["n_h", "n_v", "eps", "n_ok", "n_failed"]
        for m in self.metrics:
            head += [f"{m}_{s}" for s in ("min", "max", "avg", "std", "std_avg_pct")]
        w.writerow(head)
        for r in self.rows:
            line = [r.n_h, r.n_v, repr(r.eps), r.n_ok, r.n_failed]
            for m in self.metrics:
                line += [repr(v) for v in r.stats[m]]
            w.writerow(line)
        return buf.getvalue()

    def raw_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.raw)

    def plot_csv(self) -> str:
        """Long-format (x, y, series) averages against the sweep axis."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "series"])
        for r in self.rows:
            x = {"eps": r.eps, "n_v": r.n_v, "n_h": r.n_h}[self.axis]
            for m in self.metrics:
                w.writerow([repr(x), repr(r.avg(m)), f"{m}|n_h={r.n_h}|n_v={r.n_v}"
                            if self.axis == "eps" else f"{m}|eps={r.eps!r}"])
        return buf.getvalue()

    def write(self, out_dir, name: str) -> dict:
        out = Path(out_dir)
        paths = {
            "table": out / f"{name}.csv",
            "raw": out / f"{name}_raw.jsonl",
            "plot": out / f"{name}_plot.csv",
        }
        atomic_write(paths["table"], self.table_csv())
        atomic_write(paths["raw"], self.raw_jsonl())
        atomic_write(paths["plot"], self.plot_csv())
        return {k: str(v) for k, v in paths.items()}


def _run_cell(args):
    dspec, eps, seeds, seed_base, max_rounds, damping = args
    s, gt = grid_domain(dspec)
    cover = double_cover(s) if not s.is_closed else None
    cfg = GossipConfig(eps=eps, max_rounds=max_rounds, damping=damping)
    forms = [random_one_form(s, seed_base + i) for i in range(seeds)]
    results = decompose_many(s, forms, cfg, cover=cover)
    n_edges = (cover.cover if cover else s).n_edges
    raw = []
    for i, r in enumerate(results):
        rec = {"n_h": gt.n_holes, "n_v": s.n_nodes, "eps": eps, "domain_seed": dspec.seed,
               "seed": seed_base + i, "cover_edges": n_edges}
        rec.update(r.stats())
        raw.append(rec)
    return raw


def _summarize(raw, metrics):
    rows = []
    cells: dict = {}
    for rec in raw:
        cells.setdefault((rec["n_h"], rec["n_v"], rec["eps"], rec["domain_seed"]), []).append(rec)
    for (n_h, n_v, eps, dseed) in sorted(cells):
        recs = cells[(n_h, n_v, eps, dseed)]
        ok = [r for r in recs if r["converged"]]
        stats = {m: stat_row([r[m] for r in ok]) if ok else (math.nan,) * 5 for m in metrics}
        rows.append(StatRow(n_h, n_v, eps, stats, len(ok), len(recs) - len(ok), dseed))
    return rows


def _sweep(spec: ExperimentSpec, metrics, axis="eps") -> SweepResult:
    jobs = [(d, e, spec.seeds, spec.seed_base, spec.max_rounds, spec.damping)
            for d in spec.domains for e in spec.eps]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as ex:
            parts = list(ex.map(_run_cell, jobs))
    else:
        parts = [_run_cell(j) for j in jobs]
    raw = [rec for part in parts for rec in part]
    raw.sort(key=lambda r: (r["n_h"], r["n_v"], r["eps"], r["domain_seed"], r["seed"]))
    return SweepResult(_summarize(raw, metrics), raw, tuple(metrics), axis)


def run_randomness_study(spec: ExperimentSpec) -> SweepResult:
    """Spread of cost and accuracy over random inputs on fixed domains."""
    return _sweep(spec, spec.metrics)


def run_convergence_sweep(spec: ExperimentSpec, axis: str = "eps") -> SweepResult:
    """Average iteration counts against eps (or node / hole count)."""
    return _sweep(spec, tuple(m for m in spec.metrics if m in ITER_METRICS), axis)


def run_accuracy_sweep(spec: ExperimentSpec, axis: str = "eps") -> SweepResult:
    """Average harmonic residuals against eps (or node / hole count)."""
    return _sweep(spec, tuple(m for m in spec.metrics if m in ERROR_METRICS), axis)


# ----------------------------------------------------------------------
# classification correctness


@dataclass(frozen=True)
class ClassificationSpec:
    """Paths around a row of holes, one class per above/below pattern."""

    domain: DomainSpec = field(default_factory=lambda: DomainSpec(
        width=2.0, height=1.0, holes=3, target_nodes=3000))
    eps: float = 5e-6
    patterns: tuple = ((1, 1, 1), (-1, -1, -1), (1, -1, 1), (-1, 1, -1))
    per_class: int = 5
    seed: int = 0
    mu_grid: tuple = tuple(10.0 ** np.arange(-8, 1.01, 0.25))
    reference_range: tuple = (1e-5, 1e-4)

    def __post_init__(self):
        object.__setattr__(self, "domain", _domain(self.domain))
        object.__setattr__(self, "patterns", tuple(tuple(p) for p in self.patterns))
        object.__setattr__(self, "mu_grid", tuple(float(m) for m in self.mu_grid))

    @classmethod
    def from_json(cls, doc: dict) -> ClassificationSpec:
        return cls(**doc)


@dataclass(eq=False)
class ClassificationStudy:
    pairs: list
    lower: float
    upper: float
    curve: list
    oracle_agrees: bool
    n_nodes: int
    k: int
    reference_range: tuple

    @property
    def nonempty(self) -> bool:
        return self.upper > self.lower

    @property
    def decades(self) -> float:
        if not self.nonempty:
            return 0.0
        return math.log10(self.upper / self.lower) if self.lower > 0 else math.inf

    @property
    def reference_range_inside(self) -> bool:
        a, b = self.reference_range
        return self.lower < a and b <= self.upper

    @property
    def reference_range_overlaps(self) -> bool:
        a, b = self.reference_range
        return self.nonempty and self.lower < b and a <= self.upper

    def summary(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "k": self.k,
            "n_pairs": len(self.pairs),
            "oracle_agrees_with_labels": self.oracle_agrees,
            "safe_mu_lower": self.lower,
            "safe_mu_upper": self.upper,
            "safe_mu_decades": self.decades,
            "reference_range": list(self.reference_range),
            "reference_range_inside": self.reference_range_inside,
            "reference_range_overlaps": self.reference_range_overlaps,
        }

    def pairs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a", "b", "sigma", "same_truth", "same_oracle"])
        for p in self.pairs:
            w.writerow([p["a"], p["b"], repr(p["sigma"]), int(p["same_truth"]),
                        int(p["same_oracle"])])
        return buf.getvalue()

    def plot_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "series"])
        for mu, rate in self.curve:
            w.writerow([repr(mu), repr(rate), "agreement"])
        return buf.getvalue()

    def write(self, out_dir, name: str) -> dict:
        out = Path(out_dir)
        paths = {"summary": out / f"{name}.json", "pairs": out / f"{name}_pairs.csv",
                 "plot": out / f"{name}_plot.csv"}
        atomic_write(paths["summary"], json.dumps(self.summary(), indent=1) + "\n")
        atomic_write(paths["pairs"], self.pairs_csv())
        atomic_write(paths["plot"], self.plot_csv())
        return {k: str(v) for k, v in paths.items()}


def run_classification_study(spec: ClassificationSpec) -> ClassificationStudy:
    """Pairwise classifier-vs-truth agreement and the interval of safe mu.

    With ``same <=> sigma < mu`` every pair is decided correctly exactly
    when ``max(sigma over same pairs) < mu <= min(sigma over other
    pairs)``; that interval is reported along with an agreement curve
    over ``mu_grid``.
    """
    s, gt = grid_domain(spec.domain)
    b = build_basis(s, GossipConfig(eps=spec.eps, seed=spec.seed))
    paths = sided_paths(s, gt, spec.patterns, spec.per_class, spec.seed)
    trajs = [Trajectory(i, nodes) for i, nodes, _ in paths]
    label = {i: pat for i, _, pat in paths}
    H = {g.id: t_tuple(g, b).h for g in trajs}
    pairs, oracle_ok = [], True
    for x in range(len(trajs)):
        for y in range(x + 1, len(trajs)):
            a, c = trajs[x], trajs[y]
            sig = float(np.max(np.abs(H[a.id] - H[c.id])))
            truth = label[a.id] == label[c.id]
            oracle = tree_cotree_signature(a.then(c.reversed()).nodes, s).is_zero()
            oracle_ok &= oracle == truth
            pairs.append({"a": a.id, "b": c.id, "sigma": sig, "same_truth": truth,
                          "same_oracle": oracle})
    same = [p["sigma"] for p in pairs if p["same_truth"]]
    diff = [p["sigma"] for p in pairs if not p["same_truth"]]
    lower = max(same) if same else 0.0
    upper = min(diff) if diff else math.inf
    curve = []
    for mu in spec.mu_grid:
        good = sum((p["sigma"] < mu) == p["same_truth"] for p in pairs)
        curve.append((mu, good / len(pairs) if pairs else 1.0))
    return ClassificationStudy(pairs, lower, upper, curve, oracle_ok, s.n_nodes, b.k,
                               tuple(spec.reference_range))


def spec_dict(spec) -> dict:
    return asdict(spec)
