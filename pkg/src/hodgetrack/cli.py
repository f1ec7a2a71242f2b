"""Command-line entry point: ``hodgetrack <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 non-convergence.  Failures print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .basis import TrivialHomologyError, auto_mu, build_basis, format_basis, parse_basis
from .classify import (
    ClassifierConfig,
    Trajectory,
    bucketize,
    compare_with_oracle,
    format_comparison_csv,
    format_report_csv,
    format_report_json,
    format_trajectories,
    parse_trajectories,
    snap_trace,
    t_tuple,
)
from .hodge import GossipConfig, decompose, random_one_form
from .netgen import (
    DomainSpec,
    MuseumSpec,
    format_museum,
    format_truth,
    grid_domain,
    museum_domain,
    museum_trajectories,
    parse_museum,
    parse_truth,
    random_path_pairs,
    side_signature,
    sided_paths,
    synthetic_traces,
)
from .oracle import direct_basis
from .simharness import (
    ClassificationSpec,
    ExperimentSpec,
    run_accuracy_sweep,
    run_classification_study,
    run_convergence_sweep,
    run_randomness_study,
)
from .surface import atomic_write, format_mesh, read_mesh, write_cochain

ENV_OUT_DIR = "HODGETRACK_OUT_DIR"
ENV_THREADS = "HODGETRACK_THREADS"

FORMATS = """\
file formats
  mesh (text):
    surf v=<V> f=<F>
    n <id> [x y [z]]            one line per node, ids 0..V-1
    t <a> <b> <c>               one line per triangle, counterclockwise
    hole <n0> <n1> ... <nk>     optional, one line per interior hole loop
  cochain (text):
    c1 <surface-digest>
    e <u> <v> <value>           one line per edge, u < v
  basis (JSON):
    {"surface_hash": str, "eps": float, "seeds": [int], "canonical": bool,
     "period_matrix": [[float]] | null, "loops": [[int]] | null,
     "forms": [<cochain text>]}
  trajectories (JSON lines):
    {"id": str, "nodes": [int, ...]}  |  {"id": str, "points": [[x, y], ...]}
  report (JSON):
    {"buckets": [{"key": str, "s": int, "t": int, "ids": [str]}],
     "summary": {"n_trajectories", "n_buckets", "max_bucket", "n_singletons"},
     "mu": float | null, "quantized": bool, "near_pairs": [[a, b, sigma]]}
  config (JSON, --config): {"eps": float, "mu": "auto" | float, "seed": int,
     "out_dir": str, "verbosity": int}; command-line flags win.
  sim spec (JSON): table1/fig6/fig7 take {"domains": [<domain>], "eps": [float],
     "seeds": int, ...}; fig8 takes {"domain": <domain>, "eps": float,
     "patterns": [[+-1, ...]], "per_class": int, "seed": int}.
     <domain> = {"width", "height", "holes": int | [[x0, y0, x1, y1]],
                 "jitter", "target_nodes", "seed"}
  pipeline spec (JSON): {"domain": {"kind": "grid" | "museum", ...},
     "eps": float, "seed": int, "canonical": bool, "mu": "auto" | float,
     "quantize": bool, "trajectories": {"kind": "sided" | "museum" | "pairs"
     | "traces" | "none", "n": int, "per_class": int, "patterns": [...],
     "simple": bool}}

environment: HODGETRACK_OUT_DIR (output directory), HODGETRACK_THREADS (workers)
exit codes: 0 ok, 1 usage, 2 data/validation, 3 non-convergence
"""


class CliError(Exception):
    def __init__(self, code: int, message: str, **extra):
        super().__init__(message)
        self.code = code
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(1, message, kind="usage")


@dataclass(frozen=True)
class GlobalConfig:
    eps: float = 1e-6
    mu: str | float = "auto"
    seed: int = 0
    out_dir: str = "."
    verbosity: int = 0
    threads: int = 1

    @classmethod
    def resolve(cls, args) -> GlobalConfig:
        merged = {}
        if args.config:
            doc = json.loads(_read(args.config))
            names = {f.name for f in fields(cls)}
            unknown = set(doc) - names
            if unknown:
                raise CliError(2, f"unknown config keys {sorted(unknown)}", path=args.config)
            merged.update(doc)
        if os.environ.get(ENV_OUT_DIR):
            merged["out_dir"] = os.environ[ENV_OUT_DIR]
        if os.environ.get(ENV_THREADS):
            merged["threads"] = int(os.environ[ENV_THREADS])
        if args.out_dir is not None:
            merged["out_dir"] = args.out_dir
        if args.verbose:
            merged["verbosity"] = args.verbose
        return cls(**merged)

    def out(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.out_dir) / p


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except FileNotFoundError:
        raise CliError(2, f"no such file: {path}", path=str(path)) from None


def _mesh(path):
    _read(path)
    return read_mesh(path)


def _pick(flag, cfg_value):
    return cfg_value if flag is None else flag


def _mu_policy(args, cfg):
    if getattr(args, "auto_mu", False):
        return None
    if getattr(args, "mu", None) is not None:
        return float(args.mu)
    return None if cfg.mu == "auto" else float(cfg.mu)


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# ----------------------------------------------------------------------
# gen


def cmd_gen(args, cfg: GlobalConfig) -> int:
    if args.what == "grid":
        holes = args.holes
        try:
            holes = int(holes)
        except ValueError:
            holes = json.loads(holes)
        spec = DomainSpec(width=args.width, height=args.height, holes=holes,
                          jitter=args.jitter, target_nodes=args.nodes,
                          seed=_pick(args.seed, cfg.seed))
        s, gt = grid_domain(spec)
        atomic_write(cfg.out(args.out), format_mesh(s))
        truth = args.truth or f"{args.out}.truth.json"
        atomic_write(cfg.out(truth), format_truth(gt, s))
        _emit({"nodes": s.n_nodes, "edges": s.n_edges, "faces": s.n_faces,
               "holes": gt.n_holes, "mesh": str(args.out), "truth": str(truth)})
        return 0
    if args.what == "museum":
        doc = json.loads(_read(args.spec)) if args.spec else {}
        doc = _tupleize(doc)
        md = museum_domain(MuseumSpec(**doc))
        atomic_write(cfg.out(args.out), format_mesh(md.surface))
        rooms = args.rooms or f"{args.out}.rooms.json"
        atomic_write(cfg.out(rooms), format_museum(md))
        _emit({"nodes": md.surface.n_nodes, "holes": md.truth.n_holes,
               "rooms": md.room_graph.number_of_nodes(),
               "doors": md.room_graph.number_of_edges(), "mesh": str(args.out),
               "rooms_file": str(rooms)})
        return 0
    # trajectories
    s = _mesh(args.mesh)
    seed = _pick(args.seed, cfg.seed)
    if args.museum:
        md = parse_museum(_read(args.museum), s)
        trajs = [Trajectory(i, nodes)
                 for i, nodes, _ in museum_trajectories(md, args.n, seed, simple=args.simple)]
    elif args.truth:
        gt = parse_truth(_read(args.truth), s)
        if args.kind == "traces":
            trajs = [snap_trace(pts, s, id=i) for i, pts, _ in synthetic_traces(s, gt, args.n, seed)]
        else:
            trajs = _pairs(s, args.n, seed)
    else:
        trajs = _pairs(s, args.n, seed)
    atomic_write(cfg.out(args.out), format_trajectories(trajs))
    _emit({"trajectories": len(trajs), "out": str(args.out)})
    return 0


def _pairs(s, n, seed):
    out = []
    for k, (p, q) in enumerate(random_path_pairs(s, n, seed)):
        out += [Trajectory(f"p{k}a", p), Trajectory(f"p{k}b", q)]
    return out


def _tupleize(doc):
    """JSON lists to tuples, recursively (dataclass specs are hashable)."""
    if isinstance(doc, dict):
        return {k: _tupleize(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return tuple(_tupleize(v) for v in doc)
    return doc


# ----------------------------------------------------------------------
# decompose / basis / classify / oracle


def cmd_decompose(args, cfg: GlobalConfig) -> int:
    s = _mesh(args.mesh)
    seed = _pick(args.seed, cfg.seed)
    gc = GossipConfig(eps=_pick(args.eps, cfg.eps), max_rounds=args.max_rounds,
                      damping=args.damping, seed=seed)
    r = decompose(s, random_one_form(s, seed), gc)
    write_cochain(r.h, cfg.out(args.out))
    st = r.stats()
    _emit({k: st[k] for k in ("iters_f", "iters_g", "err_dh", "err_delta_h", "converged")})
    if not r.converged:
        raise CliError(3, f"gossip did not converge within {args.max_rounds} rounds",
                       kind="non_convergence")
    return 0


def cmd_basis(args, cfg: GlobalConfig) -> int:
    s = _mesh(args.mesh)
    gc = GossipConfig(eps=_pick(args.eps, cfg.eps), seed=_pick(args.seed, cfg.seed),
                      max_rounds=args.max_rounds)
    try:
        b = build_basis(s, gc, confirmations=args.confirmations, canonical=args.canonical)
    except RuntimeError as exc:
        raise CliError(3, str(exc), kind="non_convergence") from exc
    atomic_write(cfg.out(args.out), format_basis(b))
    _emit({"k": b.k, "canonical": b.canonical, "out": str(args.out)})
    return 0


def cmd_classify(args, cfg: GlobalConfig) -> int:
    s = _mesh(args.mesh)
    b = parse_basis(_read(args.basis), s)
    trajs = parse_trajectories(_read(args.trajs), s)
    r = bucketize(trajs, b, ClassifierConfig(mu=_mu_policy(args, cfg), quantize=args.quantize))
    atomic_write(cfg.out(args.out), format_report_json(r))
    csv_path = args.csv or str(Path(args.out).with_suffix(".csv"))
    atomic_write(cfg.out(csv_path), format_report_csv(r))
    _emit(r.summary)
    return 0


def cmd_oracle(args, cfg: GlobalConfig) -> int:
    s = _mesh(args.mesh)
    trajs = parse_trajectories(_read(args.trajs), s)
    if args.basis:
        b = parse_basis(_read(args.basis), s)
    else:
        b = direct_basis(s, seed=_pick(args.seed, cfg.seed))
    mu = _mu_policy(args, cfg)
    mu = auto_mu(b) if mu is None else mu
    anchors = parse_truth(_read(args.truth), s).anchors if args.truth else None
    rows = compare_with_oracle(trajs, b, mu, anchors)
    atomic_write(cfg.out(args.out), format_comparison_csv(rows))
    n_ok = sum(r["agree"] for r in rows)
    _emit({"pairs": len(rows), "agree": n_ok, "mu": mu})
    return 0 if n_ok == len(rows) else 2


# ----------------------------------------------------------------------
# sim


def cmd_sim(args, cfg: GlobalConfig) -> int:
    doc = json.loads(_read(args.spec))
    out = cfg.out(args.out)
    if args.which == "fig8":
        study = run_classification_study(ClassificationSpec.from_json(doc))
        paths = study.write(out, "fig8")
        _emit({**study.summary(), "files": sorted(Path(p).name for p in paths.values())})
        return 0
    doc.setdefault("workers", cfg.threads)
    if args.seeds is not None:
        doc["seeds"] = args.seeds
    spec = ExperimentSpec.from_json(doc)
    run = {"table1": run_randomness_study, "fig6": run_convergence_sweep,
           "fig7": run_accuracy_sweep}[args.which]
    res = run(spec)
    paths = res.write(out, args.which)
    failed = sum(r.n_failed for r in res.rows)
    _emit({"rows": len(res.rows), "failed_runs": failed,
           "files": sorted(Path(p).name for p in paths.values())})
    return 3 if failed and all(r.n_ok == 0 for r in res.rows) else 0


# ----------------------------------------------------------------------
# pipeline


def run_pipeline(doc: dict, out_dir) -> dict:
    """generate -> basis -> trajectories -> classify -> oracle check.

    Writes every stage's artifact under ``out_dir`` and returns the
    summary (also written as ``summary.json``).  File names in the
    summary are relative to ``out_dir``.
    """
    out = Path(out_dir)
    dom = dict(doc.get("domain", {"kind": "grid"}))
    kind = dom.pop("kind", "grid")
    eps = float(doc.get("eps", 1e-6))
    seed = int(doc.get("seed", 0))
    tspec = dict(doc.get("trajectories", {"kind": "none"}))
    files = {}

    md = None
    if kind == "grid":
        s, gt = grid_domain(DomainSpec(**_tupleize(dom)))
    elif kind in ("museum", "multifloor"):
        md = museum_domain(MuseumSpec(**_tupleize(dom)))
        s, gt = md.surface, md.truth
    else:
        raise CliError(2, f"unknown domain kind {kind!r}")
    atomic_write(out / "mesh.txt", format_mesh(s))
    files["mesh"] = "mesh.txt"
    if md is not None:
        atomic_write(out / "museum.json", format_museum(md))
        files["museum"] = "museum.json"
    else:
        atomic_write(out / "truth.json", format_truth(gt, s))
        files["truth"] = "truth.json"

    canonical = bool(doc.get("canonical", True)) and len(s.hole_loops) > 0
    summary = {"nodes": s.n_nodes, "edges": s.n_edges, "faces": s.n_faces,
               "holes": gt.n_holes, "genus": s.genus, "eps": eps, "seed": seed}
    try:
        b = build_basis(s, GossipConfig(eps=eps, seed=seed), canonical=canonical)
    except TrivialHomologyError:
        b = None
    except RuntimeError as exc:
        raise CliError(3, str(exc), kind="non_convergence", stage="basis") from exc
    summary["k"] = 0 if b is None else b.k
    if b is not None:
        atomic_write(out / "basis.json", format_basis(b))
        files["basis"] = "basis.json"

    tkind = tspec.get("kind", "none")
    labels = {}
    if tkind == "none":
        trajs = []
    elif tkind == "sided":
        pats = tspec.get("patterns", [[1] * gt.n_holes, [-1] * gt.n_holes])
        trips = sided_paths(s, gt, pats, int(tspec.get("per_class", 5)), seed)
        trajs = [Trajectory(i, nodes) for i, nodes, _ in trips]
        labels = {i: tuple(p) for i, _, p in trips}
    elif tkind == "museum":
        if md is None:
            raise CliError(2, "museum trajectories need a museum domain")
        trips = museum_trajectories(md, int(tspec.get("n", 200)), seed,
                                    simple=bool(tspec.get("simple", True)))
        trajs = [Trajectory(i, nodes) for i, nodes, _ in trips]
        if s.coords is not None and s.coords.shape[1] == 2:
            labels = {t.id: tuple(int(x) for x in side_signature(t, s, gt.anchors))
                      for t in trajs}
    elif tkind == "pairs":
        trajs = _pairs(s, int(tspec.get("n", 100)), seed)
    elif tkind == "traces":
        trips = synthetic_traces(s, gt, int(tspec.get("n", 20)), seed)
        trajs = [snap_trace(pts, s, id=i) for i, pts, _ in trips]
    else:
        raise CliError(2, f"unknown trajectory kind {tkind!r}")
    atomic_write(out / "trajs.jsonl", format_trajectories(trajs))
    files["trajectories"] = "trajs.jsonl"
    summary["n_trajectories"] = len(trajs)

    if b is not None:
        mu = doc.get("mu", "auto")
        ccfg = ClassifierConfig(mu=None if mu in (None, "auto") else float(mu),
                                quantize=bool(doc.get("quantize", False)))
        report = bucketize(trajs, b, ccfg)
        atomic_write(out / "report.json", format_report_json(report))
        atomic_write(out / "report.csv", format_report_csv(report))
        files["report"] = "report.json"
        files["report_csv"] = "report.csv"
        summary.update(report.summary)
        thr = ccfg.threshold(b)
        summary["mu"] = thr
        planar = s.coords is not None and (s.coords.shape[1] == 2
                                           or np.allclose(s.coords[:, 2:], 0))
        rows = compare_with_oracle(trajs, b, thr, gt.anchors if planar else None)
        atomic_write(out / "oracle.csv", format_comparison_csv(rows))
        files["oracle"] = "oracle.csv"
        summary["oracle_pairs"] = len(rows)
        summary["oracle_agreement"] = (sum(r["agree"] for r in rows) / len(rows)) if rows else 1.0
        if labels:
            summary.update(_label_checks(trajs, b, labels, report))
    else:
        summary.update({"n_buckets": 0, "oracle_pairs": 0, "oracle_agreement": 1.0})

    summary["files"] = files
    atomic_write(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


def _label_checks(trajs, b, labels, report) -> dict:
    """Safe-mu interval and bucket/label agreement against known classes."""
    H = {t.id: t_tuple(t, b) for t in trajs}
    same, diff = [], []
    ts = sorted(trajs, key=lambda t: t.id)
    for x in range(len(ts)):
        for y in range(x + 1, len(ts)):
            a, c = ts[x], ts[y]
            if (a.source, a.target) != (c.source, c.target):
                continue
            sig = float(np.max(np.abs(H[a.id] - H[c.id])))
            (same if labels[a.id] == labels[c.id] else diff).append(sig)
    lower = max(same) if same else 0.0
    upper = min(diff) if diff else None
    got = report.labels()
    by_bucket, by_label = {}, {}
    for t in ts:
        by_bucket.setdefault(got[t.id], set()).add(t.id)
        by_label.setdefault((t.source, t.target, labels[t.id]), set()).add(t.id)
    match = sorted(map(sorted, by_bucket.values())) == sorted(map(sorted, by_label.values()))
    return {"safe_mu_lower": lower, "safe_mu_upper": upper,
            "n_label_classes": len(by_label), "buckets_match_labels": match}


def cmd_pipeline(args, cfg: GlobalConfig) -> int:
    doc = json.loads(_read(args.spec))
    summary = run_pipeline(doc, cfg.out(args.out))
    _emit({k: summary[k] for k in ("k", "n_trajectories", "n_buckets", "oracle_agreement")
           if k in summary})
    return 0 if summary.get("oracle_agreement", 1.0) == 1.0 else 2


# ----------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hodgetrack", description=__doc__.splitlines()[0],
                epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--out-dir", help="directory for relative output paths")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate domains and trajectories")
    gsub = g.add_subparsers(dest="what", required=True, parser_class=_Parser)
    gg = gsub.add_parser("grid", help="jittered grid with holes")
    gg.add_argument("--nodes", type=int, required=True)
    gg.add_argument("--holes", default="0", help="hole count or JSON list of rectangles")
    gg.add_argument("--width", type=float, default=1.0)
    gg.add_argument("--height", type=float, default=1.0)
    gg.add_argument("--jitter", type=float, default=0.25)
    gg.add_argument("--seed", type=int)
    gg.add_argument("--out", required=True)
    gg.add_argument("--truth", help="ground-truth JSON (default <out>.truth.json)")
    gm = gsub.add_parser("museum", help="museum floor plan")
    gm.add_argument("--spec", help="museum JSON spec (defaults to the 15-room layout)")
    gm.add_argument("--out", required=True)
    gm.add_argument("--rooms", help="room layout JSON (default <out>.rooms.json)")
    gt = gsub.add_parser("trajs", help="trajectories on a generated domain")
    gt.add_argument("--mesh", required=True)
    gt.add_argument("--museum", help="room layout JSON: two-level museum walks")
    gt.add_argument("--truth", help="grid ground truth JSON (for --kind traces)")
    gt.add_argument("--kind", choices=("pairs", "traces"), default="pairs")
    gt.add_argument("-n", type=int, default=20)
    gt.add_argument("--simple", action="store_true", help="museum walks never revisit a room")
    gt.add_argument("--seed", type=int)
    gt.add_argument("--out", required=True)

    d = sub.add_parser("decompose", help="gossip Hodge decomposition of a random 1-form")
    d.add_argument("--mesh", required=True)
    d.add_argument("--eps", type=float)
    d.add_argument("--seed", type=int)
    d.add_argument("--max-rounds", type=int, default=1_000_000)
    d.add_argument("--damping", type=float, default=1.0)
    d.add_argument("--out", required=True, help="harmonic part, cochain file")

    b = sub.add_parser("basis", help="harmonic basis")
    bsub = b.add_subparsers(dest="action", required=True, parser_class=_Parser)
    bb = bsub.add_parser("build")
    bb.add_argument("--mesh", required=True)
    bb.add_argument("--eps", type=float)
    bb.add_argument("--seed", type=int)
    bb.add_argument("--canonical", action="store_true")
    bb.add_argument("--confirmations", type=int, default=5)
    bb.add_argument("--max-rounds", type=int, default=1_000_000)
    bb.add_argument("--out", required=True)

    c = sub.add_parser("classify", help="bucket trajectories by homology class")
    c.add_argument("--mesh", required=True)
    c.add_argument("--basis", required=True)
    c.add_argument("--trajs", required=True)
    mu = c.add_mutually_exclusive_group()
    mu.add_argument("--mu", type=float)
    mu.add_argument("--auto-mu", action="store_true")
    c.add_argument("--quantize", action="store_true")
    c.add_argument("--out", required=True, help="report JSON")
    c.add_argument("--csv", help="flat CSV view (default: report path with .csv)")

    o = sub.add_parser("oracle", help="cross-check the classifier against the oracles")
    osub = o.add_subparsers(dest="action", required=True, parser_class=_Parser)
    oc = osub.add_parser("check")
    oc.add_argument("--mesh", required=True)
    oc.add_argument("--trajs", required=True)
    oc.add_argument("--basis", help="basis file (default: exact-solve basis)")
    oc.add_argument("--truth", help="ground truth JSON, adds the geometric winding check")
    mu = oc.add_mutually_exclusive_group()
    mu.add_argument("--mu", type=float)
    mu.add_argument("--auto-mu", action="store_true")
    oc.add_argument("--seed", type=int)
    oc.add_argument("--out", required=True, help="per-pair agreement CSV")

    sm = sub.add_parser("sim", help="experiment sweeps")
    sm.add_argument("which", choices=("table1", "fig6", "fig7", "fig8"))
    sm.add_argument("--spec", required=True)
    sm.add_argument("--seeds", type=int, help="override seeds per cell")
    sm.add_argument("--out", default=".")

    pl = sub.add_parser("pipeline", help="generate, build basis, classify, verify")
    pl.add_argument("--spec", required=True)
    pl.add_argument("--out", default=".")
    return p


COMMANDS = {"gen": cmd_gen, "decompose": cmd_decompose, "basis": cmd_basis,
            "classify": cmd_classify, "oracle": cmd_oracle, "sim": cmd_sim,
            "pipeline": cmd_pipeline}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = GlobalConfig.resolve(args)
        return COMMANDS[args.cmd](args, cfg)
    except CliError as exc:
        err = {"error": exc.extra.pop("kind", "data"), "message": str(exc), "code": exc.code,
               **exc.extra}
    except (OSError, ValueError, KeyError, TypeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "code": 2}
        path = getattr(exc, "filename", None)
        if path:
            err["path"] = str(path)
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return err["code"]


if __name__ == "__main__":
    sys.exit(main())
