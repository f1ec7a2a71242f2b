import json
import warnings

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hodgetrack.basis import HarmonicBasis, auto_mu
from hodgetrack.classify import (
    ClassifierConfig,
    EndpointMismatch,
    SnapWarning,
    Trajectory,
    bucketize,
    compare_with_oracle,
    format_comparison_csv,
    format_report_csv,
    format_report_json,
    format_trajectories,
    parse_trajectories,
    path_integral,
    same_class,
    sigma,
    snap_trace,
    t_tuple,
    winding_vector,
)
from hodgetrack.hodge import random_one_form
from hodgetrack.netgen import (
    DomainSpec,
    MuseumSpec,
    grid_domain,
    museum_domain,
    museum_trajectories,
    random_path_pairs,
    sided_paths,
)
from hodgetrack.oracle import direct_basis, direct_solve, winding_geometric
from hodgetrack.surface import Cochain1, shortest_path


def _walk(s, rng, length):
    v = int(rng.integers(s.n_nodes))
    out = [v]
    for _ in range(length):
        out.append(int(rng.choice(s.node_adjacency[out[-1]])))
    return out


@pytest.fixture(scope="module")
def int_basis(three_holes):
    # integer-valued forms keep every path sum exact
    s, _ = three_holes
    rng = np.random.default_rng(0)
    forms = tuple(Cochain1(s, rng.integers(-1000, 1000, s.n_edges).astype(float))
                  for _ in range(3))
    return HarmonicBasis(forms, eps=0.0, seeds=(0, 1, 2))


def test_trajectory_validation(three_holes):
    s, _ = three_holes
    with pytest.raises(ValueError):
        Trajectory("x", [3])
    u = int(s.edges[0, 0])
    far = next(v for v in range(s.n_nodes) if v != u and not s.has_edge(u, v))
    with pytest.raises(ValueError, match="not an edge"):
        Trajectory("x", [u, far]).validate(s)
    with pytest.raises(ValueError):
        Trajectory("a", [0, 1]).then(Trajectory("b", [2, 3]))


def test_single_hop_antisymmetry(three_holes):
    s, _ = three_holes
    u, v = (int(x) for x in s.edges[0])
    x = np.zeros(s.n_edges)
    x[0] = 0.5
    w = Cochain1(s, x)
    assert path_integral(w, [u, v]) == 0.5
    assert path_integral(w, [v, u]) == -0.5


def test_path_integral_rejects_non_edges(three_holes):
    s, _ = three_holes
    with pytest.raises(ValueError):
        path_integral(Cochain1.zeros(s), [0, s.n_nodes - 1])


def test_there_and_back_is_zero(three_holes):
    s, _ = three_holes
    w = direct_solve(s, random_one_form(s, 0)).h
    p = _walk(s, np.random.default_rng(1), 30)
    assert path_integral(w, p + p[::-1][1:]) == 0.0


def test_contractible_loop_is_below_safe_mu(three_holes, three_hole_basis):
    s, _ = three_holes
    mu = auto_mu(three_hole_basis)
    for f in range(0, s.n_faces, 37):
        a, b, c = (int(x) for x in s.faces[f])
        loop = [a, b, c, a]
        for w in three_hole_basis.forms:
            assert abs(path_integral(w, loop)) <= mu


@given(st.integers(0, 10_000), st.integers(2, 40))
def test_reversal_negates_exactly(seed, n):
    s, b = _REAL["s"], _REAL["b"]
    p = _walk(s, np.random.default_rng(seed), n)
    assert np.array_equal(t_tuple(p[::-1], b).h, -t_tuple(p, b).h)


_REAL = {}


@pytest.fixture(scope="module", autouse=True)
def _real_basis(three_holes, three_hole_basis):
    _REAL["s"], _REAL["b"] = three_holes[0], three_hole_basis


@given(st.integers(0, 10_000), st.integers(1, 30), st.integers(1, 30))
def test_concatenation_adds(seed, n1, n2):
    s, b = _REAL["s"], _REAL["b"]
    rng = np.random.default_rng(seed)
    a = _walk(s, rng, n1)
    c = [a[-1]]
    for _ in range(n2):
        c.append(int(rng.choice(s.node_adjacency[c[-1]])))
    whole = t_tuple(a + c[1:], b).h
    parts = t_tuple(a, b).h + t_tuple(c, b).h
    # real values: one extra rounding in the split sum
    assert np.abs(whole - parts).max() <= 4 * np.finfo(float).eps * (n1 + n2)


def test_concatenation_adds_exactly_on_integer_forms(three_holes, int_basis):
    s, _ = three_holes
    rng = np.random.default_rng(2)
    for _ in range(50):
        a = _walk(s, rng, int(rng.integers(1, 40)))
        c = [a[-1]]
        for _ in range(int(rng.integers(1, 40))):
            c.append(int(rng.choice(s.node_adjacency[c[-1]])))
        assert np.array_equal(t_tuple(a + c[1:], int_basis).h,
                              t_tuple(a, int_basis).h + t_tuple(c, int_basis).h)


def test_detour_leaves_h_unchanged(three_holes, int_basis, three_hole_basis):
    s, _ = three_holes
    p = _walk(s, np.random.default_rng(3), 20)
    v = p[-1]
    u = int(s.node_adjacency[v][0])
    longer = p + [u, v]
    assert np.array_equal(t_tuple(longer, int_basis).h, t_tuple(p, int_basis).h)
    assert np.allclose(t_tuple(longer, three_hole_basis).h, t_tuple(p, three_hole_basis).h,
                       rtol=0, atol=1e-14)


def test_sigma_basics(three_holes, three_hole_basis):
    s, _ = three_holes
    p = shortest_path(s, 0, s.n_nodes - 1)
    assert sigma(p, p, three_hole_basis) == 0.0
    assert same_class(p, p, three_hole_basis)
    with pytest.raises(EndpointMismatch):
        sigma(p, p[:-1], three_hole_basis)
    with pytest.raises(EndpointMismatch):
        same_class(p, p[1:], three_hole_basis)


def test_opposite_sides_of_a_hole_differ_by_one(three_holes, three_hole_basis):
    s, gt = three_holes
    above, below = [1, 1, 1], [-1, 1, 1]
    paths = sided_paths(s, gt, [above, below], per_class=1, seed=0)
    sg = sigma(paths[0][1], paths[1][1], three_hole_basis)
    assert abs(sg - 1.0) <= 1e-4
    assert not same_class(paths[0][1], paths[1][1], three_hole_basis)


def test_same_class_is_reflexive_and_symmetric(three_holes, three_hole_basis):
    s, _ = three_holes
    pairs = random_path_pairs(s, 30, seed=4)
    for p, q in pairs:
        assert same_class(p, p, three_hole_basis)
        assert sigma(p, q, three_hole_basis) == sigma(q, p, three_hole_basis)
        assert same_class(p, q, three_hole_basis) == same_class(q, p, three_hole_basis)


def test_transitivity_away_from_threshold(three_holes, three_hole_basis):
    s, gt = three_holes
    pats = [[1, 1, 1], [-1, 1, 1], [1, -1, -1]]
    trajs = [Trajectory(i, p) for i, p, _ in sided_paths(s, gt, pats, per_class=4, seed=5)]
    # distinct classes differ by >= 1 against a canonical basis
    mu = 0.05
    sig = {(a.id, c.id): sigma(a, c, three_hole_basis) for a in trajs for c in trajs}
    assert all(v <= mu / 10 or v >= mu * 10 for v in sig.values())
    for a in trajs:
        for c in trajs:
            for d in trajs:
                if sig[a.id, c.id] < mu and sig[c.id, d.id] < mu:
                    assert sig[a.id, d.id] < mu


def test_classifier_config():
    with pytest.raises(ValueError):
        ClassifierConfig(mu=0)
    with pytest.raises(ValueError):
        ClassifierConfig(mu=-1.0)
    with pytest.raises(ValueError):
        ClassifierConfig(near_ratio=0.5)


def test_strict_threshold(three_holes, three_hole_basis):
    s, gt = three_holes
    paths = sided_paths(s, gt, [[1, 1, 1], [-1, 1, 1]], per_class=1, seed=0)
    sg = sigma(paths[0][1], paths[1][1], three_hole_basis)
    assert not same_class(paths[0][1], paths[1][1], three_hole_basis, ClassifierConfig(mu=sg))
    assert same_class(paths[0][1], paths[1][1], three_hole_basis,
                      ClassifierConfig(mu=np.nextafter(sg, np.inf)))


# ----------------------------------------------------------------------
# winding vectors


def test_trivial_loop_winding(three_holes, three_hole_basis):
    s, _ = three_holes
    u, v = (int(x) for x in s.edges[5])
    vec, res = winding_vector([u, v, u], three_hole_basis)
    assert not vec.any()
    assert res <= 1e-12


@pytest.mark.parametrize("times", [1, 3])
def test_hole_loop_winding(three_holes, three_hole_basis, times):
    s, gt = three_holes
    for i, loop in enumerate(s.hole_loops):
        cyc = list(loop) * times + [loop[0]]
        vec, res = winding_vector(cyc, three_hole_basis)
        assert np.array_equal(vec, times * np.eye(3, dtype=int)[i])
        assert res <= 10 * 3 * three_hole_basis.eps * times
        assert np.array_equal(winding_geometric(cyc, gt.anchors, s), vec)


def test_winding_vector_preconditions(three_holes, three_hole_basis):
    s, _ = three_holes
    with pytest.raises(ValueError, match="closed"):
        winding_vector(shortest_path(s, 0, 9), three_hole_basis)
    raw = HarmonicBasis(three_hole_basis.forms, eps=0.0, seeds=(0, 1, 2))
    u, v = (int(x) for x in s.edges[0])
    with pytest.raises(ValueError, match="canonical"):
        winding_vector([u, v, u], raw)


def test_winding_matches_geometry_on_random_cycles(three_holes, three_hole_basis):
    s, gt = three_holes
    for p, q in random_path_pairs(s, 40, seed=6):
        cyc = p + q[::-1][1:]
        vec, _ = winding_vector(cyc, three_hole_basis)
        assert np.array_equal(vec, winding_geometric(cyc, gt.anchors, s))


def test_unreliable_rounding_warns(three_holes):
    s, _ = three_holes
    h = direct_solve(s, random_one_form(s, 0)).h
    loop = list(s.hole_loops[0]) + [s.hole_loops[0][0]]
    alpha = path_integral(h, loop)
    scaled = HarmonicBasis((h * (0.5 / alpha),), eps=0.0, seeds=(0,), canonical=True)
    with pytest.warns(UserWarning, match="unreliable"):
        _, res = winding_vector(loop, scaled)
    assert res == pytest.approx(0.5, abs=1e-9)


# ----------------------------------------------------------------------
# bucketing


def test_bucketize_empty(three_hole_basis):
    r = bucketize([], three_hole_basis)
    assert r.buckets == ()
    assert r.summary == {"n_trajectories": 0, "n_buckets": 0, "max_bucket": 0,
                         "n_singletons": 0}


def _sided(s, gt, seed=7):
    pats = [[1, 1, 1], [-1, 1, 1], [1, -1, 1], [-1, -1, -1]]
    return [Trajectory(i, p) for i, p, _ in sided_paths(s, gt, pats, per_class=5, seed=seed)]


def test_bucketize_four_classes(three_holes, three_hole_basis):
    s, gt = three_holes
    trajs = _sided(s, gt)
    for cfg in (ClassifierConfig(), ClassifierConfig(quantize=True)):
        r = bucketize(trajs, three_hole_basis, cfg)
        assert r.summary["n_buckets"] == 4
        assert sorted(len(bk.ids) for bk in r.buckets) == [5, 5, 5, 5]
        for bk in r.buckets:
            assert len({i[:2] for i in bk.ids}) == 1


def test_quantized_needs_canonical(three_holes, three_hole_basis):
    raw = HarmonicBasis(three_hole_basis.forms, eps=0.0, seeds=(0, 1, 2))
    with pytest.raises(ValueError):
        bucketize([], raw, ClassifierConfig(quantize=True))


def test_raw_and_canonical_bases_agree(three_holes, three_hole_basis):
    s, gt = three_holes
    trajs = _sided(s, gt, seed=8)
    trajs += [Trajectory(f"r{i}{j}", p) for i, pq in enumerate(random_path_pairs(s, 40, 9))
              for j, p in enumerate(pq)]
    raw = HarmonicBasis(tuple(direct_solve(s, random_one_form(s, i)).h for i in range(3)),
                        eps=0.0, seeds=(0, 1, 2))
    mu = auto_mu(raw, s.hole_loops)
    a = bucketize(trajs, raw, ClassifierConfig(mu=mu))
    b = bucketize(trajs, three_hole_basis, ClassifierConfig(quantize=True))
    assert sorted(map(sorted, (bk.ids for bk in a.buckets))) == \
        sorted(map(sorted, (bk.ids for bk in b.buckets)))


def test_near_threshold_pairs_are_flagged(three_holes, three_hole_basis):
    s, gt = three_holes
    trajs = _sided(s, gt)[:10]
    r = bucketize(trajs, three_hole_basis, ClassifierConfig(mu=0.9))
    assert r.near_pairs
    assert all(0.45 < sv < 1.8 for _, _, sv in r.near_pairs)


def test_bucket_count_grows_with_holes():
    rng = np.random.default_rng(0)
    traces = []
    for _ in range(60):
        k = int(rng.integers(1, 4))
        mids = np.column_stack([rng.uniform(0.05, 1.95, k), rng.uniform(0.05, 0.95, k)])
        pts = np.vstack([[0.0, 0.5], mids[np.argsort(mids[:, 0])], [2.0, 0.5]])
        t = np.linspace(0, 1, 30, endpoint=False)[:, None]
        traces.append(np.vstack([a + (b - a) * t for a, b in zip(pts, pts[1:])] + [pts[-1:]]))
    counts = []
    for holes in (3, 5, 7):
        s, _ = grid_domain(DomainSpec(width=2.0, holes=holes, target_nodes=900, seed=0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SnapWarning)
            trajs = [snap_trace(p, s, id=f"t{i:02d}") for i, p in enumerate(traces)]
        r = bucketize(trajs, direct_basis(s), ClassifierConfig(quantize=True))
        counts.append(r.summary["n_buckets"])
    assert counts[0] < counts[1] < counts[2]


def test_museum_buckets_match_room_sides():
    md = museum_domain(MuseumSpec())
    s = md.surface
    b = direct_basis(s)
    trajs = [Trajectory(i, p) for i, p, _ in museum_trajectories(md, 120, seed=0, simple=True)]
    r = bucketize(trajs, b, ClassifierConfig(quantize=True))
    assert r.summary["n_buckets"] <= 32
    from hodgetrack.netgen import side_signature
    sides = {g.id: tuple(side_signature(g, s, md.truth.anchors)) for g in trajs}
    for bk in r.buckets:
        assert len({sides[i] for i in bk.ids}) == 1
    assert len({sides[g.id] for g in trajs}) == r.summary["n_buckets"]
    # homologous pairs sit well below the safe threshold
    mu = auto_mu(b)
    big = max(r.buckets, key=lambda bk: len(bk.ids))
    by_id = {g.id: g for g in trajs}
    for i in big.ids[1:]:
        assert sigma(by_id[big.ids[0]], by_id[i], b) <= mu


def test_report_formats(three_holes, three_hole_basis):
    s, gt = three_holes
    r = bucketize(_sided(s, gt), three_hole_basis)
    doc = json.loads(format_report_json(r))
    assert doc["summary"]["n_buckets"] == 4
    assert {"key", "s", "t", "ids"} <= set(doc["buckets"][0])
    lines = format_report_csv(r).splitlines()
    assert lines[0] == "trajectory,bucket,s,t"
    assert len(lines) == 21
    assert r.labels()[doc["buckets"][0]["ids"][0]] == doc["buckets"][0]["key"]


# ----------------------------------------------------------------------
# traces and files


def test_snap_adjacent_points(three_holes):
    s, _ = three_holes
    u, v = (int(x) for x in s.edges[10])
    g = snap_trace(s.coords[[u, u, v], :2], s)
    assert g.nodes == (u, v)


def test_snap_distant_points_uses_bfs_length(three_holes):
    s, _ = three_holes
    G = nx.Graph([tuple(map(int, e)) for e in s.edges])
    rng = np.random.default_rng(11)
    for _ in range(10):
        u, v = (int(x) for x in rng.choice(s.n_nodes, 2, replace=False))
        g = snap_trace(s.coords[[u, v], :2], s)
        assert g.source == u and g.target == v
        assert len(g.nodes) - 1 == nx.shortest_path_length(G, u, v)
        g.validate(s)


def test_snap_errors(three_holes):
    s, _ = three_holes
    with pytest.raises(ValueError, match="two distinct"):
        snap_trace(s.coords[[4], :2], s)
    with pytest.raises(ValueError):
        snap_trace(np.zeros((0, 2)), s)
    with pytest.warns(SnapWarning):
        g = snap_trace(np.array([[-5.0, -5.0], s.coords[40, :2]]), s)
    assert g.target == 40


def test_trajectory_file_roundtrip(three_holes):
    s, _ = three_holes
    trajs = [Trajectory(f"p{i}", shortest_path(s, i, i + 50)) for i in range(5)]
    text = format_trajectories(trajs)
    assert parse_trajectories(text, s) == trajs
    extra = json.dumps({"id": "pt", "points": s.coords[[0, 30], :2].tolist()})
    got = parse_trajectories(text + extra + "\n", s)
    assert got[-1].source == 0 and got[-1].target == 30


@pytest.mark.parametrize("text", ['{"id": "a"}\n', "not json\n",
                                  '{"id": "a", "nodes": [0, 1]}\n{"id": "a", "nodes": [1, 0]}\n'])
def test_bad_trajectory_files(text):
    with pytest.raises(ValueError):
        parse_trajectories(text)


def test_compare_with_oracle_agrees(three_holes, three_hole_basis):
    s, gt = three_holes
    trajs = []
    for i, (p, q) in enumerate(random_path_pairs(s, 200, seed=12)):
        trajs += [Trajectory(f"q{i:03d}a", p), Trajectory(f"q{i:03d}b", q)]
    rows = compare_with_oracle(trajs, three_hole_basis, auto_mu(three_hole_basis), gt.anchors)
    assert len(rows) >= 200
    assert all(r["agree"] for r in rows)
    assert any(not r["classifier"] for r in rows)
    csv = format_comparison_csv(rows).splitlines()
    assert csv[0] == "a,b,sigma,classifier,tree_cotree,geometric,agree"
    assert len(csv) == len(rows) + 1


def test_duplicated_list_pairs_up_at_any_mu(three_holes, three_hole_basis):
    s, gt = three_holes
    trajs = _sided(s, gt)
    dup = trajs + [Trajectory(g.id + "_dup", g.nodes) for g in trajs]
    r = bucketize(dup, three_hole_basis, ClassifierConfig(mu=1e-300))
    for g in trajs:
        bk = next(bk for bk in r.buckets if g.id in bk.ids)
        assert g.id + "_dup" in bk.ids
