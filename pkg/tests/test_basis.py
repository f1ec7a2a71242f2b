import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hodgetrack.basis import (
    HarmonicBasis,
    SingularPeriodsError,
    TrivialHomologyError,
    auto_mu,
    build_basis,
    canonicalize,
    format_basis,
    hole_count,
    independence_rank,
    parse_basis,
    period_matrix,
    periods,
    probe_edges,
)
from hodgetrack.hodge import GossipConfig, random_one_form
from hodgetrack.netgen import DomainSpec, MuseumSpec, grid_domain, museum_domain, torus_mesh
from hodgetrack.oracle import direct_basis, direct_solve, homology_cycles
from hodgetrack.surface import Cochain0, Cochain1, build_surface, d0, shortest_path

CFG = GossipConfig(eps=1e-7, seed=0)


def _incident_sorted(s, v):
    return sorted(s.edge_index(v, u)[0] for u in s.node_adjacency[v])


def test_probe_edges_one_hop(torus):
    v = int(np.flatnonzero(torus.degree == 6)[0])
    assert probe_edges(torus, v, 4) == _incident_sorted(torus, v)[:4]


def test_probe_edges_two_hops():
    # node 0 of this fan has degree 3
    s = build_surface([[0, 1, 2], [0, 2, 3], [1, 4, 2], [2, 4, 5], [2, 5, 3]])
    v = 0
    assert s.degree[v] == 3
    got = probe_edges(s, v, 5)
    assert got[:3] == _incident_sorted(s, v)
    for e in got[3:]:
        assert v not in s.edges[e]


def test_probe_edges_too_many(torus):
    with pytest.raises(ValueError):
        probe_edges(torus, 0, torus.n_edges + 1)


def test_rank_examples(three_holes):
    s, _ = three_holes
    probes = probe_edges(s, 10, 8)
    w = direct_solve(s, random_one_form(s, 0)).h
    w2 = direct_solve(s, random_one_form(s, 1)).h
    assert independence_rank([w, w], probes) == 1
    assert independence_rank([w, w * 2.0, w2], probes) == 2


def test_rank_is_scale_invariant(three_holes):
    s, _ = three_holes
    probes = probe_edges(s, 10, 8)
    hs = [direct_solve(s, random_one_form(s, i)).h for i in range(2)]
    r = independence_rank(hs, probes)
    assert independence_rank([hs[0] * -37.5, hs[1] * 1e-3], probes) == r


def test_rank_of_random_harmonic_draws(three_holes):
    s, _ = three_holes
    v = int(np.flatnonzero(~s.boundary_nodes)[0])
    probes = probe_edges(s, v, 8)
    hs = [direct_solve(s, random_one_form(s, i)).h for i in range(102)]
    failures = 0
    for i in range(100):
        trial = hs[i:i + 3]
        extra = period_matrix(trial, s.hole_loops)
        failures += independence_rank(trial, probes, extra_rows=extra) != 3
    assert failures == 0


def test_build_basis_three_holes(three_hole_basis, three_holes):
    s, _ = three_holes
    assert three_hole_basis.k == 3
    assert len(three_hole_basis.seeds) == 3
    assert three_hole_basis.canonical


def test_disk_has_trivial_homology(disk):
    s, _ = disk
    with pytest.raises(TrivialHomologyError):
        build_basis(s, CFG)
    assert hole_count(s, CFG) == 0


def test_museum_has_five_holes():
    md = museum_domain(MuseumSpec())
    assert hole_count(md.surface, GossipConfig(eps=1e-6)) == 5


def test_closed_torus_basis():
    s = torus_mesh(8, 8, seed=1)
    assert hole_count(s, GossipConfig(eps=1e-7)) == 2


def test_periods_of_exact_form_vanish(three_holes):
    s, _ = three_holes
    f = Cochain0(s, np.random.default_rng(0).integers(-50, 50, s.n_nodes) * 1.0)
    assert np.all(periods(d0(f), s.hole_loops) == 0)


def test_periods_reject_non_edges(three_holes):
    s, _ = three_holes
    with pytest.raises(ValueError):
        periods(Cochain1.zeros(s), [[0, s.n_nodes - 1, 5]])


def test_raw_periods_nonzero(three_holes):
    s, _ = three_holes
    h = direct_solve(s, random_one_form(s, 3)).h
    assert np.all(np.abs(periods(h, s.hole_loops)) > 1e-3)


def test_canonical_periods_identity(three_hole_basis, three_holes):
    s, _ = three_holes
    k, eps = three_hole_basis.k, three_hole_basis.eps
    P = period_matrix(three_hole_basis.forms, s.hole_loops)
    assert np.abs(P - np.eye(k)).max() <= 10 * k * eps


def test_canonicalize_is_idempotent(three_hole_basis, three_holes):
    s, _ = three_holes
    again = canonicalize(three_hole_basis, s.hole_loops)
    assert np.abs(again.matrix - three_hole_basis.matrix).max() <= 1e-9


def test_canonicalize_scalar_case(annulus):
    h = direct_solve(annulus, random_one_form(annulus, 0)).h
    p = periods(h, annulus.hole_loops)[0]
    w = h * (2.5 / p)
    b = canonicalize(HarmonicBasis((w,), eps=0.0, seeds=(0,)), annulus.hole_loops)
    assert np.allclose(b.forms[0].values, w.values / 2.5, rtol=0, atol=1e-12)


def test_canonicalize_singular(three_holes):
    s, _ = three_holes
    h = direct_solve(s, random_one_form(s, 0)).h
    b = HarmonicBasis((h, h * 2.0, direct_solve(s, random_one_form(s, 1)).h), eps=0.0,
                      seeds=(0, 1, 2))
    with pytest.raises(SingularPeriodsError):
        canonicalize(b, s.hole_loops)


def test_canonicalize_needs_matching_loop_count(three_hole_basis, three_holes):
    s, _ = three_holes
    with pytest.raises(ValueError):
        canonicalize(three_hole_basis, s.hole_loops[:2])


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_period_linearity(a, b):
    s = _annulus_holes()
    rng = np.random.default_rng(0)
    w1 = Cochain1(s, rng.normal(size=s.n_edges))
    w2 = Cochain1(s, rng.normal(size=s.n_edges))
    lhs = periods(w1 * a + w2 * b, s.hole_loops)
    rhs = a * periods(w1, s.hole_loops) + b * periods(w2, s.hole_loops)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


_CACHE = {}


def _annulus_holes():
    if "s" not in _CACHE:
        _CACHE["s"] = grid_domain(DomainSpec(holes=2, target_nodes=120, seed=0))[0]
    return _CACHE["s"]


def test_canonical_integrality_on_closed_walks(three_hole_basis, three_holes):
    s, _ = three_holes
    rng = np.random.default_rng(1)
    eps = three_hole_basis.eps
    for _ in range(20):
        a, b, c = (int(x) for x in rng.choice(s.n_nodes, 3, replace=False))
        walk = shortest_path(s, a, b) + shortest_path(s, b, c)[1:] + shortest_path(s, c, a)[1:]
        alpha = period_matrix(three_hole_basis.forms, [walk])[0]
        assert np.abs(alpha - np.rint(alpha)).max() <= 10 * len(walk) * eps


def test_gossip_basis_spans_direct_basis(three_hole_basis, three_holes):
    s, _ = three_holes
    ref = direct_basis(s)
    cycles = homology_cycles(s)
    got = period_matrix(three_hole_basis.forms, cycles)
    want = period_matrix(ref.forms, cycles)
    assert np.abs(got - want).max() <= 1e-4


def test_auto_mu(three_hole_basis, three_holes):
    s, _ = three_holes
    assert auto_mu(three_hole_basis) == pytest.approx(0.5, abs=1e-6)
    raw = HarmonicBasis(tuple(direct_solve(s, random_one_form(s, i)).h for i in range(3)),
                        eps=0.0, seeds=(0, 1, 2))
    mu = auto_mu(raw, s.hole_loops)
    P = np.abs(period_matrix(raw.forms, s.hole_loops))
    assert 0 < mu <= P[P > 1e-6].min() / 2


def test_basis_file_roundtrip(three_hole_basis, three_holes):
    s, _ = three_holes
    text = format_basis(three_hole_basis)
    b = parse_basis(text, s)
    assert format_basis(b) == text
    assert np.array_equal(b.matrix, three_hole_basis.matrix)
    assert b.canonical and b.seeds == three_hole_basis.seeds


def test_basis_file_wrong_surface(three_hole_basis, torus):
    with pytest.raises(ValueError, match="belongs to surface"):
        parse_basis(format_basis(three_hole_basis), torus)


def test_basis_is_reproducible(three_holes):
    s, _ = three_holes
    a = build_basis(s, GossipConfig(eps=1e-6, seed=4))
    b = build_basis(s, GossipConfig(eps=1e-6, seed=4))
    assert a.seeds == b.seeds
    assert np.array_equal(a.matrix, b.matrix)
