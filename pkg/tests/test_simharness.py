import csv
import io
import json
import math

import numpy as np
import pytest

from hodgetrack.netgen import DomainSpec
from hodgetrack.simharness import (
    ClassificationSpec,
    ExperimentSpec,
    run_accuracy_sweep,
    run_classification_study,
    run_convergence_sweep,
    run_randomness_study,
    stat_row,
)

SMALL = DomainSpec(holes=1, target_nodes=49, seed=0)


@pytest.fixture(scope="module")
def small_sweep():
    spec = ExperimentSpec(domains=(SMALL, DomainSpec(holes=2, target_nodes=120, seed=1)),
                          eps=(1e-2, 1e-3), seeds=4)
    return spec, run_randomness_study(spec)


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(domains=(), eps=(1e-3,))
    with pytest.raises(ValueError):
        ExperimentSpec(domains=(SMALL,), eps=())
    with pytest.raises(ValueError):
        ExperimentSpec(domains=(SMALL,), eps=(1e-3,), seeds=1)
    with pytest.raises(ValueError):
        ExperimentSpec(domains=(SMALL,), eps=(1e-3,), metrics=("iters_h",))


def test_spec_from_json():
    doc = {"domains": [{"holes": 1, "target_nodes": 49}], "eps": [0.01], "seeds": 3}
    spec = ExperimentSpec.from_json(json.loads(json.dumps(doc)))
    assert spec.domains[0] == SMALL
    assert spec.eps == (0.01,) and spec.seeds == 3


def test_stat_row():
    lo, hi, avg, std, pct = stat_row([2.0, 4.0])
    assert (lo, hi, avg) == (2.0, 4.0, 3.0)
    assert std == pytest.approx(math.sqrt(2))
    assert pct == pytest.approx(100 * math.sqrt(2) / 3)
    assert stat_row([7.0, 7.0, 7.0])[3:] == (0.0, 0.0)
    assert stat_row([0.0, 0.0])[4] == 0.0


def test_two_seed_cell():
    r = run_randomness_study(ExperimentSpec(domains=(SMALL,), eps=(1e-3,), seeds=2))
    (row,) = r.rows
    assert row.n_ok == 2 and row.n_failed == 0
    assert abs(row.n_v - 49) <= 5
    for m, (lo, hi, avg, std, pct) in row.stats.items():
        assert lo <= avg <= hi and std >= 0, m


def test_rows_are_well_formed(small_sweep):
    spec, r = small_sweep
    assert len(r.rows) == len(spec.domains) * len(spec.eps)
    assert len(r.raw) == len(r.rows) * spec.seeds
    for row in r.rows:
        for lo, hi, avg, std, _ in row.stats.values():
            assert lo <= avg <= hi and std >= 0


def test_message_accounting(small_sweep):
    _, r = small_sweep
    for rec in r.raw:
        # f: one message per directed cover edge; g: three per face, 3F = 2E
        assert rec["msgs_f"] == rec["iters_f"] * 2 * rec["cover_edges"]
        assert rec["msgs_g"] == rec["iters_g"] * 2 * rec["cover_edges"]


def test_stats_recompute_from_raw(small_sweep):
    _, r = small_sweep
    raw = [json.loads(line) for line in r.raw_jsonl().splitlines()]
    for row in r.rows:
        cell = [x for x in raw if (x["n_h"], x["n_v"], x["eps"]) == (row.n_h, row.n_v, row.eps)]
        for m in r.metrics:
            vals = [x[m] for x in cell if x["converged"]]
            assert np.allclose(stat_row(vals), row.stats[m], rtol=1e-12)


def test_table_and_plot_files(small_sweep, tmp_path):
    _, r = small_sweep
    paths = r.write(tmp_path, "t")
    rows = list(csv.DictReader(io.StringIO((tmp_path / "t.csv").read_text())))
    assert len(rows) == len(r.rows)
    assert float(rows[0]["iters_f_avg"]) == r.rows[0].avg("iters_f")
    plot = list(csv.DictReader(io.StringIO((tmp_path / "t_plot.csv").read_text())))
    assert set(plot[0]) == {"x", "y", "series"}
    assert len(plot) == len(r.rows) * len(r.metrics)
    assert set(paths) == {"table", "raw", "plot"}


def test_determinism(small_sweep):
    spec, r = small_sweep
    again = run_randomness_study(spec)
    assert again.table_csv() == r.table_csv()
    assert again.raw_jsonl() == r.raw_jsonl()


def test_parallel_matches_serial(small_sweep):
    spec, r = small_sweep
    par = run_randomness_study(ExperimentSpec(domains=spec.domains, eps=spec.eps,
                                              seeds=spec.seeds, workers=2))
    assert par.raw_jsonl() == r.raw_jsonl()
    assert par.table_csv() == r.table_csv()


def test_non_converged_runs_are_counted():
    r = run_randomness_study(ExperimentSpec(domains=(SMALL,), eps=(1e-9,), seeds=3,
                                            max_rounds=5))
    (row,) = r.rows
    assert row.n_ok == 0 and row.n_failed == 3
    assert all(math.isnan(v) for v in row.stats["iters_f"])


def test_sweep_metric_subsets():
    spec = ExperimentSpec(domains=(SMALL,), eps=(1e-3,), seeds=2)
    assert run_convergence_sweep(spec).metrics == ("iters_f", "iters_g", "msgs_f", "msgs_g")
    assert run_accuracy_sweep(spec).metrics == ("err_dh", "err_delta_h", "err_dh_rms",
                                                "err_delta_h_rms")


def test_iterations_grow_as_eps_shrinks():
    spec = ExperimentSpec(domains=(DomainSpec(holes=3, target_nodes=500, seed=0),),
                          eps=(5e-2, 5e-3, 5e-4), seeds=5)
    r = run_convergence_sweep(spec)
    rows = sorted(r.rows, key=lambda x: -x.eps)
    for loose, tight in zip(rows, rows[1:]):
        assert loose.avg("iters_f") < tight.avg("iters_f")
        assert loose.avg("iters_g") < tight.avg("iters_g")


def test_residuals_shrink_with_eps():
    spec = ExperimentSpec(domains=(DomainSpec(holes=3, target_nodes=500, seed=0),),
                          eps=(5e-2, 5e-3, 5e-4), seeds=5)
    rows = sorted(run_accuracy_sweep(spec).rows, key=lambda x: -x.eps)
    for loose, tight in zip(rows, rows[1:]):
        assert tight.avg("err_dh") < loose.avg("err_dh")


def test_residual_flat_over_node_count():
    doms = tuple(DomainSpec(holes=3, target_nodes=n, seed=0) for n in (500, 1000, 2000))
    r = run_accuracy_sweep(ExperimentSpec(domains=doms, eps=(5e-3,), seeds=10), axis="n_v")
    avgs = [row.avg("err_dh") for row in r.rows]
    assert max(avgs) / min(avgs) < 3
    assert r.plot_csv().splitlines()[1].endswith("|eps=0.005")


def test_reference_residual_level():
    dom = DomainSpec(width=2.0, holes=3, target_nodes=3000, seed=0)
    (row,) = run_accuracy_sweep(ExperimentSpec(domains=(dom,), eps=(5e-4,), seeds=10)).rows
    assert 0.2 * 1.4e-3 <= row.avg("err_dh") <= 5 * 1.4e-3


# ----------------------------------------------------------------------
# classification study


@pytest.fixture(scope="module")
def low_density_study():
    spec = ClassificationSpec(domain=DomainSpec(width=2.0, holes=3, target_nodes=85, seed=0))
    return run_classification_study(spec)


def test_low_density_study(low_density_study):
    st = low_density_study
    assert st.k == 3 and abs(st.n_nodes - 85) <= 9
    assert len(st.pairs) == 20 * 19 // 2
    assert st.oracle_agrees
    assert st.nonempty and st.decades >= 1
    rates = dict(st.curve)
    inside = [mu for mu in rates if st.lower < mu <= st.upper]
    assert inside and all(rates[mu] == 1.0 for mu in inside)
    assert min(rates.values()) < 1.0


def test_study_summary_and_files(low_density_study, tmp_path):
    st = low_density_study
    doc = st.summary()
    assert doc["n_pairs"] == 190
    assert doc["safe_mu_lower"] == st.lower
    assert isinstance(doc["reference_range_overlaps"], bool)
    st.write(tmp_path, "fig8")
    assert json.loads((tmp_path / "fig8.json").read_text()) == json.loads(
        json.dumps(doc))
    lines = (tmp_path / "fig8_pairs.csv").read_text().splitlines()
    assert lines[0] == "a,b,sigma,same_truth,same_oracle" and len(lines) == 191


def test_single_class_study_accepts_any_mu():
    spec = ClassificationSpec(domain=DomainSpec(width=2.0, holes=3, target_nodes=85, seed=0),
                              patterns=((1, 1, 1),), per_class=6)
    st = run_classification_study(spec)
    assert st.upper == math.inf
    assert all(p["same_truth"] and p["same_oracle"] for p in st.pairs)
    assert all(rate == 1.0 for mu, rate in st.curve if mu > st.lower)
