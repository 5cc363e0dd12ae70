import json

import numpy as np
import pytest

from causalrem.discovery import (DiscoveryReport, EmptyAcceptedSet, SubsetResult, all_subsets,
                                 discover, replicate_study, risk_grid, run_replication)
from causalrem.dispersion import DispersionVerdict
from causalrem.glmfit import FitResult
from causalrem.io import write_json
from causalrem.sampler import ArrayPanel, sample_pairs
from causalrem.simengine import preset_seven_cov, preset_two_cov, simulate


def test_all_subsets_order():
    s = all_subsets(3)
    assert s == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]
    assert len(all_subsets(7)) == 127 and len(all_subsets(9)) == 511
    assert len(all_subsets(7, max_size=2)) == 7 + 21


def _result(indices, bic, accepted=True):
    f = FitResult(np.zeros(len(indices)), 0.0, len(indices), bic, np.zeros(len(indices)), 1.0,
                  True, 1, 0.0, 10)
    v = DispersionVerdict(1.0, 9.0, 0.5, 2.0, 0.05, accepted)
    return SubsetResult(tuple(indices), f, v, "ok")


def test_tie_break_prefers_smaller_then_lexicographic():
    rep = DiscoveryReport([_result((0, 1), 5.0), _result((2,), 5.0), _result((1,), 5.0),
                           _result((0,), 1.0, accepted=False)], ("a", "b", "c"), 10, 0.05, True)
    assert rep.selected == (1,)
    assert rep.selected_labels == [2]
    assert rep.global_min_bic.indices == (0,)


def test_empty_accepted_set():
    rep = DiscoveryReport([_result((0,), 1.0, accepted=False)], ("a",), 10, 0.05, True)
    assert rep.selected is None
    with pytest.raises(EmptyAcceptedSet):
        rep.require_selection()


@pytest.fixture(scope="module")
def seven_pairs():
    sim = simulate(preset_seven_cov(seed=21, n_events=3000))
    return sample_pairs(sim.stream, ArrayPanel.from_sim(sim), seed=2)


@pytest.fixture(scope="module")
def seven_report(seven_pairs):
    return discover(seven_pairs)


def test_report_covers_every_subset(seven_report, tmp_path):
    rep = seven_report
    assert len(rep.results) == 127 and rep.exhaustive
    assert [r.indices for r in rep.results] == all_subsets(7)
    d = rep.to_dict()
    assert d["header"]["n_subsets"] == 127 and len(d["subsets"]) == 127
    write_json(tmp_path / "r.json", d)
    assert json.loads((tmp_path / "r.json").read_text())["header"]["p"] == 7
    rows = rep.rankings_rows()
    assert len(rows) == 127
    assert all(a["bic"] <= b["bic"] for a, b in zip(rows, rows[1:]))


def test_causal_subset_is_dispersed(seven_report):
    truth = seven_report.result_for((1, 2))
    assert truth.accepted
    assert abs(truth.risk / seven_report.n - 1) < 0.03
    assert seven_report.selected is not None
    best = seven_report.selected_result
    assert all(best.bic <= r.bic for r in seven_report.results if r.accepted)


def test_threads_match_serial(seven_pairs, seven_report):
    par = discover(seven_pairs, threads=4)
    np.testing.assert_allclose([r.bic for r in par.results], [r.bic for r in seven_report.results])


def test_max_size_not_exhaustive(seven_pairs):
    rep = discover(seven_pairs, max_size=1)
    assert len(rep.results) == 7 and not rep.exhaustive


def test_risk_grid(seven_pairs):
    grid = np.linspace(-2, 2, 21)
    g = risk_grid(seven_pairs, 1, 2, grid)
    assert g.risk_over_n.shape == (21, 21)
    assert g.risk_over_n[10, 10] == pytest.approx(1.0)
    D = seven_pairs.x_case[:, [1, 2]] - seven_pairs.x_control[:, [1, 2]]
    assert g.risk_over_n[3, 15] == pytest.approx(np.exp(-(D @ [grid[3], grid[15]])).mean())
    full = g.mle["full"]
    assert full["converged"] and abs(full["risk_over_n"] - 1) < 0.03
    assert g.mle["i"]["beta"][1] == 0.0 and g.mle["j"]["beta"][0] == 0.0
    assert len(list(g.rows())) == 441


def test_replication_is_deterministic():
    cfg = preset_two_cov(seed=3)
    a = run_replication(cfg, 500, 0)
    b = run_replication(cfg, 500, 0)
    assert a.selected == b.selected
    np.testing.assert_array_equal(a.bic, b.bic)


def test_replicate_study_tables():
    res = replicate_study(preset_two_cov(seed=4), [300, 600], 3)
    table = res.recovery_table()
    assert [r["n"] for r in table] == [300, 600] and all(r["reps"] == 3 for r in table)
    summary = res.model_summary(600)
    assert len(summary) == 3 and {"bic_median", "risk_q1", "accept_rate"} <= set(summary[0])
    assert sum(res.selection_frequencies(300).values()) == 3
