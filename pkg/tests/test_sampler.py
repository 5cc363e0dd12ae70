import numpy as np
import pytest
from scipy import stats

from causalrem.core import (EventStream, MissingCovariate, NoControlAvailable, NotAtRisk,
                            RiskSetPolicy)
from causalrem.sampler import ArrayPanel, _uniform_excluding, sample_controls, sample_pairs
from causalrem.simengine import preset_seven_cov, simulate


def _repeat_stream(n, s="1", r="2", labels=("1", "2", "3")):
    return EventStream.from_events([(i + 1.0, s, r) for i in range(n)], labels)


def test_uniform_excluding_never_hits_position(rng):
    size = np.full(5000, 7)
    pos = rng.integers(0, 7, 5000)
    k = _uniform_excluding(rng, size, pos)
    assert np.all(k != pos) and k.min() >= 0 and k.max() <= 6


def test_controls_uniform_over_risk_set_minus_case():
    stream = _repeat_stream(18000)
    ctrl = sample_controls(stream, RiskSetPolicy(), np.random.default_rng(0))
    flat = ctrl[:, 0] * 3 + ctrl[:, 1]
    assert not np.any(flat == 1)
    counts = np.bincount(flat, minlength=9)
    others = np.delete(counts, 1)
    assert stats.chisquare(others).pvalue > 1e-3


def test_no_self_policy():
    stream = _repeat_stream(12000)
    ctrl = sample_controls(stream, RiskSetPolicy("all-dyads-no-self"), np.random.default_rng(1))
    assert not np.any(ctrl[:, 0] == ctrl[:, 1])
    flat = ctrl[:, 0] * 3 + ctrl[:, 1]
    assert not np.any(flat == 1)
    counts = np.bincount(flat, minlength=9)[[2, 3, 5, 6, 7]]
    assert stats.chisquare(counts).pvalue > 1e-3


def test_no_self_rejects_self_loop_event():
    stream = _repeat_stream(3, "2", "2")
    with pytest.raises(NotAtRisk):
        sample_controls(stream, RiskSetPolicy("all-dyads-no-self"), np.random.default_rng(0))


def test_explicit_windows():
    stream = EventStream.from_events([(0.5, "1", "2"), (1.5, "2", "3")], ["1", "2", "3"])
    pol = RiskSetPolicy("explicit", ((0.0, 1.0, [(0, 1), (2, 2)]), (1.0, 2.0, [(1, 2), (0, 0), (2, 0)])))
    ctrl = sample_controls(stream, pol, np.random.default_rng(0))
    assert ctrl[0].tolist() == [2, 2]
    assert tuple(ctrl[1]) in {(0, 0), (2, 0)}


def test_explicit_errors():
    stream = EventStream.from_events([(0.5, "1", "2")], ["1", "2"])
    with pytest.raises(NoControlAvailable):
        sample_controls(stream, RiskSetPolicy("explicit", ((0.0, 1.0, [(0, 1)]),)), np.random.default_rng(0))
    with pytest.raises(NotAtRisk):
        sample_controls(stream, RiskSetPolicy("explicit", ((0.0, 1.0, [(1, 0), (0, 0)]),)),
                        np.random.default_rng(0))


def test_single_dyad_network():
    stream = EventStream.from_events([(1.0, "a", "a")], ["a"])
    with pytest.raises(NoControlAvailable):
        sample_controls(stream, RiskSetPolicy(), np.random.default_rng(0))


def test_sample_pairs_reads_panel():
    sim = simulate(preset_seven_cov(n_events=400, v=4, seed=3))
    panel = ArrayPanel.from_sim(sim)
    pairs = sample_pairs(sim.stream, panel, seed=5)
    assert len(pairs) == 400 and pairs.p == 7
    k_case = sim.event_dyad_index
    np.testing.assert_array_equal(pairs.x_case, sim.panel[np.arange(400), k_case])
    k_ctrl = pairs.control[:, 0] * 4 + pairs.control[:, 1]
    np.testing.assert_array_equal(pairs.x_control, sim.panel[np.arange(400), k_ctrl])
    assert np.all(k_ctrl != k_case)
    again = sample_pairs(sim.stream, panel, seed=5)
    np.testing.assert_array_equal(again.control, pairs.control)
    # children: the case almost always has the larger event indicator
    assert np.mean(pairs.x_case[:, 4] > pairs.x_control[:, 4]) > 0.6


def test_missing_covariate():
    stream = _repeat_stream(4, labels=("1", "2"))
    data = np.ones((4, 4, 1))
    data[2, 1, 0] = np.nan
    panel = ArrayPanel(data, [(0, 0), (0, 1), (1, 0), (1, 1)], 2)
    with pytest.raises(MissingCovariate):
        sample_pairs(stream, panel)
    # dyads absent from the panel also count as missing
    partial = ArrayPanel(np.ones((4, 1, 1)), [(0, 1)], 2)
    with pytest.raises(MissingCovariate):
        sample_pairs(stream, partial)
