import numpy as np
import pytest
from scipy import stats

from causalrem.core import HazardOverflow
from causalrem.simengine import (Noise, SemConfig, StationNetworkConfig, _draw_marks,
                                 preset_seven_cov, preset_two_cov, replication_rng, simulate,
                                 simulate_station_network)


def _null(v=4, n=20000, baseline=1.0):
    cfg = preset_seven_cov(n_events=n, v=v)
    return cfg.with_(coefficients=(0.0,) * 7, baseline=baseline)


def test_marks_uniform_under_null():
    sim = simulate(_null(v=4, n=20000), np.random.default_rng(1))
    counts = np.bincount(sim.event_dyad_index, minlength=16)
    assert stats.chisquare(counts).pvalue > 0.01


def test_waiting_times_exponential_with_total_rate():
    cfg = _null(v=3, n=20000, baseline=2.0)
    sim = simulate(cfg, np.random.default_rng(2))
    total = 2.0 * 9
    assert abs(sim.waiting_times.mean() * total - 1.0) < 0.03
    assert stats.kstest(sim.waiting_times * total, "expon").pvalue > 1e-3
    np.testing.assert_allclose(np.diff(sim.stream.times), sim.waiting_times[1:])


def test_draw_marks_matches_probabilities():
    rates = np.tile([1.0, 2.0, 3.0, 4.0], (100000, 1))
    marks = _draw_marks(np.random.default_rng(3), rates)
    freq = np.bincount(marks, minlength=4) / len(marks)
    np.testing.assert_allclose(freq, [0.1, 0.2, 0.3, 0.4], atol=0.005)
    assert stats.chisquare(np.bincount(marks, minlength=4), 1e5 * np.array([0.1, 0.2, 0.3, 0.4])).pvalue > 0.01


def test_marks_follow_hazard():
    # event dyads should carry larger f_PA values than uniformly drawn dyads
    sim = simulate(preset_two_cov(n_events=5000, v=5), np.random.default_rng(4))
    k = sim.event_dyad_index
    x_ev = sim.panel[np.arange(len(k)), k, 0]
    # E[x | event] for x ~ U(-1,1) tilted by e^x is coth(1) - 1
    assert abs(x_ev.mean() - (1 / np.tanh(1.0) - 1.0)) < 0.02


def test_deterministic_per_seed():
    cfg = preset_seven_cov(seed=7, n_events=300)
    a, b = simulate(cfg), simulate(cfg)
    np.testing.assert_array_equal(a.stream.times, b.stream.times)
    np.testing.assert_array_equal(a.panel, b.panel)
    c = simulate(cfg.with_(seed=8))
    assert not np.array_equal(a.stream.times, c.stream.times)


def test_zero_noise_structural_algebra():
    cfg = preset_seven_cov(n_events=200, v=4)
    zero = tuple(Noise(n.kind, 0.0) for n in cfg.noise)
    noise = (cfg.noise[0],) + zero[1:]
    sim = simulate(cfg.with_(noise=noise, flip_probs=(0.0, 0.0)), np.random.default_rng(5))
    x = sim.panel
    np.testing.assert_allclose(x[..., 1], x[..., 0])
    np.testing.assert_allclose(x[..., 2], x[..., 0] - 0.5 * x[..., 1])
    np.testing.assert_allclose(x[..., 3], x[..., 1])
    ind = np.zeros(x.shape[:2])
    ind[np.arange(len(ind)), sim.event_dyad_index] = 1
    np.testing.assert_array_equal(x[..., 4], ind)
    np.testing.assert_array_equal(x[..., 5], ind)
    np.testing.assert_array_equal(x[..., 6], x[..., 5])


def test_flip_rate():
    cfg = preset_two_cov(n_events=2000, v=5)
    cfg = cfg.with_(noise=(cfg.noise[0], Noise("normal", 0.0)), flip_probs=(0.2,))
    sim = simulate(cfg, np.random.default_rng(6))
    ind = np.zeros(sim.panel.shape[:2])
    ind[np.arange(len(ind)), sim.event_dyad_index] = 1
    assert abs(np.mean(sim.panel[..., 1] != ind) - 0.2) < 0.01


def test_presets_and_truth():
    two, seven = preset_two_cov(), preset_seven_cov()
    assert two.p == 2 and two.truth == {1}
    assert seven.p == 7 and seven.truth == {2, 3}
    assert seven.coefficients[1:3] == (0.8, -0.9)
    assert SemConfig.from_dict(seven.to_dict()) == seven


@pytest.mark.parametrize("change", [
    {"n_events": 0}, {"baseline": 0.0}, {"v": 1}, {"flip_probs": (0.6, 0.1)},
    {"coefficients": (1.0,)}, {"structure": "five-cov"},
])
def test_invalid_configs(change):
    with pytest.raises(ValueError):
        preset_seven_cov().with_(**change)


def test_hazard_overflow():
    cfg = preset_two_cov(n_events=10).with_(coefficients=(1e4, 0.0))
    with pytest.raises(HazardOverflow):
        simulate(cfg)


def test_stream_labels_and_panel_shape():
    sim = simulate(preset_seven_cov(n_events=50, v=3))
    assert sim.stream.v1 == ("1", "2", "3")
    assert sim.panel.shape == (50, 9, 7)
    assert sim.dyads.tolist()[:4] == [[0, 0], [0, 1], [0, 2], [1, 0]]


def test_replication_rng_independent():
    a = replication_rng(1, 1000, 0).random(3)
    b = replication_rng(1, 1000, 1).random(3)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, replication_rng(1, 1000, 0).random(3))


def test_station_network():
    cfg = StationNetworkConfig(n_stations=30, n_events=400, seed=1)
    net = simulate_station_network(cfg)
    s = net.stream
    assert len(s) == 400 and np.all(np.diff(s.times) > 0)
    assert not np.any(s.senders == s.receivers)
    # the repetition effect produces repeated dyads far beyond chance
    dyads = s.senders * 30 + s.receivers
    assert len(np.unique(dyads)) < 0.8 * len(dyads)
