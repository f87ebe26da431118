import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corrspec.detection import (DetectionModel, PosteriorState, bayes_update, detect_joint_state,
                                expected_information_gain, mapping_means, run_benchmark,
                                simulate_cycle, state_index)
from corrspec.rng import substream

DEFAULT = DetectionModel()
probs = st.lists(st.floats(1e-6, 1.0), min_size=4, max_size=4).map(
    lambda p: np.asarray(p) / np.sum(p))


def test_zero_mean_gives_zero_counts():
    model = DetectionModel.from_rates(bright=1.0, dark=0.0)
    rng = substream(1, "t")
    assert all(simulate_cycle("dd", 0, model, rng) == 0 for _ in range(1000))


def test_poisson_sample_mean():
    model = DetectionModel.from_rates(bright=10.0, dark=0.5, mapping=[[1.0, 1.0]])
    rng = substream(2, "t")
    counts = [simulate_cycle("uu", 0, model, rng) for _ in range(10_000)]
    assert np.mean(counts) == pytest.approx(10.0, abs=0.3)


def test_equal_means_are_indistinguishable():
    means = np.array([[1.0, 0.1], [1.0, 0.5], [0.2, 0.5], [0.2, 0.9]])
    model = DetectionModel(mean_counts=means)
    post = bayes_update(PosteriorState.uniform(), 3, 0, model)
    assert post.probs[0] == pytest.approx(post.probs[1])
    assert post.probs[2] == pytest.approx(post.probs[3])


def test_uninformative_observation_keeps_flat_posterior():
    model = DetectionModel(mean_counts=np.full((4, 2), 0.7))
    post = bayes_update(PosteriorState.uniform(), 2, 1, model)
    np.testing.assert_allclose(post.probs, 0.25)
    assert expected_information_gain(np.full(4, 0.25), 0, model) == pytest.approx(0.0, abs=1e-12)


@given(probs, st.integers(0, 30), st.integers(0, 1))
def test_update_normalised(p, y, k):
    post = bayes_update(PosteriorState(p), y, k, DEFAULT)
    assert abs(post.probs.sum() - 1.0) < 1e-12
    assert np.all(post.probs >= 0)


@given(probs, st.integers(0, 1))
def test_information_gain_non_negative(p, k):
    assert expected_information_gain(p, k, DEFAULT) >= -1e-12


@pytest.mark.parametrize("h", range(4))
def test_repeated_updates_concentrate(h):
    rng = substream(3, "consistency", h)
    hits = 0
    for _ in range(250):
        post = PosteriorState.uniform()
        for i in range(300):
            k = i % 2
            post = bayes_update(post, simulate_cycle(h, k, DEFAULT, rng), k, DEFAULT)
        hits += post.probs[h] >= 0.99
    assert hits >= 248


def test_errors():
    with pytest.raises(ValueError):
        simulate_cycle(0, 5, DEFAULT, substream(0, "t"))
    with pytest.raises(ValueError):
        bayes_update(PosteriorState.uniform(), 1, 7, DEFAULT)
    dead = DetectionModel(mean_counts=np.zeros((4, 2)))
    with pytest.raises(ValueError, match="misconfigured"):
        bayes_update(PosteriorState.uniform(), 3, 0, dead)
    with pytest.raises(ValueError):
        PosteriorState([0.5, 0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        DetectionModel(threshold=1.0)


def test_state_labels():
    assert state_index("ud") == 2
    assert state_index((0, 1)) == 1
    assert state_index(3) == 3
    with pytest.raises(ValueError):
        state_index(4)
    assert PosteriorState.from_previous("uu").map_state == 3


def test_mapping_means_structure():
    m = mapping_means(1.0, 0.05)
    np.testing.assert_allclose(m[0], 0.05)
    assert m[3, 0] > m[2, 0] and m[3, 0] > m[1, 0]


def test_single_cycle_rarely_converges():
    model = DetectionModel(max_cycles=1)
    rng = substream(5, "t")
    res = [detect_joint_state(h % 4, model, rng) for h in range(200)]
    assert np.mean([r.converged for r in res]) < 0.1
    assert all(r.cycles_used == 1 for r in res)


def test_benchmark_cycles_and_duration():
    bench = run_benchmark(DEFAULT, 1000, seed=7)
    assert 20 <= bench.mean_cycles <= 40
    assert bench.mean_duration == pytest.approx(bench.mean_cycles * DEFAULT.cycle_duration)
    assert 0.035 <= bench.mean_duration <= 0.065
    edges, counts = bench.histogram()
    assert counts.sum() == 1000


def test_error_rate_respects_threshold():
    bench = run_benchmark(DEFAULT, 3000, seed=8)
    assert bench.error_rate <= (1 - DEFAULT.threshold) + 0.005


def test_cycles_fall_with_separation():
    means = [run_benchmark(DetectionModel.from_rates(bright=b, dark=0.05), 300, seed=9).mean_cycles
             for b in (0.6, 1.0, 2.0)]
    assert means[0] > means[1] > means[2]


def test_benchmark_parallel_matches_serial():
    a = run_benchmark(DEFAULT, 200, seed=10)
    b = run_benchmark(DEFAULT, 200, seed=10, workers=2)
    np.testing.assert_array_equal(a.cycles, b.cycles)
    np.testing.assert_array_equal(a.declared, b.declared)
