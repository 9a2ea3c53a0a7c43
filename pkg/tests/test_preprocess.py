import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import make_clip, random_clips
from gripplus.errors import ParameterError
from gripplus.preprocess import (build_graphs, make_input, max_abs_coordinate, normalize_adjacency,
                                 to_normalized_position, to_velocity)


def test_velocity_example():
    clip = make_clip([[[0, 0], [1, 2], [3, 5], [9, 9]]], t_h=3)
    v = to_velocity(clip)
    assert v.values.tolist() == [[[0, 0], [1, 2], [2, 3]]]
    assert v.last_positions.tolist() == [[3, 5]]
    assert v.decoder_seed.tolist() == [[2, 3]]


def test_stationary_agent_has_zero_velocity():
    clip = make_clip(np.full((2, 5, 2), 4.0), t_h=4)
    assert not to_velocity(clip).values.any()


def test_velocity_across_a_gap_is_zero():
    mask = [[True, False, True, True, True]]
    clip = make_clip([[[0, 0], [0, 0], [2, 2], [3, 3], [4, 4]]], mask=mask, t_h=4)
    assert to_velocity(clip).values[0].tolist() == [[0, 0], [0, 0], [0, 0], [1, 1]]


def test_velocity_position_round_trip():
    for clip in random_clips(20, agents=(1, 6), t_h=6, t_f=4, seed=3):
        v = to_velocity(clip).values
        rebuilt = clip.history[:, :1] + np.cumsum(v, axis=1)
        assert np.abs(rebuilt - clip.history).max() < 1e-9


def test_normalized_position():
    clips = random_clips(10, seed=1)
    m = max_abs_coordinate(clips)
    for c in clips:
        x = to_normalized_position(c, m).values
        assert np.abs(x).max() <= 1.0
    zero = make_clip(np.zeros((2, 4, 2)))
    assert not make_input(zero, "normalized_position", 3.0).values.any()
    with pytest.raises(ParameterError):
        to_normalized_position(zero, 0.0)
    with pytest.raises(ParameterError):
        make_input(zero, "polar")


def test_normalize_adjacency_examples():
    assert np.isclose(normalize_adjacency(np.eye(1))[0, 0], 1 / 1.001, atol=1e-12)
    off = normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(off, [[0, 1 / 1.001], [1 / 1.001, 0]], atol=1e-12)
    z = normalize_adjacency(np.zeros((4, 4)))
    assert np.array_equal(z, np.zeros((4, 4)))


def test_normalize_adjacency_matches_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(1, 7))
        a = (rng.random((n, n)) < 0.5) * rng.random((n, n)) * 3
        alpha = float(rng.uniform(1e-3, 1.0))
        ref = np.array(oracles.normalize_adjacency(a.tolist(), alpha))
        assert np.abs(normalize_adjacency(a, alpha) - ref).max() < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_normalize_adjacency_preserves_symmetry(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((n, n))
    a = a + a.T
    out = normalize_adjacency(a)
    assert np.allclose(out, out.T, atol=1e-15)


def _pair(distance):
    return make_clip([[[0, 0]] * 4, [[distance, 0]] * 4], t_h=3)


def test_distance_threshold():
    assert build_graphs(_pair(24.0), 25.0).a1[0].tolist() == [[0, 1], [1, 0]]
    assert not build_graphs(_pair(26.0), 25.0).a1.any()
    assert not build_graphs(_pair(25.0), 25.0).a1.any()  # strict inequality
    assert not build_graphs(_pair(1.0), 0.0).a1.any()
    with pytest.raises(ParameterError):
        build_graphs(_pair(1.0), -1.0)


def test_graph_stack_layout():
    gs = build_graphs(_pair(10.0), 25.0)
    assert gs.a1.shape == (3, 2, 2) and gs.g_fixed.shape == (3, 2, 2, 2)
    assert np.allclose(gs.g_fixed[:, 0], np.eye(2) / 1.001)
    assert np.allclose(gs.g_fixed[:, 1], normalize_adjacency(gs.a1[0]))


def test_unobserved_agents_have_no_edges():
    mask = np.ones((2, 4), bool)
    mask[1, 0] = False
    gs = build_graphs(make_clip([[[0, 0]] * 4, [[1, 0]] * 4], mask=mask, t_h=3), 25.0)
    assert not gs.a1[0].any() and gs.a1[1].any()


def test_graphs_are_per_frame():
    # agents approach each other over the history
    clip = make_clip([[[0, 0]] * 4, [[60, 0], [40, 0], [20, 0], [10, 0]]], t_h=3)
    gs = build_graphs(clip, 25.0)
    assert [int(gs.a1[t, 0, 1]) for t in range(3)] == [0, 0, 1]


def test_permutation_equivariance_and_monotonicity(rng):
    for clip in random_clips(10, agents=(2, 7), seed=5):
        perm = rng.permutation(clip.n)
        g = build_graphs(clip, 30.0)
        gp = build_graphs(clip.select(perm), 30.0)
        assert np.array_equal(gp.a1, g.a1[:, perm][:, :, perm])
        assert np.allclose(gp.g_fixed, g.g_fixed[..., perm, :][..., perm], atol=1e-15)
        wider = build_graphs(clip, 45.0).a1
        assert np.all(wider >= g.a1)
