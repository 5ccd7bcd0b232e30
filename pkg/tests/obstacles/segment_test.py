import math

import numpy as np
import pytest

from governor.errors import InvalidParametersError
from governor.metric import directional_matrix
from governor.obstacles import Segment, dist_q_segment


def _brute_force(q, p, a, b, samples=100_000):
    t = np.linspace(0.0, 1.0, samples)[:, None]
    points = np.asarray(a) + t * (np.asarray(b) - np.asarray(a))
    diffs = np.asarray(p) - points
    return math.sqrt(float(np.einsum("ij,jk,ik->i", diffs, q, diffs).min()))


def test_matches_brute_force(rng):
    worst = 0.0
    for _ in range(200):
        m = rng.normal(size=(2, 2))
        q = m @ m.T + 0.2 * np.eye(2)
        q = 0.5 * (q + q.T)
        a, b = rng.uniform(-3.0, 3.0, size=2), rng.uniform(-3.0, 3.0, size=2)
        p = rng.uniform(-6.0, 6.0, size=2)
        found = dist_q_segment(q, p, a, b)
        oracle = _brute_force(q, p, a, b)
        worst = max(worst, abs(found.dist - oracle) / max(oracle, 1e-12))
    assert worst <= 1e-6


def test_corridor_wall_anchor():
    # robot at the origin moving diagonally, wall parallel to the motion
    v = np.array([math.sqrt(2.0) / 2.0, math.sqrt(2.0) / 2.0])
    q = directional_matrix(v, 1.0, 4.0).q
    foot = np.array([-0.5, 0.5])
    wall = Segment(foot - 3.0 * v, foot + 3.0 * v)
    found = wall.dist_q(q, np.zeros(2))
    assert found.dist == pytest.approx(1.41, abs=0.01)
    assert wall.distance(np.zeros(2)) == pytest.approx(0.71, abs=0.01)
    assert np.allclose(found.witness, foot, atol=1e-9)


def test_clamps_to_endpoint():
    found = dist_q_segment(np.eye(2), (3.0, 1.0), (0.0, 0.0), (1.0, 0.0))
    assert found.dist == pytest.approx(math.sqrt(5.0))
    assert np.allclose(found.witness, (1.0, 0.0))


def test_ray_distances():
    wall = Segment((3.0, -1.0), (3.0, 1.0))
    directions = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [math.sqrt(0.5), math.sqrt(0.5)]])
    ranges = wall.ray_distances(np.zeros(2), directions, 10.0)
    assert ranges[0] == pytest.approx(3.0)
    assert ranges[1] == 10.0
    assert ranges[2] == 10.0
    assert ranges[3] == 10.0


def test_parallel_ray_never_hits():
    wall = Segment((1.0, 0.0), (5.0, 0.0))
    assert wall.ray_distances(np.zeros(2), np.array([[1.0, 0.0]]), 10.0)[0] == 10.0


def test_blocking_and_contact():
    wall = Segment((0.0, -1.0), (0.0, 1.0))
    assert wall.blocks_segment(np.array([-1.0, 0.0]), np.array([1.0, 0.0]))
    assert not wall.blocks_segment(np.array([-1.0, 2.0]), np.array([1.0, 2.0]))
    assert wall.contains((0.0, 0.5))
    assert not wall.contains((1e-3, 0.5))
    assert wall.to_params() == {"kind": "segment", "a": [0.0, -1.0], "b": [0.0, 1.0]}


def test_degenerate_segment():
    with pytest.raises(InvalidParametersError):
        Segment((1.0, 1.0), (1.0, 1.0))
