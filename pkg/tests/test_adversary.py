import math

import numpy as np
import pytest

from collabcache.adversary import (
    build_tree_instance,
    gen_adversary_stream,
    h_for_n,
    offline_upper_bound,
    phase_sizes,
)
from collabcache.demand import DemandMatrix
from collabcache.errors import SizeLimit
from collabcache.instance import validate_instance
from collabcache.offline import offline_collaborative_exact


def test_height_one_tree():
    inst = build_tree_instance(1, 2.0, 4.0, 1.0)
    assert inst.num_stations == 3
    assert inst.ua[0, 1] == inst.ua[0, 2] == 4.0
    assert inst.ua[1, 2] == 8.0
    assert math.isinf(inst.caching_cost[0, 0]) and (inst.caching_cost[1:, 0] == 1.0).all()


def test_height_two_tree():
    inst = build_tree_instance(2, 2.0, 4.0, 1.0)
    assert inst.num_stations == 7
    assert inst.ua[1, 3] == 2.0
    assert inst.ua[0, 3] == 6.0 == inst.ua[0, 6]
    assert inst.ua[3, 6] == 12.0


@pytest.mark.parametrize("H,m", [(2, 2.0), (3, 3.0), (4, 1.5), (5, 5.0)])
def test_tree_is_a_metric_with_geometric_descents(H, m):
    D = 1.0
    inst = build_tree_instance(H, m, D, H * D)
    assert validate_instance(inst).ok
    internet = inst.internet
    assert inst.ua[:, internet].min() > inst.ua[:, :internet].max() + H * D
    for v in range(inst.num_stations):
        h = (v + 1).bit_length() - 1
        stack, desc = [v], []
        while stack:
            x = stack.pop()
            for c in (2 * x + 1, 2 * x + 2):
                if c < inst.num_stations:
                    desc.append(c)
                    stack.append(c)
        for c in desc:
            assert inst.ua[v, c] <= m / (m - 1) * D / m ** h + 1e-12


def test_size_limit():
    with pytest.raises(SizeLimit):
        build_tree_instance(10, 2.0, 1.0, 1.0)


def test_phase_sizes():
    assert phase_sizes(2, 2.0) == [1, 2, 4]
    assert phase_sizes(3, 1.5) == [1, 2, 2, 3]
    run = gen_adversary_stream(2, 2.0, seed=1)
    assert len(run.stream) == 7
    total = sum(phase_sizes(4, 4.0))
    assert total <= 4 / 3 * 4 ** 4


def test_stream_follows_a_root_to_leaf_walk():
    run = gen_adversary_stream(4, 4.0, seed=3)
    path = run.path
    assert path[0] == 0 and len(path) == 5
    for a, b in zip(path, path[1:]):
        assert b in (2 * a + 1, 2 * a + 2)
    stations = run.stream.events[:, 0].tolist()
    expected = [z for z, n in zip(path, phase_sizes(4, 4.0)) for _ in range(n)]
    assert stations == expected


def test_fixed_seed_is_reproducible():
    a, b = gen_adversary_stream(3, 3.0, 9), gen_adversary_stream(3, 3.0, 9)
    assert a.path == b.path and np.array_equal(a.stream.events, b.stream.events)


@pytest.mark.parametrize("H", [2, 3])
def test_optimum_within_upper_bound(H):
    inst = build_tree_instance(H, float(H), 1.0, float(H))
    bound = offline_upper_bound(H, float(H), 1.0, float(H))
    for seed in range(10):
        run = gen_adversary_stream(H, float(H), seed)
        _, cost = offline_collaborative_exact(inst, DemandMatrix(run.stream.counts(inst.num_stations, 1)))
        assert cost <= bound + 1e-9


def test_h_for_n_examples():
    assert h_for_n(16) == 2
    assert h_for_n(10**6) == 5
    with pytest.raises(ValueError):
        h_for_n(15)
