import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from etdse.errors import AsymmetricGraph, ConfigInvalid, NonPositiveInput
from etdse.models import MeasurementModel, SensorKind, cv_dynamics
from etdse.network import (
    ConsensusWeights,
    NetworkGraph,
    build_geometric_graph,
    check_collective_observability,
    is_primitive,
    is_strongly_connected,
    metropolis_weights,
    observability_matrix,
)


def graph(n, edges, directed=False, sensors=()):
    arcs = set(map(tuple, edges))
    if not directed:
        arcs |= {(j, i) for i, j in edges}
    return NetworkGraph(n, frozenset(arcs), frozenset(sensors), np.zeros((n, 2)))


def test_two_nodes_full_radius():
    g = build_geometric_graph(2, 1, (5000.0, 5000.0), math.hypot(5000, 5000), 0)
    assert g.arcs == {(0, 1), (1, 0)}
    assert is_strongly_connected(g)


def test_same_seed_same_graph():
    a = build_geometric_graph(30, 6, (5000.0, 5000.0), 1000.0, 42)
    b = build_geometric_graph(30, 6, (5000.0, 5000.0), 1000.0, 42)
    assert np.array_equal(a.positions, b.positions)
    assert a.arcs == b.arcs and a.sensor_nodes == b.sensor_nodes and a.radius == b.radius
    c = build_geometric_graph(30, 6, (5000.0, 5000.0), 1000.0, 43)
    assert not np.array_equal(a.positions, c.positions)


def test_full_scale_graph():
    g = build_geometric_graph(100, 20, (5000.0, 5000.0), 800.0, 0)
    assert g.node_count == 100 and len(g.sensor_nodes) == 20
    assert is_strongly_connected(g) and g.is_symmetric()
    assert is_primitive(metropolis_weights(g), 100)
    d = np.linalg.norm(g.positions[:, None] - g.positions[None], axis=-1)
    for i, j in g.arcs:
        assert d[i, j] <= g.radius
    assert g.radius >= 800.0


def test_radius_grows_until_connected():
    g = build_geometric_graph(20, 4, (5000.0, 5000.0), 10.0, 1)
    assert is_strongly_connected(g) and g.radius > 10.0


@pytest.mark.parametrize("n,sensors,radius", [(1, 0, 10.0), (3, 4, 10.0), (3, 1, 0.0)])
def test_geometric_graph_bad_inputs(n, sensors, radius):
    with pytest.raises(NonPositiveInput):
        build_geometric_graph(n, sensors, (100.0, 100.0), radius, 0)


@given(st.integers(2, 40), st.integers(0, 10_000))
def test_generated_graphs_satisfy_assumptions(n, seed):
    g = build_geometric_graph(n, 1, (5000.0, 5000.0), 1500.0, seed)
    assert is_strongly_connected(g)
    w = metropolis_weights(g)
    assert is_primitive(w, n)
    np.testing.assert_allclose(w.pi.sum(axis=1), 1.0, atol=1e-12)
    for i in range(n):
        for j in g.in_neighbors(i):
            assert w.pi[i, j] > 0
        assert w.pi[i, i] > 0


def test_graph_round_trip(tmp_path):
    g = build_geometric_graph(10, 2, (5000.0, 5000.0), 2000.0, 3)
    p = tmp_path / "g.json"
    g.dump(p)
    h = NetworkGraph.load(p)
    assert h.arcs == g.arcs and h.sensor_nodes == g.sensor_nodes
    assert np.array_equal(h.positions, g.positions)
    g.dump(tmp_path / "again.json")
    assert p.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_graph_document_validation(tmp_path):
    d = build_geometric_graph(3, 1, (10.0, 10.0), 100.0, 0).to_dict()
    with pytest.raises(ConfigInvalid, match="color"):
        NetworkGraph.from_dict({**d, "color": 1})
    with pytest.raises(ConfigInvalid, match="outside"):
        NetworkGraph.from_dict({**d, "arcs": [[0, 7]]})
    with pytest.raises(ConfigInvalid, match="self-arc"):
        NetworkGraph.from_dict({**d, "arcs": [[1, 1]]})
    bad = dict(d)
    del bad["arcs"]
    with pytest.raises(ConfigInvalid, match="arcs"):
        NetworkGraph.from_dict(bad)


def test_neighbour_lists():
    g = graph(3, [(0, 1), (2, 1)], directed=True)
    assert g.in_neighbors(1) == (0, 2)
    assert g.out_neighbors(0) == (1,)
    assert not g.is_symmetric()


def test_metropolis_two_nodes():
    np.testing.assert_array_equal(metropolis_weights(graph(2, [(0, 1)])).pi, [[0.5, 0.5], [0.5, 0.5]])


def test_metropolis_star():
    pi = metropolis_weights(graph(4, [(0, 1), (0, 2), (0, 3)])).pi
    for leaf in (1, 2, 3):
        assert pi[leaf, 0] == pytest.approx(0.25)
        assert pi[leaf, leaf] == pytest.approx(0.75)
    assert pi[0, 0] == pytest.approx(0.25)
    np.testing.assert_allclose(pi, pi.T)


def test_metropolis_needs_symmetry():
    with pytest.raises(AsymmetricGraph):
        metropolis_weights(graph(2, [(0, 1)], directed=True))


def test_consensus_weights_validation():
    with pytest.raises(ConfigInvalid):
        ConsensusWeights(np.array([[0.5, 0.4], [0.5, 0.5]]))
    with pytest.raises(ConfigInvalid):
        ConsensusWeights(np.array([[1.5, -0.5], [0.5, 0.5]]))
    w = ConsensusWeights(np.array([[0.5, 0.5], [0.0, 1.0]]))
    assert w.conforms_to(graph(2, [(1, 0)], directed=True))
    assert not w.conforms_to(graph(2, [], directed=True))


def test_strong_connectivity_examples():
    assert not is_strongly_connected(graph(2, []))
    assert is_strongly_connected(graph(4, [(i, j) for i in range(4) for j in range(i + 1, 4)]))
    assert is_strongly_connected(graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)]))
    # Directed path reaches forward only.
    assert not is_strongly_connected(graph(3, [(0, 1), (1, 2)], directed=True))
    assert is_strongly_connected(graph(3, [(0, 1), (1, 2), (2, 0)], directed=True))


def boolean_power_oracle(pi, max_power):
    b = pi > 0
    p = b.copy()
    for _ in range(max_power):
        if p.all():
            return True
        p = (p.astype(int) @ b.astype(int)) > 0
    return bool(p.all())


def test_primitivity_examples():
    assert not is_primitive(ConsensusWeights(np.eye(2)), 10)
    assert is_primitive(ConsensusWeights(np.full((2, 2), 0.5)), 1)
    cycle = np.array([[0.5, 0, 0.5], [0.5, 0.5, 0], [0, 0.5, 0.5]])
    assert is_primitive(ConsensusWeights(cycle), 3) == boolean_power_oracle(cycle, 3) is True
    # Pure 3-cycle without self-loops is periodic, never primitive.
    perm = np.roll(np.eye(3), 1, axis=1)
    assert not is_primitive(ConsensusWeights(perm), 20)
    assert not boolean_power_oracle(perm, 20)


@given(st.integers(0, 10_000))
def test_primitivity_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    mask = rng.random((n, n)) < 0.4
    np.fill_diagonal(mask, rng.random(n) < 0.5)
    mask[np.arange(n), rng.integers(0, n, n)] = True
    pi = mask / mask.sum(axis=1, keepdims=True)
    bound = (n - 1) ** 2 + 1
    assert is_primitive(ConsensusWeights(pi), bound) == boolean_power_oracle(pi, bound)


def test_observability_matrix_shape():
    d = cv_dynamics()
    C = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])
    obs = observability_matrix(d.A, C)
    assert obs.shape == (8, 4)
    assert np.linalg.matrix_rank(obs) == 4


def test_collective_observability_examples():
    d = cv_dynamics()
    xi = MeasurementModel(SensorKind.LINEAR_XI, 3.0)
    eta = MeasurementModel(SensorKind.LINEAR_ETA, 3.0)
    assert check_collective_observability(d, [xi, eta])
    assert not check_collective_observability(d, [xi])
    assert not check_collective_observability(d, [xi, xi, xi])
    assert not check_collective_observability(d, [])


def test_collective_observability_nonlinear():
    d = cv_dynamics()
    centre = [2500.0, 0.0, 2500.0, 0.0]
    toa = MeasurementModel(SensorKind.TOA, 9.0, (0.0, 0.0))
    # Range gradient lies along the line of sight, bearing gradient across it.
    doa_same_line = MeasurementModel(SensorKind.DOA, 1e-6, (5000.0, 5000.0))
    doa_perpendicular = MeasurementModel(SensorKind.DOA, 1e-6, (5000.0, 0.0))
    assert check_collective_observability(d, [toa, doa_same_line], centre)
    assert not check_collective_observability(d, [toa, doa_perpendicular], centre)
    assert not check_collective_observability(d, [toa], centre)
    with pytest.raises(ConfigInvalid):
        check_collective_observability(d, [toa])


def test_graph_json_is_sorted(tmp_path):
    g = graph(3, [(2, 0), (1, 0)])
    g.dump(tmp_path / "g.json")
    doc = json.loads((tmp_path / "g.json").read_text())
    assert doc["arcs"] == sorted(doc["arcs"])
