import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgfl import tudata
from dgfl.errors import ConfigError, FormatError
from dgfl.tudata import (Graph, SyntheticSpec, degree_features, gen_synthetic,
                         parse_tudataset, partition, write_tudataset)

from conftest import write_two_graph_fixture


def test_parse_two_graph_fixture(tmp_path):
    name = write_two_graph_fixture(tmp_path)
    ds = parse_tudataset(tmp_path, name)
    assert len(ds.graphs) == 2
    assert ds.num_classes == 2
    tri, edge = ds.graphs
    assert tri.node_count == 3 and len(tri.edges) == 3
    assert edge.node_count == 2 and len(edge.edges) == 1
    # labels {1, 2} remapped by first appearance
    assert (tri.label, edge.label) == (0, 1)
    # no node labels/attributes -> degree one-hot, dim cap+1
    assert ds.feature_dim == tudata.DEFAULT_DEGREE_CAP + 1
    assert np.allclose(tri.node_features[:, 2], 1.0)


def test_parse_missing_file(tmp_path):
    with pytest.raises(FormatError, match="missing required file"):
        parse_tudataset(tmp_path, "nothere")


def test_parse_edgeless_graphs(tmp_path):
    (tmp_path / "iso_A.txt").write_text("")
    (tmp_path / "iso_graph_indicator.txt").write_text("1\n1\n2\n")
    (tmp_path / "iso_graph_labels.txt").write_text("0\n1\n")
    ds = parse_tudataset(tmp_path, "iso")
    assert all(len(g.edges) == 0 for g in ds.graphs)
    for g in ds.graphs:
        assert np.allclose(g.node_features[:, 0], 1.0)


def test_parse_cross_graph_edge_rejected(tmp_path):
    write_two_graph_fixture(tmp_path)
    (tmp_path / "tiny_A.txt").write_text("1, 4\n")
    with pytest.raises(FormatError, match="line 1"):
        parse_tudataset(tmp_path, "tiny")


def test_parse_non_integer_label(tmp_path):
    write_two_graph_fixture(tmp_path)
    (tmp_path / "tiny_graph_labels.txt").write_text("1\nx\n")
    with pytest.raises(FormatError, match="line 2"):
        parse_tudataset(tmp_path, "tiny")


def test_label_remap_first_appearance(tmp_path):
    write_two_graph_fixture(tmp_path)
    (tmp_path / "tiny_graph_labels.txt").write_text("-1\n1\n")
    ds = parse_tudataset(tmp_path, "tiny")
    assert [g.label for g in ds.graphs] == [0, 1]


def test_parse_node_labels_one_hot(tmp_path):
    write_two_graph_fixture(tmp_path)
    (tmp_path / "tiny_node_labels.txt").write_text("5\n7\n5\n7\n7\n")
    ds = parse_tudataset(tmp_path, "tiny")
    assert ds.feature_dim == 2
    assert np.array_equal(ds.graphs[0].node_features,
                          [[1, 0], [0, 1], [1, 0]])


def test_parse_node_attributes(tmp_path):
    write_two_graph_fixture(tmp_path)
    (tmp_path / "tiny_node_attributes.txt").write_text(
        "0.5, 1.0\n-1.0, 2.0\n0.0, 0.0\n3.0, 4.0\n5.0, 6.0\n")
    ds = parse_tudataset(tmp_path, "tiny")
    assert ds.feature_dim == 2
    assert np.allclose(ds.graphs[1].node_features, [[3, 4], [5, 6]])


def test_crlf_and_whitespace_tolerated(tmp_path):
    (tmp_path / "w_A.txt").write_text("1 , 2\r\n2 ,1\r\n")
    (tmp_path / "w_graph_indicator.txt").write_text("1\r\n1\r\n")
    (tmp_path / "w_graph_labels.txt").write_text("3\r\n")
    ds = parse_tudataset(tmp_path, "w")
    assert len(ds.graphs) == 1 and len(ds.graphs[0].edges) == 1


def test_degree_features_path_graph():
    g = Graph(3, ((0, 1), (1, 2)), np.zeros((3, 0)), 0)
    ds = degree_features([g], 4)
    assert ds.feature_dim == 5
    assert np.array_equal(np.argmax(ds.graphs[0].node_features, axis=1), [1, 2, 1])


def test_degree_features_clamped_star():
    edges = tuple((0, i) for i in range(1, 11))
    ds = degree_features([Graph(11, edges, np.zeros((11, 0)), 0)], 4)
    assert ds.graphs[0].node_features[0, 4] == 1.0


def test_degree_features_edgeless():
    ds = degree_features([Graph(3, (), np.zeros((3, 0)), 0)], 4)
    assert np.allclose(ds.graphs[0].node_features[:, 0], 1.0)


def test_roundtrip_through_text_layout(tmp_path):
    name = write_two_graph_fixture(tmp_path)
    ds = parse_tudataset(tmp_path, name)
    out = tmp_path / "again"
    write_tudataset(ds, out, "tiny2")
    ds2 = parse_tudataset(out, "tiny2")
    assert len(ds2.graphs) == len(ds.graphs)
    for a, b in zip(ds.graphs, ds2.graphs):
        assert a.node_count == b.node_count
        assert a.label == b.label
        assert sorted(a.degrees()) == sorted(b.degrees())


def test_synthetic_counts_and_tags():
    ds = gen_synthetic(SyntheticSpec(count_a=50, count_b=50, nodes_a=10,
                                     nodes_b=10, mean_degree_a=2,
                                     mean_degree_b=6), seed=7)
    assert len(ds.graphs) == 100
    assert ds.tags.count("A") == 50
    assert ds.num_classes == 2


def test_synthetic_deterministic():
    spec = SyntheticSpec(count_a=20, count_b=20)
    a = gen_synthetic(spec, 7)
    b = gen_synthetic(spec, 7)
    assert a.tags == b.tags
    for ga, gb in zip(a.graphs, b.graphs):
        assert ga.edges == gb.edges and ga.label == gb.label


def test_synthetic_seed_changes_edges():
    spec = SyntheticSpec(count_a=20, count_b=20)
    a = gen_synthetic(spec, 7)
    b = gen_synthetic(spec, 8)
    assert [g.edges for g in a.graphs] != [g.edges for g in b.graphs]


def test_synthetic_rejects_tiny_family():
    with pytest.raises(ConfigError):
        gen_synthetic(SyntheticSpec(count_a=1, count_b=20), 0)


def _dataset(n_graphs):
    graphs = [Graph(2, ((0, 1),), np.ones((2, 1)), i % 2) for i in range(n_graphs)]
    return tudata.GraphDataset(graphs, 2, 1, "d")


def test_partition_equal_split():
    plan = partition(_dataset(100), 10, 0.1, 0.0, 0)
    assert len(plan.test_indices) == 10
    assert all(len(s) == 9 for s in plan.client_shards)


def test_partition_deterministic():
    a = partition(_dataset(100), 10, 0.1, 1.0, 5)
    b = partition(_dataset(100), 10, 0.1, 1.0, 5)
    assert a == b


def test_partition_uneven_properties():
    plan = partition(_dataset(100), 10, 0.1, 1.0, 3)
    sizes = [len(s) for s in plan.client_shards]
    assert sum(sizes) == 90
    assert min(sizes) >= 1
    assert len(set(sizes)) >= 2


def test_partition_infeasible():
    with pytest.raises(ConfigError):
        partition(_dataset(5), 10, 0.1, 0.0, 0)


@settings(max_examples=200, deadline=None)
@given(n_clients=st.integers(2, 12), seed=st.integers(0, 10**6),
       unevenness=st.floats(0, 4, allow_nan=False))
def test_partition_disjoint_and_covering(n_clients, seed, unevenness):
    ds = _dataset(60)
    plan = partition(ds, n_clients, 0.1, unevenness, seed)
    seen = list(plan.test_indices)
    for shard in plan.client_shards:
        assert shard  # every client holds at least one graph
        seen.extend(shard)
    assert sorted(seen) == list(range(60))
