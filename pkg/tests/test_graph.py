import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpgnn.exceptions import DimensionError, GraphParseError, MissingDataError
from hpgnn.graph import Graph, load_bundle, load_graph, node_homophily, normalize, save_graph

from helpers import er_graph


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_triangle_file(tmp_path):
    g = load_graph(write(tmp_path, "e.txt", "0 1\n1 2\n2 0"))
    assert g.n == 3
    assert g.num_edges == 3
    assert g.num_endpoints == 6
    assert g.degrees.tolist() == [2, 2, 2]


def test_duplicate_edges_collapse(tmp_path):
    g = load_graph(write(tmp_path, "e.txt", "0 1\n1 0\n"))
    assert g.num_edges == 1


def test_comments_self_loops_and_header(tmp_path):
    g = load_graph(write(tmp_path, "e.txt", "# a comment\n# nodes: 5\n0 1\n2 2\n"))
    assert g.n == 5
    assert g.num_edges == 1
    assert g.degrees.tolist() == [1, 1, 0, 0, 0]


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(GraphParseError) as info:
        load_graph(write(tmp_path, "e.txt", "0 1\n1 x\n"))
    assert info.value.lineno == 2


def test_parse_error_wrong_arity(tmp_path):
    with pytest.raises(GraphParseError, match=":3:"):
        load_graph(write(tmp_path, "e.txt", "0 1\n1 2\n1 2 3\n"))


def test_feature_row_mismatch(tmp_path):
    e = write(tmp_path, "e.txt", "0 1\n1 2\n")
    f = write(tmp_path, "f.txt", "1 0\n0 1\n")
    with pytest.raises(DimensionError):
        load_graph(e, f)


def test_features_labels_and_isolated_tail(tmp_path):
    e = write(tmp_path, "e.txt", "0 1\n")
    f = write(tmp_path, "f.txt", "1 0\n0 1\n0.5 0.5\n")
    y = write(tmp_path, "y.txt", "0\n1\n1\n")
    g = load_graph(e, f, y)
    assert g.n == 3
    assert g.num_features == 2
    assert g.num_classes == 2
    assert g.degrees[2] == 0


def test_remap_arbitrary_ids(tmp_path):
    g = load_graph(write(tmp_path, "e.txt", "10 -3\n-3 7\n"), remap=True)
    assert g.n == 3
    assert g.node_ids.tolist() == [-3, 7, 10]
    assert sorted(map(tuple, g.edges.tolist())) == [(0, 1), (0, 2)]


def test_immutable():
    g = er_graph(10, 0.3, 0)
    with pytest.raises(ValueError):
        g.edges[0, 0] = 5
    with pytest.raises(AttributeError):
        g.n = 4


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.floats(0.0, 0.6), st.integers(0, 10**6))
def test_graph_invariants(n, p, seed):
    g = er_graph(n, p, seed)
    a = g.adjacency
    assert (a != a.T).nnz == 0
    assert a.diagonal().sum() == 0
    assert np.array_equal(g.degrees, np.diff(a.indptr))
    assert g.degrees.sum() == 2 * g.num_edges
    for u in range(n):
        nb = g.neighbors(u)
        assert np.all(np.diff(nb) > 0)


def test_normalize_k2_column():
    g = Graph.from_edges(2, [(0, 1)])
    np.testing.assert_array_equal(normalize(g).entries.toarray(), [[0, 1], [1, 0]])


def test_normalize_triangle_column():
    g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    m = normalize(g).entries.toarray()
    np.testing.assert_allclose(m, (np.ones((3, 3)) - np.eye(3)) / 2)


def test_normalize_path_symmetric():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    m = normalize(g, "symmetric").entries.toarray()
    assert m[0, 1] == pytest.approx(1 / np.sqrt(2))
    assert m[1, 2] == pytest.approx(1 / np.sqrt(2))
    assert m[0, 2] == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.floats(0.0, 0.5), st.integers(0, 10**6))
def test_column_sums_are_nonzero_degree_indicator(n, p, seed):
    g = er_graph(n, p, seed)
    m = normalize(g).entries
    sums = np.ones(n) @ m
    np.testing.assert_allclose(sums, (g.degrees > 0).astype(float), atol=1e-12)
    assert (m != 0).nnz == g.adjacency.nnz


def test_homophily_k2():
    assert node_homophily(Graph.from_edges(2, [(0, 1)], labels=[0, 0])) == 1.0
    assert node_homophily(Graph.from_edges(2, [(0, 1)], labels=[0, 1])) == 0.0


def test_homophily_excludes_isolated():
    g = Graph.from_edges(3, [(0, 1)], labels=[0, 0, 1])
    assert node_homophily(g) == 1.0


def test_homophily_needs_labels():
    with pytest.raises(MissingDataError):
        node_homophily(Graph.from_edges(2, [(0, 1)]))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(2, 5), st.integers(0, 10**6))
def test_homophily_invariant_under_relabeling(n, c, seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, c, n)
    g = er_graph(n, 0.3, seed, labels=y)
    perm = rng.permutation(c)
    assert node_homophily(g) == pytest.approx(node_homophily(g.with_labels(perm[y])))


@pytest.mark.parametrize("binary", [False, True])
def test_bundle_round_trip(tmp_path, binary):
    rng = np.random.default_rng(1)
    g = er_graph(30, 0.2, 1, rng.normal(size=(30, 4)), rng.integers(0, 3, 30))
    manifest = save_graph(g, tmp_path / "b", "toy", binary=binary)
    g2, doc = load_bundle(manifest)
    assert g2 == g
    assert doc["n"] == 30 and doc["num_features"] == 4
    save_graph(g2, tmp_path / "c", "toy", binary=binary)
    assert load_bundle(tmp_path / "c")[0] == g


def test_bundle_checksum_mismatch(tmp_path):
    g = er_graph(10, 0.3, 2, np.ones((10, 2)), np.zeros(10, dtype=int))
    path = save_graph(g, tmp_path)
    (tmp_path / "labels.txt").write_text("1\n" * 10)
    with pytest.raises(MissingDataError):
        load_bundle(path)


def test_bundle_isolated_nodes_survive(tmp_path):
    g = Graph.from_edges(6, [(0, 1)], np.eye(6), np.arange(6) % 2)
    g2, _ = load_bundle(save_graph(g, tmp_path))
    assert g2.n == 6 and g2 == g


def test_manifest_is_json(tmp_path):
    g = er_graph(5, 0.5, 3)
    doc = json.loads(save_graph(g, tmp_path).read_text())
    assert set(doc) >= {"name", "edges", "n", "num_features", "num_classes"}
