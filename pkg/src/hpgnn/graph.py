"""Graph data model, text/binary ingestion and the node homophily ratio."""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionError, GraphParseError, MissingDataError

__all__ = [
    "Graph",
    "NormalizedAdjacency",
    "load_graph",
    "save_graph",
    "load_bundle",
    "normalize",
    "column_normalize",
    "node_homophily",
]

_NODES_HEADER = "nodes:"


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph with optional node features and labels.

    Build instances with :meth:`from_edges` (or the loaders); the constructor
    expects already-canonical edges.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    node_ids: np.ndarray | None = None
    adjacency: sp.csr_matrix = field(init=False, repr=False)
    degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n
        e = self.edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = sp.csr_matrix(
            (np.ones(rows.shape[0]), (rows, cols)), shape=(n, n), dtype=np.float64
        )
        adj.sort_indices()
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "degrees", _frozen(np.diff(adj.indptr).astype(np.int64)))

    @classmethod
    def from_edges(cls, n, edges, features=None, labels=None, node_ids=None):
        """Canonicalize ``edges`` (drop self-loops, dedupe, orient u < v) and build."""
        n = int(n)
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise DimensionError(f"edge endpoint out of range for n={n}")
        e = e[e[:, 0] != e[:, 1]]
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if e.size else np.empty((0, 2), dtype=np.int64)
        if features is not None:
            features = np.asarray(features, dtype=np.float64)
            if features.ndim == 1:
                features = features[:, None]
            if features.shape[0] != n:
                raise DimensionError(
                    f"feature matrix has {features.shape[0]} rows, expected {n}"
                )
            features = _frozen(features)
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (n,):
                raise DimensionError(f"label vector has shape {labels.shape}, expected ({n},)")
            labels = _frozen(labels.astype(np.int64))
        if node_ids is not None:
            node_ids = _frozen(np.asarray(node_ids, dtype=np.int64))
        return cls(n, _frozen(e), features, labels, node_ids)

    @property
    def num_edges(self):
        """Undirected edge count."""
        return int(self.edges.shape[0])

    @property
    def num_endpoints(self):
        """Directed edge-endpoint count (2 x undirected edges)."""
        return 2 * self.num_edges

    @property
    def num_features(self):
        return 0 if self.features is None else int(self.features.shape[1])

    @property
    def num_classes(self):
        if self.labels is None or self.n == 0:
            return 0
        return int(self.labels.max()) + 1

    def neighbors(self, u):
        a = self.adjacency
        return a.indices[a.indptr[u] : a.indptr[u + 1]]

    def with_labels(self, labels):
        return Graph.from_edges(self.n, self.edges, self.features, labels, self.node_ids)

    def fingerprint(self):
        """Content hash over structure, features and labels."""
        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        h.update(self.edges.tobytes())
        for a in (self.features, self.labels):
            h.update(b"-" if a is None else a.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.edges, other.edges)
            and _opt_equal(self.features, other.features)
            and _opt_equal(self.labels, other.labels)
        )

    __hash__ = None


def _opt_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and np.array_equal(a, b)


@dataclass(frozen=True)
class NormalizedAdjacency:
    base: Graph
    mode: str
    entries: sp.csc_matrix


def _parse_edge_file(path):
    pairs = []
    declared_n = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                body = s[1:].strip()
                if body.startswith(_NODES_HEADER):
                    try:
                        declared_n = int(body[len(_NODES_HEADER):])
                    except ValueError:
                        raise GraphParseError(path, lineno, f"bad node-count header {s!r}") from None
                continue
            parts = s.split()
            if len(parts) != 2:
                raise GraphParseError(path, lineno, f"expected two node ids, got {s!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphParseError(path, lineno, f"non-integer node id in {s!r}") from None
    return np.array(pairs, dtype=np.int64).reshape(-1, 2), declared_n


def _load_matrix(path):
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            return z[z.files[0]]
    try:
        return np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
    except ValueError as exc:
        raise GraphParseError(path, "?", str(exc)) from exc


def _load_labels(path):
    path = Path(path)
    if path.suffix in (".npy", ".npz"):
        return np.asarray(_load_matrix(path)).ravel().astype(np.int64)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                out.append(int(s))
            except ValueError:
                raise GraphParseError(path, lineno, f"expected an integer class id, got {s!r}") from None
    return np.array(out, dtype=np.int64)


def load_graph(edge_path, feature_path=None, label_path=None, *, num_nodes=None, remap=False):
    """Read a graph from an edge list plus optional feature and label files.

    Node count is ``1 + max id`` unless the edge file carries a ``# nodes: N``
    header or ``num_nodes`` is given. With ``remap=True`` arbitrary integer ids
    are compacted to ``0..n-1`` in ascending order and the original ids are kept
    in ``Graph.node_ids``; feature and label rows then follow that order.
    """
    pairs, declared_n = _parse_edge_file(edge_path)
    node_ids = None
    if remap:
        node_ids, inv = np.unique(pairs.ravel(), return_inverse=True)
        pairs = inv.reshape(-1, 2)
        n = node_ids.shape[0]
    else:
        if pairs.size and pairs.min() < 0:
            raise GraphParseError(edge_path, "?", "negative node id (use remap=True)")
        n = int(pairs.max()) + 1 if pairs.size else 0
        if declared_n is not None:
            if declared_n < n:
                raise DimensionError(f"header declares {declared_n} nodes but ids reach {n - 1}")
            n = declared_n
    if num_nodes is not None:
        if num_nodes < n:
            raise DimensionError(f"num_nodes={num_nodes} smaller than id range {n}")
        n = int(num_nodes)

    features = labels = None
    if feature_path is not None:
        features = _load_matrix(feature_path)
        if features.ndim == 1:
            features = features[:, None]
        if features.shape[0] > n and not remap and declared_n is None and num_nodes is None:
            # trailing isolated nodes appear only in the feature file
            n = features.shape[0]
        if features.shape[0] != n:
            raise DimensionError(f"{feature_path}: {features.shape[0]} feature rows for {n} nodes")
    if label_path is not None:
        labels = _load_labels(label_path)
        if labels.shape[0] > n and features is None and not remap and declared_n is None:
            n = labels.shape[0]
        if labels.shape[0] != n:
            raise DimensionError(f"{label_path}: {labels.shape[0]} labels for {n} nodes")
    return Graph.from_edges(n, pairs, features, labels, node_ids)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_graph(graph, directory, name="graph", *, binary=False, checksums=True):
    """Write ``graph`` as a bundle (edge list, features, labels, manifest.json).

    Returns the manifest path. ``binary=True`` stores features and labels as
    ``.npy`` instead of text.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"edges": "edges.txt"}
    with open(d / files["edges"], "w", encoding="utf-8") as fh:
        fh.write(f"# {_NODES_HEADER} {graph.n}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")
    if graph.features is not None:
        if binary:
            files["features"] = "features.npy"
            np.save(d / files["features"], graph.features)
        else:
            files["features"] = "features.txt"
            np.savetxt(d / files["features"], graph.features, fmt="%.17g")
    if graph.labels is not None:
        if binary:
            files["labels"] = "labels.npy"
            np.save(d / files["labels"], graph.labels)
        else:
            files["labels"] = "labels.txt"
            np.savetxt(d / files["labels"], graph.labels, fmt="%d")
    if graph.node_ids is not None:
        files["node_ids"] = "node_ids.txt"
        np.savetxt(d / files["node_ids"], graph.node_ids, fmt="%d")
    manifest = {
        "name": name,
        **files,
        "n": graph.n,
        "num_edges": graph.num_edges,
        "num_features": graph.num_features,
        "num_classes": graph.num_classes,
    }
    if checksums:
        manifest["checksums"] = {k: _sha256(d / v) for k, v in files.items()}
    path = d / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def load_bundle(path):
    """Load a bundle from its manifest (or a directory containing ``manifest.json``).

    Returns ``(graph, manifest)``.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    root = path.parent
    for key, digest in (manifest.get("checksums") or {}).items():
        actual = _sha256(root / manifest[key])
        if actual != digest:
            raise MissingDataError(f"checksum mismatch for {manifest[key]}")

    def _p(key):
        return root / manifest[key] if manifest.get(key) else None

    graph = load_graph(
        _p("edges"), _p("features"), _p("labels"), num_nodes=manifest.get("n")
    )
    if manifest.get("node_ids"):
        ids = np.loadtxt(_p("node_ids"), dtype=np.int64, ndmin=1)
        graph = Graph.from_edges(graph.n, graph.edges, graph.features, graph.labels, ids)
    for key, actual in (("num_features", graph.num_features), ("num_classes", graph.num_classes)):
        if manifest.get(key) is not None and actual and manifest[key] != actual:
            raise DimensionError(f"manifest {key}={manifest[key]} but data has {actual}")
    return graph, manifest


def column_normalize(a):
    """Scale columns of a nonnegative sparse matrix to sum to one; zero columns stay zero."""
    a = sp.csc_matrix(a, dtype=np.float64)
    colsum = np.asarray(a.sum(axis=0)).ravel()
    inv = np.zeros_like(colsum)
    nz = colsum > 0
    inv[nz] = 1.0 / colsum[nz]
    out = (a @ sp.diags(inv)).tocsc()
    out.sort_indices()
    return out


def normalize(g, mode="column"):
    """Normalized adjacency: ``"column"`` gives A D^-1, ``"symmetric"`` gives D^-1/2 A D^-1/2."""
    if mode in ("column", "column-stochastic"):
        return NormalizedAdjacency(g, "column", column_normalize(g.adjacency))
    if mode == "symmetric":
        d = g.degrees.astype(np.float64)
        s = np.zeros_like(d)
        s[d > 0] = 1.0 / np.sqrt(d[d > 0])
        m = sp.diags(s) @ g.adjacency @ sp.diags(s)
        return NormalizedAdjacency(g, "symmetric", sp.csc_matrix(m))
    raise ValueError(f"unknown normalization mode {mode!r}")


def node_homophily(g):
    """Mean fraction of same-label neighbours, over nodes with nonzero degree."""
    if g.labels is None:
        raise MissingDataError("node_homophily needs labels")
    e = g.edges
    same = (g.labels[e[:, 0]] == g.labels[e[:, 1]]).astype(np.float64)
    counts = np.bincount(e[:, 0], same, minlength=g.n) + np.bincount(e[:, 1], same, minlength=g.n)
    mask = g.degrees > 0
    if not mask.any():
        return 0.0
    return float(np.mean(counts[mask] / g.degrees[mask]))

