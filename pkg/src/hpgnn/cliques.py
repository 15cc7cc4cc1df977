"""Clique-complex lifting and the node-level higher-order adjacency."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import CliqueLimitError, GraphParseError
from .graph import column_normalize

DEFAULT_MAX_SIMPLICES = 10**8


@dataclass(frozen=True)
class SimplicialComplex:
    """Clique complex of a graph up to ``max_order``.

    ``simplices[p]`` is an ``(m_p, p + 1)`` int array of strictly increasing,
    lexicographically sorted node tuples; ``incidence[p]`` the n x m_p 0/1 matrix.
    Index 0 of both lists is unused so orders index directly.
    """

    n: int
    max_order: int
    simplices: tuple
    incidence: tuple

    def counts(self):
        return {p: int(self.simplices[p].shape[0]) for p in range(1, self.max_order + 1)}

    def order(self, p):
        _check_order(self, p)
        return self.simplices[p]


@dataclass(frozen=True)
class HigherOrderAdjacency:
    order: int
    entries: sp.csc_matrix
    normalized: sp.csc_matrix

    @property
    def degrees(self):
        return np.asarray(self.entries.sum(axis=0)).ravel()


def _check_order(sc, p):
    if not 1 <= p <= sc.max_order:
        raise IndexError(f"order {p} outside 1..{sc.max_order}")


def _incidence(n, simp):
    m, k = simp.shape
    rows = simp.ravel()
    cols = np.repeat(np.arange(m), k)
    return sp.csr_matrix((np.ones(m * k), (rows, cols)), shape=(n, m))


def _from_lists(n, max_order, levels):
    simplices = [np.empty((0, 1), dtype=np.int64)]
    incidence = [None]
    for p in range(1, max_order + 1):
        arr = np.asarray(levels[p], dtype=np.int64).reshape(-1, p + 1)
        arr.setflags(write=False)
        simplices.append(arr)
        incidence.append(_incidence(n, arr))
    return SimplicialComplex(n, max_order, tuple(simplices), tuple(incidence))


def enumerate_cliques(g, max_order, *, max_simplices=DEFAULT_MAX_SIMPLICES):
    """All (p+1)-cliques of ``g`` for p = 1..max_order, exactly.

    Depth-first extension over forward neighbourhoods: a clique ``c`` can only
    grow by nodes larger than its last member that are adjacent to every member.
    Visiting candidates in ascending order yields lexicographic output per order.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    a = g.adjacency
    fwd = []
    for u in range(g.n):
        nb = a.indices[a.indptr[u] : a.indptr[u + 1]]
        fwd.append(frozenset(nb[nb > u].tolist()))
    levels = {p: [] for p in range(1, max_order + 1)}

    def grow(clique, cand):
        p = len(clique)
        out = levels[p]
        for w in sorted(cand):
            c = clique + (w,)
            out.append(c)
            if len(out) > max_simplices:
                raise CliqueLimitError(
                    f"more than {max_simplices} simplices of order {p}; raise max_simplices"
                )
            if p < max_order:
                nxt = cand & fwd[w]
                if nxt:
                    grow(c, nxt)

    for u in range(g.n):
        if fwd[u]:
            grow((u,), fwd[u])
    return _from_lists(g.n, max_order, levels)


def higher_adjacency(sc, p, *, binarize=False):
    """Node co-membership counts through p-simplices, plus its column normalization.

    ``A^p(u, v)`` counts p-simplices containing both u and v (u != v); with
    ``binarize=True`` any positive count becomes 1.
    """
    _check_order(sc, p)
    b = sc.incidence[p]
    co = (b @ b.T).tocsr()
    co.setdiag(0)
    co.eliminate_zeros()
    if binarize:
        co.data[:] = 1.0
    co = co.tocsc()
    co.sort_indices()
    return HigherOrderAdjacency(p, co, column_normalize(co))


def complex_stats(sc):
    """Per-order simplex counts and per-node membership histograms.

    ``membership[p][k]`` is the number of nodes contained in exactly k
    p-simplices.
    """
    counts = {}
    membership = {}
    for p in range(1, sc.max_order + 1):
        counts[f"m_{p}"] = int(sc.simplices[p].shape[0])
        per_node = np.bincount(sc.simplices[p].ravel(), minlength=sc.n)
        membership[p] = np.bincount(per_node, minlength=1).tolist() if sc.n else []
    return {"n": sc.n, "max_order": sc.max_order, "counts": counts, "membership": membership}


def save_complex(sc, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes: {sc.n}\n# max_order: {sc.max_order}\n")
        for p in range(1, sc.max_order + 1):
            fh.write(f"[order {p}]\n")
            for row in sc.simplices[p]:
                fh.write(" ".join(map(str, row)) + "\n")


def load_complex(path):
    n = max_order = None
    levels = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                key, _, val = s[1:].partition(":")
                key = key.strip()
                if key == "nodes":
                    n = int(val)
                elif key == "max_order":
                    max_order = int(val)
                continue
            if s.startswith("[order"):
                current = int(s[len("[order"):-1])
                levels[current] = []
                continue
            if current is None:
                raise GraphParseError(path, lineno, "simplex before any [order p] section")
            ids = tuple(int(x) for x in s.split())
            if len(ids) != current + 1:
                raise GraphParseError(path, lineno, f"order-{current} simplex needs {current + 1} ids")
            levels[current].append(ids)
    if n is None:
        raise GraphParseError(path, 1, "missing '# nodes:' header")
    max_order = max_order or max(levels, default=1)
    for p in range(1, max_order + 1):
        levels.setdefault(p, [])
    return _from_lists(n, max_order, levels)

