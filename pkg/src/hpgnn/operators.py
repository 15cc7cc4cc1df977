"""Assemble the per-order propagation operators consumed by the model."""

import numpy as np
import scipy.sparse as sp

from .cliques import enumerate_cliques, higher_adjacency
from .ppr import PushParams, exact_ppr_matrix, push_ppr_matrix, symmetrize

VARIANTS = ("hippr", "gcn")


def gcn_operator(g):
    """``D~^-1/2 (A + I) D~^-1/2`` with self-loops added."""
    a = g.adjacency + sp.identity(g.n, format="csr")
    d = np.asarray(a.sum(axis=1)).ravel()
    s = sp.diags(1.0 / np.sqrt(d))
    return (s @ a @ s).tocsr()


def build_operators(g, max_order, params=None, *, variant="hippr", solver="push",
                    workers=1, binarize=False, complex_=None):
    """One normalized operator per order 1..max_order.

    ``variant="gcn"`` ignores orders and PPR and returns ``max_order`` copies of
    the self-loop GCN operator. Returns ``(operators, ppr_matrices)``; the
    second list is empty for the GCN variant.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if variant == "gcn":
        op = gcn_operator(g)
        return [op] * max_order, []
    params = params or PushParams()
    sc = complex_ if complex_ is not None else enumerate_cliques(g, max_order)
    ops, mats = [], []
    for p in range(1, max_order + 1):
        hoa = higher_adjacency(sc, p, binarize=binarize)
        if solver == "exact":
            m = exact_ppr_matrix(hoa, params.alpha)
        elif solver == "push":
            m = push_ppr_matrix(hoa, params, workers=workers)
        else:
            raise ValueError(f"solver must be 'push' or 'exact', got {solver!r}")
        m = symmetrize(m, hoa.degrees)
        mats.append(m)
        ops.append(m.normalized)
    return ops, mats
