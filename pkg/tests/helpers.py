"""Fixtures and independent oracles shared by the test modules."""

import numpy as np

from hpgnn.graph import Graph


def er_graph(n, p, seed, features=None, labels=None):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, 1)
    return Graph.from_edges(n, np.argwhere(upper), features, labels)


def complete_graph(n):
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def sbm_graph(n=200, intra=0.1, inter=0.005, seed=0, noise=1.0, extra_dims=6):
    """Two equal blocks; features are the one-hot block id plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    blocks = np.repeat([0, 1], n // 2)
    prob = np.where(blocks[:, None] == blocks[None, :], intra, inter)
    upper = np.triu(rng.random((n, n)) < prob, 1)
    X = np.eye(2)[blocks] + rng.normal(0.0, noise, (n, 2))
    X = np.hstack([X, rng.normal(0.0, noise, (n, extra_dims))])
    return Graph.from_edges(n, np.argwhere(upper), X, blocks)


def dense_adjacency(g):
    a = np.zeros((g.n, g.n))
    for u, v in g.edges:
        a[u, v] = a[v, u] = 1.0
    return a


def ppr_oracle(a, alpha):
    """alpha * inv(I - (1 - alpha) A D^-1) from a dense weighted adjacency."""
    a = np.asarray(a, dtype=np.float64)
    d = a.sum(axis=0)
    scale = np.divide(1.0, d, out=np.zeros_like(d), where=d > 0)
    return alpha * np.linalg.inv(np.eye(a.shape[0]) - (1.0 - alpha) * a * scale[None, :])


def brute_force_logits(beta, theta, W, X, dense_ops):
    """Direct evaluation with explicit matrix powers and concatenation."""
    blocks = []
    for p, S in enumerate(dense_ops):
        XT = X @ theta[p]
        blocks.append(sum(beta[p, k] * np.linalg.matrix_power(S, k) @ XT for k in range(beta.shape[1])))
    return np.hstack(blocks) @ W


def central_differences(f, arrays, h=1e-5):
    """Numerical gradient of scalar f() w.r.t. each array (perturbed in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + h
            fp = f()
            a[i] = old - h
            fm = f()
            a[i] = old
            g[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def max_relative_error(a, b, floor=1e-6):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))
