"""Personalized PageRank per order: dense exact solve and SOR forward push.

The push solver keeps an estimate ``pi_hat`` and residual ``r`` with the
invariant ``pi = pi_hat + Pi @ r`` (``Pi`` the exact PPR matrix). Columns of
``Pi`` are nonnegative and sum to at most one, so ``||pi - pi_hat||_1 <=
||r||_1``; the solver stops once ``||r||_1 <= lambda_``.
"""

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numba
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .cliques import HigherOrderAdjacency
from .exceptions import ConvergenceError, DimensionError, GraphParseError, HpgnnError
from .graph import Graph, NormalizedAdjacency, column_normalize


EXACT_WARN_N = 5000
EXACT_MAX_N = 20000
DENSE_DUMP_MAX_N = 5000


@dataclass(frozen=True)
class PushParams:
    """Solver settings. ``epsilon=None`` resolves to ``lambda_ / (10 * m)``, with
    m the (weighted) edge count, and ``scan_threshold=None`` to ``n // 4`` for
    the operator at hand.

    ``queue_limit`` picks how the queue phase is bounded: ``"size"`` leaves it
    once the queue holds more than ``scan_threshold`` nodes, ``"pops"`` after
    ``scan_threshold`` pops.
    """

    alpha: float = 0.15
    lambda_: float = 1e-6
    omega: float = 1.4
    epsilon: float | None = None
    epoch_num: int = 8
    scan_threshold: int | None = None
    queue_limit: str = "size"
    max_sweeps: int = 1000
    drop_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.lambda_ > 0:
            raise ValueError(f"lambda_ must be > 0, got {self.lambda_}")
        if not 0 < self.omega < 2:
            raise ValueError(f"omega must lie in (0, 2), got {self.omega}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.epoch_num < 1:
            raise ValueError("epoch_num must be >= 1")
        if self.scan_threshold is not None and self.scan_threshold < 0:
            raise ValueError("scan_threshold must be >= 0")
        if self.queue_limit not in ("size", "pops"):
            raise ValueError(f"queue_limit must be 'size' or 'pops', got {self.queue_limit!r}")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.drop_tol < 0:
            raise ValueError("drop_tol must be >= 0")

    def resolve(self, n, volume):
        eps = self.epsilon if self.epsilon is not None else self.lambda_ / (10.0 * max(volume / 2.0, 1.0))
        thr = self.scan_threshold if self.scan_threshold is not None else n // 4
        return replace(self, epsilon=eps, scan_threshold=thr)


@dataclass
class PprEstimate:
    source: int
    pi_hat: np.ndarray
    residual: np.ndarray
    residual_sum: float
    residual_abs: float
    pops: int
    sweeps: int
    work: int
    seconds: float = 0.0

    @property
    def phase_log(self):
        return {"pops": self.pops, "sweeps": self.sweeps, "work": self.work}


@dataclass
class PprMatrix:
    """PPR operator for one order; column ``s`` is the PPR vector of source ``s``.

    ``entries`` is a dense array (exact solver) or CSC matrix (push solver).
    """

    order: int
    entries: object
    normalized: object = None
    params: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    @property
    def n(self):
        return self.entries.shape[0]

    def toarray(self, normalized=False):
        m = self.normalized if normalized else self.entries
        if m is None:
            raise ValueError("normalized operator not computed; call symmetrize() first")
        return m.toarray() if sp.issparse(m) else np.asarray(m)

    def operator(self):
        """The symmetrically normalized operator used for propagation."""
        if self.normalized is None:
            raise ValueError("normalized operator not computed; call symmetrize() first")
        return self.normalized


def as_transition(adj):
    """Return ``(P, degrees)``: a column-stochastic CSC operator and the
    (weighted) degree of every node."""
    if isinstance(adj, Graph):
        return column_normalize(adj.adjacency), adj.degrees.astype(np.float64)
    if isinstance(adj, NormalizedAdjacency):
        if adj.mode != "column":
            raise ValueError("push/exact PPR need a column-stochastic adjacency")
        return sp.csc_matrix(adj.entries), adj.base.degrees.astype(np.float64)
    if isinstance(adj, HigherOrderAdjacency):
        return sp.csc_matrix(adj.normalized), adj.degrees
    if sp.issparse(adj) or isinstance(adj, np.ndarray):
        a = sp.csc_matrix(adj, dtype=np.float64)
        return column_normalize(a), np.asarray(a.sum(axis=0)).ravel()
    raise TypeError(f"unsupported adjacency type {type(adj).__name__}")


def exact_ppr_matrix(adj, alpha):
    """Dense ``alpha * (I - (1 - alpha) A_norm)^-1`` by LU factorization."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    p, _ = as_transition(adj)
    n = p.shape[0]
    if n > EXACT_MAX_N:
        raise DimensionError(f"exact solve limited to n <= {EXACT_MAX_N}, got {n}")
    if n > EXACT_WARN_N:
        warnings.warn(f"dense exact PPR on n={n} nodes", RuntimeWarning, stacklevel=2)
    m = np.eye(n) - (1.0 - alpha) * p.toarray()
    try:
        lu = scipy.linalg.lu_factor(m, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise HpgnnError(f"exact PPR system is singular: {exc}") from exc
    pi = scipy.linalg.lu_solve(lu, alpha * np.eye(n), check_finite=False)
    order = getattr(adj, "order", 1)
    return PprMatrix(order, pi, params={"alpha": alpha, "solver": "exact"})


@numba.njit(cache=True, nogil=True)
def _push(indptr, indices, weights, degree, source, alpha, omega, lam, eps,
          epoch_num, scan_threshold, limit_pops, max_sweeps, pi, r):
    n = degree.shape[0]
    r[source] = 1.0
    abs_sum = 1.0
    pops = 0
    sweeps = 0
    work = 0

    # queue phase: FIFO ring buffer with an in-queue flag per node
    queue = np.empty(n + 1, dtype=np.int64)
    inq = np.zeros(n, dtype=np.bool_)
    head = 0
    tail = 0
    size = 0
    queue[tail] = source
    tail = (tail + 1) % (n + 1)
    size = 1
    inq[source] = True
    while size > 0 and abs_sum > lam:
        if limit_pops:
            if pops >= scan_threshold:
                break
        elif size > scan_threshold:
            break
        sg = queue[head]
        head = (head + 1) % (n + 1)
        size -= 1
        inq[sg] = False
        pops += 1
        rs = r[sg]
        if rs == 0.0:
            continue
        d = omega * rs
        pi[sg] += alpha * d
        nr = rs - d
        r[sg] = nr
        abs_sum += abs(nr) - abs(rs)
        c = (1.0 - alpha) * d
        for j in range(indptr[sg], indptr[sg + 1]):
            t = indices[j]
            old = r[t]
            new = old + c * weights[j]
            r[t] = new
            abs_sum += abs(new) - abs(old)
            if not inq[t]:
                inq[t] = True
                queue[tail] = t
                tail = (tail + 1) % (n + 1)
                size += 1
        work += indptr[sg + 1] - indptr[sg] + 1
    abs_sum = np.abs(r).sum()

    # scan phase: sequential sweeps against a tightening residual target
    if abs_sum > lam:
        for i in range(1, epoch_num + 1):
            target = lam ** (i / epoch_num)
            k = 0
            while abs_sum > target and k < max_sweeps:
                k += 1
                sweeps += 1
                work += n
                touched = 0
                for sg in range(n):
                    rs = r[sg]
                    if rs == 0.0 or abs(rs) < eps * degree[sg]:
                        continue
                    touched += 1
                    d = omega * rs
                    pi[sg] += alpha * d
                    nr = rs - d
                    r[sg] = nr
                    c = (1.0 - alpha) * d
                    for j in range(indptr[sg], indptr[sg + 1]):
                        r[indices[j]] += c * weights[j]
                    work += indptr[sg + 1] - indptr[sg] + 1
                abs_sum = np.abs(r).sum()
                if touched == 0:
                    break
    return abs_sum, pops, sweeps, work


class _Operator:
    """Column-stochastic CSC arrays prepared once for many push calls."""

    def __init__(self, adj):
        p, deg = as_transition(adj)
        p = sp.csc_matrix(p)
        p.sort_indices()
        self.n = p.shape[0]
        self.indptr = p.indptr.astype(np.int64)
        self.indices = p.indices.astype(np.int64)
        self.weights = p.data.astype(np.float64)
        self.degree = np.ascontiguousarray(deg, dtype=np.float64)
        self.volume = float(self.degree.sum())
        self.order = getattr(adj, "order", 1)

    def run(self, source, params):
        n = self.n
        pi = np.zeros(n)
        r = np.zeros(n)
        t0 = time.perf_counter()
        abs_sum, pops, sweeps, work = _push(
            self.indptr, self.indices, self.weights, self.degree, int(source),
            float(params.alpha), float(params.omega), float(params.lambda_),
            float(params.epsilon), int(params.epoch_num), int(params.scan_threshold),
            params.queue_limit == "pops", int(params.max_sweeps), pi, r,
        )
        est = PprEstimate(
            int(source), pi, r, float(r.sum()), float(abs_sum),
            int(pops), int(sweeps), int(work), time.perf_counter() - t0,
        )
        if abs_sum > params.lambda_:
            raise ConvergenceError(
                f"source {source}: residual {abs_sum:.3e} above lambda {params.lambda_:.1e} "
                f"after {sweeps} sweeps",
                source=int(source),
                residual_sum=float(abs_sum),
            )
        return est


def push_ppr_vector(adj, source, params=None):
    """Approximate PPR vector of ``source`` with queue-then-scan SOR push."""
    params = params or PushParams()
    op = _Operator(adj)
    if not 0 <= source < op.n:
        raise IndexError(f"source {source} outside 0..{op.n - 1}")
    return op.run(source, params.resolve(op.n, op.volume))


def _prune(pi, drop_tol, budget):
    """Indices kept after dropping entries below ``drop_tol``, smallest first,
    while the dropped L1 mass stays within ``budget``."""
    mag = np.abs(pi)
    small = np.flatnonzero((mag <= drop_tol) & (mag > 0))
    if small.size:
        small = small[np.argsort(mag[small], kind="stable")]
        ok = np.cumsum(mag[small]) <= max(budget, 0.0)
        mag = mag.copy()
        mag[small[ok]] = 0.0
    return np.flatnonzero(mag)


def push_ppr_matrix(adj, params=None, *, workers=1, diagnostics=None):
    """Approximate PPR matrix, one push per source.

    Entries below ``drop_tol`` are dropped as long as the dropped mass plus the
    column residual stays within ``lambda_``, so every column keeps an L1 error
    of at most ``lambda_``.

    ``diagnostics`` may be a writable text stream receiving one tab-separated
    line per source (source, pops, sweeps, work, residual_sum, seconds).
    Sources are independent, so ``workers > 1`` runs them on a thread pool
    without changing the result.
    """
    params = params or PushParams()
    op = _Operator(adj)
    rp = params.resolve(op.n, op.volume)
    n = op.n

    def one(s):
        return op.run(s, rp)

    if workers and workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            estimates = list(pool.map(one, range(n)))
    else:
        estimates = [one(s) for s in range(n)]

    rows, cols, vals = [], [], []
    diag = []
    for est in estimates:
        keep = _prune(est.pi_hat, rp.drop_tol, rp.lambda_ - est.residual_abs)
        rows.append(keep)
        cols.append(np.full(keep.shape[0], est.source, dtype=np.int64))
        vals.append(est.pi_hat[keep])
        diag.append(
            {"source": est.source, "pops": est.pops, "sweeps": est.sweeps, "work": est.work,
             "residual_sum": est.residual_sum, "seconds": est.seconds}
        )
        if diagnostics is not None:
            diagnostics.write(
                f"{est.source}\t{est.pops}\t{est.sweeps}\t{est.work}\t"
                f"{est.residual_sum:.6e}\t{est.seconds:.6f}\n"
            )
    if n:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.empty(0, dtype=np.int64)
        v = np.empty(0)
    entries = sp.csc_matrix((v, (r, c)), shape=(n, n))
    entries.sort_indices()
    meta = {k: v for k, v in asdict(rp).items()}
    meta["solver"] = "push"
    return PprMatrix(op.order, entries, params=meta, diagnostics=diag)


def symmetrize(ppr, degrees):
    """Populate ``ppr.normalized`` with ``D^-1/2 Pi D^-1/2``; zero degrees scale to zero."""
    d = np.asarray(degrees, dtype=np.float64)
    if d.shape != (ppr.n,):
        raise DimensionError(f"degree vector of length {d.shape} for n={ppr.n}")
    s = np.zeros_like(d)
    s[d > 0] = 1.0 / np.sqrt(d[d > 0])
    m = ppr.entries
    if sp.issparse(m):
        out = (sp.diags(s) @ m @ sp.diags(s)).tocsr()
        out.eliminate_zeros()
    else:
        out = s[:, None] * np.asarray(m) * s[None, :]
    return replace(ppr, normalized=out)


def save_ppr(ppr, path, *, normalized=True):
    """Write an operator as ``row col value`` triplets with a parameter header."""
    m = ppr.normalized if normalized and ppr.normalized is not None else ppr.entries
    coo = sp.coo_matrix(m)
    order = np.lexsort((coo.row, coo.col))
    p = ppr.params
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n: {ppr.n}\n# order: {ppr.order}\n")
        fh.write(f"# normalized: {int(m is ppr.normalized)}\n")
        for key in ("alpha", "lambda_", "omega", "epsilon", "drop_tol", "solver"):
            if key in p:
                fh.write(f"# {key}: {p[key]}\n")
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {float(coo.data[i])!r}\n")


def load_ppr(path):
    """Read a triplet file; returns a PprMatrix whose ``normalized`` or ``entries``
    field holds the matrix depending on the header."""
    header = {}
    rows, cols, vals = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                k, _, v = s[1:].partition(":")
                header[k.strip()] = v.strip()
                continue
            parts = s.split()
            if len(parts) != 3:
                raise GraphParseError(path, lineno, "expected 'row col value'")
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
    if "n" not in header:
        raise GraphParseError(path, 1, "missing '# n:' header")
    n = int(header["n"])
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    params = {}
    for key in ("alpha", "lambda_", "omega", "epsilon", "drop_tol"):
        if key in header and header[key] != "None":
            params[key] = float(header[key])
    if "solver" in header:
        params["solver"] = header["solver"]
    order = int(header.get("order", 1))
    if header.get("normalized", "1") == "1":
        return PprMatrix(order, m, normalized=m, params=params)
    return PprMatrix(order, m.tocsc(), params=params)


def save_dense(ppr, path, *, normalized=True):
    """Dense ``.npy`` dump, only for n <= 5000."""
    if ppr.n > DENSE_DUMP_MAX_N:
        raise DimensionError(f"dense dump limited to n <= {DENSE_DUMP_MAX_N}")
    np.save(path, ppr.toarray(normalized=normalized))
