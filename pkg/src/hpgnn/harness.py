"""Experiment orchestration: splits, operator caching, repeated runs, reports."""

import csv
import dataclasses
import hashlib
import json
import os
import resource
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.optimize
import scipy.stats

from .cliques import complex_stats, enumerate_cliques
from .exceptions import StageError, StratificationError
from .graph import load_bundle, node_homophily
from .model import TrainConfig, accuracy, embed, init_model, predict, train
from .operators import VARIANTS, build_operators
from .ppr import PushParams

# Published statistics per benchmark: nodes, edges (as listed), features,
# classes, triangles, node homophily.
EXPECTATIONS = {
    "cora": dict(n=2708, edges=10556, features=1433, classes=6, triangles=1630, homophily=0.810),
    "citeseer": dict(n=3327, edges=9104, features=3703, classes=7, triangles=1167, homophily=0.736),
    "photo": dict(n=7650, edges=119081, features=745, classes=8, triangles=717400, homophily=0.827),
    "cornell": dict(n=183, edges=298, features=1703, classes=5, triangles=59, homophily=0.127),
    "actor": dict(n=7600, edges=29926, features=931, classes=5, triangles=7121, homophily=0.219),
    "texas": dict(n=183, edges=309, features=1703, classes=5, triangles=67, homophily=0.087),
    "wisconsin": dict(n=251, edges=499, features=1703, classes=5, triangles=118, homophily=0.192),
}
HOMOPHILY_TOL = 0.01

# fields that never change results and are left out of the config hash
_UNHASHED = ("workers", "cache_dir", "out_dir")


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    max_order: int = 2
    hops: int = 10
    alpha: float = 0.15
    lambda_: float = 1e-6
    omega: float = 1.4
    epsilon: float | None = None
    drop_tol: float = 1e-10
    variant: str = "hippr"
    solver: str = "push"
    binarize: bool = False
    hidden: int = 64
    dropout: float = 0.0
    lr: float = 0.05
    weight_decay: float = 0.001
    optimizer: str = "sgd"
    momentum: float = 0.9
    max_epochs: int = 1000
    patience: int = 200
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    num_splits: int = 10
    runs_per_split: int = 10
    stratified: bool = True
    shuffle_labels: bool = False
    seed: int = 0
    workers: int = 1
    cache_dir: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be nonnegative and sum to 1, got {fr}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.max_order < 1 or self.hops < 0:
            raise ValueError("need max_order >= 1 and hops >= 0")
        if self.num_splits < 1 or self.runs_per_split < 1:
            raise ValueError("num_splits and runs_per_split must be >= 1")
        self.push_params()
        self.train_config()

    @property
    def fractions(self):
        return (self.train_frac, self.val_frac, self.test_frac)

    def push_params(self):
        return PushParams(
            alpha=self.alpha, lambda_=self.lambda_, omega=self.omega,
            epsilon=self.epsilon, drop_tol=self.drop_tol,
        )

    def train_config(self, seed=None):
        return TrainConfig(
            lr=self.lr, weight_decay=self.weight_decay, optimizer=self.optimizer,
            momentum=self.momentum, max_epochs=self.max_epochs, patience=self.patience,
            seed=self.seed if seed is None else seed,
        )

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def config_hash(config):
    d = {k: v for k, v in config.to_dict().items() if k not in _UNHASHED}
    return _digest(d)


def operator_key(config, graph):
    d = config.to_dict()
    keys = ("max_order", "alpha", "lambda_", "omega", "epsilon", "drop_tol", "variant", "solver", "binarize")
    return _digest({"graph": graph.fingerprint(), **{k: d[k] for k in keys}})


def _allocate(counts, fractions):
    """Per-class part sizes.

    Every entry is its proportional quota rounded down or up and every part
    total is its global quota rounded down or up. Such a rounding always
    exists; a small integer program finds one, preferring to round up the
    entries with the largest remainders.
    """
    counts = np.asarray(counts, dtype=np.int64)
    fr = np.asarray(fractions, dtype=np.float64)
    quota = counts[:, None] * fr[None, :]
    base = np.floor(quota + 1e-9).astype(np.int64)
    frac = np.clip(quota - base, 0.0, None)
    idx = np.flatnonzero(frac.ravel() > 1e-9)
    if idx.size == 0:
        return base
    rows, cols = np.divmod(idx, fr.size)
    total = counts.sum() * fr
    used = base.sum(axis=0)
    by_class = np.zeros((counts.size, idx.size))
    by_class[rows, np.arange(idx.size)] = 1
    by_part = np.zeros((fr.size, idx.size))
    by_part[cols, np.arange(idx.size)] = 1
    left = counts - base.sum(axis=1)
    res = scipy.optimize.milp(
        -frac.ravel()[idx],
        constraints=[
            scipy.optimize.LinearConstraint(by_class, left, left),
            scipy.optimize.LinearConstraint(by_part, np.floor(total + 1e-9) - used, np.ceil(total - 1e-9) - used),
        ],
        integrality=np.ones(idx.size),
        bounds=scipy.optimize.Bounds(0, 1),
    )
    if not res.success:
        raise StratificationError(f"no balanced split allocation for class sizes {counts.tolist()}")
    alloc = base.ravel().copy()
    alloc[idx] += np.round(res.x).astype(np.int64)
    return alloc.reshape(base.shape)


def make_splits(n, labels, fractions=(0.6, 0.2, 0.2), num_splits=10, seed=0, *,
                stratified=True, strict=False):
    """``num_splits`` random (train, val, test) boolean masks over ``n`` nodes.

    Stratified splits allocate every class proportionally (each part within
    one node of its quota). With ``strict=True`` a class too small to place a
    member in every nonempty part raises :class:`StratificationError`.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1) > 1e-9:
        raise ValueError(f"bad split fractions {fractions}")
    rng = np.random.default_rng(seed)
    if stratified and labels is not None:
        labels = np.asarray(labels)
        classes, inverse = np.unique(labels, return_inverse=True)
        if n < classes.size:
            raise StratificationError(f"{n} nodes cannot hold {classes.size} classes")
        members = [np.flatnonzero(inverse == c) for c in range(classes.size)]
        counts = np.array([m.size for m in members])
        if strict:
            need = sum(f > 0 for f in fractions)
            small = classes[counts < need]
            if small.size:
                raise StratificationError(f"classes {small.tolist()} have fewer than {need} members")
        alloc = _allocate(counts, fractions)
    else:
        members = [np.arange(n)]
        alloc = _allocate([n], fractions)
    out = []
    for _ in range(num_splits):
        masks = [np.zeros(n, dtype=bool) for _ in range(3)]
        for m, a in zip(members, alloc):
            perm = rng.permutation(m)
            start = 0
            for j in range(3):
                masks[j][perm[start : start + a[j]]] = True
                start += a[j]
        out.append(tuple(masks))
    return out


def _atomic_save_npz(path, arrays):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack(ops):
    arrays = {"count": np.array(len(ops))}
    for i, op in enumerate(ops):
        op = sp.csr_matrix(op)
        arrays[f"data{i}"] = op.data
        arrays[f"indices{i}"] = op.indices
        arrays[f"indptr{i}"] = op.indptr
        arrays[f"shape{i}"] = np.array(op.shape)
    return arrays


def _unpack(z):
    return [
        sp.csr_matrix((z[f"data{i}"], z[f"indices{i}"], z[f"indptr{i}"]), shape=tuple(z[f"shape{i}"]))
        for i in range(int(z["count"]))
    ]


def cached_operators(config, graph):
    """Operators for ``config``, read from or written to ``config.cache_dir``.

    Returns ``(operators, hit)``.
    """
    if config.cache_dir:
        d = Path(config.cache_dir)
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"operators-{operator_key(config, graph)[:24]}.npz"
        if path.exists():
            with np.load(path) as z:
                return _unpack(z), True
    ops, _ = build_operators(
        graph, config.max_order, config.push_params(), variant=config.variant,
        solver=config.solver, workers=config.workers, binarize=config.binarize,
    )
    ops = [sp.csr_matrix(o) for o in ops]
    if config.cache_dir:
        _atomic_save_npz(path, _pack(ops))
    return ops, False


@dataclass
class RunReport:
    accuracies: list
    mean: float
    std: float
    ci95: float
    sample_size: int
    runs: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    config_hash: str = ""
    dataset: str = ""

    def to_dict(self, timing=True):
        d = dataclasses.asdict(self)
        if not timing:
            d.pop("timing")
            for r in d["runs"]:
                r.pop("seconds", None)
                r.pop("ms_per_epoch", None)
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def ci_halfwidth(values, confidence=0.95):
    """Half-width of the Student-t confidence interval for the mean."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    sem = v.std(ddof=1) / np.sqrt(v.size)
    return float(scipy.stats.t.ppf(0.5 + confidence / 2, v.size - 1) * sem)


def _run_seed(seed, split, run):
    return int(np.random.SeedSequence([seed, split, run]).generate_state(1)[0])


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_experiment(config, graph=None):
    """load -> lift -> operators -> (splits x runs) train/eval -> aggregate."""
    t_start = time.perf_counter()
    name = ""
    if graph is None:
        if not config.dataset:
            raise StageError("load", ValueError("config.dataset is empty and no graph given"))
        graph, manifest = _stage("load", load_bundle, config.dataset)
        name = manifest.get("name", "")
    if graph.features is None or graph.labels is None:
        raise StageError("load", ValueError("graph needs features and labels"))

    t0 = time.perf_counter()
    ops, hit = _stage("operators", cached_operators, config, graph)
    ppr_seconds = time.perf_counter() - t0

    splits = _stage(
        "splits", make_splits, graph.n, graph.labels, config.fractions, config.num_splits,
        config.seed, stratified=config.stratified,
    )
    X = np.asarray(graph.features)
    C = graph.num_classes

    def one_run(si, ri):
        tr, va, te = splits[si]
        seed = _run_seed(config.seed, si, ri)
        labels = graph.labels
        if config.shuffle_labels:
            labels = np.random.default_rng(seed).permutation(labels)
        t1 = time.perf_counter()
        model = init_model(
            config.max_order, config.hops, X.shape[1], C, config.hidden,
            alpha=config.alpha, dropout=config.dropout, seed=seed,
        )
        best, hist = _stage("train", train, model, X, ops, labels, tr, va, te, config.train_config(seed))
        pred = predict(best, X, ops)
        secs = time.perf_counter() - t1
        row = {
            "split": si, "run": ri, "seed": seed, "epochs": len(hist),
            "val_acc": accuracy(pred, labels, va), "test_acc": accuracy(pred, labels, te),
            "seconds": secs, "ms_per_epoch": 1000 * secs / max(len(hist), 1),
        }
        return row, hist, best

    # (split, run) pairs are independent; results are gathered in a fixed order
    pairs = [(si, ri) for si in range(len(splits)) for ri in range(config.runs_per_split)]
    t_train = time.perf_counter()
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(lambda sr: one_run(*sr), pairs))
    else:
        results = [one_run(si, ri) for si, ri in pairs]
    runs = [r for r, _, _ in results]
    histories = [(si, ri, h) for (si, ri), (_, h, _) in zip(pairs, results)]
    epochs_total = sum(len(h) for _, h, _ in results)
    train_seconds = time.perf_counter() - t_train

    accs = [r["test_acc"] for r in runs]
    report = RunReport(
        accuracies=accs,
        mean=float(np.mean(accs)),
        std=float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
        ci95=ci_halfwidth(accs),
        sample_size=len(accs),
        runs=runs,
        timing={
            "operators_seconds": ppr_seconds,
            "operators_cache_hit": hit,
            "train_seconds": train_seconds,
            "ms_per_epoch": 1000 * train_seconds / max(epochs_total, 1),
            "total_seconds": time.perf_counter() - t_start,
            "peak_rss_mb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024,
        },
        config=config.to_dict(),
        config_hash=config_hash(config),
        dataset=name,
    )
    if config.out_dir:
        write_outputs(report, histories, config.out_dir)
        write_embeddings(embed(results[0][2], X, ops), graph.labels, Path(config.out_dir) / "embeddings.csv")
    return report


def write_outputs(report, histories, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "run", "epoch", "train_loss", "train_acc", "val_acc", "test_acc"])
        for si, ri, hist in histories:
            for row in hist:
                w.writerow([si, ri, row["epoch"], row["train_loss"], row["train_acc"], row["val_acc"], row["test_acc"]])
    with open(out / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "variant", "max_order", "mean", "ci95", "n"])
        c = report.config
        w.writerow([report.dataset, c["variant"], c["max_order"], report.mean, report.ci95, report.sample_size])


def write_embeddings(Z, labels, path):
    """One row per node: id, label, then the hidden representation (first run of split 0)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "label", *[f"z{j}" for j in range(Z.shape[1])]])
        for i, row in enumerate(Z):
            w.writerow([i, int(labels[i]), *(repr(float(v)) for v in row)])


def graph_statistics(graph, max_order=2):
    sc = enumerate_cliques(graph, max_order)
    stats = complex_stats(sc)
    return {
        "n": graph.n,
        "edges_undirected": graph.num_edges,
        "edge_endpoints": graph.num_endpoints,
        "features": graph.num_features,
        "classes": graph.num_classes,
        "triangles": stats["counts"].get("m_2", 0),
        "homophily": node_homophily(graph) if graph.labels is not None else None,
    }


def dataset_sanity(path=None, *, graph=None, name=None):
    """Statistics of a dataset compared with the published table when its name is known.

    Mismatches are flagged in ``report["mismatches"]``; they never raise.
    """
    if graph is None:
        graph, manifest = load_bundle(path)
        name = name or manifest.get("name")
    stats = graph_statistics(graph)
    report = {"name": name, "stats": stats, "expected": None, "mismatches": [], "ok": True}
    exp = EXPECTATIONS.get((name or "").lower())
    if exp is None:
        return report
    report["expected"] = exp
    checks = [
        ("n", stats["n"] == exp["n"]),
        ("edges", exp["edges"] in (stats["edge_endpoints"], stats["edges_undirected"])),
        ("features", stats["features"] == exp["features"]),
        ("classes", stats["classes"] == exp["classes"]),
        ("triangles", stats["triangles"] == exp["triangles"]),
        ("homophily", stats["homophily"] is not None and abs(stats["homophily"] - exp["homophily"]) <= HOMOPHILY_TOL),
    ]
    report["mismatches"] = [k for k, ok in checks if not ok]
    report["ok"] = not report["mismatches"]
    return report
