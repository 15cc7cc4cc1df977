"""Command line entry point (`hpgnn`) with one subcommand per pipeline stage."""

import argparse
import dataclasses
import json
import sys
import types
import typing
from pathlib import Path

import numpy as np

from . import cliques, harness, model as hmodel
from .exceptions import ConvergenceError, DimensionError, GraphParseError, HpgnnError, StageError
from .graph import load_bundle, load_graph
from .operators import VARIANTS, build_operators, gcn_operator
from .ppr import PprMatrix, exact_ppr_matrix, load_ppr, push_ppr_matrix, save_dense, save_ppr, symmetrize

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_INVALID_PARAM = 4
EXIT_PARSE = 5
EXIT_STAGE = 6
EXIT_CONVERGENCE = 7

# config field -> flag spelling where it differs from the field name
_FLAG_NAMES = {"lambda_": ["--lambda"], "weight_decay": ["--wd", "--weight-decay"], "hops": ["--hops", "-K"],
               "max_order": ["--max-order", "-P"]}
_INPUT_KEYS = ("edge_file", "features", "labels")

_HELP = {
    "dataset": "graph bundle directory (alternative to --edge-file)",
    "max_order": "highest simplex order P",
    "hops": "polynomial degree K of each filter",
    "alpha": "teleport probability",
    "lambda_": "L1 residual tolerance of the push solver",
    "omega": "over-relaxation factor, 0 < omega < 2",
    "epsilon": "per-degree push threshold (None: lambda / (10 * edges))",
    "drop_tol": "entries below this are pruned while the error budget allows",
    "variant": "propagation operators",
    "solver": "PPR solver",
    "binarize": "count co-membership once per node pair",
    "hidden": "width of each order's hidden block",
    "dropout": "input dropout rate during training",
    "lr": "learning rate",
    "weight_decay": "L2 penalty on theta and W",
    "optimizer": "optimizer",
    "momentum": "SGD momentum",
    "max_epochs": "epoch limit per run",
    "patience": "epochs without a validation-accuracy gain before stopping",
    "train_frac": "training fraction",
    "val_frac": "validation fraction",
    "test_frac": "test fraction",
    "num_splits": "number of random splits",
    "runs_per_split": "training runs per split",
    "stratified": "stratify splits by label",
    "shuffle_labels": "permute labels (chance-level control)",
    "seed": "master seed",
    "workers": "worker threads",
    "cache_dir": "operator cache directory",
    "out_dir": "output directory (default: current directory)",
}
_CHOICES = {"variant": VARIANTS, "solver": ("push", "exact"), "optimizer": ("sgd", "adam")}


class CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _field_type(f):
    t = f.type
    if isinstance(t, types.UnionType) or typing.get_origin(t) is typing.Union:
        t = next(a for a in typing.get_args(t) if a is not type(None))
    return t


def _add_config_flags(parser):
    g = parser.add_argument_group("experiment configuration (every field may also be set in --config)")
    for f in dataclasses.fields(harness.ExperimentConfig):
        names = _FLAG_NAMES.get(f.name, ["--" + f.name.replace("_", "-")])
        t = _field_type(f)
        kw = {"dest": f.name, "default": f.default, "help": _HELP[f.name]}
        if t is bool:
            g.add_argument(*names, action=argparse.BooleanOptionalAction, **kw)
        else:
            if f.name != "out_dir":
                kw["help"] += " (default: %(default)s)"
            g.add_argument(*names, type=t, choices=_CHOICES.get(f.name), **kw)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    inp = common.add_argument_group("inputs")
    inp.add_argument("--edge-file", dest="edge_file", help="edge list, one 'u v' pair per line")
    inp.add_argument("--features", help="feature matrix (text, .npy or .npz)")
    inp.add_argument("--labels", help="label file (text, .npy or .npz)")
    inp.add_argument("--config", help="JSON config; its values override command-line flags")
    _add_config_flags(common)

    parser = argparse.ArgumentParser(prog="hpgnn", description="Higher-order PPR operators and HPGNN training from the command line.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("lift", parents=[common], help="clique-complex lifting -> complex.txt")

    p = sub.add_parser("stats", parents=[common], help="per-order simplex counts")
    p.add_argument("--complex", help="complex file written by 'lift' (instead of a graph)")

    p = sub.add_parser("ppr", parents=[common], help="normalized HiPPR operators per order")
    p.add_argument("--complex", help="complex file written by 'lift'")
    p.add_argument("--dense", action="store_true", help="also write a dense .npy dump (n <= 5000)")

    p = sub.add_parser("train", parents=[common], help="train one model on one split")
    p.add_argument("--ppr-dir", help="directory of operators written by 'ppr'")
    p.add_argument("--split", type=int, default=0, help="split index (default: %(default)s)")

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a checkpoint, or run the full repeated-split experiment")
    p.add_argument("--checkpoint", help="checkpoint written by 'train'")
    p.add_argument("--ppr-dir", help="directory of operators written by 'ppr'")
    p.add_argument("--split", type=int, default=0, help="split index (default: %(default)s)")

    sub.add_parser("sanity", parents=[common], help="dataset statistics vs. published values")
    return parser


def _config(args):
    values = {f.name: getattr(args, f.name) for f in dataclasses.fields(harness.ExperimentConfig)}
    inputs = {k: getattr(args, k) for k in _INPUT_KEYS}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise CliError(EXIT_MISSING_INPUT, f"config file not found: {path}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        for k in _INPUT_KEYS:
            if k in doc:
                inputs[k] = doc.pop(k)
        unknown = set(doc) - set(values)
        if unknown:
            raise CliError(EXIT_INVALID_PARAM, f"unknown config fields: {sorted(unknown)}")
        values.update(doc)
    try:
        cfg = harness.ExperimentConfig(**values)
    except ValueError as exc:
        raise CliError(EXIT_INVALID_PARAM, str(exc)) from exc
    return cfg, inputs


def _require(path, what):
    if path is None:
        raise CliError(EXIT_MISSING_INPUT, f"missing {what}")
    if not Path(path).exists():
        raise CliError(EXIT_MISSING_INPUT, f"{what} not found: {path}")
    return path


def _graph(cfg, inputs):
    if inputs["edge_file"]:
        _require(inputs["edge_file"], "edge file")
        for k in ("features", "labels"):
            if inputs[k]:
                _require(inputs[k], k)
        return load_graph(inputs["edge_file"], inputs["features"], inputs["labels"]), None
    if cfg.dataset:
        _require(cfg.dataset, "dataset bundle")
        g, manifest = load_bundle(cfg.dataset)
        return g, manifest.get("name")
    raise CliError(EXIT_MISSING_INPUT, "no input graph: pass --edge-file or --dataset")


def _out_dir(cfg):
    d = Path(cfg.out_dir or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(obj):
    print(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def cmd_lift(args):
    cfg, inputs = _config(args)
    g, _ = _graph(cfg, inputs)
    sc = cliques.enumerate_cliques(g, cfg.max_order)
    path = _out_dir(cfg) / "complex.txt"
    cliques.save_complex(sc, path)
    _emit({"complex": str(path), "counts": cliques.complex_stats(sc)["counts"]})


def _complex(args, cfg, inputs):
    if getattr(args, "complex", None):
        return cliques.load_complex(_require(args.complex, "complex file"))
    g, _ = _graph(cfg, inputs)
    return cliques.enumerate_cliques(g, cfg.max_order)


def cmd_stats(args):
    cfg, inputs = _config(args)
    stats = cliques.complex_stats(_complex(args, cfg, inputs))
    (_out_dir(cfg) / "stats.json").write_text(json.dumps(stats, indent=2), encoding="utf-8")
    _emit(stats)


def cmd_ppr(args):
    cfg, inputs = _config(args)
    out = _out_dir(cfg)
    if cfg.variant == "gcn":
        g, _ = _graph(cfg, inputs)
        op = gcn_operator(g)
        files = []
        for p in range(1, cfg.max_order + 1):
            m = PprMatrix(p, op, normalized=op, params={"solver": "gcn"})
            path = out / f"ppr_order{p}.txt"
            save_ppr(m, path)
            files.append(str(path))
        _emit({"operators": files})
        return
    sc = _complex(args, cfg, inputs)
    if cfg.max_order > sc.max_order:
        raise CliError(EXIT_INVALID_PARAM, f"complex has max order {sc.max_order} < {cfg.max_order}")
    params = cfg.push_params()
    files = []
    for p in range(1, cfg.max_order + 1):
        hoa = cliques.higher_adjacency(sc, p, binarize=cfg.binarize)
        if cfg.solver == "exact":
            m = exact_ppr_matrix(hoa, params.alpha)
        else:
            with open(out / f"ppr_order{p}.diag.tsv", "w", encoding="utf-8") as diag:
                diag.write("source\tpops\tsweeps\twork\tresidual_sum\tseconds\n")
                m = push_ppr_matrix(hoa, params, workers=cfg.workers, diagnostics=diag)
        m = symmetrize(m, hoa.degrees)
        path = out / f"ppr_order{p}.txt"
        save_ppr(m, path)
        if args.dense:
            save_dense(m, out / f"ppr_order{p}.npy")
        files.append(str(path))
    _emit({"operators": files})


def _operators(args, cfg, g):
    if args.ppr_dir:
        d = Path(_require(args.ppr_dir, "ppr directory"))
        ops = []
        for p in range(1, cfg.max_order + 1):
            m = load_ppr(_require(d / f"ppr_order{p}.txt", f"order-{p} operator"))
            if m.n != g.n:
                raise CliError(EXIT_INVALID_PARAM, f"operator size {m.n} does not match graph n={g.n}")
            ops.append(m.operator())
        return ops
    ops, _ = build_operators(g, cfg.max_order, cfg.push_params(), variant=cfg.variant,
                             solver=cfg.solver, workers=cfg.workers, binarize=cfg.binarize)
    return ops


def _split(cfg, g, index):
    splits = harness.make_splits(g.n, g.labels, cfg.fractions, index + 1, cfg.seed,
                                 stratified=cfg.stratified)
    return splits[index]


def _labeled_graph(cfg, inputs):
    g, name = _graph(cfg, inputs)
    if g.features is None or g.labels is None:
        raise CliError(EXIT_MISSING_INPUT, "training needs --features and --labels")
    return g, name


def cmd_train(args):
    cfg, inputs = _config(args)
    g, _ = _labeled_graph(cfg, inputs)
    ops = _operators(args, cfg, g)
    tr, va, te = _split(cfg, g, args.split)
    m = hmodel.init_model(cfg.max_order, cfg.hops, g.num_features, g.num_classes, cfg.hidden,
                          alpha=cfg.alpha, dropout=cfg.dropout, seed=cfg.seed)
    best, hist = hmodel.train(m, g.features, ops, g.labels, tr, va, te, cfg.train_config())
    out = _out_dir(cfg)
    hmodel.save_checkpoint(best, out / "checkpoint.json")
    hmodel.write_history(hist, out / "history.csv")
    np.savez(out / "split.npz", train=tr, val=va, test=te)
    pred = hmodel.predict(best, g.features, ops)
    _emit({
        "checkpoint": str(out / "checkpoint.json"),
        "epochs": len(hist),
        "test_acc": hmodel.accuracy(pred, g.labels, te),
    })


def cmd_eval(args):
    cfg, inputs = _config(args)
    if not args.checkpoint:
        if inputs["edge_file"]:
            g, _ = _labeled_graph(cfg, inputs)
            report = harness.run_experiment(cfg, graph=g)
        else:
            report = harness.run_experiment(cfg)
        out = _out_dir(cfg)
        if not cfg.out_dir:
            report.save(out / "report.json")
        metrics = {"mean": report.mean, "ci95": report.ci95, "n": report.sample_size,
                   "config_hash": report.config_hash}
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2), encoding="utf-8")
        _emit(metrics)
        return
    g, _ = _labeled_graph(cfg, inputs)
    m = hmodel.load_checkpoint(_require(args.checkpoint, "checkpoint"))
    cfg = dataclasses.replace(cfg, max_order=m.P, hops=m.K)
    ops = _operators(args, cfg, g)
    split_file = Path(args.checkpoint).with_name("split.npz")
    if split_file.exists():
        with np.load(split_file) as z:
            tr, va, te = z["train"], z["val"], z["test"]
    else:
        tr, va, te = _split(cfg, g, args.split)
    pred = hmodel.predict(m, g.features, ops)
    metrics = {k: hmodel.accuracy(pred, g.labels, mask) for k, mask in
               (("train_acc", tr), ("val_acc", va), ("test_acc", te))}
    (_out_dir(cfg) / "metrics.json").write_text(json.dumps(metrics, indent=2), encoding="utf-8")
    _emit(metrics)


def cmd_sanity(args):
    cfg, inputs = _config(args)
    if inputs["edge_file"]:
        g, _ = _graph(cfg, inputs)
        report = harness.dataset_sanity(graph=g, name=Path(inputs["edge_file"]).parent.name)
    else:
        report = harness.dataset_sanity(_require(cfg.dataset, "dataset bundle"))
    (_out_dir(cfg) / "sanity.json").write_text(json.dumps(report, indent=2, default=_json_default), encoding="utf-8")
    _emit(report)


COMMANDS = {"lift": cmd_lift, "stats": cmd_stats, "ppr": cmd_ppr, "train": cmd_train,
            "eval": cmd_eval, "sanity": cmd_sanity}


def _classify(exc):
    if isinstance(exc, CliError):
        return exc.code
    if isinstance(exc, FileNotFoundError):
        return EXIT_MISSING_INPUT
    if isinstance(exc, GraphParseError):
        return EXIT_PARSE
    if isinstance(exc, ConvergenceError) or (isinstance(exc, StageError) and isinstance(exc.__cause__, ConvergenceError)):
        return EXIT_CONVERGENCE
    if isinstance(exc, StageError):
        return EXIT_STAGE
    if isinstance(exc, (ValueError, DimensionError, IndexError)):
        return EXIT_INVALID_PARAM
    return EXIT_ERROR


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (CliError, HpgnnError, OSError, ValueError, IndexError) as exc:
        code = _classify(exc)
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code,
               "command": args.command}
        if isinstance(exc, StageError):
            err["stage"] = exc.stage
        print(json.dumps(err), file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
