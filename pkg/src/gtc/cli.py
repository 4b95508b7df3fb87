"""Command line front end: train, eval, sweep, tokens.

Exit codes: 0 success, 1 bad usage or configuration, 2 unreadable or
inconsistent data, 3 numeric failure during training. All file output goes
under the --out directory. GTC_THREADS (default 1) caps math library
threads; it is applied at package import time.
"""

import argparse
import dataclasses
import json
import os
import sys

from .checkpoint import save_params
from .datasets import (SyntheticConfig, export_embeddings, generate_synthetic,
                       load_dataset, load_embeddings, parse_manifest)
from .errors import ConfigError, DataError, GtcError, NumericError
from .evaluation import SplitSpec, evaluate_embeddings, oversmoothing_sweep
from .tokens import build_token_set
from .training import TrainConfig, fit, grid_search

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _add_data_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", metavar="MANIFEST", help="dataset manifest path")
    src.add_argument("--synthetic", nargs="?", const="default", default=None,
                     metavar="SPEC",
                     help="generate the built-in synthetic dataset "
                          "(only spec name: 'default')")
    p.add_argument("--synthetic-opt", action="append", default=[], metavar="KEY=VALUE",
                   help="override a synthetic generator field (repeatable)")


def _add_train_args(p):
    p.add_argument("--config", metavar="FILE", default=None,
                   help="key: value config file; explicit flags override it")
    p.add_argument("--dim", type=int, default=None, help="shared projection width")
    p.add_argument("--d-model", type=int, default=None, help="transformer width")
    p.add_argument("--d-contrast", type=int, default=None, help="contrast space width")
    p.add_argument("--gnn-layers", type=int, default=None)
    p.add_argument("--tf-layers", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--hops", type=int, default=None, help="token hop count")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--tau", type=float, default=None, help="contrastive temperature")
    p.add_argument("--lam", type=float, default=None, help="anchor balance weight")
    p.add_argument("--theta-pos", type=int, default=None, help="positive-pair threshold")
    p.add_argument("--pos-mode", choices=("binary", "counts"), default=None)
    p.add_argument("--epochs", type=int, default=None, help="maximum training epochs")
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--token-mode", choices=("recorded", "frozen"), default=None)
    p.add_argument("--shared-encoder", action="store_true", default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--dtype", choices=("float32", "float64"), default=None)
    p.add_argument("--allow-deep", action="store_true", default=None)


_FLAG_TO_FIELD = {
    "dim": "d", "d_model": "d_model", "d_contrast": "d_contrast",
    "gnn_layers": "gnn_layers", "tf_layers": "tf_layers", "heads": "n_heads",
    "hops": "n_hops", "lr": "lr", "tau": "tau", "lam": "lam",
    "theta_pos": "theta_pos", "pos_mode": "pos_mode", "epochs": "max_epochs",
    "patience": "patience", "dropout": "dropout", "seed": "seed",
    "token_mode": "token_mode", "shared_encoder": "shared_encoder",
    "batch_size": "batch_size", "dtype": "dtype", "allow_deep": "allow_deep",
}


def _coerce(ftype, key: str, value: str):
    try:
        if ftype in (int, "int"):
            return int(value)
        if ftype in (float, "float"):
            return float(value)
        if ftype in (bool, "bool"):
            low = value.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(value)
        return value
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from None


def _config_file_overrides(path) -> dict:
    m = parse_manifest(path)
    if m.types or m.relations or m.metapaths:
        raise ConfigError(f"{path}: config files take only top-level key: value lines")
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    overrides = {}
    for key, value in m.top.items():
        if key not in fields:
            known = ", ".join(sorted(fields))
            raise ConfigError(f"{path}: unknown config key {key!r}; known keys: {known}")
        overrides[key] = _coerce(fields[key].type, key, value)
    return overrides


def _config_from_args(args) -> TrainConfig:
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(_config_file_overrides(args.config))
    for flag, fieldname in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[fieldname] = value
    return dataclasses.replace(TrainConfig(), **overrides).validate()


def _synthetic_config(args) -> SyntheticConfig:
    fields = {f.name: f for f in dataclasses.fields(SyntheticConfig)}
    overrides = {}
    for item in args.synthetic_opt:
        key, sep, value = item.partition("=")
        if not sep or key not in fields:
            known = ", ".join(sorted(fields))
            raise ConfigError(f"bad --synthetic-opt {item!r}; known keys: {known}")
        ftype = fields[key].type
        try:
            if ftype in ("int", int):
                overrides[key] = int(value)
            elif ftype in ("float", float):
                overrides[key] = float(value)
            elif ftype in ("tuple", tuple):
                overrides[key] = tuple(int(v) for v in value.split(","))
            else:
                overrides[key] = value
        except ValueError:
            raise ConfigError(f"bad value for synthetic option {key!r}: {value!r}") from None
    config = dataclasses.replace(SyntheticConfig(), **overrides)
    config.validate()
    return config


def _load_graph(args):
    if args.data:
        graph, labels = load_dataset(args.data)
        source = {"kind": "manifest", "path": os.path.abspath(args.data)}
    else:
        if args.synthetic != "default":
            raise ConfigError(f"unknown synthetic spec {args.synthetic!r}; "
                              "only 'default' exists (tune it with --synthetic-opt)")
        config = _synthetic_config(args)
        graph, labels = generate_synthetic(config)
        source = {"kind": "synthetic", **dataclasses.asdict(config)}
    return graph, labels, source


def _ensure_out(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    graph, labels, source = _load_graph(args)
    out = _ensure_out(args.out)

    def log(epoch, loss):
        if args.log_every and epoch % args.log_every == 0:
            print(f"epoch {epoch} loss {loss:.6f}")

    model, report = fit(graph, config, log=log)
    z = model.embed()
    export_embeddings(os.path.join(out, "embeddings.csv"), z)
    save_params(os.path.join(out, "checkpoint.gtck"), model.params)
    with open(os.path.join(out, "loss.csv"), "w", encoding="utf-8") as f:
        f.write("epoch,total,hops_anchor,schema_anchor\n")
        for i, (t, h, s) in enumerate(zip(report.losses, report.hops_losses,
                                          report.schema_losses)):
            f.write(f"{i},{t:.8f},{h:.8f},{s:.8f}\n")
    run = {
        "config": dataclasses.asdict(config),
        "source": source,
        "report": {
            "best_epoch": report.best_epoch,
            "best_loss": report.best_loss,
            "epochs_run": report.epochs_run,
            "stopped_early": report.stopped_early,
            "wall_seconds": round(report.wall_seconds, 3),
        },
        "embedding_shape": list(z.shape),
    }
    with open(os.path.join(out, "run.json"), "w", encoding="utf-8") as f:
        json.dump(run, f, indent=2)
        f.write("\n")
    if labels is not None and args.eval_after:
        metrics = evaluate_embeddings(z, labels, SplitSpec(
            n_labels_per_class=args.train_per_class), n_runs=args.runs)
        with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as f:
            json.dump(metrics.as_dict(), f, indent=2)
            f.write("\n")
        print(json.dumps(metrics.as_dict(), indent=2))
    print(f"trained {report.epochs_run} epochs; best loss {report.best_loss:.6f} "
          f"at epoch {report.best_epoch}")
    print(f"wrote embeddings, checkpoint, loss curve and run manifest to {out}")
    return 0


def _cmd_eval(args) -> int:
    z = load_embeddings(args.embeddings)
    if args.data:
        _, labels = load_dataset(args.data)
        if labels is None:
            raise DataError(f"{args.data}: dataset has no target labels to evaluate against")
    else:
        from .datasets import _load_labels

        labels = _load_labels(args.labels, z.shape[0])
    if len(labels) != z.shape[0]:
        raise DataError(
            f"{args.embeddings}: {z.shape[0]} embedding rows vs {len(labels)} labels"
        )
    metrics = evaluate_embeddings(z, labels, SplitSpec(
        n_labels_per_class=args.train_per_class, seed=args.seed), n_runs=args.runs)
    payload = json.dumps(metrics.as_dict(), indent=2)
    print(payload)
    if args.out:
        out = _ensure_out(args.out)
        with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as f:
            f.write(payload + "\n")
    return 0


def _parse_grid(items) -> dict:
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    grid = {}
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or key not in fields or not values:
            known = ", ".join(sorted(fields))
            raise ConfigError(f"bad --grid {item!r}; expect KEY=V1,V2 with KEY one "
                              f"of: {known}")
        grid[key] = [_coerce(fields[key].type, key, v) for v in values.split(",")]
    return grid


def _cmd_sweep(args) -> int:
    graph, labels, _ = _load_graph(args)
    seed = args.seed if args.seed is not None else 0
    out = _ensure_out(args.out)
    base = _config_from_args(args)
    if args.grid:
        grid = _parse_grid(args.grid)
        best, rows = grid_search(graph, labels, base, grid, seeds=(seed,),
                                 n_labels_per_class=args.train_per_class)
        keys = sorted(grid)
        path = os.path.join(out, "grid.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write(",".join(keys + ["score"]) + "\n")
            for row in rows:
                f.write(",".join([str(row[k]) for k in keys] + [f"{row['score']:.6f}"])
                        + "\n")
        for row in rows:
            combo = " ".join(f"{k}={row[k]}" for k in keys)
            print(f"{combo} score {row['score']:.4f}")
        if best is not None:
            print("best: " + " ".join(f"{k}={getattr(best, k)}" for k in keys))
        print(f"wrote {path}")
        return 0
    if labels is None:
        raise DataError("depth sweep needs labeled target nodes")
    depths = [int(v) for v in args.depths.split(",") if v]
    methods = tuple(v for v in args.methods.split(",") if v)
    rows = oversmoothing_sweep(
        graph, labels, depths, methods=methods, base_config=base,
        split_spec=SplitSpec(n_labels_per_class=args.train_per_class, seed=seed),
        out_csv=os.path.join(out, "sweep.csv"))
    for row in rows:
        print(f"depth {row['depth']:>3} {row['method']:<12} "
              f"mi_f1 {row['mi_f1']:.4f} ma_f1 {row['ma_f1']:.4f}")
    print(f"wrote {os.path.join(out, 'sweep.csv')}")
    return 0


def _cmd_tokens(args) -> int:
    graph, _, source = _load_graph(args)
    token_set = build_token_set(graph, args.hops)
    out = _ensure_out(args.out)
    path = os.path.join(out, "tokens.gtck")
    save_params(path, dict(token_set.tokens))
    for name in token_set.path_names:
        print(f"{name}: shape {token_set.tokens[name].shape}")
    with open(os.path.join(out, "tokens.json"), "w", encoding="utf-8") as f:
        json.dump({"n_hops": token_set.n_hops, "file": os.path.basename(path),
                   "paths": list(token_set.path_names), "source": source}, f, indent=2)
        f.write("\n")
    print(f"wrote {path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="gtc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND",
                                parser_class=_Parser)

    p_train = sub.add_parser("train",
                             help="train embeddings and write run artifacts")
    _add_data_args(p_train)
    _add_train_args(p_train)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--log-every", type=int, default=20,
                         help="print loss every N epochs (0 silences)")
    p_train.add_argument("--eval-after", action="store_true",
                         help="also run the evaluation protocol when labels exist")
    p_train.add_argument("--runs", type=int, default=10, help="evaluation repetitions")
    p_train.add_argument("--train-per-class", type=int, default=20,
                         help="probe train labels per class")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval",
                            help="score exported embeddings against labels")
    p_eval.add_argument("--embeddings", required=True,
                        help="embeddings file (CSV or binary export)")
    src = p_eval.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", metavar="MANIFEST", help="dataset manifest for labels")
    src.add_argument("--labels", metavar="TSV", help="two-column node/label file")
    p_eval.add_argument("--runs", type=int, default=10)
    p_eval.add_argument("--train-per-class", type=int, default=20)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default=None, help="optional output directory")
    p_eval.set_defaults(func=_cmd_eval)

    p_sweep = sub.add_parser("sweep",
                             help="depth sweep against supervised baselines")
    _add_data_args(p_sweep)
    _add_train_args(p_sweep)
    p_sweep.add_argument("--depths", default="1,2,4,8,16",
                         help="comma-separated depths")
    p_sweep.add_argument("--methods", default="gtc,rgcn,gcn",
                         help="comma-separated methods")
    p_sweep.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                         help="run a hyperparameter grid search instead (repeatable)")
    p_sweep.add_argument("--train-per-class", type=int, default=20)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_tokens = sub.add_parser("tokens",
                              help="export hop token sequences per metapath")
    _add_data_args(p_tokens)
    p_tokens.add_argument("--hops", type=int, default=3)
    p_tokens.add_argument("--out", required=True)
    p_tokens.set_defaults(func=_cmd_tokens)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except ConfigError as e:
        print(f"gtc: configuration error: {e}", file=sys.stderr)
        return USAGE_EXIT
    except NumericError as e:
        print(f"gtc: numeric failure: {e}", file=sys.stderr)
        return NUMERIC_EXIT
    except (DataError, OSError) as e:
        print(f"gtc: data error: {e}", file=sys.stderr)
        return DATA_EXIT
    except GtcError as e:
        print(f"gtc: data error: {e}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
