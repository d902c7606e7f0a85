"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical error.
Flags override values from an optional JSON config file (--config); config
keys mirror flag names (hyphens or underscores both accepted).
"""

import argparse
import json
import sys
from pathlib import Path

from .analysis import format_neighbors, nearest_classes, neighbors_to_csv
from .cem import AlignmentConfig, fit, load_pair, save_pair
from .data import (
    check_split_coverage,
    load_assignments,
    load_embeddings,
    load_matrix,
    load_split,
)
from .episodes import (
    DataBundle,
    EvalConfig,
    evaluate,
    gen_synthetic,
    save_report,
    sweep,
    sweep_to_csv,
)
from .errors import DataError, FormatError, NumericalError
from .mapnet import init_adam, init_mapnet, load_mapnet, save_mapnet, train
from .prototypes import global_prototypes


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = Parser(prog="protoalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    def data_flags(p):
        p.add_argument("--text", help="class-name embeddings (CMVEC)")
        p.add_argument("--features", help="visual features (CMVEC, image-id keyed)")
        p.add_argument("--assign", help="image-id,class_name CSV")
        p.add_argument("--splits", help="base/val/novel JSON")

    p = sub.add_parser("align", help="fit a projection pair")
    data_flags(p)
    p.add_argument("--method", choices=["cca", "cca+d"])
    p.add_argument("--dim", type=int)
    p.add_argument("--eps-rel", type=float)
    p.add_argument("--center", action="store_const", const=True)
    p.add_argument("--section", choices=["base", "val", "novel"])
    p.add_argument("--out")

    p = sub.add_parser("eval", help="evaluate a scoring variant over episodes")
    data_flags(p)
    p.add_argument("--variant", choices=["s1", "s2", "s3"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--proj", help="projection pair directory (s3)")
    p.add_argument("--net", help="mapping network directory (s2)")
    p.add_argument("--n-way", type=int)
    p.add_argument("--k-shot", type=int)
    p.add_argument("--query", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--section", choices=["base", "val", "novel"])
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--report")

    p = sub.add_parser("train-map", help="train the mapping network on base episodes")
    data_flags(p)
    p.add_argument("--episodes", type=int)
    p.add_argument("--n-way", type=int)
    p.add_argument("--k-shot", type=int)
    p.add_argument("--query", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--log-interval", type=int)
    p.add_argument("--order", choices=["relu-norm", "norm-relu"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="grid over lambda and d")
    data_flags(p)
    p.add_argument("--lambdas", help="comma-separated values, e.g. 0,1,2")
    p.add_argument("--dims", help="comma-separated target dimensions")
    p.add_argument("--method", choices=["cca", "cca+d"])
    p.add_argument("--eps-rel", type=float)
    p.add_argument("--center", action="store_const", const=True)
    p.add_argument("--n-way", type=int)
    p.add_argument("--k-shot", type=int)
    p.add_argument("--query", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--section", choices=["base", "val", "novel"])
    p.add_argument("--fit-section", choices=["base", "val", "novel"])
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")

    p = sub.add_parser("neighbors", help="nearest classes by embedding cosine")
    p.add_argument("--table", help="embedding table (CMVEC)")
    p.add_argument("--target")
    p.add_argument("--k", type=int)
    p.add_argument("--proj", help="optional projection pair directory")
    p.add_argument("--csv", help="optional CSV output path")

    p = sub.add_parser("gen-synthetic", help="write a seeded synthetic data bundle")
    p.add_argument("--classes", type=int)
    p.add_argument("--images-per-class", type=int)
    p.add_argument("--dim-text", type=int)
    p.add_argument("--dim-vis", type=int)
    p.add_argument("--signal", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("inspect", help="print file headers without modifying anything")
    p.add_argument("paths", nargs="+")

    for sp in sub.choices.values():
        sp.add_argument("--config", help="JSON file with defaults for these flags")
    return parser


DEFAULTS = {
    "align": {"method": "cca+d", "eps_rel": 1e-10, "center": False, "section": "base"},
    "eval": {"lam": 0.0, "n_way": 5, "k_shot": 5, "query": 15, "episodes": 600,
             "section": "novel", "seed": 0, "threads": 1},
    "train-map": {"episodes": 1000, "n_way": 5, "k_shot": 5, "query": 15, "lam": 5.0,
                  "hidden": 512, "lr": 1e-4, "log_interval": 100, "order": "relu-norm",
                  "seed": 0},
    "sweep": {"method": "cca+d", "eps_rel": 1e-10, "center": False, "n_way": 5,
              "k_shot": 5, "query": 15, "episodes": 600, "section": "novel",
              "fit_section": "base", "seed": 0, "threads": 1},
    "neighbors": {},
    "gen-synthetic": {"images_per_class": 50, "signal": 1.0, "seed": 0},
    "inspect": {},
}

REQUIRED = {
    "align": ("text", "features", "assign", "splits", "dim", "out"),
    "eval": ("text", "features", "assign", "splits", "variant", "report"),
    "train-map": ("text", "features", "assign", "splits", "out"),
    "sweep": ("text", "features", "assign", "splits", "lambdas", "dims", "out"),
    "neighbors": ("table", "target", "k"),
    "gen-synthetic": ("classes", "dim_text", "dim_vis", "noise", "out"),
    "inspect": (),
}


def apply_config_and_defaults(args):
    if getattr(args, "config", None):
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config file: {e}") from None
        if not isinstance(overrides, dict):
            raise UsageError("config file must hold a JSON object")
        for key, value in overrides.items():
            dest = "lam" if key == "lambda" else key.replace("-", "_")
            if not hasattr(args, dest):
                raise UsageError(f"config key {key!r} does not match any flag")
            if getattr(args, dest) is None:
                setattr(args, dest, value)
    for dest, value in DEFAULTS[args.command].items():
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    missing = [d for d in REQUIRED[args.command] if getattr(args, d) in (None, [])]
    if missing:
        flags = ", ".join("--" + d.replace("_", "-") for d in missing)
        raise UsageError(f"missing required arguments: {flags}")
    return args


def load_data_bundle(args):
    text = load_embeddings(args.text)
    features = load_embeddings(args.features)
    store = load_assignments(args.assign, features)
    split = load_split(args.splits)
    return DataBundle(text=text, store=store, split=split)


def parse_number_list(raw, kind, what):
    try:
        return [kind(tok) for tok in str(raw).split(",") if tok != ""]
    except ValueError:
        raise UsageError(f"cannot parse {what} list {raw!r}") from None


def cmd_align(args):
    bundle = load_data_bundle(args)
    classes = bundle.split.section(args.section)
    x0 = bundle.text.rows(classes)
    y0 = global_prototypes(bundle.store, classes).matrix
    config = AlignmentConfig(
        d=args.dim, method=args.method, eps_rel=args.eps_rel, center=args.center
    )
    pair = fit(x0, y0, config)
    save_pair(pair, args.out)
    print(
        f"fitted {args.method} on {len(classes)} classes: "
        f"d={args.dim}, top correlation {pair.correlations[0]:.6f} -> {args.out}"
    )
    return 0


def cmd_eval(args):
    bundle = load_data_bundle(args)
    check_split_coverage(bundle.split, bundle.store)
    pair = net = None
    if args.variant == "s3":
        if not args.proj:
            raise UsageError("--variant s3 requires --proj")
        pair = load_pair(args.proj)
    if args.variant == "s2":
        if not args.net:
            raise UsageError("--variant s2 requires --net")
        net = load_mapnet(args.net)
        net.mode = "eval"
    config = EvalConfig(
        variant=args.variant, lam=args.lam, n_way=args.n_way,
        k_shot=args.k_shot, n_query=args.query, section=args.section,
    )
    report = evaluate(
        config, bundle, args.episodes, args.seed,
        pair=pair, net=net, threads=args.threads,
    )
    save_report(report, args.report)
    print(
        f"{args.variant}: accuracy {report.mean_accuracy:.4f} "
        f"+- {report.ci95_half_width:.4f} over {args.episodes} episodes -> {args.report}"
    )
    return 0


def cmd_train_map(args):
    bundle = load_data_bundle(args)
    net = init_mapnet(
        bundle.text.dim, bundle.store.dim, hidden=args.hidden, seed=args.seed,
        relu_before_norm=(args.order == "relu-norm"),
    )
    adam = init_adam(net, lr=args.lr)
    _, curve = train(
        net, bundle.store, bundle.text, bundle.split.base, adam,
        episodes=args.episodes, n_way=args.n_way, k_shot=args.k_shot,
        n_query=args.query, lam=args.lam, seed=args.seed,
        log_interval=args.log_interval,
    )
    net.mode = "eval"
    save_mapnet(net, args.out, adam=adam)
    with open(Path(args.out) / "losses.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("episode,loss\n")
        for index, loss in curve:
            fh.write(f"{index},{loss!r}\n")
    last = curve[-1][1] if curve else float("nan")
    print(f"trained {args.episodes} episodes, final loss {last:.6f} -> {args.out}")
    return 0


def cmd_sweep(args):
    bundle = load_data_bundle(args)
    lambdas = parse_number_list(args.lambdas, float, "lambda")
    dims = parse_number_list(args.dims, int, "dimension")
    rows = sweep(
        lambdas, dims, bundle, method=args.method, eps_rel=args.eps_rel,
        center=args.center, fit_section=args.fit_section, n_way=args.n_way,
        k_shot=args.k_shot, n_query=args.query, section=args.section,
        episodes=args.episodes, seed=args.seed, threads=args.threads,
    )
    sweep_to_csv(rows, args.out)
    best = max(rows, key=lambda row: row[2].mean_accuracy)
    print(
        f"swept {len(rows)} cells; best accuracy {best[2].mean_accuracy:.4f} "
        f"at lambda={best[0]}, d={best[1]} -> {args.out}"
    )
    return 0


def cmd_neighbors(args):
    table = load_embeddings(args.table)
    pair = load_pair(args.proj) if args.proj else None
    rows = nearest_classes(table, args.target, args.k, pair=pair)
    print(format_neighbors(rows))
    if args.csv:
        neighbors_to_csv(rows, args.csv)
    return 0


def cmd_gen_synthetic(args):
    gen_synthetic(
        classes=args.classes, images_per_class=args.images_per_class,
        dim_text=args.dim_text, dim_vis=args.dim_vis, signal=args.signal,
        noise=args.noise, seed=args.seed, out_dir=args.out,
    )
    print(
        f"wrote {args.classes} classes x {args.images_per_class} images "
        f"(m_t={args.dim_text}, m_v={args.dim_vis}) -> {args.out}"
    )
    return 0


def _inspect_one(path):
    path = Path(path)
    if path.is_dir():
        meta = path / "meta.json"
        if meta.is_file():
            print(f"{path}: directory with meta.json: {meta.read_text().strip()}")
            return
        raise DataError(f"{path}: directory without meta.json")
    head = path.read_bytes()[:4]
    if head == b"CMV1":
        table = load_embeddings(path)
        print(f"{path}: CMVEC, {len(table)} records, dim {table.dim}")
    elif head == b"CMM1":
        matrix = load_matrix(path)
        print(f"{path}: CMMAT, {matrix.shape[0]} x {matrix.shape[1]}")
    elif path.suffix == ".json":
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON: {e}") from None
        if isinstance(payload, dict):
            print(f"{path}: JSON object with keys {sorted(payload)}")
        else:
            print(f"{path}: JSON {type(payload).__name__}")
    elif path.suffix == ".csv":
        lines = path.read_text(encoding="utf-8").splitlines()
        header = lines[0] if lines else ""
        print(f"{path}: CSV, header [{header}], {max(len(lines) - 1, 0)} rows")
    else:
        raise FormatError(f"{path}: unrecognized file (magic {head!r})")


def cmd_inspect(args):
    for path in args.paths:
        _inspect_one(path)
    return 0


COMMANDS = {
    "align": cmd_align,
    "eval": cmd_eval,
    "train-map": cmd_train_map,
    "sweep": cmd_sweep,
    "neighbors": cmd_neighbors,
    "gen-synthetic": cmd_gen_synthetic,
    "inspect": cmd_inspect,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("no command given (see --help)")
        apply_config_and_defaults(args)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (FormatError, DataError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
