"""CLI for producing class-name embeddings and frozen image features."""

import argparse
import json
import sys
from pathlib import Path

from .cmvec import write_cmvec
from .corpus import DEFAULT_M, DEFAULT_TMAX, build_bags, read_corpus
from .embed import extract_mask, extract_nomask
from .images import dump_features, load_encoder, read_manifest
from .models import load_text_model


def build_parser():
    parser = argparse.ArgumentParser(prog="cnextract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="class-name embeddings from a corpus")
    p.add_argument("--strategy", choices=["mask", "nomask"], required=True)
    p.add_argument("--corpus", required=True, help="text file, one sentence per line")
    p.add_argument("--classes", required=True, help="synsets JSON: class -> names")
    p.add_argument("--tmax", type=int, default=DEFAULT_TMAX,
                   help="max word-piece tokens per retained sentence")
    p.add_argument("--m", type=int, default=DEFAULT_M, help="sentences sampled per name")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--model", default="toy",
                   help='"toy", "toy:<dim>", or a Hugging Face checkpoint')
    p.add_argument("--out", required=True, help="output CMVEC path")

    p = sub.add_parser("dump-features", help="encode images listed in a manifest")
    p.add_argument("--manifest", required=True, help="CSV: image_id,class_name,path")
    p.add_argument("--encoder", default="grid", help='"grid" or "grid:<n>"')
    p.add_argument("--out", required=True, help="output CMVEC path")
    p.add_argument("--assign", required=True, help="output assignments CSV path")
    return parser


def cmd_extract(args):
    model = load_text_model(args.model)
    synsets = json.loads(Path(args.classes).read_text(encoding="utf-8"))
    if not isinstance(synsets, dict):
        raise ValueError("synsets file must map class -> array of names")
    sentences = read_corpus(args.corpus)
    bags = build_bags(sentences, synsets, model, t_max=args.tmax, m=args.m, seed=args.seed)
    shortfall = [
        f"{bag.name}({bag.available})"
        for group in bags.values() for bag in group if bag.available < args.m
    ]
    if shortfall:
        print(f"note: fewer than m={args.m} sentences for: {', '.join(shortfall)}",
              file=sys.stderr)
    extractor = extract_mask if args.strategy == "mask" else extract_nomask
    labels, vectors, variant = extractor(bags, model)
    write_cmvec(labels, vectors, args.out)
    print(f"{variant}: {len(labels)} classes, dim {vectors.shape[1]} -> {args.out}")
    return 0


def cmd_dump_features(args):
    encoder = load_encoder(args.encoder)
    entries = read_manifest(args.manifest)
    vectors = dump_features(entries, encoder, args.out, args.assign)
    print(f"{len(entries)} images, dim {vectors.shape[1]} -> {args.out}, {args.assign}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            return cmd_extract(args)
        return cmd_dump_features(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
