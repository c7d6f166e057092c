"""Command line entry point for the featurization pipeline."""

from __future__ import annotations

import argparse
import sys

from dataprep.prep import PrepConfig, prep_dataset

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dataprep",
        description="Featurize a SMILES CSV into model-ready JSONL.")
    parser.add_argument("input", help="input CSV path")
    parser.add_argument("output", help="output JSONL path")
    parser.add_argument("--smiles-col", default="smiles",
                        help="CSV column holding SMILES (default: smiles)")
    parser.add_argument("--label-cols", default="",
                        help="comma-separated label column names")
    parser.add_argument("--k", type=int, default=5,
                        help="conformers per molecule (default: 5)")
    parser.add_argument("--seed", type=int, default=42,
                        help="conformer embedding seed (default: 42)")
    parser.add_argument("--temperature", type=float, default=298.0,
                        help="ensemble temperature recorded in the manifest")
    parser.add_argument("--context-dim", type=int, default=4,
                        help="dimension of the zero-filled context vector")
    parser.add_argument("--max", type=int, default=None, dest="max_molecules",
                        help="process at most this many rows")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    label_cols = tuple(c.strip() for c in args.label_cols.split(",") if c.strip())
    try:
        cfg = PrepConfig(
            input_path=args.input, output_path=args.output,
            smiles_column=args.smiles_col, label_columns=label_cols,
            n_conformers=args.k, conformer_seed=args.seed,
            temperature=args.temperature, context_dim=args.context_dim,
            max_molecules=args.max_molecules)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = prep_dataset(cfg)
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"wrote {manifest['count']} records "
          f"({len(manifest['skipped'])} skipped) to {cfg.output_path}")
    if manifest["count"] == 0:
        print("warning: 0 molecules written", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
