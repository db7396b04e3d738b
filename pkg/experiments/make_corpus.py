"""Synthesize a seeded random-peptide FASTA corpus for the pipeline scripts.

Single-chain mode writes one record per sequence. With --chains, each complex
gets one record per chain, headers tagged ``<complex>|chain=<name>`` so the
training commands can regroup them.

Usage:
    python experiments/make_corpus.py --n 500 --out runs/corpus.fasta
    python experiments/make_corpus.py --n 200 --chains A:12,B:9 --out runs/mc.fasta
"""

import argparse
import os

import numpy as np

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"


def random_peptide(gen, lo, hi):
    length = int(gen.integers(lo, hi + 1))
    return "".join(ALPHABET[k] for k in gen.integers(0, len(ALPHABET), size=length))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=500, help="sequences (or complexes)")
    parser.add_argument("--min-len", type=int, default=2)
    parser.add_argument("--max-len", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument(
        "--chains",
        default=None,
        help="comma-separated name:max_len list; emits per-chain tagged records",
    )
    args = parser.parse_args()

    gen = np.random.default_rng(args.seed)
    records = []
    if args.chains:
        chains = []
        for part in args.chains.split(","):
            name, _, cap = part.strip().partition(":")
            chains.append((name, int(cap)))
        for i in range(args.n):
            for name, cap in chains:
                lo = min(args.min_len, cap)
                seq = random_peptide(gen, lo, min(args.max_len, cap))
                records.append((f"complex{i}|chain={name}", seq))
    else:
        for i in range(args.n):
            records.append((f"seq{i}", random_peptide(gen, args.min_len, args.max_len)))

    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w") as f:
        for header, seq in records:
            f.write(f">{header}\n{seq}\n")
    print(f"wrote {len(records)} records to {args.out}")


if __name__ == "__main__":
    main()
