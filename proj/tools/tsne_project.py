#!/usr/bin/env python3
"""Project an exported embedding table to 2-D with t-SNE.

Reads the CSV written by `txst evaluate --embeddings` and writes
`label,x,y` rows. The projection is fully determined by --seed.
"""
import argparse
import csv
import sys

import numpy as np
from sklearn.manifold import TSNE


def read_table(path):
    labels, rows = [], []
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    reader = csv.reader(lines)
    next(reader)
    for record in reader:
        labels.append(record[0])
        rows.append([float(v) for v in record[1:]])
    return labels, np.asarray(rows, dtype=np.float64)


def project(values, seed, perplexity):
    perplexity = min(perplexity, max(1.0, (len(values) - 1) / 3.0))
    tsne = TSNE(n_components=2, perplexity=perplexity, random_state=seed, init="pca", method="exact")
    return tsne.fit_transform(values)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("table")
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--perplexity", type=float, default=30.0)
    args = parser.parse_args(argv)

    labels, values = read_table(args.table)
    if len(values) < 3:
        sys.exit("need at least three rows to project")
    points = project(values, args.seed, args.perplexity)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["label", "x", "y"])
        for label, (x, y) in zip(labels, points):
            writer.writerow([label, repr(float(x)), repr(float(y))])


if __name__ == "__main__":
    main()
