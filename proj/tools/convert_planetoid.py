#!/usr/bin/env python3
"""Convert public graph benchmark releases into gradflow's plain-text format.

Two input layouts are understood:

  planetoid   the raw Planetoid files (ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}),
              as shipped for cora and citeseer. The fixed public split is kept:
              the first len(y) nodes train, the next 500 validate, test.index tests.
  npz         the filtered heterophily releases (<name>_filtered.npz with node_features,
              node_labels, edges and *_masks arrays). The first split is used.

Output directory layout: edges.tsv, features.txt, labels.txt, masks.txt.

    python tools/convert_planetoid.py planetoid ~/raw/cora data/cora --name cora
    python tools/convert_planetoid.py npz ~/raw/chameleon_filtered.npz data/chameleon
"""

import argparse
import pathlib
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def _load_pickle(path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def read_planetoid(directory, name):
    directory = pathlib.Path(directory)
    keys = ("x", "y", "tx", "ty", "allx", "ally", "graph")
    parts = {key: _load_pickle(directory / f"ind.{name}.{key}") for key in keys}
    test_index = [int(line) for line in (directory / f"ind.{name}.test.index").read_text().split()]
    test_sorted = np.sort(test_index)

    tx, ty = parts["tx"], parts["ty"]
    if name == "citeseer":
        # Some citeseer test ids have no feature row; pad them with zeros.
        full = range(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        tx, ty = tx_ext, ty_ext

    features = sp.vstack((parts["allx"], tx)).tolil()
    features[test_index, :] = features[test_sorted, :]
    onehot = np.vstack((parts["ally"], ty))
    onehot[test_index, :] = onehot[test_sorted, :]

    n = features.shape[0]
    labels = onehot.argmax(axis=1)
    # Rows with no label (the citeseer padding) keep class 0 and are never in a split.
    masks = np.full(n, "-")
    n_train = parts["y"].shape[0]
    masks[:n_train] = "t"
    masks[n_train:n_train + 500] = "v"
    masks[test_index] = "s"

    edges = set()
    for u, nbrs in parts["graph"].items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))
    return np.asarray(features.todense(), dtype=np.float64), labels, sorted(edges), masks


def read_npz(path):
    data = np.load(path)
    features = np.asarray(data["node_features"], dtype=np.float64)
    labels = np.asarray(data["node_labels"], dtype=np.int64)
    n = features.shape[0]
    edges = set()
    for u, v in np.asarray(data["edges"]):
        if u != v:
            edges.add((int(min(u, v)), int(max(u, v))))
    masks = np.full(n, "-")
    for key, code in (("train_masks", "t"), ("val_masks", "v"), ("test_masks", "s")):
        m = np.asarray(data[key])
        if m.ndim == 2:
            m = m[0]
        masks[m.astype(bool)] = code
    return features, labels, sorted(edges), masks


def write(out_dir, features, labels, edges, masks):
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w", newline="\n") as fh:
        fh.writelines(f"{u}\t{v}\n" for u, v in edges)
    with open(out / "features.txt", "w", newline="\n") as fh:
        fh.write(f"{features.shape[0]} {features.shape[1]}\n")
        for row in features:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    with open(out / "labels.txt", "w", newline="\n") as fh:
        fh.writelines(f"{int(y)}\n" for y in labels)
    with open(out / "masks.txt", "w", newline="\n") as fh:
        fh.writelines(f"{m}\n" for m in masks)
    print(f"{out}: {features.shape[0]} nodes, {len(edges)} edges, {len(set(labels.tolist()))} classes")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("layout", choices=("planetoid", "npz"))
    parser.add_argument("source", help="raw Planetoid directory or .npz file")
    parser.add_argument("out", help="output directory")
    parser.add_argument("--name", default="cora", help="Planetoid dataset name (cora, citeseer)")
    args = parser.parse_args(argv)

    if args.layout == "planetoid":
        features, labels, edges, masks = read_planetoid(args.source, args.name)
    else:
        features, labels, edges, masks = read_npz(args.source)
    write(args.out, features, labels, edges, masks)
    return 0


if __name__ == "__main__":
    sys.exit(main())
