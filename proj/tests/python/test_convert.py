import pathlib
import pickle
import subprocess
import sys

import numpy as np
import scipy.sparse as sp

import gradflow

SCRIPT = pathlib.Path(__file__).resolve().parents[2] / "tools" / "convert_planetoid.py"


def run(*args):
    subprocess.run([sys.executable, str(SCRIPT), *map(str, args)], check=True, capture_output=True)


def test_npz_layout(tmp_path):
    src = tmp_path / "toy_filtered.npz"
    edges = np.array([[0, 1], [1, 0], [1, 2], [2, 3], [3, 3]])
    masks = np.zeros((2, 4), dtype=bool)
    masks[0, 0] = True
    val, test = masks.copy(), masks.copy()
    val[0] = [False, True, False, False]
    test[0] = [False, False, True, True]
    np.savez(src, node_features=np.eye(4, 2), node_labels=np.array([0, 1, 0, 1]), edges=edges,
             train_masks=masks, val_masks=val, test_masks=test)
    run("npz", src, tmp_path / "out")
    g = gradflow.Graph.load(tmp_path / "out")
    assert g.num_nodes == 4
    assert g.num_edges == 3
    assert g.labels == [0, 1, 0, 1]
    assert (tmp_path / "out" / "masks.txt").read_text() == "t\nv\ns\ns\n"


def test_planetoid_layout(tmp_path):
    raw = tmp_path / "raw"
    raw.mkdir()
    onehot = np.eye(2)
    parts = {
        "x": sp.csr_matrix(np.ones((1, 3))),
        "y": onehot[[0]],
        "allx": sp.csr_matrix(np.arange(9.0).reshape(3, 3)),
        "ally": onehot[[0, 1, 0]],
        "tx": sp.csr_matrix(np.array([[5.0, 5, 5], [4.0, 4, 4]])),
        "ty": onehot[[1, 0]],
        "graph": {0: [1], 1: [0, 2], 2: [3, 2], 3: [4], 4: [0]},
    }
    for key, value in parts.items():
        with open(raw / f"ind.toy.{key}", "wb") as fh:
            pickle.dump(value, fh)
    # Test rows arrive in file order 4, 3 and must be placed by index.
    (raw / "ind.toy.test.index").write_text("4\n3\n")
    run("planetoid", raw, tmp_path / "out", "--name", "toy")
    g = gradflow.Graph.load(tmp_path / "out")
    assert g.num_nodes == 5
    assert g.num_edges == 5
    assert g.features[4].tolist() == [5.0, 5.0, 5.0]
    assert g.labels == [0, 1, 0, 0, 1]
    assert (tmp_path / "out" / "masks.txt").read_text() == "t\nv\nv\ns\ns\n"
