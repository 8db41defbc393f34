#!/usr/bin/env python3
"""Build the desk-scale IDX dataset under data/.

The 5000-digit MNIST subset shipped inside the mlxtend wheel is downloaded with
pip, shuffled with a fixed seed, split 4000/1000 and written as the four standard IDX files.
"""
import argparse
import gzip
import io
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--train", type=int, default=4000)
    ap.add_argument("--wheel", default=None, help="use an already downloaded mlxtend wheel")
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                                   "mlxtend==0.24.0", "-d", tmp])
            wheel = next(pathlib.Path(tmp).glob("mlxtend-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            raw = gzip.decompress(zf.read(MEMBER))
    data = np.loadtxt(io.StringIO(raw.decode()), delimiter=",", dtype=np.int64)
    # label is the last column; rows are grouped by class, so shuffle once
    order = np.random.RandomState(20240601).permutation(len(data))
    data = data[order]
    labels = data[:, -1]
    images = data[:, :-1].reshape(-1, 28, 28)
    ntr = args.train
    write_idx_images(out / "train-images-idx3-ubyte", images[:ntr])
    write_idx_labels(out / "train-labels-idx1-ubyte", labels[:ntr])
    write_idx_images(out / "t10k-images-idx3-ubyte", images[ntr:])
    write_idx_labels(out / "t10k-labels-idx1-ubyte", labels[ntr:])
    print(f"wrote {ntr} train / {len(labels) - ntr} test examples to {out}")


if __name__ == "__main__":
    main()
