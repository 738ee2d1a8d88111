#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled with the `mnist` npm package into
standard gzipped IDX files (8000 train / 2000 test).

Usage: npm install mnist && python3 scripts/build_mnist_subset.py node_modules/mnist data/mnist-subset
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

SIZE = 28 * 28
N_TRAIN = 8000


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(pkg, out):
    pkg, out = Path(pkg), Path(out)
    samples = []
    for digit in range(10):
        raw = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        for start in range(0, len(raw) - SIZE + 1, SIZE):
            pixels = [min(255, max(0, round(v * 255))) for v in raw[start:start + SIZE]]
            samples.append((pixels, digit))
    random.Random(20240601).shuffle(samples)
    train, test = samples[:N_TRAIN], samples[N_TRAIN:]
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte.gz", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte.gz", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte.gz", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte.gz", [s[1] for s in test])
    print(f"{len(train)} train / {len(test)} test samples written to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
