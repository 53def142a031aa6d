#!/usr/bin/env python3
"""Convert the 10k MNIST digits bundled in the npm `mnist` package (MIT) to IDX.

Usage: npm pack mnist && tar xzf mnist-*.tgz && python3 mnist_from_npm.py package/src/digits data/

Writes gzipped IDX image/label files for a fixed 9000/1000 train/test split.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        for i in range(len(flat) // 784):
            px = bytes(int(round(v * 255)) for v in flat[i * 784:(i + 1) * 784])
            samples.append((px, digit))
    random.Random(20151021).shuffle(samples)
    splits = {"train": samples[:9000], "test": samples[9000:]}
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in splits.items():
        with gzip.GzipFile(out / f"mnist10k-{name}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">IIII", 0x803, len(rows), 28, 28))
            for px, _ in rows:
                f.write(px)
        with gzip.GzipFile(out / f"mnist10k-{name}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">II", 0x801, len(rows)))
            f.write(bytes(label for _, label in rows))


if __name__ == "__main__":
    main()
