#!/usr/bin/env python3
"""Build a class-balanced Fashion-MNIST subset in IDX format.

Source: the `fashion-mnist` npm package, which ships the 70k images as
per-class JSON arrays of raw 0..255 pixels (src/clothes/<label>.json).

    npm pack fashion-mnist && tar xzf fashion-mnist-*.tgz
    python3 scripts/make_fashion_subset.py package/src/clothes data/fashion-mnist-subset

The first TRAIN_PER_CLASS distinct images of each class go to the train split,
the next TEST_PER_CLASS distinct images (not present in train) to the test split.
Samples are interleaved by class so that any prefix is roughly balanced.
"""
import json
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 500
TEST_PER_CLASS = 100


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for label in range(10):
        rows = json.loads((src / f"{label}.json").read_text())["data"]
        seen, uniq = set(), []
        for row in rows:
            key = tuple(row)
            if len(row) != 784 or key in seen:
                continue
            seen.add(key)
            uniq.append(row)
        assert len(uniq) >= TRAIN_PER_CLASS + TEST_PER_CLASS
        train.append(uniq[:TRAIN_PER_CLASS])
        test.append(uniq[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS])

    for name, split, per_class in (("train", train, TRAIN_PER_CLASS), ("t10k", test, TEST_PER_CLASS)):
        images, labels = [], []
        for i in range(per_class):
            for label in range(10):
                images.append(split[label][i])
                labels.append(label)
        write_images(dst / f"{name}-images-idx3-ubyte", images)
        write_labels(dst / f"{name}-labels-idx1-ubyte", labels)
        print(f"{name}: {len(labels)} samples")


if __name__ == "__main__":
    main()
