#!/usr/bin/env python3
"""Build the IDX digit fixtures from the MIT-licensed `mnist` npm package.

usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/make_fixture.py package/src/digits crates/core/fixtures
"""
import json
import random
import struct
import sys
from pathlib import Path

PER_SET = 512


def write_idx(path, dims, payload):
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 0x08, len(dims)]))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main(src, dst):
    src, dst = Path(src), Path(dst)
    pools = []
    for digit in range(10):
        flat = json.load(open(src / f"{digit}.json"))["data"]
        n = len(flat) // 784
        imgs = [flat[i * 784:(i + 1) * 784] for i in range(n)]
        pools.append(imgs)
    rng = random.Random(20220614)
    for p in pools:
        rng.shuffle(p)
    for split, offset in (("train", 0), ("heldout", 60)):
        items = []
        for digit in range(10):
            take = PER_SET // 10 + (1 if digit < PER_SET % 10 else 0)
            for img in pools[digit][offset:offset + take]:
                items.append((img, digit))
        rng.shuffle(items)
        pixels = []
        for img, _ in items:
            pixels.extend(max(0, min(255, round(v * 255))) for v in img)
        write_idx(dst / f"digits-{split}-images-idx3-ubyte", (len(items), 28, 28), pixels)
        write_idx(dst / f"digits-{split}-labels-idx1-ubyte", (len(items),), [d for _, d in items])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
