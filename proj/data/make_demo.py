#!/usr/bin/env python3
"""Writes demo.embset: two views of each of four objects.

Each object has a random direction; its two views are that direction plus
independent noise, so a view's nearest taught key is always its own object.
"""
import base64
import math
import random
import struct
import sys

DIM = 384
OBJECTS = ["watch", "bottle", "can", "knife"]
NOISE = 0.35


def unit(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def main(path):
    rng = random.Random(7)
    scale = math.sqrt(DIM)
    lines = [f"EMBSET v1 dim={DIM} count={2 * len(OBJECTS)} precision=f32"]
    for name in OBJECTS:
        center = unit([rng.gauss(0, 1) for _ in range(DIM)])
        for view in ("a", "b"):
            noise = unit([rng.gauss(0, 1) for _ in range(DIM)])
            v = unit([c + NOISE * z for c, z in zip(center, noise)])
            blob = struct.pack(f"<{DIM}f", *(x * scale for x in v))
            lines.append(f"{name}/{view}\t{name}\t{base64.b64encode(blob).decode()}")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "demo.embset")
