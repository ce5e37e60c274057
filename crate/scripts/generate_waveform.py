#!/usr/bin/env python3
"""Regenerate data/waveform.csv (Breiman's waveform generator, 21 attributes, 3 classes).

Each instance is a random convex combination of two of three shifted triangular
base waves plus unit Gaussian noise on every attribute.
"""
import csv
import sys

import numpy as np

N_ROWS = 5000
SEED = 20190329


def base_waves():
    i = np.arange(1, 22)
    h1 = np.maximum(6 - np.abs(i - 11), 0)
    h2 = np.maximum(6 - np.abs(i - 15), 0)
    h3 = np.maximum(6 - np.abs(i - 7), 0)
    return h1, h2, h3


def main(path):
    rng = np.random.default_rng(SEED)
    h1, h2, h3 = base_waves()
    pairs = [(h1, h2), (h1, h3), (h2, h3)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{k}" for k in range(1, 22)] + ["class"])
        for _ in range(N_ROWS):
            cls = int(rng.integers(0, 3))
            u = rng.random()
            a, b = pairs[cls]
            x = u * a + (1 - u) * b + rng.standard_normal(21)
            w.writerow([f"{v:.2f}" for v in x] + [cls])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/waveform.csv")
