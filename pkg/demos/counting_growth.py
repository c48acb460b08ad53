"""Telling gaps from bands by counting eigenvalues on longer and longer chains.

A capped chain of L spheres has finitely many eigenvalues; inside a band their
number grows linearly in L, inside a gap it stays bounded.  The fitted slope
per block is the classifier.

    python3 demos/counting_growth.py
"""
from gaplab.geometry import ChainConfig
from gaplab.gaps import truncation_scan

cfg = ChainConfig(blocks=1, eps=0.02, h=0.002, periodic=False)
res = truncation_scan(cfg, [5, 10, 20], [(3.5, 4.5), (1.9, 2.1), (5.8, 6.2)])
print("L   " + "  ".join(f"[{a}, {b})" for a, b in res.intervals))
for L, row in zip(res.lengths, res.counts):
    print(f"{L:<3} " + "  ".join(f"{c:>10d}" for c in row))
for (a, b), s, c in zip(res.intervals, res.slopes, res.classes):
    print(f"[{a}, {b}): {s:.2f} per block -> {c}")
