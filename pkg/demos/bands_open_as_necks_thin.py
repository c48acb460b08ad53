"""Bands of a periodic chain of unit spheres as the necks get thinner.

Each block is a unit sphere; consecutive blocks are joined by a catenoidal
neck of waist eps.  For thin necks the spectrum below 13 collapses onto the
sphere eigenvalues 0, 2, 6, 12 and the gaps between them open up.

    python3 demos/bands_open_as_necks_thin.py
"""
from gaplab.geometry import ChainConfig, assemble_chain
from gaplab.gaps import band_structure, hausdorff

MODEL = [0.0, 2.0, 6.0, 12.0]

for eps, h in [(0.2, 0.01), (0.1, 0.005), (0.05, 0.005)]:
    chain = assemble_chain(ChainConfig(blocks=1, eps=eps, h=h, periodic=True))
    rep = band_structure(chain, 13.0, model=MODEL)
    print(f"eps = {eps}: period {chain.period:.4f}, {rep.gap_count} gaps, "
          f"distance of the bands to the model spectrum {hausdorff(rep.bands, MODEL):.3f}")
    for lo, hi in rep.bands:
        print(f"    band [{lo:8.4f}, {hi:8.4f}]")

# higher Fourier modes contribute very thin bands sitting on the model points
for b in rep.mode_bands:
    if b.hi - b.lo < 1e-3:
        print(f"thin band in mode {b.mode}: width {b.hi - b.lo:.2e} at {b.lo:.6f}")
