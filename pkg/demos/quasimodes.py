"""Cut-off sphere eigenfunctions as approximate eigenfunctions of the chain.

Take the first eigenfunction of one sphere, cut it off near the necks and
measure how far it is from being an eigenfunction of the whole chain.  Ten
copies on disjoint blocks form an orthonormal family with small residuals,
which certifies spectrum near lambda = 2.

    python3 demos/quasimodes.py
"""
from gaplab.geometry import ChainConfig, assemble_chain
from gaplab.operators import sl_discretize
from gaplab.quasimode import CutoffSpec, build_quasimode, donnelly_report, quasimode_family, residual

chain = assemble_chain(ChainConfig(blocks=20, eps=0.05, h=0.005))
op = sl_discretize(chain, 1, "periodic")

for rho in (1e-2, 1e-3, 1e-4):
    qm = build_quasimode(chain, 0, m=1, k=1, spec=CutoffSpec(rho=rho, kind="smoothstep"))
    print(f"rho = {rho:g}: residual {residual(op, qm):.4f}")

fam = quasimode_family(chain, 1, 1, CutoffSpec(rho=1e-3, kind="smoothstep"), range(0, 20, 2))
rep = donnelly_report(fam, 2.0, eps0=0.2)
print(f"family of {rep.count}: max residual {rep.max_residual:.3f}, "
      f"smallest Gram eigenvalue {rep.gram_min_eig:.3f}, passes {rep.passes}")
