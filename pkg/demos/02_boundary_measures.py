"""Integration by parts and total variation of the boundary measures.

For ``nu^n`` proportional to ``exp(-2 U_n)`` times a base measure,
``int d_h phi dnu^n = int phi dSigma_h^n`` defines a signed measure
``Sigma_h^n``.  Its total variation is computed twice: by integrating the
absolute density directly and by the line-minimum formula.  As ``n`` grows
the mass of ``Sigma_h^n`` concentrates on the boundary and the total
variation climbs to that of the limit surface measure.

Run with ``python3 demos/02_boundary_measures.py``.
"""

import numpy as np

from penreflect import observables as ob
from penreflect.base_system import LinearSystem
from penreflect.measures import (GibbsMeasure, ibp_residual, sigma_limit_convex_body, sigma_n,
                                 tv_by_min_formula)
from penreflect.potential import Ball, Box, NonnegativeCone, YosidaEnvelope

std = LinearSystem([[-0.5]])  # base N(0, 1)

print("half-line over N(0,1): tv of Sigma_h^n against 2 sqrt(2/pi) =", 2 * np.sqrt(2 / np.pi))
print("      n     direct    formula")
for n in (1, 16, 256, 4096):
    g = GibbsMeasure(YosidaEnvelope(NonnegativeCone(1), n), "gaussian", std)
    print(f"{n:7d} {sigma_n(g, [1.0]).tv:10.6f} {tv_by_min_formula(g, [1.0])[0]:10.6f}")
limit = GibbsMeasure(NonnegativeCone(1), "gaussian", std)
print(f"  limit {'':10s} {tv_by_min_formula(limit, [1.0])[0]:10.6f}")

print("\nunit disc, uniform law: tv -> 4/pi =", 4 / np.pi)
for n in (4, 64, 1024):
    g = GibbsMeasure(YosidaEnvelope(Ball([0.0, 0.0], 1.0), n))
    print(f"{n:7d} {tv_by_min_formula(g, [1.0, 0.0])[0]:10.6f}")
print(f"  limit {sigma_limit_convex_body(Ball([0.0, 0.0], 1.0), [1.0, 0.0]).tv:10.6f}")

print("\nintegration-by-parts residuals on the square")
phi = ob.cosine([0.7, 0.7], 0.3)
for g in (GibbsMeasure(YosidaEnvelope(Box([-1, -1], [1, 1]), 64.0)),
          GibbsMeasure(Box([-1, -1], [1, 1]))):
    s = sigma_n(g, [0.6, -0.8])
    print(f"  {g!r}: {ibp_residual(g, s, phi).value:.2e}")
