"""Moreau-Yosida envelopes of convex indicators and quadratics.

The envelope ``U_n(x) = inf_y U(y) + n |x - y|^2`` replaces a hard
constraint ``x in K`` by the smooth penalty ``n dist(x, K)^2``.  This demo
prints the envelope of the interval ``[-1, 1]`` along a few points, shows
that it increases with ``n`` towards the indicator, and checks the
gradient formula ``2 n (x - prox)`` against central differences.

Run with ``python3 demos/01_yosida_envelope.py``.
"""

import numpy as np

from penreflect.potential import Ball, Box, Quadratic, YosidaEnvelope

K = Box([-1.0], [1.0])
x = np.array([[-2.0], [-1.1], [0.0], [1.05], [3.0]])

print("U_n(x) for the interval [-1, 1]")
print("      n " + "".join(f"{xi:>10.2f}" for xi in x[:, 0]))
for n in (1, 4, 16, 64, 256):
    v = YosidaEnvelope(K, n).value(x)
    print(f"{n:7d} " + "".join(f"{vi:10.4f}" for vi in v))

# gradient against central differences on a disc and a quadratic
rng = np.random.default_rng(0)
pts = rng.uniform(-2, 2, (200, 2))
for U in (Ball([0.0, 0.0], 1.0), Quadratic([2.0, 0.5], [0.3, 0.0])):
    env = YosidaEnvelope(U, 20.0)
    eps = 1e-6
    fd = np.stack([(env.value(pts + eps * e) - env.value(pts - eps * e)) / (2 * eps)
                   for e in np.eye(2)], axis=-1)
    err = np.max(np.abs(fd - env.gradient(pts)))
    print(f"{U!r}: max |grad - finite difference| = {err:.2e}")

# the implicit step z + dt grad U_n(z) = y is solved in closed form
env = YosidaEnvelope(Ball([0.0, 0.0], 1.0), 50.0)
y = np.array([[2.0, 1.0]])
z = env.resolvent(y, 0.01)
print("resolvent residual:", np.abs(z + 0.01 * env.gradient(z) - y).max())
