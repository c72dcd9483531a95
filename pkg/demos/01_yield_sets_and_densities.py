"""
Yield sets, support functions and the reduced density
======================================================

The dissipation density is the support function of the yield set. Minimising
out the plastic strain pointwise leaves a Huber-type density of the total
strain, which is all the bulk solver ever sees.
"""
import numpy as np

from hencky.oracles import reduced_density_grid
from hencky.tensor_core import Ball, ElasticModuli, ReducedDensity, segment_polytope, square_polytope, sym

xi = np.diag([1.0, -1.0])

# Support functions and the growth constants r |xi| <= H(xi) <= R |xi|
for K in (Ball(1.0, 2), segment_polytope(2), square_polytope(2, 1.0)):
    print(f"{type(K).__name__:9s} H(diag(1,-1)) = {float(K.support(xi)):.6f}   r = {K.r:.4f}   R = {K.R:.4f}")

# Projection onto the ball is radial scaling
sigma = np.array([[3.0, 4.0], [4.0, -3.0]])
print("P_K(sigma) =\n", Ball(1.0, 2).project(sigma))

# The reduced density: quadratic below yield, linear growth above
f = ReducedDensity(ElasticModuli(1.0, 1.0), Ball(2.0, 2))
for s in (0.1, 0.5, 1.0, 3.0, 10.0):
    x = s * np.array([[1.0, 0.0], [0.0, -1.0]]) / np.sqrt(2)
    print(f"|xi_D| = {s:5.1f}   f = {float(f(x)):9.5f}   grid oracle = {reduced_density_grid(x, 1.0, 1.0, f.yield_set):9.5f}")

# A random strain with a volumetric part
rng = np.random.default_rng(0)
x = sym(rng.standard_normal((2, 2)))
print("random xi: f =", float(f(x)), " oracle =", reduced_density_grid(x, 1.0, 1.0, f.yield_set, mode="2d"))
