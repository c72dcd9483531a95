"""
Solving the relaxed and the classical problem on affine data
=============================================================

With affine Dirichlet data the exact minimum is the reduced density of the
imposed strain times the area, for both the classical problem (hard boundary
condition) and its relaxation (slip allowed at a price).
"""
import numpy as np

from hencky.functionals import Datum, Scenario, eval_F
from hencky.mesh import gen_rectangle
from hencky.solver import SolveConfig, solve
from hencky.tensor_core import Ball, ElasticModuli, ReducedDensity, sym

moduli, K = ElasticModuli(1.0, 1.0), Ball(1.0, 2)
f = ReducedDensity(moduli, K)

for gamma in (0.2, 2.0):
    exact = float(f(sym(np.array([[0.0, gamma], [0.0, 0.0]]))))
    print(f"shear gamma = {gamma}: exact minimum {exact:.8f}")
    for m in (4, 8, 16):
        s = Scenario(gen_rectangle([1.0, 1.0], m), moduli, K, Datum("shear", {"gamma": gamma}))
        _, t, rel = solve(s, SolveConfig(tol=1e-9))
        _, th, hard = solve(s, SolveConfig(tol=1e-9, mode="hard"))
        print(f"  m={m:2d}  G_h = {rel.energy.total:.8f}  (gap {rel.rel_gap:.1e}, {rel.iterations} its)"
              f"  F_h = {eval_F(s, th.u, th.e, tol=1e-8).total:.8f}  plastic TV {t.p.total_variation():.4f}")
