"""
Strict versus weak* convergence of plastic strains
===================================================

The dissipation is continuous along strictly converging sequences but only
lower semicontinuous along weak* converging ones. Oscillating signs converge
weakly to zero yet keep their dissipation.
"""
import numpy as np

from hencky.fields import PlasticMeasure, TestFamily
from hencky.mesh import gen_rectangle
from hencky.tensor_core import square_polytope

K = square_polytope(2, 1.0)
slip = np.array([[0.0, -0.5], [-0.5, 0.0]])
d = np.array([[1.0, 0.5], [0.5, -1.0]])

print("  m   layer H   layer weak*   oscillation H   oscillation weak*")
fine = gen_rectangle([1.0, 1.0], 64)
bottom = np.isclose(fine.facet_centroids[:, 1], 0.0)
target = PlasticMeasure(fine, np.zeros((fine.nc, 2, 2)), np.where(bottom[:, None, None], slip, 0.0))
ref = TestFamily(fine, 20).pairings(target)
for m in (4, 8, 16, 32, 64):
    mesh = gen_rectangle([1.0, 1.0], m)
    tf = TestFamily(mesh, 20)
    # mass concentrating in the bottom row of cells: strict convergence to a boundary slip
    layer = PlasticMeasure(mesh, np.where((mesh.centroids[:, 1] < 1.0 / m)[:, None, None], m * slip, 0.0))
    # alternating columns: weak* convergence to zero
    sign = np.where(np.floor(mesh.centroids[:, 0] * m) % 2 == 0, 1.0, -1.0)
    osc = PlasticMeasure(mesh, sign[:, None, None] * d)
    print(f"{m:3d}   {layer.h_energy(K):.6f}  {np.abs(tf.pairings(layer) - ref).max():.2e}"
          f"      {osc.h_energy(K):.6f}       {np.abs(tf.pairings(osc)).max():.2e}")
print(f"limit: boundary slip H = {target.h_energy(K):.6f}; zero measure H = 0")
