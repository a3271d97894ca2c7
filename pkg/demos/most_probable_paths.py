"""Most probable paths under an anisotropic frame metric.

With an orthonormal frame the optimal path to a target is the geodesic and
its squared length the squared distance.  Shrinking one frame column makes
that direction expensive, so the optimal path bows toward the cheap one.
"""

import numpy as np

from geomppca import flat, sphere
from geomppca.estimators import MppOptions, mpp_shoot
from geomppca.frame_bundle import FramePoint, g_orthonormal_basis, orthonormal_frame

# -- flat chart: straight lines, quadratic cost ----------------------------
ch = flat(2)
u = FramePoint(np.zeros(2), np.array([[0.8, 0.1], [0.0, 0.5]]), ch)
y = np.array([0.7, -0.4])
res = mpp_shoot(u, y, MppOptions(n_steps=8))
sigma = u.nu @ u.nu.T
print("flat chart:")
print(f"  squared length {res.sq_distance:.6f}  vs  y' Sigma^-1 y ="
      f" {y @ np.linalg.solve(sigma, y):.6f}")
print(f"  residual from the straight line: "
      f"{np.max(np.abs(res.path - np.linspace(0, 1, res.path.shape[0])[:, None] * y)):.2e}")

# -- round chart, orthonormal frame: geodesics -----------------------------
sp = sphere()
theta = 0.9
res_geo = mpp_shoot(orthonormal_frame(sp, np.zeros(2)),
                    np.array([np.tan(theta / 2), 0.0]), MppOptions(n_steps=300))
print("\nround chart, orthonormal frame:")
print(f"  squared length {res_geo.sq_distance:.8f}  vs  arc^2 = {theta**2:.8f}")

# -- round chart, anisotropic frame: the path bends ------------------------
basis = g_orthonormal_basis(sp, np.zeros(2))
u_a = FramePoint(np.zeros(2), basis @ np.diag([1.0, 0.5]), sp)
y_a = np.array([0.4, 0.35])
res_a = mpp_shoot(u_a, y_a, MppOptions(n_steps=150))
direction = y_a / np.linalg.norm(y_a)
perp = res_a.path - np.outer(res_a.path @ direction, direction)
print("\nround chart, frame scales (1.0, 0.5):")
print(f"  squared length {res_a.sq_distance:.4f}")
print(f"  max sideways excursion off the straight ray: "
      f"{np.max(np.linalg.norm(perp, axis=1)):.4f}")
print(f"  endpoint residual {res_a.endpoint_residual:.2e}")
