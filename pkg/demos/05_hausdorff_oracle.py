"""
Deterministic quadrature oracles on spheres and hyperplanes
===========================================================

When the level set is a sphere (G = norm2) or a hyperplane (linear G), the
surface measure is the Gaussian-weighted Hausdorff measure divided by the
gradient norm, computable by product quadrature to many digits.  Comparing
the Monte Carlo surface integral against it is the strongest end-to-end
check in the library.
"""

import numpy as np
from scipy import stats

from glset import (Constant, Coordinate, Norm2, SurfaceMeasureHandle,
                   build_model, hausdorff_compare, sphere_quadrature)
from glset import ExpressionFunctional

# sphere in d=3 at r=1: the quadrature value equals the chi-square(3)
# density at 1, which is also exp(-1/2)/sqrt(2 pi)
print("sphere oracle d=3, r=1:", sphere_quadrature(Constant(1.0), 3, 1.0))
print("chi2_3 pdf at 1:       ", stats.chi2.pdf(1.0, df=3))

m3 = build_model(("iid_gaussian", 3))
h_sphere = SurfaceMeasureHandle(model=m3, G=Norm2(), r=1.0, n=10 ** 6,
                                seed=41, estimator="mollified")
rec = hausdorff_compare(h_sphere, Constant(1.0))
print(f"\nMC vs quadrature on the sphere: {rec.mc_value:.5f} vs "
      f"{rec.quad_value:.5f} (rel err {rec.rel_error:.3%})")

# hyperplane in d=2 at r=0: the weighted Hausdorff form gives the standard
# normal density
m2 = build_model(("iid_gaussian", 2))
h_plane = SurfaceMeasureHandle(model=m2, G=Coordinate(1), r=0.0, n=10 ** 6,
                               seed=43, estimator="divergence")
rec = hausdorff_compare(h_plane, Constant(1.0))
print(f"MC vs quadrature on the hyperplane: {rec.mc_value:.5f} vs "
      f"{rec.quad_value:.5f} (rel err {rec.rel_error:.3%})")

# a nontrivial weight on a d=5 sphere: exp(-norm2()) is constant on the
# sphere, so the oracle factorizes as exp(-r) times the surface mass
m5 = build_model(("iid_gaussian", 5))
phi = ExpressionFunctional("exp(-norm2())")
h5 = SurfaceMeasureHandle(model=m5, G=Norm2(), r=3.0, n=500_000, seed=47)
rec = hausdorff_compare(h5, phi)
print(f"\nd=5 sphere, phi=exp(-norm2()): {rec.mc_value:.5f} vs "
      f"{rec.quad_value:.5f}")
print("factorized check exp(-3) chi2_5(3):",
      round(float(np.exp(-3) * stats.chi2.pdf(3, 5)), 5))
