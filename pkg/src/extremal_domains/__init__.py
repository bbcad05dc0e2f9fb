"""Numerical construction of solution domains for overdetermined semilinear
boundary problems on Riemannian 2-manifolds.

The pipeline: solve the frozen-point radial profile, verify the mode-wise
nondegeneracy conditions, solve volume-constrained Dirichlet problems on the
pulled-back disk metric of a perturbed geodesic ball, reduce the Neumann
defect to an affine term by adjusting the boundary shape, and scan the
energy landscape for the centers where the defect vector vanishes.
"""

__version__ = "0.1.0"
