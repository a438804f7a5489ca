"""
Transfer HDG - hybridizable discontinuous Galerkin solver for curved domains.

This package solves the diffusion problem -div(K grad u) = f on domains bounded
by curves, using a polygonal computational domain and transfer paths that carry
boundary and interface data from the true curves to the mesh edges.

Features:
- Curve catalog (circle, ellipse, kidney, Joukowsky airfoil) and domain descriptions
- Immersed and interpolated triangular meshes, mesh file reader and writer
- P1 and P2 transfer-path families with diagnostics
- HDG assembly with Dirichlet, Neumann and interface transfer, direct and condensed solves
- Element-by-element postprocessing, error norms and convergence reports
"""

__version__ = "1.0.0"
