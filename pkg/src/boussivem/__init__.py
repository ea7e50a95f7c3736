"""Mixed virtual element solver for the stationary Boussinesq equations.

Five coupled fields on general polygonal meshes: pseudostress, velocity,
vorticity, pseudoheat and temperature, with temperature-dependent viscosity
and thermal conductivity. Includes mesh families, a Picard/Newton solver and
a manufactured-solution convergence harness.
"""

__version__ = "0.1.0"
