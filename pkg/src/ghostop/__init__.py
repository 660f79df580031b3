"""Boundary conditions on structured grids as sparse affine operators."""
