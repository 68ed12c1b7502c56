"""Single-layer Green's potential solver for 2D Laplace boundary-value
problems in domains with a fixed outer boundary and a random aperture,
with multilevel Monte Carlo estimation of solution functionals."""

__version__ = "0.1.0"
