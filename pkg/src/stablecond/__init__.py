"""Potential theory and Monte Carlo experiments for isotropic stable processes
conditioned onto subsets of the unit sphere or of a hyperplane."""

__version__ = "0.1.0"
