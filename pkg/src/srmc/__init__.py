"""Semi-random robust matrix completion: spectral reweighting and weighted non-convex solvers."""
__version__ = "0.1.0"
