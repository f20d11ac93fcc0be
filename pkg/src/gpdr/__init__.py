"""Evolutionary search for small symbolic formulas that map tabular data
to a low-dimensional latent space, with classical baselines and a
two-stage evaluation harness.
"""

__version__ = "0.1.0"
