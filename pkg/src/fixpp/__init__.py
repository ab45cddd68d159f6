"""Inhomogeneous Poisson point-process models for 2-D fixation patterns."""

__version__ = "0.1.0"
