"""Poisson trees on space-time point samples, their succession line and the
coalescing random walks they drive."""

__version__ = "0.1.0"
