"""Internal diffusion limited aggregation on Z^d: simulation, exact potential
theory on small domains, tail-bound evaluators and a probe harness."""

__version__ = "0.1.0"
