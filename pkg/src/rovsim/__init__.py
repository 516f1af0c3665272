"""rovsim: deterministic underwater ROV simulation, dataset factory, and perception trainer."""

__version__ = "0.1.0"
