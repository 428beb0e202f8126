"""Policy-driven permutation curricula for ordering-based self-supervision."""

__version__ = "0.1.0"
