"""Interval exchange groups, their orbits and random walks on them."""

from .angles import Angle, AngleGroup, ConfigurationError, Point
from .iet import Iet, cocycle, compose, evaluate, inverse, rotation, swap

__version__ = "0.1.0"

__all__ = ["Angle", "AngleGroup", "ConfigurationError", "Iet", "Point", "cocycle", "compose", "evaluate",
           "inverse", "rotation", "swap"]
