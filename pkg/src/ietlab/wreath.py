"""Lamplighter configurations (Z/2Z)^(X) and the switch-walk-switch step."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .angles import ConfigurationError
from .iet import compose, evaluate

__all__ = ["LampConfig", "SwsMeasure", "lamp_translate", "lamp_xor", "sws_step"]


@dataclass(frozen=True)
class LampConfig:
    """A finitely supported 0/1 configuration, stored as its set of lit points."""

    lit: frozenset = frozenset()

    @classmethod
    def of(cls, *points) -> "LampConfig":
        return cls(frozenset(points))

    def __xor__(self, other: "LampConfig") -> "LampConfig":
        return lamp_xor(self, other)

    def __len__(self) -> int:
        return len(self.lit)

    def toggle(self, x) -> "LampConfig":
        return LampConfig(self.lit ^ {x})

    def render(self) -> str:
        items = sorted(self.lit)
        return "{" + ", ".join(p.render() if hasattr(p, "render") else str(p) for p in items) + "}"


def lamp_xor(a: LampConfig, b: LampConfig) -> LampConfig:
    return LampConfig(a.lit ^ b.lit)


def lamp_translate(g, a: LampConfig, act: Callable | None = None) -> LampConfig:
    """{g(x) : x lit}.  ``act(g, x)`` defaults to IET evaluation."""
    act = act or evaluate
    return LampConfig(frozenset(act(g, x) for x in a.lit))


def _as_fraction(w) -> Fraction:
    return w if isinstance(w, Fraction) else Fraction(str(w))


@dataclass(frozen=True)
class SwsMeasure:
    """lambda * mu * lambda, where lambda randomizes the lamp at ``lamp_point``."""

    mu: tuple  # ((generator id, Fraction weight), ...)
    lamp_point: Hashable
    inverses: Mapping | None = None  # generator id -> id of its inverse, if symmetry is claimed

    def __post_init__(self):
        mu = tuple((gid, _as_fraction(w)) for gid, w in self.mu)
        object.__setattr__(self, "mu", mu)
        if any(w <= 0 for _, w in mu):
            raise ConfigurationError("weights must be positive")
        if sum(w for _, w in mu) != 1:
            raise ConfigurationError("weights must sum to 1")
        if self.inverses is not None:
            wt = dict(mu)
            for gid, w in mu:
                inv = self.inverses.get(gid)
                if inv not in wt or wt[inv] != w:
                    raise ConfigurationError(f"measure is not symmetric at generator {gid!r}")

    def sample(self, rng: np.random.Generator):
        den = 1
        for _, w in self.mu:
            den = den * w.denominator // np.gcd(den, w.denominator)
        u = int(rng.integers(den))
        acc = 0
        for gid, w in self.mu:
            acc += int(w * den)
            if u < acc:
                return gid
        return self.mu[-1][0]  # pragma: no cover


def sws_step(state: tuple, measure: SwsMeasure, generators: Mapping, rng: np.random.Generator,
             act: Callable | None = None, multiply: Callable | None = None) -> tuple:
    """One right-multiplication by a switch-walk-switch increment.

    ``state`` is (configuration, group element).  With g the current element
    the lamp at g x0 is randomized, g moves to g h, then the lamp at g h x0
    is randomized.  Defaults act on IETs.
    """
    act = act or evaluate
    multiply = multiply or compose
    f, g = state
    x0 = measure.lamp_point
    if rng.integers(2):
        f = f.toggle(act(g, x0))
    h = generators[measure.sample(rng)]
    g = multiply(g, h)
    if rng.integers(2):
        f = f.toggle(act(g, x0))
    return f, g


def support_points(configs: Sequence[LampConfig]) -> frozenset:
    out = frozenset()
    for c in configs:
        out |= c.lit
    return out


def iet_identity_state(group) -> tuple:
    from .iet import identity

    return LampConfig(), identity(group)

