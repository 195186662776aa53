"""Interval exchange transformations over an :class:`AngleGroup`.

An :class:`Iet` is right-continuous: the arc ``[a_i, a_{i+1})`` is translated
by ``t_i``.  Arcs are read cyclically, so the last arc wraps through 0.  A
rotation has no breakpoints and a single translation.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .angles import Angle, AngleGroup, ConfigurationError, Point

__all__ = [
    "FinSuppPerm",
    "InvariantViolation",
    "Iet",
    "SemidirectElement",
    "cocycle",
    "compose",
    "conj",
    "evaluate",
    "identity",
    "inverse",
    "iota",
    "left_continuous_companion",
    "evaluate_left",
    "format_iet",
    "fraction_point",
    "parse_iet",
    "random_iet",
    "random_rotation",
    "random_swap",
    "rational_rank",
    "rotation",
    "semidirect_multiply",
    "support_map",
    "swap",
]


class InvariantViolation(AssertionError):
    """An internal consistency check failed (a bug, not bad input)."""


def _same_group(a: AngleGroup, b: AngleGroup) -> None:
    if a is not b and a != b:
        raise ConfigurationError("objects belong to different AngleGroups")


@dataclass(frozen=True, eq=False)
class Iet:
    """A canonical right-continuous IET.  Build with :meth:`from_arcs`."""

    group: AngleGroup
    breakpoints: tuple[Point, ...]
    translations: tuple[Angle, ...]
    _inv: list = field(default_factory=list, repr=False)

    canonical = True

    @classmethod
    def from_arcs(cls, group: AngleGroup, breakpoints: Sequence[Point], translations: Sequence[Angle]) -> "Iet":
        """Validate bijectivity, sort, and merge equal neighbours."""
        bps = list(breakpoints)
        ts = list(translations)
        if len(bps) != len(ts) and not (not bps and len(ts) == 1):
            raise ConfigurationError("need one translation per arc")
        for p in bps:
            _same_group(p.group, group)
        for t in ts:
            _same_group(t.group, group)
        if not bps:
            return cls(group, (), (ts[0],))
        order = sorted(range(len(bps)), key=lambda i: bps[i])
        bps = [bps[i] for i in order]
        ts = [ts[i] for i in order]
        for a, b in zip(bps, bps[1:]):
            if a == b:
                raise ConfigurationError(f"repeated breakpoint {a.render()}")
        _check_bijective(bps, ts)
        return cls._canonical(group, bps, ts)

    @classmethod
    def _canonical(cls, group, bps, ts) -> "Iet":
        r = len(bps)
        keep = [i for i in range(r) if ts[i] != ts[i - 1]]
        if not keep:
            return cls(group, (), (ts[0],))
        return cls(group, tuple(bps[i] for i in keep), tuple(ts[i] for i in keep))

    @property
    def arcs(self) -> int:
        return len(self.translations)

    def is_rotation(self) -> bool:
        return not self.breakpoints

    def arc_index(self, x: Point) -> int:
        if not self.breakpoints:
            return 0
        return bisect_right(self.breakpoints, x) - 1  # -1 means the wrapping arc

    def __call__(self, x: Point) -> Point:
        return evaluate(self, x)

    def __matmul__(self, other: "Iet") -> "Iet":
        return compose(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Iet):
            return NotImplemented
        return self.breakpoints == other.breakpoints and self.translations == other.translations

    def __hash__(self) -> int:
        return hash((self.breakpoints, self.translations))

    def __repr__(self) -> str:
        return "Iet(" + "; ".join(format_iet(self).splitlines()) + ")"


def _check_bijective(bps: list[Point], ts: list[Angle]) -> None:
    r = len(bps)
    starts = [bps[i] + ts[i] for i in range(r)]
    ends = [bps[(i + 1) % r] + ts[i] for i in range(r)]
    order = sorted(range(r), key=lambda i: starts[i])
    for j in range(r):
        i, nxt = order[j], order[(j + 1) % r]
        if ends[i] != starts[nxt]:
            raise ConfigurationError("arcs do not map onto a partition of the circle")


def identity(group: AngleGroup) -> Iet:
    return Iet(group, (), (group.zero(),))


def rotation(angle: Angle) -> Iet:
    return Iet(angle.group, (), (angle,))


def swap(a: Point, b: Point, c: Point) -> Iet:
    """Exchange the adjacent arcs [a, b) and [b, c); a, b, c one coset, cyclic order."""
    g = a.group
    if not (a.base == b.base == c.base):
        raise ConfigurationError("swap points must lie in one coset")
    ab, bc = b - a, c - b
    return Iet.from_arcs(g, [a, b, c], [bc, -ab, g.zero()])


def evaluate(g: Iet, x: Point) -> Point:
    _same_group(x.group, g.group)
    return x + g.translations[g.arc_index(x)]


def evaluate_left(g: Iet, x: Point) -> Point:
    """The left-continuous companion of g at x."""
    _same_group(x.group, g.group)
    i = g.arc_index(x)
    if g.breakpoints and g.breakpoints[i] == x:
        i -= 1
    return x + g.translations[i]


def left_continuous_companion(g: Iet) -> Callable[[Point], Point]:
    return lambda x: evaluate_left(g, x)


def inverse(g: Iet) -> Iet:
    if g._inv:
        return g._inv[0]
    if not g.breakpoints:
        out = Iet(g.group, (), (-g.translations[0],))
    else:
        bps = [a + t for a, t in zip(g.breakpoints, g.translations)]
        ts = [-t for t in g.translations]
        order = sorted(range(len(bps)), key=lambda i: bps[i])
        out = Iet._canonical(g.group, [bps[i] for i in order], [ts[i] for i in order])
    g._inv.append(out)
    out._inv.append(g)
    return out


def compose(g: Iet, h: Iet) -> Iet:
    """g o h (apply h first)."""
    _same_group(g.group, h.group)
    hinv = inverse(h)
    cuts = set(h.breakpoints)
    cuts.update(evaluate(hinv, b) for b in g.breakpoints)
    if not cuts:
        return Iet(g.group, (), (h.translations[0] + g.translations[0],))
    cuts = sorted(cuts)
    ts = []
    for c in cuts:
        th = h.translations[h.arc_index(c)]
        hc = c + th
        ts.append(th + g.translations[g.arc_index(hc)])
    return Iet._canonical(g.group, cuts, ts)


# ---------------------------------------------------------------------------
# finitely supported permutations


@dataclass(frozen=True)
class FinSuppPerm:
    """A permutation of circle points moving finitely many of them."""

    pairs: frozenset = frozenset()

    @classmethod
    def from_mapping(cls, mapping: Mapping[Point, Point] | Iterable[tuple[Point, Point]]) -> "FinSuppPerm":
        items = mapping.items() if isinstance(mapping, Mapping) else mapping
        d = {p: q for p, q in items if p != q}
        if set(d) != set(d.values()):
            raise InvariantViolation("pairs do not form a permutation of a finite set")
        return cls(frozenset(d.items()))

    @property
    def mapping(self) -> dict[Point, Point]:
        return dict(self.pairs)

    def __call__(self, x: Point) -> Point:
        for p, q in self.pairs:
            if p == x:
                return q
        return x

    def __mul__(self, other: "FinSuppPerm") -> "FinSuppPerm":
        """(self * other)(x) = self(other(x))."""
        a, b = self.mapping, other.mapping
        pts = set(a) | set(b)
        return FinSuppPerm.from_mapping({x: a.get(b.get(x, x), b.get(x, x)) for x in pts})

    def inverse(self) -> "FinSuppPerm":
        return FinSuppPerm(frozenset((q, p) for p, q in self.pairs))

    def support(self) -> frozenset:
        return frozenset(p for p, _ in self.pairs)

    def is_identity(self) -> bool:
        return not self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def render(self) -> str:
        return "{" + ", ".join(f"{p.render()} -> {q.render()}" for p, q in sorted(self.pairs)) + "}"


def conj(g: Iet, sigma: FinSuppPerm) -> FinSuppPerm:
    """x -> g(sigma(g^-1 x))."""
    return FinSuppPerm(frozenset((evaluate(g, p), evaluate(g, q)) for p, q in sigma.pairs))


def cocycle(g: Iet, check_points: Sequence[Point] = ()) -> FinSuppPerm:
    """tau_g = g~ o g^-1, evaluated on the breakpoints of g and g^-1.

    ``check_points`` are extra points where tau_g is asserted to be trivial
    unless they are candidates.
    """
    ginv = inverse(g)
    cands = set(g.breakpoints) | set(ginv.breakpoints)
    pairs = {x: evaluate_left(g, evaluate(ginv, x)) for x in cands}
    tau = FinSuppPerm.from_mapping(pairs)
    if tau.support() != frozenset(ginv.breakpoints):
        raise InvariantViolation("support of the cocycle differs from the discontinuities of the inverse")
    for x in check_points:
        if x not in cands and evaluate_left(g, evaluate(ginv, x)) != x:
            raise InvariantViolation(f"cocycle moves non-candidate point {x.render()}")
    return tau


@dataclass(frozen=True)
class SemidirectElement:
    """(tau, g) acting by x -> tau(g x)."""

    perm: FinSuppPerm
    iet: Iet

    def __call__(self, x: Point) -> Point:
        return self.perm(evaluate(self.iet, x))


def semidirect_multiply(u: SemidirectElement, v: SemidirectElement) -> SemidirectElement:
    _same_group(u.iet.group, v.iet.group)
    return SemidirectElement(u.perm * conj(u.iet, v.perm), compose(u.iet, v.iet))


def iota(g: Iet) -> SemidirectElement:
    return SemidirectElement(cocycle(g), g)


def support_map(c) -> frozenset:
    """Lit points of a lamp configuration, or moved points of a permutation."""
    if isinstance(c, FinSuppPerm):
        return c.support()
    lit = getattr(c, "lit", None)
    if lit is None:
        raise TypeError(f"no support defined for {type(c).__name__}")
    return frozenset(lit)


# ---------------------------------------------------------------------------
# rank


def integer_rank(rows: Sequence[Sequence[int]]) -> int:
    """Rank over Q by fraction-free (Bareiss) elimination."""
    mat = [list(map(int, r)) for r in rows if any(r)]
    if not mat:
        return 0
    ncols = len(mat[0])
    rank, prev = 0, 1
    for col in range(ncols):
        piv = next((i for i in range(rank, len(mat)) if mat[i][col]), None)
        if piv is None:
            continue
        mat[rank], mat[piv] = mat[piv], mat[rank]
        p = mat[rank][col]
        for i in range(rank + 1, len(mat)):
            for j in range(col + 1, ncols):
                mat[i][j] = (p * mat[i][j] - mat[i][col] * mat[rank][j]) // prev
            mat[i][col] = 0
        prev = p
        rank += 1
        if rank == len(mat):
            break
    return rank


def rational_rank(gens: Sequence[Iet]) -> int:
    if not gens:
        raise ConfigurationError("rational_rank needs at least one generator")
    group = gens[0].group
    rows = []
    for g in gens:
        _same_group(g.group, group)
        rows.extend(t.k for t in g.translations)
    if group.d == 0:
        return 0
    return integer_rank(rows)


# ---------------------------------------------------------------------------
# text format


def format_iet(g: Iet) -> str:
    """One ``breakpoint -> translation`` line per arc; ``* -> t`` for a rotation."""
    if not g.breakpoints:
        return f"* -> {g.translations[0].render()}"
    return "\n".join(f"{a.render()} -> {t.render()}" for a, t in zip(g.breakpoints, g.translations))


def parse_iet(group: AngleGroup, text: str) -> Iet:
    bps, ts = [], []
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip() and not ln.strip().startswith("#")]
    if not lines:
        raise ConfigurationError("empty IET description")
    for ln in lines:
        if "->" not in ln:
            raise ConfigurationError(f"expected 'breakpoint -> translation', got {ln!r}")
        left, right = (s.strip() for s in ln.split("->", 1))
        t = group.parse_angle(right)
        if left == "*":
            if len(lines) != 1:
                raise ConfigurationError("a rotation line must stand alone")
            return rotation(t)
        bps.append(group.parse_point(left))
        ts.append(t)
    return Iet.from_arcs(group, bps, ts)


# ---------------------------------------------------------------------------
# random elements


def _random_angle(group: AngleGroup, rng: np.random.Generator, bound: int) -> Angle:
    k = rng.integers(-bound, bound + 1, size=group.d)
    return group.angle(int(rng.integers(group.m)), [int(c) for c in k])


def random_rotation(group: AngleGroup, rng: np.random.Generator, bound: int = 3) -> Iet:
    return rotation(_random_angle(group, rng, bound))


def random_swap(group: AngleGroup, rng: np.random.Generator, bound: int = 3) -> Iet:
    base = int(rng.integers(len(group.bases)))
    while True:
        pts = {group.point(base, _random_angle(group, rng, bound)) for _ in range(3)}
        if len(pts) == 3:
            break
    a, b, c = sorted(pts)
    return swap(a, b, c)


def random_iet(group: AngleGroup, rng: np.random.Generator, moves: int = 3, bound: int = 2,
               p_rotation: float = 0.3) -> Iet:
    """A product of ``moves`` random rotations and adjacent-arc swaps."""
    g = identity(group)
    for _ in range(moves):
        h = random_rotation(group, rng, bound) if rng.random() < p_rotation else random_swap(group, rng, bound)
        g = compose(h, g)
    return g


def fraction_point(group: AngleGroup, q: Fraction | str, base: int = 0) -> Point:
    return group.point(base, group.rational(q))
