"""Exact coordinates for a finitely generated subgroup of the circle.

An :class:`AngleGroup` fixes free generators ``theta_1..theta_d`` (assumed
rationally independent together with 1), a torsion denominator ``m`` and a
list of base points.  Elements of the group are :class:`Angle` values
``p/m + k . theta``; circle points are :class:`Point` values ``x_j + angle``.

Equality is decided on coordinates.  Strict order is decided numerically:
a float filter first, then certified rational enclosures on a fixed
precision ladder.  Running off the ladder raises
:class:`UndecidableComparison`, which means the independence declaration is
wrong for the inputs at hand.
"""

from __future__ import annotations

import ast
import enum
import itertools
import math
import re
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from mpmath.ctx_iv import MPIntervalContext
from mpmath.libmp import to_rational

__all__ = [
    "Angle",
    "AngleGroup",
    "ConfigurationError",
    "CosetError",
    "Ordering",
    "Point",
    "UndecidableComparison",
    "angle_add",
    "angle_real_enclosure",
    "point_compare",
]

DEFAULT_LADDER = (64, 128, 256, 1024)

# Relative slack for the float filter: (d + 3) * (1 + |k|_1) ulps of 2**-50.
_FLOAT_SLACK = 2.0**-50


class ConfigurationError(ValueError):
    """Inputs that do not belong together (different groups, bad parameters)."""


class CosetError(ValueError):
    """A point was expected in a given coset x + Lambda but is not."""


class UndecidableComparison(ArithmeticError):
    """Two coordinate-distinct points could not be separated numerically."""


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


# ---------------------------------------------------------------------------
# real-number enclosures

_DECIMAL = re.compile(r"^\s*[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\s*$")
_RATIONAL = re.compile(r"^\s*[+-]?\d+\s*/\s*\d+\s*$")

_IV = MPIntervalContext()
_IV_LOCK = threading.Lock()

_FUNCS = {"sqrt", "exp", "log", "sin", "cos", "tan", "cbrt"}
_CONSTS = {"pi", "e"}


def _check_expr(node: ast.AST) -> None:
    for sub in ast.walk(node):
        if isinstance(sub, ast.Call):
            if not (isinstance(sub.func, ast.Name) and sub.func.id in _FUNCS):
                raise ConfigurationError(f"unsupported function in real expression: {ast.dump(sub.func)}")
        elif isinstance(sub, ast.Name):
            if sub.id not in _FUNCS | _CONSTS:
                raise ConfigurationError(f"unknown name {sub.id!r} in real expression")
        elif isinstance(sub, ast.Constant):
            if not isinstance(sub.value, (int, float)):
                raise ConfigurationError("only numeric constants are allowed in real expressions")
        elif not isinstance(
            sub,
            (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Load, ast.Add, ast.Sub, ast.Mult,
             ast.Div, ast.Pow, ast.USub, ast.UAdd),
        ):
            raise ConfigurationError(f"unsupported syntax in real expression: {type(sub).__name__}")


def _iv_eval(node: ast.AST):
    if isinstance(node, ast.Expression):
        return _iv_eval(node.body)
    if isinstance(node, ast.Constant):
        # decimal literals are read as exact decimals, not binary floats
        return _IV.mpf(repr(node.value)) if isinstance(node.value, float) else _IV.mpf(node.value)
    if isinstance(node, ast.Name):
        return _IV.pi if node.id == "pi" else _IV.e
    if isinstance(node, ast.UnaryOp):
        v = _iv_eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        a, b = _iv_eval(node.left), _iv_eval(node.right)
        op = node.op
        if isinstance(op, ast.Add):
            return a + b
        if isinstance(op, ast.Sub):
            return a - b
        if isinstance(op, ast.Mult):
            return a * b
        if isinstance(op, ast.Div):
            return a / b
        return a**b
    if isinstance(node, ast.Call):
        (arg,) = node.args
        v = _iv_eval(arg)
        if node.func.id == "cbrt":
            return _IV.cbrt(v)
        return getattr(_IV, node.func.id)(v)
    raise ConfigurationError("bad real expression")  # pragma: no cover


class RealSource:
    """A real number with a certified enclosure at any requested precision.

    Plain decimal or ``p/q`` strings are exact rationals.  Anything else is
    parsed as an arithmetic expression (``sqrt(2)-1``, ``pi/10``) and
    evaluated in interval arithmetic.
    """

    def __init__(self, text: str):
        self.text = str(text).strip()
        self.exact: Fraction | None = None
        self._tree = None
        if _DECIMAL.match(self.text) or _RATIONAL.match(self.text):
            self.exact = Fraction(self.text.replace(" ", ""))
        else:
            try:
                tree = ast.parse(self.text, mode="eval")
            except SyntaxError as exc:
                raise ConfigurationError(f"cannot parse real number {self.text!r}") from exc
            _check_expr(tree)
            self._tree = tree
        self._cache: dict[int, tuple[Fraction, Fraction]] = {}

    def enclosure(self, bits: int) -> tuple[Fraction, Fraction]:
        """Rational interval of width <= 2**-bits containing the value."""
        if self.exact is not None:
            return self.exact, self.exact
        hit = self._cache.get(bits)
        if hit is not None:
            return hit
        target = Fraction(1, 1 << bits)
        wp = bits + 16
        while True:
            with _IV_LOCK:
                _IV.prec = wp
                v = _iv_eval(self._tree)
            lo, hi = (Fraction(*map(int, to_rational(e))) for e in v._mpi_)
            if hi - lo <= target:
                break
            wp *= 2
            if wp > 1 << 16:
                raise ArithmeticError(f"enclosure of {self.text!r} does not shrink")
        self._cache[bits] = (lo, hi)
        return lo, hi

    def to_float(self) -> float:
        lo, hi = self.enclosure(64)
        return float((lo + hi) / 2)

    def __repr__(self) -> str:
        return f"RealSource({self.text!r})"


# ---------------------------------------------------------------------------
# the group


@dataclass(frozen=True)
class AngleGroup:
    """Lambda = (1/m)Z/Z x Z^d inside R/Z, plus base points for the cosets."""

    thetas: tuple[str, ...] = ()
    m: int = 1
    bases: tuple[str, ...] = ("0",)
    independence_assumed: bool = True
    ladder: tuple[int, ...] = DEFAULT_LADDER
    screen_norm: int = 2

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(str(t) for t in self.thetas))
        object.__setattr__(self, "bases", tuple(str(b) for b in self.bases))
        if int(self.m) != self.m or self.m < 1:
            raise ConfigurationError(f"torsion denominator must be a positive integer, got {self.m!r}")
        if not self.bases:
            raise ConfigurationError("at least one base point is required")
        if not self.ladder or any(b < 1 for b in self.ladder):
            raise ConfigurationError("precision ladder must be a nonempty list of positive bit counts")
        theta_src = tuple(RealSource(t) for t in self.thetas)
        base_src = tuple(RealSource(b) for b in self.bases)
        object.__setattr__(self, "_theta_src", theta_src)
        object.__setattr__(self, "_base_src", base_src)
        object.__setattr__(self, "_theta_f", tuple(s.to_float() for s in theta_src))
        object.__setattr__(self, "_base_f", tuple(s.to_float() % 1.0 for s in base_src))
        object.__setattr__(self, "_exact", all(s.exact is not None for s in base_src) and not theta_src)
        self._screen_thetas()
        self._screen_bases()

    @property
    def d(self) -> int:
        return len(self.thetas)

    # -- screens ------------------------------------------------------------
    def _screen_thetas(self) -> None:
        bits = self.ladder[0]
        for i, src in enumerate(self._theta_src):
            lo, hi = src.enclosure(bits)
            for q in range(1, self.m + 1):
                if math.floor(hi * q) >= math.ceil(lo * q):
                    raise ConfigurationError(
                        f"theta_{i + 1} = {src.text} is numerically a rational with denominator <= {self.m}"
                    )

    def _screen_bases(self) -> None:
        if len(self.bases) < 2:
            return
        bits = self.ladder[0]
        norm = self.screen_norm
        ks = [k for k in itertools.product(range(-norm, norm + 1), repeat=self.d) if sum(map(abs, k)) <= norm]
        for i, j in itertools.combinations(range(len(self.bases)), 2):
            dlo = self._base_src[j].enclosure(bits + 2)[0] - self._base_src[i].enclosure(bits + 2)[1]
            dhi = self._base_src[j].enclosure(bits + 2)[1] - self._base_src[i].enclosure(bits + 2)[0]
            for k in ks:
                for p in range(self.m):
                    alo, ahi = self.angle(p, k).real_enclosure(bits)
                    lo, hi = dlo - ahi, dhi - alo
                    if math.floor(hi) >= math.ceil(lo):
                        raise ConfigurationError(
                            f"base points x{i} and x{j} look like the same coset "
                            f"(difference ~ {self.angle(p, k).render()})"
                        )

    # -- constructors -------------------------------------------------------
    def angle(self, p: int = 0, k: Sequence[int] | None = None) -> "Angle":
        if k is None:
            k = (0,) * self.d
        k = tuple(int(c) for c in k)
        if len(k) != self.d:
            raise ConfigurationError(f"expected {self.d} free coordinates, got {len(k)}")
        return Angle(int(p) % self.m, k, self)

    def zero(self) -> "Angle":
        return self.angle(0)

    def rational(self, q: Fraction | str | int) -> "Angle":
        """The torsion angle q (mod 1); q must have denominator dividing m."""
        q = Fraction(q)
        num = q * self.m
        if num.denominator != 1:
            raise ConfigurationError(f"{q} is not in (1/{self.m})Z")
        return self.angle(int(num))

    def theta(self, i: int) -> "Angle":
        k = [0] * self.d
        k[i] = 1
        return self.angle(0, k)

    def point(self, base: int = 0, offset: "Angle | None" = None) -> "Point":
        if not 0 <= base < len(self.bases):
            raise ConfigurationError(f"base index {base} out of range")
        if offset is None:
            offset = self.zero()
        elif offset.group is not self and offset.group != self:
            raise ConfigurationError("angle belongs to a different AngleGroup")
        return Point(base, offset, self._point_float(base, offset.p, offset.k))

    # -- numerics -----------------------------------------------------------
    def theta_enclosure(self, i: int, bits: int) -> tuple[Fraction, Fraction]:
        return self._theta_src[i].enclosure(bits)

    def base_enclosure(self, j: int, bits: int) -> tuple[Fraction, Fraction]:
        return self._base_src[j].enclosure(bits)

    def _angle_float(self, p: int, k: tuple[int, ...]) -> float:
        v = p / self.m
        for c, t in zip(k, self._theta_f):
            v += c * t
        return v

    def _point_float(self, base: int, p: int, k: tuple[int, ...]) -> float:
        v = self._base_f[base] + self._angle_float(p, k)
        return v - math.floor(v)

    def float_error(self, k: tuple[int, ...]) -> float:
        return (self.d + 3) * (1 + sum(map(abs, k))) * _FLOAT_SLACK

    @property
    def theta_floats(self) -> tuple[float, ...]:
        return self._theta_f

    @property
    def base_floats(self) -> tuple[float, ...]:
        return self._base_f

    # -- text ---------------------------------------------------------------
    def parse_angle(self, text: str) -> "Angle":
        """Parse ``p/q + [k_1,...,k_d]·θ``; either part may be omitted."""
        s = text.strip()
        if not s:
            raise ConfigurationError("empty angle")
        p = Fraction(0)
        k: tuple[int, ...] = (0,) * self.d
        for part in re.split(r"\+(?![^\[]*\])", s):
            part = part.strip()
            if not part:
                raise ConfigurationError(f"cannot parse angle {text!r}")
            mk = re.fullmatch(r"(-)?\s*\[([^\]]*)\]\s*(?:(?:·|\*)\s*(?:θ|theta))?", part)
            if mk:
                body = mk.group(2).strip()
                vals = tuple(int(c) for c in body.split(",")) if body else ()
                if len(vals) != self.d:
                    raise ConfigurationError(f"angle {text!r} has {len(vals)} free coordinates, group has {self.d}")
                if mk.group(1):
                    vals = tuple(-c for c in vals)
                k = tuple(a + b for a, b in zip(k, vals))
                continue
            try:
                p += Fraction(part.replace(" ", ""))
            except ValueError as exc:
                raise ConfigurationError(f"cannot parse angle {text!r}") from exc
        return self.rational(p) + self.angle(0, k)

    def parse_point(self, text: str) -> "Point":
        s = text.strip()
        mb = re.match(r"x(\d+)\s*(?:\+\s*(.*))?$", s)
        if not mb:
            return self.point(0, self.parse_angle(s))
        base = int(mb.group(1))
        rest = mb.group(2)
        return self.point(base, self.parse_angle(rest) if rest else None)


# ---------------------------------------------------------------------------
# elements


@dataclass(frozen=True, slots=True)
class Angle:
    """The angle p/m + sum_i k_i theta_i (mod 1)."""

    p: int
    k: tuple[int, ...]
    group: AngleGroup = field(compare=False, repr=False)

    def __add__(self, other: "Angle") -> "Angle":
        return angle_add(self, other)

    def __neg__(self) -> "Angle":
        g = self.group
        return Angle((-self.p) % g.m, tuple(-c for c in self.k), g)

    def __sub__(self, other: "Angle") -> "Angle":
        return angle_add(self, -other)

    def __mul__(self, n: int) -> "Angle":
        g = self.group
        return Angle((self.p * n) % g.m, tuple(c * n for c in self.k), g)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return self.p == 0 and not any(self.k)

    @property
    def free_norm(self) -> int:
        return sum(map(abs, self.k))

    def to_float(self) -> float:
        return self.group._angle_float(self.p, self.k)

    def real_enclosure(self, bits: int) -> tuple[Fraction, Fraction]:
        return angle_real_enclosure(self, bits)

    def render(self) -> str:
        return f"{self.p}/{self.group.m} + [{','.join(map(str, self.k))}]·θ"

    def __str__(self) -> str:
        return self.render()


def angle_add(a: Angle, b: Angle) -> Angle:
    g = a.group
    if b.group is not g and b.group != g:
        raise ConfigurationError("cannot add angles from different AngleGroups")
    return Angle((a.p + b.p) % g.m, tuple(x + y for x, y in zip(a.k, b.k)), g)


def angle_real_enclosure(a: Angle, bits: int) -> tuple[Fraction, Fraction]:
    """Interval of width <= 2**-bits around p/m + k.theta (not reduced mod 1)."""
    if bits < 1:
        raise ValueError("precision must be at least one bit")
    g = a.group
    lo = hi = Fraction(a.p, g.m)
    norm = a.free_norm
    if norm:
        extra = norm.bit_length() + 1
        for c, i in zip(a.k, range(g.d)):
            if c == 0:
                continue
            tlo, thi = g.theta_enclosure(i, bits + extra)
            if c > 0:
                lo += c * tlo
                hi += c * thi
            else:
                lo += c * thi
                hi += c * tlo
    return lo, hi


@dataclass(frozen=True, slots=True)
class Point:
    """The circle point x_base + offset; ``value`` is a float approximation in [0, 1)."""

    base: int
    offset: Angle
    value: float = field(compare=False, repr=False)

    @property
    def group(self) -> AngleGroup:
        return self.offset.group

    def __add__(self, a: Angle) -> "Point":
        g = self.offset.group
        if a.group is not g and a.group != g:
            raise ConfigurationError("angle belongs to a different AngleGroup")
        off = Angle((self.offset.p + a.p) % g.m, tuple(x + y for x, y in zip(self.offset.k, a.k)), g)
        return Point(self.base, off, g._point_float(self.base, off.p, off.k))

    def __sub__(self, other: "Point") -> Angle:
        if self.base != other.base:
            raise CosetError(f"{self.render()} and {other.render()} lie in different cosets")
        return self.offset - other.offset

    def __lt__(self, other: "Point") -> bool:
        return point_compare(self, other) < 0

    def __le__(self, other: "Point") -> bool:
        return point_compare(self, other) <= 0

    def __gt__(self, other: "Point") -> bool:
        return point_compare(self, other) > 0

    def __ge__(self, other: "Point") -> bool:
        return point_compare(self, other) >= 0

    def real_enclosure(self, bits: int) -> tuple[Fraction, Fraction]:
        g = self.offset.group
        blo, bhi = g.base_enclosure(self.base, bits + 1)
        alo, ahi = angle_real_enclosure(self.offset, bits + 1)
        return blo + alo, bhi + ahi

    def render(self) -> str:
        return f"x{self.base} + {self.offset.render()}"

    def __str__(self) -> str:
        return self.render()


def _frac_enclosure(x: Point, bits: int) -> tuple[Fraction, Fraction] | None:
    lo, hi = x.real_enclosure(bits)
    n = math.floor(lo)
    if lo == hi or math.floor(hi) == n and hi != n + 1:
        return lo - n, hi - n
    return None


def point_compare(x: Point, y: Point) -> Ordering:
    """Circle order of representatives in [0, 1)."""
    gx, gy = x.offset.group, y.offset.group
    if gx is not gy and gx != gy:
        raise ConfigurationError("cannot compare points from different AngleGroups")
    if x.base == y.base and x.offset == y.offset:
        return Ordering.EQUAL
    fx, fy = x.value, y.value
    ex, ey = gx.float_error(x.offset.k), gx.float_error(y.offset.k)
    if ex < fx < 1.0 - ex and ey < fy < 1.0 - ey and abs(fx - fy) > ex + ey:
        return Ordering.LESS if fx < fy else Ordering.GREATER
    return _exact_compare(x, y)


def _exact_compare(x: Point, y: Point) -> Ordering:
    for bits in x.offset.group.ladder:
        ix, iy = _frac_enclosure(x, bits), _frac_enclosure(y, bits)
        if ix is None or iy is None:
            continue
        if ix[1] < iy[0]:
            return Ordering.LESS
        if iy[1] < ix[0]:
            return Ordering.GREATER
        if ix[0] == ix[1] == iy[0] == iy[1]:
            break
    raise UndecidableComparison(
        f"cannot separate {x.render()} and {y.render()}: the independence assumption fails for these inputs"
    )


def sort_points(points) -> list[Point]:
    return sorted(points)


Enclosure = Callable[[int], tuple[Fraction, Fraction]]
