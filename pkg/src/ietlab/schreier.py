"""Schreier balls of IET groups, their Lambda-coordinates, and subshift complexity."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sstats

from .angles import Angle, AngleGroup, ConfigurationError, Point
from .iet import Iet, InvariantViolation, evaluate, inverse

__all__ = [
    "ComplexityProfile",
    "CutPartition",
    "Embedding",
    "SchreierBall",
    "complexity_profile",
    "lambda_embedding",
    "schreier_ball",
    "subshift_cutpoints",
]


@dataclass
class SchreierBall:
    vertices: list  # Points in BFS order
    edges: list  # (source index, generator name, target index)
    radius: int
    distance: list  # BFS distance of each vertex

    def to_dot(self, name: str = "schreier") -> str:
        lines = [f"digraph {name} {{"]
        for i, v in enumerate(self.vertices):
            lines.append(f'  {i} [label="{v.render()}"];')
        for a, g, b in self.edges:
            lines.append(f'  {a} -> {b} [label="{g}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def schreier_ball(gens: Sequence[Iet], x0: Point, radius: int, names: Sequence[str] | None = None) -> SchreierBall:
    """BFS ball of the orbit graph; generators must be closed under inverses."""
    gens = list(gens)
    names = list(names) if names is not None else [f"g{i}" for i in range(len(gens))]
    gset = set(gens)
    for g in gens:
        if inverse(g) not in gset:
            raise ConfigurationError("generating set is not closed under inverses")
    index = {x0: 0}
    verts, dist, edges = [x0], [0], []
    frontier = [x0]
    for r in range(radius):
        nxt = []
        for v in frontier:
            for g in gens:
                y = evaluate(g, v)
                if y not in index:
                    index[y] = len(verts)
                    verts.append(y)
                    dist.append(r + 1)
                    nxt.append(y)
        frontier = nxt
    for i, v in enumerate(verts):
        for g, nm in zip(gens, names):
            j = index.get(evaluate(g, v))
            if j is not None:
                edges.append((i, nm, j))
    return SchreierBall(verts, edges, radius, dist)


@dataclass
class Embedding:
    coords: list  # Angle per vertex, y - x0
    lipschitz: int  # max l1 norm of free-coordinate steps along edges


def lambda_embedding(ball: SchreierBall, x0: Point) -> Embedding:
    coords = []
    for v in ball.vertices:
        if v.base != x0.base:
            raise InvariantViolation(f"{v.render()} is not in the coset of {x0.render()}")
        coords.append(v - x0)
    if len(set(coords)) != len(coords):
        raise InvariantViolation("embedding is not injective")
    lip = 0
    for a, _, b in ball.edges:
        lip = max(lip, (coords[b] - coords[a]).free_norm)
    return Embedding(coords, lip)


# ---------------------------------------------------------------------------
# point-doubling subshift


@dataclass
class CutPartition:
    cutpoints: list  # sorted Points; each stands for the doubled pair (x-, x+)
    atoms: int


def _generator_angles(S: Sequence[Angle]) -> list[Angle]:
    """Generators up to sign, with duplicates and zero removed."""
    out = []
    seen = set()
    for s in S:
        if s.is_zero():
            continue
        if s in seen or -s in seen:
            continue
        seen.add(s)
        out.append(s)
    return out


def subshift_cutpoints(group: AngleGroup, S: Sequence[Angle], bases: Sequence[int] | None = None) -> CutPartition:
    """Cut points {x, x + lambda : x in Sigma, lambda in S}, S read up to sign."""
    if group.d == 0:
        raise ConfigurationError("the angle group is finite; the doubled action is not minimal")
    bases = list(range(len(group.bases))) if bases is None else list(bases)
    if not bases:
        raise ConfigurationError("no base points: nothing to partition")
    gens = _generator_angles(S)
    if not gens:
        raise ConfigurationError("empty generating set")
    pts = set()
    for j in bases:
        x = group.point(j)
        pts.add(x)
        for s in gens:
            pts.add(x + s)
    cuts = sorted(pts)
    return CutPartition(cuts, len(cuts))


@dataclass
class ComplexityProfile:
    rho: list
    d: int
    exponent: float
    exponent_se: float
    band: tuple  # 95% interval for the exponent
    fit_range: tuple
    constant: float  # max over n >= 1 of rho(n) / n^d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "rho"])
        for n, r in enumerate(self.rho):
            w.writerow([n, r])
        return buf.getvalue()


def rho_counts(group: AngleGroup, S: Sequence[Angle], n_max: int, bases: Sequence[int] | None = None) -> list[int]:
    """rho(n) for n = 0..n_max by layered growth of the translate set."""
    part = subshift_cutpoints(group, S, bases)
    steps = []
    for s in _generator_angles(S):
        steps.append((s.p, s.k))
        steps.append(((-s).p, (-s).k))
    m = group.m

    def key(x: Point):
        return (x.base, x.offset.p) + x.offset.k

    seen = {key(c) for c in part.cutpoints}
    frontier = list(seen)
    rho = [len(seen)]
    for _ in range(n_max):
        nxt = []
        for x in frontier:
            for p, k in steps:
                y = (x[0], (x[1] + p) % m) + tuple(a + b for a, b in zip(x[2:], k))
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        frontier = nxt
        rho.append(len(seen))
    return rho


def fit_exponent(rho: Sequence[int], lo: int, hi: int) -> tuple[float, float, tuple]:
    ns = np.arange(lo, hi + 1)
    x = np.log(ns)
    y = np.log(np.asarray(rho, float)[lo:hi + 1])
    res = sstats.linregress(x, y)
    q = sstats.t.ppf(0.975, len(ns) - 2)
    return float(res.slope), float(res.stderr), (float(res.slope - q * res.stderr), float(res.slope + q * res.stderr))


def complexity_profile(group: AngleGroup, S: Sequence[Angle], n_max: int, bases: Sequence[int] | None = None,
                       fit_range: tuple[int, int] | None = None) -> ComplexityProfile:
    """rho(n) and a least-squares growth exponent (default: top half of the range)."""
    if n_max < 3:
        raise ConfigurationError("need n_max >= 3 to fit an exponent")
    rho = rho_counts(group, S, n_max, bases)
    lo, hi = fit_range if fit_range is not None else (max(1, n_max // 2), n_max)
    if not 1 <= lo < hi - 1 or hi > n_max:
        raise ConfigurationError(f"bad fit range {lo}..{hi}")
    slope, se, band = fit_exponent(rho, lo, hi)
    d = group.d
    const = max(rho[n] / n**d for n in range(1, n_max + 1))
    return ComplexityProfile(rho, d, slope, se, band, (lo, hi), const)


def word_ball_size(group: AngleGroup, S: Sequence[Angle], n: int) -> int:
    """Number of elements of Lambda of S-length at most n."""
    zero = group.point(0)
    steps = []
    for s in _generator_angles(S):
        steps += [s, -s]
    seen = {zero}
    frontier = [zero]
    for _ in range(n):
        nxt = []
        for x in frontier:
            for s in steps:
                y = x + s
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        frontier = nxt
    return len(seen)
