"""Group actions that the walk engine can drive.

Every action exposes generators with rational weights, an exact ``act`` on
hashable points, and batch methods that turn a matrix of generator indices
(one row per trajectory) into inverted-orbit sizes and return times.  The
base class implements the batch methods in plain Python; subclasses swap in
compiled kernels where the structure allows it.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np

from . import _kernels as K
from .angles import AngleGroup, ConfigurationError, Point
from .iet import Iet, evaluate, evaluate_left, inverse

__all__ = ["Action", "FreeProductAction", "IetAction", "LatticeAction"]


def _fractions(weights, n) -> tuple[Fraction, ...]:
    if weights is None:
        return tuple(Fraction(1, n) for _ in range(n))
    ws = tuple(w if isinstance(w, Fraction) else Fraction(str(w)) for w in weights)
    if len(ws) != n:
        raise ConfigurationError(f"expected {n} weights, got {len(ws)}")
    if any(w <= 0 for w in ws) or sum(ws) != 1:
        raise ConfigurationError("weights must be positive and sum to 1")
    return ws


class Action:
    """Finitely many generators acting on hashable points."""

    names: tuple[str, ...]
    weights: tuple[Fraction, ...]
    x0: Hashable

    def __init__(self, names: Sequence[str], weights=None, x0: Hashable = None):
        self.names = tuple(names)
        self.weights = _fractions(weights, len(self.names))
        self.x0 = x0
        self._cache: dict = {}

    # -- exact interface ----------------------------------------------------
    def act(self, i: int, x):
        raise NotImplementedError

    def act_inverse(self, i: int, x):
        raise NotImplementedError

    def cached_act(self, i: int, x, inverse: bool = False):
        key = (i, x, inverse)
        y = self._cache.get(key)
        if y is None:
            y = self.act_inverse(i, x) if inverse else self.act(i, x)
            if len(self._cache) > 1 << 20:
                self._cache.clear()
            self._cache[key] = y
        return y

    def inverse_index(self, i: int) -> int | None:
        """Index of a generator equal to the inverse of generator i, if any."""
        return None

    def is_symmetric(self) -> bool:
        for i, w in enumerate(self.weights):
            j = self.inverse_index(i)
            if j is None or self.weights[j] != w:
                return False
        return True

    def displacement(self, x) -> tuple[int, ...]:
        """Free coordinates of x relative to x0 (for drift)."""
        raise NotImplementedError

    # -- batch interface ----------------------------------------------------
    def orbit_batch(self, steps: np.ndarray, checkpoints: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inverted-orbit sizes at checkpoints and forward return times."""
        B = steps.shape[0]
        sizes = np.zeros((B, len(checkpoints)), np.int64)
        ret = np.full(B, -1, np.int64)
        for b in range(B):
            s, t = self.orbit_exact(steps[b], checkpoints)
            sizes[b] = s
            ret[b] = t
        return sizes, ret

    def orbit_exact(self, row: Sequence[int], checkpoints: Sequence[int]) -> tuple[list[int], int]:
        """{x0, g_1^-1 x0, ..., g_n^-1 x0} with g_j = h_j ... h_1, by direct replay."""
        x0 = self.x0
        pts = {x0}
        want = list(checkpoints)
        out = []
        c = 0
        while c < len(want) and want[c] == 0:
            out.append(1)
            c += 1
        for j in range(1, len(row) + 1):
            y = x0
            for r in range(j - 1, -1, -1):
                y = self.cached_act(int(row[r]), y, inverse=True)
            pts.add(y)
            while c < len(want) and want[c] == j:
                out.append(len(pts))
                c += 1
        return out, self.return_time_exact(row)

    def orbit_prime_exact(self, row: Sequence[int], checkpoints: Sequence[int]) -> list[int]:
        """|{x0, w_1 x0, ..., w_k x0}| at checkpoints, w_k = h_1 ... h_k (right walk).

        Same law as the inverted orbit for each fixed k, not jointly in k.
        """
        x0 = self.x0
        pts = {x0}
        want = list(checkpoints)
        out = []
        c = 0
        while c < len(want) and want[c] == 0:
            out.append(1)
            c += 1
        for k in range(1, len(row) + 1):
            y = x0
            for r in range(k - 1, -1, -1):
                y = self.cached_act(int(row[r]), y)
            pts.add(y)
            while c < len(want) and want[c] == k:
                out.append(len(pts))
                c += 1
        return out

    def return_time_exact(self, row: Sequence[int]) -> int:
        x = self.x0
        for k, i in enumerate(row, 1):
            x = self.cached_act(int(i), x)
            if x == self.x0:
                return k
        return -1

    def forward_exact(self, row: Sequence[int]):
        x = self.x0
        for i in row:
            x = self.cached_act(int(i), x)
        return x

    def displacement_batch(self, steps: np.ndarray) -> np.ndarray:
        return np.array([self.displacement(self.forward_exact(r)) for r in steps], dtype=np.int64)


# ---------------------------------------------------------------------------


class LatticeAction(Action):
    """Translations of Z/m x Z^d by fixed vectors (the first coordinate is torsion)."""

    def __init__(self, vectors: Sequence[Sequence[int]], m: int = 1, names=None, weights=None):
        vecs = [tuple(int(c) for c in v) for v in vectors]
        if not vecs or len({len(v) for v in vecs}) != 1:
            raise ConfigurationError("vectors must be a nonempty list of equal-length tuples")
        self.m = int(m)
        self.vectors = [(v[0] % self.m,) + v[1:] for v in vecs]
        names = names or [f"v{i}" for i in range(len(vecs))]
        super().__init__(names, weights, (0,) * len(vecs[0]))
        self._vec_arr = np.array(self.vectors, dtype=np.int64)

    @classmethod
    def on_integers(cls, steps=(1, -1), weights=None) -> "LatticeAction":
        """Z acting on Z by the given translations (torsion slot trivial)."""
        return cls([(0, s) for s in steps], 1, [f"{s:+d}" for s in steps], weights)

    @classmethod
    def standard(cls, d: int) -> "LatticeAction":
        vecs, names = [], []
        for i in range(d):
            for s in (1, -1):
                v = [0] * (d + 1)
                v[i + 1] = s
                vecs.append(tuple(v))
                names.append(f"{'+' if s > 0 else '-'}e{i + 1}")
        return cls(vecs, 1, names)

    def act(self, i, x):
        v = self.vectors[i]
        return ((x[0] + v[0]) % self.m,) + tuple(a + b for a, b in zip(x[1:], v[1:]))

    def act_inverse(self, i, x):
        v = self.vectors[i]
        return ((x[0] - v[0]) % self.m,) + tuple(a - b for a, b in zip(x[1:], v[1:]))

    def inverse_index(self, i):
        v = self.vectors[i]
        neg = ((-v[0]) % self.m,) + tuple(-c for c in v[1:])
        for j, w in enumerate(self.vectors):
            if w == neg:
                return j
        return None

    def displacement(self, x):
        return tuple(x[1:])

    def _kernel(self, steps, checkpoints):
        n = steps.shape[1]
        dim = self._vec_arr.shape[1] - 1
        shift = n * max(1, int(np.abs(self._vec_arr[:, 1:]).max(initial=0)))
        if self.m * (2 * shift + 1) ** dim >= 1 << 62:
            return None
        bits = max(4, math.ceil(math.log2(2 * (n + 2))) + 1)
        return K.lattice_walk_batch(steps, self._vec_arr, self.m, np.asarray(checkpoints, np.int64), bits, shift)

    def orbit_batch(self, steps, checkpoints):
        out = self._kernel(steps, checkpoints)
        if out is None:
            return super().orbit_batch(steps, checkpoints)
        return out[0], out[1]

    def displacement_batch(self, steps):
        out = self._kernel(steps, np.zeros(0, np.int64))
        if out is None:
            return super().displacement_batch(steps)
        return out[2][:, 1:]


# ---------------------------------------------------------------------------


class FreeProductAction(Action):
    """The free product of k copies of Z/2 acting on itself by left multiplication.

    Points are reduced words, stored as tuples of generator indices.
    """

    def __init__(self, k: int = 3, names=None, weights=None):
        if names is None:
            names = ["b", "r", "y"][:k] if k <= 3 else [f"s{i}" for i in range(k)]
        super().__init__(names, weights, ())
        self.k = k

    def act(self, i, w):
        if w and w[0] == i:
            return w[1:]
        return (i,) + w

    act_inverse = act

    def inverse_index(self, i):
        return i

    def displacement(self, w):
        return (len(w),)

    def orbit_batch(self, steps, checkpoints):
        sizes, _, ret = K.free_product_batch(steps, self.k, np.asarray(checkpoints, np.int64), steps.shape[1] + 2)
        return sizes, ret

    def word_lengths(self, steps, checkpoints):
        _, lengths, _ = K.free_product_batch(steps, self.k, np.asarray(checkpoints, np.int64), steps.shape[1] + 2)
        return lengths

    def displacement_batch(self, steps):
        # h_n ... h_1 and h_1 ... h_n are mutually reversed words, so the
        # right-walk kernel gives the same lengths
        return self.word_lengths(steps, np.array([steps.shape[1]], np.int64))


# ---------------------------------------------------------------------------


class IetAction(Action):
    """IET generators acting on the coset x0 + Lambda."""

    def __init__(self, group: AngleGroup, gens: Sequence[Iet], x0: Point, names=None, weights=None):
        self.group = group
        self.gens = list(gens)
        self.inv_gens = [inverse(g) for g in self.gens]
        names = names or [f"g{i}" for i in range(len(self.gens))]
        super().__init__(names, weights, x0)
        self._tables = None

    def act(self, i, x):
        return evaluate(self.gens[i], x)

    def act_inverse(self, i, x):
        return evaluate(self.inv_gens[i], x)

    def act_left(self, i, x):
        return evaluate_left(self.gens[i], x)

    def inverse_index(self, i):
        for j, g in enumerate(self.gens):
            if g == self.inv_gens[i]:
                return j
        return None

    def displacement(self, x: Point):
        return (x - self.x0).k

    def point_from_coords(self, row) -> Point:
        row = [int(c) for c in row]
        return self.group.point(self.x0.base, self.group.angle(row[0], row[1:]))

    def coords(self, x: Point) -> tuple[int, ...]:
        if x.base != self.x0.base:
            raise ConfigurationError("point outside the coset of the base point")
        return (x.offset.p,) + x.offset.k

    # -- compiled tables ----------------------------------------------------
    def all_rotations(self) -> bool:
        return all(g.is_rotation() for g in self.gens)

    def as_lattice(self) -> LatticeAction:
        """The same walk viewed on coordinates; only for rotation generators."""
        if not self.all_rotations():
            raise ConfigurationError("only rotation actions are lattice actions")
        vecs = [(g.translations[0].p,) + g.translations[0].k for g in self.gens]
        return LatticeAction(vecs, self.group.m, self.names, self.weights)

    def tables(self, horizon: int):
        """Arrays for generators followed by their inverses."""
        allg = self.gens + self.inv_gens
        G = len(allg)
        R = max(1, max(len(g.breakpoints) for g in allg))
        D = 1 + self.group.d
        nbp = np.zeros(G, np.int64)
        same = np.zeros((G, R), np.int8)
        bpc = np.zeros((G, R, D), np.int64)
        bpv = np.zeros((G, R), np.float64)
        tr = np.zeros((G, R, D), np.int64)
        base = self.x0.base
        for gi, g in enumerate(allg):
            nbp[gi] = len(g.breakpoints)
            for j, a in enumerate(g.breakpoints):
                same[gi, j] = a.base == base
                bpc[gi, j] = (a.offset.p,) + a.offset.k
                bpv[gi, j] = a.value
            for j, t in enumerate(g.translations):
                tr[gi, j] = (t.p,) + t.k
        norm = max((t.free_norm for g in allg for t in g.translations), default=0)
        k_bound = horizon * max(norm, 1) + max((a.offset.free_norm for g in allg for a in g.breakpoints), default=0)
        eps = max(1e-9, (self.group.d + 3) * (1 + k_bound) * 2.0**-46)
        inv = np.array([G // 2 + i for i in range(G // 2)] + list(range(G // 2)), np.int64)
        theta = np.array(self.group.theta_floats, np.float64)
        tr_val = tr[:, :, 0] / self.group.m + tr[:, :, 1:] @ theta
        return dict(inv=inv, m=self.group.m, theta=theta, base_val=self.group.base_floats[base],
                    nbp=nbp, bp_same=same, bp_coord=bpc, bp_val=bpv, tr=tr, tr_val=tr_val, eps=eps)

    def _x0_row(self):
        return np.array(self.coords(self.x0), np.int64)

    def orbit_batch(self, steps, checkpoints, exact: bool = False):
        if exact:
            return super().orbit_batch(steps, checkpoints)
        if self.all_rotations():
            return self.as_lattice().orbit_batch(steps, checkpoints)
        t = self.tables(steps.shape[1])
        sizes, ret, status = K.iet_orbit_batch(
            steps, t["inv"], self._x0_row(), np.asarray(checkpoints, np.int64), *K.iet_args(t))
        for b in np.nonzero(status)[0]:
            s, r = self.orbit_exact(steps[b], checkpoints)
            sizes[b] = s
            ret[b] = r
        return sizes, ret

    def displacement_batch(self, steps, exact: bool = False):
        if exact:
            return super().displacement_batch(steps)
        t = self.tables(steps.shape[1])
        final, status = K.iet_forward_batch(
            steps, self._x0_row(), *K.iet_args(t))
        out = final[:, 1:] - self._x0_row()[1:]
        for b in np.nonzero(status)[0]:
            out[b] = self.displacement(self.forward_exact(steps[b]))
        return out
