"""Random walks, inverted orbits and their estimators.

Trajectory ``i`` of a run with seed ``s`` draws its increments from its own
stream ``SeedSequence(s, spawn_key=(i,))``.  Trajectories are processed in
fixed blocks and reduced into integer histograms, so results do not depend
on how many threads ran the blocks.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K
from .actions import Action, IetAction
from .angles import ConfigurationError, Point
from .iet import FinSuppPerm, Iet, cocycle, compose, conj, evaluate_left, identity, inverse

__all__ = [
    "BudgetExceeded",
    "EstimatorReport",
    "InvertedOrbitSample",
    "OrbitStats",
    "RecurrenceReport",
    "TauReport",
    "WalkSpec",
    "collect_orbit_stats",
    "drift_probe",
    "estimate_prop41",
    "estimate_recurrence",
    "exact_orbit_oracle",
    "exact_sws_return",
    "report_from_stats",
    "sample_inverted_orbit",
    "tau_infinity_probe",
    "tau_probe_reference",
]

BLOCK = 256


class BudgetExceeded(RuntimeError):
    """An exact computation would exceed its configured budget."""


# ---------------------------------------------------------------------------
# specs and step streams


@dataclass
class WalkSpec:
    action: Action
    horizon: int
    trajectories: int = 1000
    seed: int = 0
    checkpoints: tuple[int, ...] | None = None
    symmetric: bool | None = None

    def __post_init__(self):
        if self.horizon < 0:
            raise ConfigurationError("horizon must be non-negative")
        if self.checkpoints is None:
            self.checkpoints = default_checkpoints(self.horizon)
        cps = tuple(sorted(set(int(c) for c in self.checkpoints)))
        if cps and (cps[0] < 0 or cps[-1] > self.horizon):
            raise ConfigurationError("checkpoints must lie in [0, horizon]")
        self.checkpoints = cps
        if self.symmetric and not self.action.is_symmetric():
            raise ConfigurationError("measure declared symmetric but is not")

    def rng(self, i: int) -> np.random.Generator:
        return trajectory_rng(self.seed, i)

    def steps(self, i0: int, i1: int, n: int | None = None) -> np.ndarray:
        return draw_steps(self.action.weights, self.seed, i0, i1, self.horizon if n is None else n)


def default_checkpoints(n: int) -> tuple[int, ...]:
    cps = set(range(0, min(n, 10) + 1))
    v = 10
    while v <= n:
        for f in (1, 2, 5):
            if f * v <= n:
                cps.add(f * v)
        v *= 10
    cps.add(n)
    return tuple(sorted(cps))


def trajectory_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(i),)))


def draw_steps(weights: Sequence[Fraction], seed: int, i0: int, i1: int, n: int) -> np.ndarray:
    """Generator indices for trajectories i0..i1-1; row i uses stream i."""
    G = len(weights)
    den = math.lcm(*(w.denominator for w in weights))
    cum = np.cumsum([int(w * den) for w in weights])
    uniform = den == G
    out = np.empty((i1 - i0, n), np.int8 if G < 128 else np.int64)
    for r, i in enumerate(range(i0, i1)):
        u = trajectory_rng(seed, i).integers(0, den, size=n)
        out[r] = u if uniform else np.searchsorted(cum, u, side="right")
    return out


def run_blocks(trajectories: int, fn: Callable[[int, int], object], threads: int = 1, block: int = BLOCK) -> list:
    """Apply fn to [i0, i1) blocks; results come back in block order."""
    bounds = [(i, min(i + block, trajectories)) for i in range(0, trajectories, block)]
    if threads <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


# ---------------------------------------------------------------------------
# inverted orbits


@dataclass
class InvertedOrbitSample:
    sizes: np.ndarray  # |O_0|, ..., |O_n|
    return_time: int  # -1 when no return by the horizon

    @property
    def censored(self) -> bool:
        return self.return_time < 0


def sample_inverted_orbit(spec: WalkSpec, index: int = 0, exact: bool = False,
                          route: str = "direct") -> InvertedOrbitSample:
    """Trajectory ``index`` of the spec.

    ``route="direct"`` replays the inverse prefix products g_j^-1 x0;
    ``route="prime"`` collects w_k x0 along the right walk w_k = h_1 ... h_k,
    which has the same law at each fixed n.
    """
    n = spec.horizon
    steps = spec.steps(index, index + 1)
    cps = np.arange(n + 1, dtype=np.int64)
    if route == "prime":
        s = spec.action.orbit_prime_exact(steps[0], cps)
        return InvertedOrbitSample(np.asarray(s, np.int64), spec.action.return_time_exact(steps[0]))
    if route != "direct":
        raise ConfigurationError(f"unknown route {route!r}")
    if exact:
        s, r = spec.action.orbit_exact(steps[0], cps)
        return InvertedOrbitSample(np.asarray(s, np.int64), int(r))
    sizes, ret = spec.action.orbit_batch(steps, cps)
    return InvertedOrbitSample(sizes[0].copy(), int(ret[0]))


@dataclass
class OrbitStats:
    """Histograms of |O_n| per checkpoint and of the return time (-1 = censored)."""

    checkpoints: tuple[int, ...]
    trajectories: int = 0
    sizes: list = field(default_factory=list)
    returns: Counter = field(default_factory=Counter)

    def __post_init__(self):
        if not self.sizes:
            self.sizes = [Counter() for _ in self.checkpoints]

    def add_batch(self, sizes: np.ndarray, ret: np.ndarray) -> None:
        self.trajectories += sizes.shape[0]
        for c in range(len(self.checkpoints)):
            vals, counts = np.unique(sizes[:, c], return_counts=True)
            self.sizes[c].update(dict(zip(vals.tolist(), counts.tolist())))
        vals, counts = np.unique(ret, return_counts=True)
        self.returns.update(dict(zip(vals.tolist(), counts.tolist())))

    def merge(self, other: "OrbitStats") -> "OrbitStats":
        if other.checkpoints != self.checkpoints:
            raise ValueError("cannot merge statistics over different checkpoints")
        out = OrbitStats(self.checkpoints, self.trajectories + other.trajectories)
        out.sizes = [a + b for a, b in zip(self.sizes, other.sizes)]
        out.returns = self.returns + other.returns
        return out


def collect_orbit_stats(spec: WalkSpec, threads: int = 1, exact: bool = False) -> OrbitStats:
    cps = np.asarray(spec.checkpoints, np.int64)

    def block(i0, i1):
        st = OrbitStats(spec.checkpoints)
        steps = spec.steps(i0, i1)
        if exact:
            sizes, ret = Action.orbit_batch(spec.action, steps, cps)
        else:
            sizes, ret = spec.action.orbit_batch(steps, cps)
        st.add_batch(sizes, ret)
        return st

    out = OrbitStats(spec.checkpoints)
    for st in run_blocks(spec.trajectories, block, threads):
        out = out.merge(st)
    return out


# -- histogram moments ---------------------------------------------------------


def _mean_se(hist: Counter, N: int, f=lambda v: v) -> tuple[float, float]:
    s1 = math.fsum(c * f(v) for v, c in hist.items())
    s2 = math.fsum(c * f(v) ** 2 for v, c in hist.items())
    mean = s1 / N
    var = max(s2 / N - mean * mean, 0.0) * N / max(N - 1, 1)
    return mean, math.sqrt(var / N)


def _log_mean_pow2(hist: Counter, N: int, scale: float = 1.0) -> float:
    """log of the sample mean of 2^(-scale*|O|), computed in log space."""
    terms = [math.log(c) - scale * v * math.log(2) for v, c in hist.items()]
    top = max(terms)
    return top + math.log(math.fsum(math.exp(t - top) for t in terms)) - math.log(N)


@dataclass
class EstimatorReport:
    n: list
    trajectories: int
    seed: int
    mean_size: list
    mean_size_se: list
    mean_ratio: list
    mean_ratio_se: list
    mean_pow2: list  # sample mean of 2^-|O_n|
    mean_pow2_se: list
    rate: list  # -(1/n) log mean 2^-|O_n|
    rate_se: list
    p_no_return: list  # P(T > n)
    p_no_return_se: list
    eps: list
    p_small: dict  # eps -> list of P(|O_n| < eps n)
    p_small_se: dict
    cond_ratio: dict  # eps -> list of E(|O_n|/n | |O_n| < eps n), nan when the event is empty

    def estimators(self) -> Iterable[tuple[str, list, list]]:
        yield "mean_size", self.mean_size, self.mean_size_se
        yield "mean_ratio", self.mean_ratio, self.mean_ratio_se
        yield "mean_pow2", self.mean_pow2, self.mean_pow2_se
        yield "rate", self.rate, self.rate_se
        yield "p_no_return", self.p_no_return, self.p_no_return_se
        for e in self.eps:
            yield f"p_small[{e}]", self.p_small[e], self.p_small_se[e]


def report_from_stats(st: OrbitStats, seed: int, eps_grid: Sequence[float] = (0.01, 0.05, 0.1)) -> EstimatorReport:
    N = st.trajectories
    if N < 2:
        raise ConfigurationError("need at least two trajectories")
    ns = list(st.checkpoints)
    rep = EstimatorReport(ns, N, seed, [], [], [], [], [], [], [], [], [], [], list(eps_grid), {}, {}, {})
    censored_or_late = lambda n: sum(c for t, c in st.returns.items() if t < 0 or t > n)
    for idx, n in enumerate(ns):
        h = st.sizes[idx]
        m, se = _mean_se(h, N)
        rep.mean_size.append(m)
        rep.mean_size_se.append(se)
        rep.mean_ratio.append(m / n if n else math.nan)
        rep.mean_ratio_se.append(se / n if n else math.nan)
        lE = _log_mean_pow2(h, N)
        lE4 = _log_mean_pow2(h, N, 2.0)
        rel = math.sqrt(max(math.exp(lE4 - 2 * lE) - 1.0, 0.0) * N / max(N - 1, 1) / N)
        rep.mean_pow2.append(math.exp(lE))
        rep.mean_pow2_se.append(math.exp(lE) * rel)
        rep.rate.append(-lE / n if n else math.nan)
        rep.rate_se.append(rel / n if n else math.nan)
        p = censored_or_late(n) / N
        rep.p_no_return.append(p)
        rep.p_no_return_se.append(math.sqrt(p * (1 - p) / N))
    for e in eps_grid:
        ps, pse, cr = [], [], []
        for idx, n in enumerate(ns):
            h = st.sizes[idx]
            hit = {v: c for v, c in h.items() if v < e * n}
            k = sum(hit.values())
            p = k / N
            ps.append(p)
            pse.append(math.sqrt(p * (1 - p) / N))
            cr.append(math.fsum(v * c for v, c in hit.items()) / k / n if k else math.nan)
        rep.p_small[e], rep.p_small_se[e], rep.cond_ratio[e] = ps, pse, cr
    return rep


def estimate_prop41(spec: WalkSpec, eps_grid: Sequence[float] = (0.01, 0.05, 0.1), threads: int = 1) -> EstimatorReport:
    """The three return-probability / inverted-orbit criteria from one sample."""
    if spec.trajectories < 100:
        raise ConfigurationError("estimate_prop41 needs at least 100 trajectories")
    return report_from_stats(collect_orbit_stats(spec, threads), spec.seed, eps_grid)


@dataclass
class RecurrenceReport:
    horizon: int
    trajectories: int
    slope: float  # (E|O_n| - E|O_{n/2}|) / (n - n/2)
    slope_se: float
    no_return: float  # fraction of trajectories with no return by the horizon
    no_return_se: float
    note: str = "both estimates are horizon-truncated: the no-return fraction is an upper bracket"


def estimate_recurrence(spec: WalkSpec, threads: int = 1, stats: OrbitStats | None = None) -> RecurrenceReport:
    n = spec.horizon
    half = n // 2
    if stats is None:
        cps = tuple(sorted(set(spec.checkpoints) | {half, n}))
        spec = WalkSpec(spec.action, n, spec.trajectories, spec.seed, cps)
        stats = collect_orbit_stats(spec, threads)
    N = stats.trajectories
    cps = list(stats.checkpoints)
    hi, lo = stats.sizes[cps.index(n)], stats.sizes[cps.index(half)]
    m_hi, _ = _mean_se(hi, N)
    m_lo, _ = _mean_se(lo, N)
    # the per-trajectory increment is not available from marginal histograms;
    # its spread is bounded by that of |O_n| - |O_{n/2}| <= n - n/2
    var_hi = _mean_se(hi, N)[1] ** 2
    var_lo = _mean_se(lo, N)[1] ** 2
    width = n - half
    slope = (m_hi - m_lo) / width
    slope_se = math.sqrt(var_hi + var_lo) / width
    c = stats.returns.get(-1, 0) + sum(v for t, v in stats.returns.items() if t > n)
    p = c / N
    return RecurrenceReport(n, N, slope, slope_se, p, math.sqrt(p * (1 - p) / N))


# ---------------------------------------------------------------------------
# exact oracles


@dataclass
class OracleResult:
    n: int
    expectation: Fraction  # E 2^-|O_n|
    distribution: dict  # |O_n| -> probability
    words: int


def exact_orbit_oracle(action: Action, n: int, budget: int = 10**7) -> OracleResult:
    """Enumerate every length-n word and compute O_n from its definition."""
    G = len(action.weights)
    if G**n > budget:
        raise BudgetExceeded(f"{G}^{n} words exceed the budget of {budget}")
    x0 = action.x0
    dist: dict[int, Fraction] = {}
    words = 0
    for word in itertools.product(range(G), repeat=n):
        p = Fraction(1)
        for i in word:
            p *= action.weights[i]
        pts = {x0}
        for j in range(1, n + 1):
            y = x0
            for r in range(j - 1, -1, -1):  # g_j^-1 = h_1^-1 ... h_j^-1
                y = action.cached_act(word[r], y, inverse=True)
            pts.add(y)
        dist[len(pts)] = dist.get(len(pts), Fraction(0)) + p
        words += 1
    exp = sum((p / 2**s for s, p in dist.items()), Fraction(0))
    return OracleResult(n, exp, dict(sorted(dist.items())), words)


def exact_sws_return(action: Action, n: int, budget: int = 10**7) -> Fraction:
    """P(f_n = f_0) for the switch-walk-switch chain, by exact convolution.

    The configuration is tracked in the frame of the walker, F_n = g_n^-1 f_n,
    which is a Markov chain on its own: randomize the lamp at x0, translate by
    h^-1, randomize the lamp at x0.
    """
    x0 = action.x0
    half = Fraction(1, 2)
    dist: dict[frozenset, Fraction] = {frozenset(): Fraction(1)}
    for _ in range(n):
        nxt: dict[frozenset, Fraction] = {}
        for conf, p in dist.items():
            for c1 in (conf, conf ^ {x0}):
                for i, w in enumerate(action.weights):
                    moved = frozenset(action.cached_act(i, x, inverse=True) for x in c1)
                    for c2 in (moved, moved ^ {x0}):
                        nxt[c2] = nxt.get(c2, Fraction(0)) + p * w * half * half
        dist = nxt
        if len(dist) > budget:
            raise BudgetExceeded(f"{len(dist)} configurations exceed the budget of {budget}")
    return dist.get(frozenset(), Fraction(0))


# ---------------------------------------------------------------------------
# drift


@dataclass
class DriftReport:
    horizon: int
    trajectories: int
    drift: list
    drift_se: list


def drift_probe(action: Action, horizon: int, trajectories: int, seed: int, threads: int = 1) -> DriftReport:
    """Mean free-coordinate displacement of g_n x0 divided by n."""
    weights = action.weights

    def block(i0, i1):
        steps = draw_steps(weights, seed, i0, i1, horizon)
        return action.displacement_batch(steps)

    disp = np.concatenate(run_blocks(trajectories, block, threads)).astype(np.float64) / horizon
    mean = disp.mean(axis=0)
    se = disp.std(axis=0, ddof=1) / math.sqrt(trajectories) if trajectories > 1 else np.zeros_like(mean)
    return DriftReport(horizon, trajectories, mean.tolist(), se.tolist())


# ---------------------------------------------------------------------------
# tau stabilization


@dataclass
class TauReport:
    checkpoints: list
    trajectories: int
    points: int
    stabilized: list  # fraction of (trajectory, point) pairs with no change after each checkpoint
    unchanged: dict  # (a, b) -> fraction with equal tau values at checkpoints a and b
    mean_changes: float
    changes_by_point: list  # mean number of changes per sample point


def _tau_tables(action: IetAction, horizon: int):
    t = action.tables(horizon)
    G = len(action.gens)
    D = 1 + action.group.d
    supp = [[a for a in inverse(g).breakpoints if a.base == action.x0.base] for g in action.gens]
    R = max(1, max(len(s) for s in supp))
    cnt = np.array([len(s) for s in supp], np.int64)
    coord = np.zeros((G, R, D), np.int64)
    for i, s in enumerate(supp):
        for j, a in enumerate(s):
            coord[i, j] = (a.offset.p,) + a.offset.k
    return t, cnt, coord


def _tau_exact_row(action: IetAction, row, points: Sequence[Point], checkpoints):
    """Exact version of the compiled probe for one trajectory."""
    supp = [frozenset(inverse(g).breakpoints) for g in action.gens]
    S, C = len(points), len(checkpoints)
    last = np.zeros(S, np.int64)
    changes = np.zeros(S, np.int64)
    values = [[None] * C for _ in range(S)]
    for s, x in enumerate(points):
        y = x
        c = 0
        while c < C and checkpoints[c] == 0:
            values[s][c] = x
            c += 1
        for k in range(1, len(row) + 1):
            h = int(row[k - 1])
            if y in supp[h]:
                last[s] = k
                changes[s] += 1
            y = action.act_inverse(h, y)
            while c < C and checkpoints[c] == k:
                v = y
                for r in range(k - 1, -1, -1):
                    v = action.act_left(int(row[r]), v)
                values[s][c] = v
                c += 1
    return last, changes, values


def tau_probe_rows(action: IetAction, steps: np.ndarray, points: Sequence[Point], checkpoints,
                   exact: bool = False):
    """Per-trajectory last change, change count and tau values (as Points)."""
    cps = np.asarray(checkpoints, np.int64)
    B = steps.shape[0]
    if exact:
        rows = [_tau_exact_row(action, steps[b], points, cps) for b in range(B)]
        return [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows]
    t, cnt, coord = _tau_tables(action, steps.shape[1])
    pts = np.array([action.coords(p) for p in points], np.int64)
    last, changes, values, status = K.tau_probe_batch(
        steps, t["inv"], pts, cps, cnt, coord, *K.iet_args(t))
    lasts, chs, vals = [], [], []
    for b in range(B):
        if status[b]:
            l, ch, v = _tau_exact_row(action, steps[b], points, cps)
        else:
            l, ch = last[b], changes[b]
            v = [[action.point_from_coords(values[b, s, c]) for c in range(len(cps))] for s in range(len(points))]
        lasts.append(l)
        chs.append(ch)
        vals.append(v)
    return lasts, chs, vals


def tau_infinity_probe(action: IetAction, sample_points: Sequence[Point], horizon: int, checkpoints: Sequence[int],
                       trajectories: int, seed: int, threads: int = 1, pairs: Sequence[tuple[int, int]] = ()) -> TauReport:
    """Stabilization of tau_{g_n} at sample points along the right walk."""
    cps = tuple(sorted(set(int(c) for c in checkpoints) | {horizon}))
    S = len(sample_points)
    for p in sample_points:
        action.coords(p)
    pts = np.array([action.coords(p) for p in sample_points], np.int64)
    t, cnt, coord = _tau_tables(action, horizon)
    cps_arr = np.asarray(cps, np.int64)
    pairs = list(pairs) or [(a, cps[-1]) for a in cps[:-1]]
    for a, b in pairs:
        if a not in cps or b not in cps:
            raise ConfigurationError(f"pair ({a}, {b}) is not made of checkpoints")

    def block(i0, i1):
        steps = draw_steps(action.weights, seed, i0, i1, horizon)
        last, changes, values, status = K.tau_probe_batch(
            steps, t["inv"], pts, cps_arr, cnt, coord, *K.iet_args(t))
        stab = np.zeros(len(cps), np.int64)
        same = Counter()
        chg = np.zeros(S, np.int64)
        for b in range(steps.shape[0]):
            if status[b]:
                l, ch, v = _tau_exact_row(action, steps[b], sample_points, cps_arr)
                vals = [[action.coords(p) for p in vs] for vs in v]
            else:
                l, ch = last[b], changes[b]
                vals = [[tuple(values[b, s, c]) for c in range(len(cps))] for s in range(S)]
            for ci, c in enumerate(cps):
                stab[ci] += int(np.sum(np.asarray(l) <= c))
            for a, bb in pairs:
                ia, ib = cps.index(a), cps.index(bb)
                same[(a, bb)] += sum(1 for s in range(S) if tuple(vals[s][ia]) == tuple(vals[s][ib]))
            chg += np.asarray(ch, np.int64)
        return stab, same, chg

    stab = np.zeros(len(cps), np.int64)
    same = Counter()
    chg = np.zeros(S, np.int64)
    for a, b, c in run_blocks(trajectories, block, threads):
        stab += a
        same += b
        chg += c
    tot = trajectories * S
    return TauReport(
        list(cps), trajectories, S,
        [int(v) / tot for v in stab],
        {k: same[k] / tot for k in pairs},
        float(chg.sum()) / tot,
        (chg / trajectories).tolist(),
    )


def tau_probe_reference(gens: Sequence[Iet], row: Sequence[int], points: Sequence[Point], checkpoints) -> list:
    """tau_{g_n}(x) from the composed element and the cocycle recursion.

    g_n = g_{n-1} h_n and tau_{g_n} = tau_{g_{n-1}} conj(g_{n-1}, tau_{h_n}).
    Returns values[point][checkpoint].  Used to cross-check the fast probe.
    """
    group = gens[0].group
    taus = [cocycle(g) for g in gens]
    g = identity(group)
    tau = FinSuppPerm()
    cps = list(checkpoints)
    out = [[None] * len(cps) for _ in points]
    c = 0

    def record(ci):
        for s, x in enumerate(points):
            out[s][ci] = tau(x)

    while c < len(cps) and cps[c] == 0:
        record(c)
        c += 1
    for k, i in enumerate(row, 1):
        tau = tau * conj(g, taus[int(i)])
        g = compose(g, gens[int(i)])
        while c < len(cps) and cps[c] == k:
            record(c)
            c += 1
    return out


# ---------------------------------------------------------------------------
# records


def report_records(rep: EstimatorReport, experiment: str) -> list[dict]:
    out = []
    for name, vals, ses in rep.estimators():
        for n, v, s in zip(rep.n, vals, ses):
            if n == 0 and name in ("mean_ratio", "rate"):
                continue
            out.append({"experiment": experiment, "n": n, "estimator": name, "estimate": v, "stderr": s,
                        "trajectories": rep.trajectories, "seed": rep.seed})
    return out


def report_csv(rep: EstimatorReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = [name for name, _, _ in rep.estimators()]
    w.writerow(["n"] + [c for nm in names for c in (nm, nm + "_se")])
    cols = [(v, s) for _, v, s in rep.estimators()]
    for i, n in enumerate(rep.n):
        w.writerow([n] + [repr(x[i]) for pair in cols for x in pair])
    return buf.getvalue()
