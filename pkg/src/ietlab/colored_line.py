"""Proper 3-colorings of Z, the free-product action on them, and the H-walk.

Colors and generators share the alphabet ``b < r < y`` (codes 0, 1, 2).
Edge e joins vertices e and e + 1; a generator swaps across whichever of the
two edges at x carries its color.

Two line layouts are available.

``markov``
    Every edge is drawn from the uniform Markov chain on proper colorings and
    marked copies are found by searching to the right of the frontier.  Only
    short words can be registered this way: a fixed proper word of length L
    shows up about once every 3 * 2^(L-1) edges.

``planted``
    The negative half-line is Markov.  The positive half-line is a sequence
    of blocks, one per reduced word in length-lexicographic order; the block
    of w holds |w| + 1 copies of w~ w w~ separated by short random fillers.
    Block positions are closed-form, so marks of any word can be located
    without materializing the words before it.
"""

from __future__ import annotations

import bisect
import functools
import io
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sstats

from . import _kernels as K
from .angles import ConfigurationError
from .walks import run_blocks, trajectory_rng

__all__ = [
    "ALPHABET",
    "ColoredLine",
    "DecayReport",
    "HWalkState",
    "MarkEntry",
    "MarkRegistry",
    "SearchHorizonExceeded",
    "SpectralReport",
    "build_f_up_to",
    "chi_square_uniform",
    "color_at",
    "decay_estimate",
    "eval_f",
    "eval_t_n",
    "free_action",
    "h_walk_step",
    "length_lex_words",
    "pair_frequencies",
    "spectral_probe",
    "word_from_rank",
    "word_rank",
]

ALPHABET = "bry"
_CODE = {c: i for i, c in enumerate(ALPHABET)}
_FILL_KEY = 0x46494C4C
_NEG_KEY = 0x4E4547
_POS_KEY = 0x504F53
_CHUNK = 1 << 14
WTILDE_FACTOR = 5


class SearchHorizonExceeded(RuntimeError):
    """No room was found for a word's copies within the search cap."""

    def __init__(self, word, horizon):
        self.word = word
        self.horizon = horizon
        super().__init__(f"copies of {render_word(word) or 'e'} not found within {horizon} edges of the frontier")


def _code(c) -> int:
    if isinstance(c, str):
        if c.lower() not in _CODE:
            raise ConfigurationError(f"unknown color {c!r}")
        return _CODE[c.lower()]
    c = int(c)
    if not 0 <= c < 3:
        raise ConfigurationError(f"unknown color code {c}")
    return c


def as_word(w) -> tuple:
    if isinstance(w, str):
        return tuple(_code(c) for c in w)
    return tuple(int(c) for c in w)


def render_word(w) -> str:
    return "".join(ALPHABET[c] for c in w)


def is_reduced(w) -> bool:
    return all(a != b for a, b in zip(w, w[1:]))


# ---------------------------------------------------------------------------
# word order


def level_count(l: int) -> int:
    return 1 if l == 0 else 3 * 2 ** (l - 1)


def word_rank(w) -> int:
    """Rank of a reduced word among reduced words of the same length (lex order)."""
    w = as_word(w)
    if not w:
        return 0
    if not is_reduced(w):
        raise ConfigurationError(f"{render_word(w)} is not reduced")
    r = w[0]
    for prev, c in zip(w, w[1:]):
        r = 2 * r + (c - (c > prev))
    return r


def word_from_rank(l: int, rank: int) -> tuple:
    if not 0 <= rank < level_count(l):
        raise ConfigurationError(f"rank {rank} out of range for length {l}")
    if l == 0:
        return ()
    bits = [(rank >> (l - 1 - j)) & 1 for j in range(1, l)]
    w = [rank >> (l - 1)]
    for b in bits:
        prev = w[-1]
        c = b + (b >= prev)
        w.append(c)
    return tuple(w)


def length_lex_words():
    l = 0
    while True:
        for r in range(level_count(l)):
            yield word_from_rank(l, r)
        l += 1


@functools.lru_cache(maxsize=None)
def auxiliary_word(w: tuple) -> tuple:
    """Lexicographically first proper word u of length 5|w| with u w u proper."""
    L = WTILDE_FACTOR * len(w)
    if L == 0:
        return ()
    first, last = w[0], w[-1]
    u = []

    def extend() -> bool:
        if len(u) == L:
            return u[-1] != first
        for c in range(3):
            if u and u[-1] == c:
                continue
            if not u and c == last:
                continue
            u.append(c)
            if extend():
                return True
            u.pop()
        return False

    if not extend():  # pragma: no cover - three colors always leave room
        raise ConfigurationError(f"no auxiliary word for {render_word(w)}")
    return tuple(u)


def copy_pattern(w: tuple) -> np.ndarray:
    u = auxiliary_word(w)
    return np.array(u + w + u, np.int8)


# ---------------------------------------------------------------------------
# Markov half-lines


def _chain(last: int, bits: np.ndarray) -> np.ndarray:
    """Successive proper colors after ``last``: each step moves by 1 or 2 mod 3."""
    return ((last + np.cumsum(1 + bits.astype(np.int64))) % 3).astype(np.int8)


class _MarkovRay:
    """Edges 0, 1, 2, ... of a seeded Markov chain, extended in fixed chunks."""

    def __init__(self, seed: int, key: int, first: Callable[[np.random.Generator], int]):
        self._rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))
        self._lock = threading.Lock()
        self._first = first(self._rng)
        self._data = np.empty(0, np.int8)

    def _extend_to(self, n: int) -> None:
        while self._data.shape[0] < n:
            bits = self._rng.integers(0, 2, size=_CHUNK)
            if self._data.shape[0] == 0:
                head = np.array([self._first], np.int8)
                chunk = np.concatenate([head, _chain(self._first, bits[1:])])
            else:
                chunk = _chain(int(self._data[-1]), bits)
            self._data = np.concatenate([self._data, chunk])

    def get(self, lo: int, hi: int) -> np.ndarray:
        with self._lock:
            self._extend_to(hi)
            return self._data[lo:hi].copy()

    def view(self, hi: int) -> np.ndarray:
        """Read-only prefix of length at least ``hi``; published arrays are never mutated."""
        with self._lock:
            self._extend_to(hi)
            return self._data


# ---------------------------------------------------------------------------
# planted layout


@dataclass(frozen=True)
class _Layout:
    gap: int = 4

    def copy_len(self, l: int) -> int:
        return (2 * WTILDE_FACTOR + 1) * l

    def block_len(self, l: int) -> int:
        return self.gap + (l + 1) * (self.copy_len(l) + self.gap)


class _LevelStarts:
    """Cumulative block starts per word length; Python integers, extended on demand."""

    def __init__(self, layout: _Layout):
        self.layout = layout
        self.starts = [0]
        self._lock = threading.Lock()

    def level_start(self, l: int) -> int:
        with self._lock:
            while len(self.starts) <= l + 1:
                k = len(self.starts) - 1
                self.starts.append(self.starts[-1] + level_count(k) * self.layout.block_len(k))
            return self.starts[l]

    def locate(self, p: int) -> tuple[int, int, int]:
        """(length, rank, offset) of the block holding edge or vertex p >= 0."""
        l = 0
        while self.level_start(l + 1) <= p:
            l += 1
        B = self.layout.block_len(l)
        rank, off = divmod(p - self.level_start(l), B)
        return l, rank, off

    def block_start(self, l: int, rank: int) -> int:
        return self.level_start(l) + rank * self.layout.block_len(l)


@functools.lru_cache(maxsize=8192)
def _planted_block(seed: int, gap: int, l: int, rank: int) -> np.ndarray:
    layout = _Layout(gap)
    B = layout.block_len(l)
    arr = np.full(B, -1, np.int8)
    w = word_from_rank(l, rank)
    pat = copy_pattern(w)
    step = layout.copy_len(l) + gap
    for i in range(l + 1):
        cs = gap + i * step
        arr[cs:cs + pat.shape[0]] = pat
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(_FILL_KEY, l, rank)))
    arr[0] = 0
    for j in np.nonzero(arr < 0)[0]:
        prev = int(arr[j - 1])
        nxt = 0 if j == B - 1 else int(arr[j + 1])
        choices = [c for c in range(3) if c != prev and c != nxt]
        arr[j] = choices[int(rng.integers(len(choices)))]
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------


class ColoredLine:
    """A seeded proper 3-coloring of the edges of Z, generated lazily."""

    def __init__(self, seed: int, layout: str = "markov", gap: int = 4):
        if layout not in ("markov", "planted"):
            raise ConfigurationError(f"unknown layout {layout!r}")
        if gap < 1:
            raise ConfigurationError("filler gap must be at least 1")
        self.seed = int(seed)
        self.layout = layout
        self.gap = gap
        if layout == "markov":
            self._pos = _MarkovRay(seed, _POS_KEY, lambda rng: int(rng.integers(3)))
            pos0 = self._pos.get(0, 1)[0]
        else:
            self._pos = None
            self._levels = _LevelStarts(_Layout(gap))
            pos0 = 0
        # edge -1 - j for j >= 0
        self._neg = _MarkovRay(seed, _NEG_KEY, lambda rng: int((pos0 + 1 + rng.integers(2)) % 3))

    # -- geometry of the planted half
    def block_of(self, w) -> tuple[int, int]:
        """Vertex interval [start, end] of the planted block of w."""
        w = as_word(w)
        l = len(w)
        s = self._levels.block_start(l, word_rank(w))
        return s, s + _Layout(self.gap).block_len(l)

    def _planted_colors(self, lo: int, hi: int) -> np.ndarray:
        out = np.empty(hi - lo, np.int8)
        layout = _Layout(self.gap)
        p = lo
        while p < hi:
            l, rank, off = self._levels.locate(p)
            blk = _planted_block(self.seed, self.gap, l, rank)
            take = min(blk.shape[0] - off, hi - p)
            out[p - lo:p - lo + take] = blk[off:off + take]
            p += take
        return out

    def colors(self, lo: int, hi: int) -> np.ndarray:
        """Color codes of edges lo..hi-1."""
        if hi <= lo:
            return np.empty(0, np.int8)
        parts = []
        if lo < 0:
            top = min(hi, 0)
            parts.append(self._neg.get(-top, -lo)[::-1])
        if hi > 0:
            a = max(lo, 0)
            parts.append(self._pos.get(a, hi) if self._pos is not None else self._planted_colors(a, hi))
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    def code_at(self, edge: int) -> int:
        return int(self.colors(edge, edge + 1)[0])


def color_at(line: ColoredLine, edge: int) -> str:
    return ALPHABET[line.code_at(int(edge))]


def free_action(gen, x: int, line: ColoredLine) -> int:
    c = _code(gen)
    left, right = line.colors(x - 1, x + 1)
    if left == c:
        return x - 1
    if right == c:
        return x + 1
    return x


def act_word(w, x: int, line: ColoredLine) -> int:
    """w^-1 x for the group element w = c_1 ... c_m, i.e. c_1 applied first."""
    for c in as_word(w):
        x = free_action(c, x, line)
    return x


def pair_frequencies(line: ColoredLine, lo: int, hi: int) -> dict:
    """Empirical frequency of each ordered pair of adjacent edge colors on [lo, hi)."""
    col = line.colors(lo, hi).astype(np.int64)
    pairs = col[:-1] * 3 + col[1:]
    counts = np.bincount(pairs, minlength=9)
    tot = counts.sum()
    return {ALPHABET[a] + ALPHABET[b]: float(counts[3 * a + b] / tot) for a in range(3) for b in range(3) if a != b}


# ---------------------------------------------------------------------------
# the configuration f


@dataclass(frozen=True)
class MarkEntry:
    word: tuple
    wtilde: tuple
    interval: tuple  # (lo, hi) vertices of I_w
    copies: tuple  # start vertex of each copy of w~ w w~
    positions: tuple  # x_0(w), ..., x_l(w)

    @property
    def length(self) -> int:
        return len(self.word)

    @property
    def marks(self) -> tuple:
        return tuple(x + i for i, x in enumerate(self.positions))


class MarkRegistry:
    """Marked points of f, processed in length-lexicographic word order.

    On a planted line every entry is closed-form and ``entry`` never searches.
    On a Markov line entries are found by search, one word after another,
    each strictly to the right of the previous interval.
    """

    def __init__(self, line: ColoredLine, search_cap: int = 1 << 22, margin: int | None = None):
        self.line = line
        self.search_cap = int(search_cap)
        self.margin = margin
        self.entries: list[MarkEntry] = []
        self.frontier = 0
        self._marks: dict[int, tuple] = {}
        self._lock = threading.RLock()
        self._order = length_lex_words()

    # planted geometry
    def _planted_entry(self, w: tuple) -> MarkEntry:
        layout = _Layout(self.line.gap)
        l = len(w)
        start, end = self.line.block_of(w)
        step = layout.copy_len(l) + layout.gap
        copies = tuple(start + layout.gap + i * step for i in range(l + 1))
        pos = tuple(c + WTILDE_FACTOR * l for c in copies)
        return MarkEntry(w, auxiliary_word(w), (0, end), copies, pos)

    def _search_entry(self, w: tuple) -> MarkEntry:
        l = len(w)
        pat = copy_pattern(w).tobytes()
        ray = self.line._pos
        lo = self.frontier
        horizon = max(4 * len(pat), 1024)
        while True:
            hi = lo + min(horizon, self.search_cap)
            data = ray.view(hi)[lo:hi].tobytes()
            copies, at = [], 0
            for _ in range(l + 1):
                j = data.find(pat, at)
                if j < 0:
                    break
                copies.append(lo + j)
                at = j + max(len(pat), 1)
            if len(copies) == l + 1:
                break
            if horizon >= self.search_cap:
                raise SearchHorizonExceeded(w, self.search_cap)
            horizon *= 2
        margin = self.margin if self.margin is not None else max(l, 1)
        end = copies[-1] + len(pat) + margin
        pos = tuple(c + WTILDE_FACTOR * l for c in copies)
        return MarkEntry(w, auxiliary_word(w), (0, end), tuple(copies), pos)

    def _register_next(self) -> MarkEntry:
        w = next(self._order)
        e = self._planted_entry(w) if self.line.layout == "planted" else self._search_entry(w)
        self.entries.append(e)
        self.frontier = e.interval[1]
        for y in e.marks:
            self._marks[y] = w
        return e

    def build(self, word_budget: int) -> "MarkRegistry":
        with self._lock:
            if word_budget < len(self.entries):
                raise ConfigurationError(f"budget {word_budget} is below the {len(self.entries)} words already processed")
            while len(self.entries) < word_budget:
                self._register_next()
        return self

    def entry(self, w) -> MarkEntry:
        w = as_word(w)
        if not is_reduced(w):
            raise ConfigurationError(f"{render_word(w)} is not reduced")
        if self.line.layout == "planted":
            return self._planted_entry(w)
        target = sum(level_count(k) for k in range(len(w))) + word_rank(w) + 1
        self.build(max(target, len(self.entries)))
        return self.entries[target - 1]

    def f(self, y: int) -> int:
        y = int(y)
        if y < 0:
            return 0
        if self.line.layout == "planted":
            l, rank, off = self.line._levels.locate(y)
            layout = _Layout(self.line.gap)
            o = off - layout.gap
            if o < 0:
                return 0
            i, r = divmod(o, layout.copy_len(l) + layout.gap)
            return int(i <= l and r == WTILDE_FACTOR * l + i)
        with self._lock:
            while self.frontier <= y + 1:
                self._register_next()
            return int(y in self._marks)

    def marks_in(self, lo: int, hi: int) -> list[int]:
        """Marked vertices in [lo, hi]."""
        out = []
        if hi < 0:
            return out
        lo = max(lo, 0)
        if self.line.layout == "planted":
            lv = self.line._levels
            p = lo
            while p <= hi:
                l, rank, off = lv.locate(p)
                e = self._planted_entry(word_from_rank(l, rank))
                out.extend(y for y in e.marks if lo <= y <= hi)
                p = e.interval[1]
            return out
        with self._lock:
            while self.frontier <= hi + 1:
                self._register_next()
            return sorted(y for y in self._marks if lo <= y <= hi)

    def dump(self) -> str:
        buf = io.StringIO()
        buf.write(f"{'word':<12} {'l':>3} {'interval':>24}  marks\n")
        for e in self.entries:
            iv = f"[{e.interval[0]}, {e.interval[1]}]"
            buf.write(f"{render_word(e.word) or 'e':<12} {e.length:>3} {iv:>24}  {' '.join(map(str, e.marks))}\n")
        return buf.getvalue()

    def audit(self) -> None:
        """Check nesting, disjointness and the planted copies against the line."""
        seen = set()
        prev_hi = None
        for e in self.entries:
            if prev_hi is not None and e.interval[1] <= prev_hi:
                raise AssertionError(f"interval of {render_word(e.word)} does not grow")
            prev_hi = e.interval[1]
            if len(e.wtilde) < WTILDE_FACTOR * e.length:
                raise AssertionError("auxiliary word too short")
            pat = copy_pattern(e.word)
            ends = [c + pat.shape[0] for c in e.copies]
            if any(b > a for a, b in zip(e.copies[1:], ends[:-1])):
                raise AssertionError(f"copies of {render_word(e.word)} overlap")
            for c in e.copies:
                if not np.array_equal(self.line.colors(c, c + pat.shape[0]), pat):
                    raise AssertionError(f"copy of {render_word(e.word)} at {c} is not on the line")
            for y in e.marks:
                if y in seen:
                    raise AssertionError(f"mark {y} used twice")
                seen.add(y)


def build_f_up_to(registry: MarkRegistry, line: ColoredLine, word_budget: int) -> MarkRegistry:
    if registry.line is not line:
        raise ConfigurationError("registry belongs to a different line")
    return registry.build(word_budget)


def eval_f(registry: MarkRegistry, line: ColoredLine, y: int) -> int:
    if registry.line is not line:
        raise ConfigurationError("registry belongs to a different line")
    return registry.f(y)


# ---------------------------------------------------------------------------
# the H-walk, exact path


@dataclass(frozen=True)
class HWalkState:
    """Right walk g_n = (f_n, w_n) with increments eta * nu * eta.

    ``log`` holds one record per coin: (translate gamma as a reduced word,
    applied).  f_n is the sum of gamma . f over applied records.
    """

    word: tuple = ()
    steps: tuple = ()
    log: tuple = ()

    @property
    def n(self) -> int:
        return len(self.steps)


def _times(w: tuple, c: int) -> tuple:
    return w[:-1] if w and w[-1] == c else w + (c,)


def draw_codes(rng: np.random.Generator, n: int) -> np.ndarray:
    """Step codes u in [0, 12): first coin u % 2, generator (u // 2) % 3, second coin u // 6."""
    return rng.integers(0, 12, size=n).astype(np.int8)


def h_walk_step(state: HWalkState, rng: np.random.Generator | None = None, code: int | None = None) -> HWalkState:
    if code is None:
        code = int(rng.integers(0, 12))
    e1, h, e2 = code % 2, (code // 2) % 3, code // 6
    w = _times(state.word, h)
    log = state.log + ((state.word, bool(e1)), (w, bool(e2)))
    return HWalkState(w, state.steps + (h,), log)


def _zero(x):
    return 0


def eval_t_n(state: HWalkState, line: ColoredLine, registry: MarkRegistry, x: int,
             t: Callable[[int], int] | None = None) -> int:
    """t_n(x) = t(w_n^-1 x) + sum over applied records of f(gamma^-1 x)."""
    t = t or _zero
    v = int(t(act_word(state.word, x, line))) & 1
    for gamma, applied in state.log:
        if applied:
            v ^= registry.f(act_word(gamma, x, line))
    return v


def eval_t_n_chain(state: HWalkState, line: ColoredLine, registry: MarkRegistry, x: int,
                   t: Callable[[int], int] | None = None) -> int:
    """Same value from the raw step chain P_k = h_k P_{k-1}."""
    t = t or _zero
    v = 0
    p = x
    for k, h in enumerate(state.steps):
        if state.log[2 * k][1]:
            v ^= registry.f(p)
        p = free_action(h, p, line)
        if state.log[2 * k + 1][1]:
            v ^= registry.f(p)
    return v ^ (int(t(p)) & 1)


# ---------------------------------------------------------------------------
# decay of the agreement probability


def _reduce(codes: np.ndarray, n: int) -> tuple:
    w = []
    for u in codes[:n]:
        h = (int(u) // 2) % 3
        if w and w[-1] == h:
            w.pop()
        else:
            w.append(h)
    return tuple(w)


def marked_values(line: ColoredLine, registry: MarkRegistry, codes: np.ndarray, checkpoints: Sequence[int],
                  t: Callable[[np.ndarray], np.ndarray] | None = None) -> list:
    """t_n on the marked set of w_n for each trajectory row and checkpoint.

    Returns rows of (word, bits) per checkpoint.  ``t`` takes an array of
    vertices and returns bits; default t = 0.
    """
    tasks = []
    col_parts, f_parts, t_parts, mark_parts = [], [], [], []
    off = 0
    moff = 0
    meta = []
    for b in range(codes.shape[0]):
        for n in checkpoints:
            w = _reduce(codes[b], n)
            e = registry.entry(w)
            lo = e.positions[0] - n - 1
            hi = e.positions[-1] + n + 1
            col_parts.append(line.colors(lo, hi + 1))
            fv = np.zeros(hi - lo + 1, np.int8)
            for y in registry.marks_in(lo, hi):
                fv[y - lo] = 1
            f_parts.append(fv)
            if t is None:
                t_parts.append(np.zeros(hi - lo + 1, np.int8))
            else:
                t_parts.append(np.asarray(t(np.arange(lo, hi + 1, dtype=np.int64)), np.int8) & 1)
            rel = np.array([x - lo for x in e.positions], np.int64)
            mark_parts.append(rel)
            tasks.append((b, n, off, moff, rel.shape[0]))
            meta.append(w)
            off += hi - lo + 1
            moff += rel.shape[0]
    if not tasks:
        return []
    task = np.array(tasks, np.int64)
    bits = K.colored_marks_batch(codes, task, np.concatenate(mark_parts), np.concatenate(col_parts),
                                 np.concatenate(f_parts), np.concatenate(t_parts))
    out = []
    C = len(checkpoints)
    for b in range(codes.shape[0]):
        row = []
        for c in range(C):
            j = b * C + c
            _, _, _, m0, mc = tasks[j]
            row.append((meta[j], tuple(int(v) for v in bits[m0:m0 + mc])))
        out.append(row)
    return out


@dataclass
class DecayReport:
    checkpoints: list
    trajectories: int
    agree: list  # agreement count on the marked set, all trajectories
    empty: list  # trajectories with w_n = e
    agree_empty: list
    length_hist: list  # Counter of |w_n| per checkpoint
    vectors: Counter  # (length, rank, value vector as int) at the last checkpoint, 1 <= l <= chi_max_len
    chi_max_len: int

    def freq(self, i: int) -> float:
        return self.agree[i] / self.trajectories

    def rate(self, i: int) -> float:
        p = self.freq(i)
        return math.inf if p == 0 else -math.log(p) / self.checkpoints[i]

    def rate_se(self, i: int) -> float:
        N, k = self.trajectories, self.agree[i]
        if k == 0:
            return math.inf
        p = k / N
        return math.sqrt((1 - p) / (N * p)) / self.checkpoints[i]

    def rate_lower(self, i: int, level: float = 0.99) -> float:
        """Lower confidence bound for the rate from a one-sided Clopper-Pearson bound on the frequency."""
        N, k = self.trajectories, self.agree[i]
        p_hi = 1.0 if k == N else float(sstats.beta.ppf(level, k + 1, N - k))
        return -math.log(p_hi) / self.checkpoints[i]

    def chi_square(self, level: float = 0.01) -> dict:
        return chi_square_uniform(self.vectors, level)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,agree_freq,rate,rate_stderr,rate_lower99,empty_freq\n")
        for i, n in enumerate(self.checkpoints):
            buf.write(f"{n},{self.freq(i):.8g},{self.rate(i):.8g},{self.rate_se(i):.8g},"
                      f"{self.rate_lower(i):.8g},{self.empty[i] / self.trajectories:.8g}\n")
        return buf.getvalue()


def _chi(counts: Sequence[int], cells: int) -> tuple[float, int]:
    N = sum(counts)
    E = N / cells
    obs = list(counts) + [0] * (cells - len(counts))
    return sum((o - E) ** 2 / E for o in obs), cells - 1


def chi_square_uniform(vectors: Counter, level: float = 0.01, min_expected: float = 5.0) -> dict:
    """Uniformity of marked-value vectors against uniform on (Z/2)^(l+1).

    Two summed statistics: one table per word length (pooling words, each of
    which is uniform under the null) and one table per individual word.
    Tables with expected cell count below ``min_expected`` are skipped.
    """
    by_len: dict[int, Counter] = {}
    by_word: dict[tuple, Counter] = {}
    for (l, rank, vec), c in vectors.items():
        by_len.setdefault(l, Counter())[vec] += c
        by_word.setdefault((l, rank), Counter())[vec] += c

    def pooled(tables: dict) -> dict:
        stat, df, used = 0.0, 0, []
        for key in sorted(tables):
            l = key if isinstance(key, int) else key[0]
            cells = 2 ** (l + 1)
            cnt = tables[key]
            N = sum(cnt.values())
            if N / cells < min_expected:
                continue
            s, d = _chi([cnt.get(v, 0) for v in range(cells)], cells)
            stat += s
            df += d
            used.append(key)
        p = float(sstats.chi2.sf(stat, df)) if df else None
        return {"stat": stat, "df": df, "p": p, "tables": used, "passes": p is not None and p >= level}

    return {"by_length": pooled(by_len), "by_word": pooled(by_word), "level": level}


def decay_estimate(line: ColoredLine, registry: MarkRegistry, trajectories: int, horizon: int, seed: int,
                   checkpoints: Sequence[int] | None = None, threads: int = 1,
                   t: Callable[[np.ndarray], np.ndarray] | None = None, chi_max_len: int = 6) -> DecayReport:
    """Frequency of {t_n = t on the marked set of w_n} along the H-walk.

    For w_n = e the marked set is the single point x_0(e); those trajectories
    are also counted separately.
    """
    if horizon < 1 or trajectories < 1:
        raise ConfigurationError("need a positive horizon and trajectory count")
    cps = sorted(set(int(c) for c in (checkpoints or ())) | {int(horizon)})
    if cps[0] < 1:
        raise ConfigurationError("checkpoints must be positive")
    C = len(cps)

    def block(i0, i1):
        codes = np.stack([draw_codes(trajectory_rng(seed, i), horizon) for i in range(i0, i1)])
        rows = marked_values(line, registry, codes, cps, t)
        agree = [0] * C
        empty = [0] * C
        agree_e = [0] * C
        hist = [Counter() for _ in range(C)]
        vec = Counter()
        for row in rows:
            for c, (w, bits) in enumerate(row):
                ok = not any(bits)
                agree[c] += ok
                hist[c][len(w)] += 1
                if not w:
                    empty[c] += 1
                    agree_e[c] += ok
            w, bits = row[-1]
            if 1 <= len(w) <= chi_max_len:
                v = 0
                for bit in bits:
                    v = 2 * v + bit
                vec[(len(w), word_rank(w), v)] += 1
        return agree, empty, agree_e, hist, vec

    agree = [0] * C
    empty = [0] * C
    agree_e = [0] * C
    hist = [Counter() for _ in range(C)]
    vec = Counter()
    for a, e, ae, h, v in run_blocks(trajectories, block, threads):
        for c in range(C):
            agree[c] += a[c]
            empty[c] += e[c]
            agree_e[c] += ae[c]
            hist[c] += h[c]
        vec += v
    return DecayReport(cps, trajectories, agree, empty, agree_e, hist, vec, chi_max_len)


# ---------------------------------------------------------------------------
# spectral radius probe


def free_product_return_radial(n: int, k: int = 3) -> Fraction:
    """P(w_n = e) for the uniform walk on k copies of Z/2, from the word-length chain."""
    up = Fraction(k - 1, k)
    down = Fraction(1, k)
    dist = {0: Fraction(1)}
    for _ in range(n):
        nxt: dict[int, Fraction] = {}
        for j, p in dist.items():
            if j == 0:
                nxt[1] = nxt.get(1, 0) + p
            else:
                nxt[j + 1] = nxt.get(j + 1, 0) + p * up
                nxt[j - 1] = nxt.get(j - 1, 0) + p * down
        dist = nxt
    return dist.get(0, Fraction(0))


def free_product_return_convolution(n: int, k: int = 3) -> Fraction:
    """P(w_n = e) by convolving the step measure over group elements.

    For even n = 2m this is the sum over w of P(w_m = w) P(w_m = w^-1).
    """
    if n % 2:
        return Fraction(0)
    m = n // 2
    p = Fraction(1, k)
    dist = {(): Fraction(1)}
    for _ in range(m):
        nxt: dict[tuple, Fraction] = {}
        for w, q in dist.items():
            for c in range(k):
                v = _times(w, c)
                nxt[v] = nxt.get(v, 0) + q * p
        dist = nxt
    return sum(q * dist.get(tuple(reversed(w)), 0) for w, q in dist.items())


def line_return_exact(line: ColoredLine, n: int, x0: int = 0) -> Fraction:
    """P(return to x0 at time n) for the uniform generator walk on the colored line."""
    col = line.colors(x0 - n - 1, x0 + n + 1)
    off = n + 1 - x0  # vertex v sits at index v + off; edge e at col[e + off]
    counts = {x0: 1}
    for _ in range(n):
        nxt: dict[int, int] = {}
        for x, c in counts.items():
            left, right = int(col[x - 1 + off]), int(col[x + off])
            for g in range(3):
                y = x - 1 if left == g else x + 1 if right == g else x
                nxt[y] = nxt.get(y, 0) + c
        counts = nxt
    return Fraction(counts.get(x0, 0), 3 ** n)


@dataclass
class SpectralReport:
    n: int
    group_return: Fraction
    group_return_check: Fraction
    group_root: float
    target: float
    line_return: Fraction
    line_rate: float
    tolerance: float = 0.01
    line_bound: float = 0.02
    line_rates: dict = field(default_factory=dict)  # rate at further n for context

    @property
    def group_ok(self) -> bool:
        return abs(self.group_root - self.target) <= self.tolerance

    @property
    def line_ok(self) -> bool:
        return self.line_rate <= self.line_bound


def spectral_probe(line: ColoredLine, n: int = 24, extra: Sequence[int] = ()) -> SpectralReport:
    if n < 2 or n % 2:
        raise ConfigurationError("the probe needs an even n >= 2")
    g = free_product_return_radial(n)
    g2 = free_product_return_convolution(n)
    lr = line_return_exact(line, n)
    rates = {}
    for m in extra:
        q = line_return_exact(line, m)
        rates[int(m)] = -math.log(q) / m if q else math.inf
    return SpectralReport(
        n, g, g2, float(g) ** (1.0 / n), 2 * math.sqrt(2) / 3, lr, -math.log(lr) / n, line_rates=rates)
