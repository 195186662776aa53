from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from ietlab.angles import AngleGroup, ConfigurationError
from ietlab.iet import compose, evaluate, fraction_point, identity, inverse, random_iet, rotation, swap
from ietlab.walks import trajectory_rng
from ietlab.wreath import LampConfig, SwsMeasure, lamp_translate, lamp_xor, sws_step

G = AngleGroup(thetas=("sqrt(2)-1",), m=8)
P = lambda q: fraction_point(G, q)
SW = swap(P("0"), P("1/4"), P("1/2"))


class Scripted:
    """Stands in for a Generator: replays a fixed list of integer draws."""

    def __init__(self, values):
        self.values = list(values)

    def integers(self, n):
        return self.values.pop(0) % n


def test_xor_laws():
    x, y = P("1/8"), P("3/8")
    a = LampConfig.of(x, P("5/8"))
    assert lamp_xor(a, LampConfig()) == a
    assert lamp_xor(a, a) == LampConfig()
    assert LampConfig.of(x) ^ LampConfig.of(x, y) == LampConfig.of(y)
    b, c = LampConfig.of(y), LampConfig.of(x, y)
    assert (a ^ b) ^ c == a ^ (b ^ c) and a ^ b == b ^ a


def test_translate():
    a = LampConfig.of(P("1/8"))
    assert lamp_translate(identity(G), a) == a
    assert lamp_translate(SW, a) == LampConfig.of(P("3/8"))
    lam = G.theta(0)
    assert lamp_translate(rotation(lam), a) == LampConfig.of(P("1/8") + lam)


def test_translate_is_an_action():
    rng = np.random.default_rng(0)
    a = LampConfig.of(P("0"), P("1/8"), G.point(0, G.angle(3, [2])))
    for _ in range(10):
        g, h = random_iet(G, rng), random_iet(G, rng)
        assert lamp_translate(compose(g, h), a) == lamp_translate(g, lamp_translate(h, a))


def test_degenerate_measure_four_outcomes():
    mu = SwsMeasure((("e", 1),), P("0"))
    gens = {"e": identity(G)}
    out = Counter()
    for c1 in (0, 1):
        for c2 in (0, 1):
            f, g = sws_step((LampConfig(), identity(G)), mu, gens, Scripted([c1, 0, c2]))
            out[f] += Fraction(1, 4)
            assert g == identity(G)
    assert out == {LampConfig(): Fraction(1, 2), LampConfig.of(P("0")): Fraction(1, 2)}


def test_measure_validation():
    with pytest.raises(ConfigurationError):
        SwsMeasure((("a", "1/2"), ("b", "1/3")), 0)
    with pytest.raises(ConfigurationError):
        SwsMeasure((("a", "2/3"), ("b", "1/3")), 0, inverses={"a": "b", "b": "a"})
    SwsMeasure((("a", "1/2"), ("A", "1/2")), 0, inverses={"a": "A", "A": "a"})


def test_lit_points_stay_in_running_orbit():
    r = rotation(G.theta(0))
    gens = {"r": r, "R": inverse(r), "s": SW}
    x0 = P("1/4")
    mu = SwsMeasure((("r", "1/3"), ("R", "1/3"), ("s", "1/3")), x0, inverses={"r": "R", "R": "r", "s": "s"})
    for i in range(40):
        rng = trajectory_rng(9, i)
        state = (LampConfig(), identity(G))
        visited = {x0}
        for _ in range(15):
            state = sws_step(state, mu, gens, rng)
            visited.add(evaluate(state[1], x0))
            assert state[0].lit <= visited


def test_group_coordinate_is_plain_walk():
    mu = SwsMeasure((("+", "1/2"), ("-", "1/2")), 0)
    gens = {"+": 1, "-": -1}
    act = lambda g, x: g + x
    mul = lambda g, h: g + h
    rng = np.random.default_rng(3)
    ends = []
    for _ in range(4000):
        state = (LampConfig(), 0)
        for _ in range(4):
            state = sws_step(state, mu, gens, rng, act=act, multiply=mul)
        ends.append(state[1])
    # position after 4 steps: P(0) = 6/16
    p = ends.count(0) / len(ends)
    assert abs(p - 0.375) < 3 * np.sqrt(0.375 * 0.625 / len(ends))
