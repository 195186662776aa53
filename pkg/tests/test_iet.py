from fractions import Fraction

import numpy as np
import pytest

from ietlab.angles import AngleGroup, ConfigurationError
from ietlab.iet import (FinSuppPerm, Iet, InvariantViolation, SemidirectElement, cocycle, compose, conj, evaluate,
                        format_iet, fraction_point, identity, inverse, iota, left_continuous_companion, parse_iet,
                        random_iet, random_rotation, rational_rank, rotation, semidirect_multiply, support_map, swap)
from ietlab.wreath import LampConfig

Q = AngleGroup(m=4)  # d = 0
G = AngleGroup(thetas=("sqrt(2)-1",), m=4)


def P(q, group=Q):
    return fraction_point(group, q)


SW = swap(P("0"), P("1/4"), P("1/2"))


def piecewise(x: Fraction) -> Fraction:
    # [0,1/4) +1/4, [1/4,1/2) -1/4, [1/2,1) fixed
    if x < Fraction(1, 4):
        return x + Fraction(1, 4)
    if x < Fraction(1, 2):
        return x - Fraction(1, 4)
    return x


def frac(x):
    return Fraction(x.offset.p, x.group.m)


def test_swap_evaluation():
    Q8 = AngleGroup(m=8)
    g = swap(P("0", Q8), P("1/4", Q8), P("1/2", Q8))
    assert evaluate(g, P("1/8", Q8)) == P("3/8", Q8)
    for p in range(8):
        x = P(Fraction(p, 8), Q8)
        assert frac(evaluate(g, x)) == piecewise(Fraction(p, 8))


def test_identity_and_rotation_evaluation():
    x = G.point(0, G.angle(1, [2]))
    assert evaluate(identity(G), x) == x
    lam = G.angle(3, [-1])
    assert evaluate(rotation(lam), x) == x + lam


def test_swap_arcs():
    assert SW.arcs == 3
    assert [frac(a) for a in SW.breakpoints] == [0, Fraction(1, 4), Fraction(1, 2)]


def test_rotations_compose():
    a, b = G.angle(1, [1]), G.angle(2, [-3])
    assert compose(rotation(a), rotation(b)) == rotation(a + b)
    assert rotation(a).is_rotation()


def test_swap_is_involution():
    assert compose(SW, SW) == identity(Q)
    assert inverse(SW) == SW
    Q96 = AngleGroup(m=960)
    g = swap(P("0", Q96), P("1/4", Q96), P("1/2", Q96))
    gg = compose(g, g)
    rng = np.random.default_rng(0)
    for p in rng.integers(0, 960, size=1000):
        x = P(Fraction(int(p), 960), Q96)
        assert evaluate(gg, x) == x


def test_inverse_laws():
    assert inverse(identity(G)) == identity(G)
    lam = G.angle(1, [2])
    assert inverse(rotation(lam)) == rotation(-lam)
    rng = np.random.default_rng(1)
    for _ in range(20):
        g = random_iet(G, rng)
        assert compose(g, inverse(g)) == identity(G)
        assert compose(inverse(g), g) == identity(G)


def test_group_axioms_and_composition_soundness():
    H = AngleGroup(thetas=("sqrt(2)-1", "sqrt(3)-1"), m=6, bases=("0", "0.1234567890123456789012345678901"))
    rng = np.random.default_rng(2)
    for _ in range(15):
        f, g, h = (random_iet(H, rng) for _ in range(3))
        assert compose(compose(f, g), h) == compose(f, compose(g, h))
        assert compose(f, identity(H)) == f
        gh = compose(g, h)
        assert len(gh.breakpoints) <= len(g.breakpoints) + len(h.breakpoints)
        for _ in range(5):
            x = H.point(int(rng.integers(2)), H.angle(int(rng.integers(6)), rng.integers(-4, 5, size=2)))
            assert evaluate(gh, x) == evaluate(g, evaluate(h, x))


def test_canonical_form_merges_equal_arcs():
    t = G.angle(1, [0])
    g = Iet.from_arcs(G, [P("0", G), P("1/4", G)], [t, t])
    assert g == rotation(t) and g.is_rotation()


def test_non_bijective_rejected():
    with pytest.raises((ValueError, InvariantViolation)):
        Iet.from_arcs(Q, [P("0"), P("1/4")], [Q.rational("1/4"), Q.zero()])


def test_left_companion():
    gl = left_continuous_companion(SW)
    assert gl(P("1/4")) == P("1/2")
    assert gl(P("0")) == P("0")  # left limit from [1/2, 1)
    assert gl(P("1/2")) == P("1/4")
    x = G.point(0, G.theta(0))
    r = rotation(G.theta(0))
    assert left_continuous_companion(r)(x) == evaluate(r, x)
    assert left_continuous_companion(identity(G))(x) == x


def test_cocycle_of_swap_is_three_cycle():
    tau = cocycle(SW)
    assert tau.mapping == {P("0"): P("1/2"), P("1/2"): P("1/4"), P("1/4"): P("0")}
    assert support_map(tau) == {P("0"), P("1/4"), P("1/2")}


def test_cocycle_pointwise_oracle():
    Q8 = AngleGroup(m=8)
    g = swap(P("0", Q8), P("1/4", Q8), P("1/2", Q8))
    ginv = inverse(g)
    gl = left_continuous_companion(g)
    tau = cocycle(g)
    for p in range(8):
        x = P(Fraction(p, 8), Q8)
        assert tau(x) == gl(evaluate(ginv, x))


def test_cocycle_trivial_for_rotations():
    assert cocycle(identity(G)).is_identity()
    assert cocycle(rotation(G.angle(3, [5]))).is_identity()


def test_cocycle_identity_small_sample():
    H = AngleGroup(thetas=("sqrt(2)-1", "sqrt(3)-1"), m=12, bases=("0", "0.1234567890123456789012345678901"))
    rng = np.random.default_rng(4)
    for _ in range(30):
        g, h = random_iet(H, rng), random_iet(H, rng)
        assert cocycle(compose(g, h)) == cocycle(g) * conj(g, cocycle(h))


def test_semidirect_product():
    e = SemidirectElement(FinSuppPerm.from_mapping({}), identity(G))
    assert semidirect_multiply(e, e) == e
    r = rotation(G.theta(0))
    assert semidirect_multiply(iota(r), iota(inverse(r))) == e
    rng = np.random.default_rng(5)
    for _ in range(10):
        g, h = random_iet(G, rng), random_iet(G, rng)
        assert semidirect_multiply(iota(g), iota(h)) == iota(compose(g, h))


def test_support_equivariance():
    rng = np.random.default_rng(6)
    sigma = cocycle(SW)
    for _ in range(5):
        g = random_iet(Q, rng, bound=0)
        assert support_map(conj(g, sigma)) == {evaluate(g, x) for x in support_map(sigma)}


def test_support_of_lamps():
    assert support_map(LampConfig.of()) == frozenset()
    x = P("1/4")
    assert support_map(LampConfig.of(x)) == {x}


def test_fin_supp_perm_rejects_non_bijection():
    with pytest.raises((ValueError, InvariantViolation)):
        FinSuppPerm.from_mapping({P("0"): P("1/4"), P("1/2"): P("1/4")})


def test_rational_rank():
    assert rational_rank([SW]) == 0
    H = AngleGroup(thetas=("sqrt(2)-1", "sqrt(3)-1"))
    assert rational_rank([rotation(H.angle(0, [1, 0])), rotation(H.angle(0, [1, 1]))]) == 2
    assert rational_rank([rotation(H.angle(0, [1, 2])), rotation(H.angle(0, [2, 4]))]) == 1
    H3 = AngleGroup(thetas=("sqrt(2)-1", "sqrt(3)-1", "sqrt(5)-2"))
    assert rational_rank([rotation(H3.theta(0))]) == 1


def test_text_round_trip():
    H = AngleGroup(thetas=("sqrt(2)-1", "sqrt(3)-1"), m=6, bases=("0", "0.1234567890123456789012345678901"))
    rng = np.random.default_rng(7)
    for _ in range(10):
        g = random_iet(H, rng)
        text = format_iet(g)
        assert parse_iet(H, text) == g
        assert format_iet(parse_iet(H, text)) == text
    r = random_rotation(H, rng)
    assert parse_iet(H, format_iet(r)) == r


def test_mixed_groups_rejected():
    with pytest.raises(ConfigurationError):
        compose(SW, identity(G))
