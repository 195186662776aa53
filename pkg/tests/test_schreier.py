import numpy as np
import pytest

from ietlab.angles import AngleGroup, ConfigurationError
from ietlab.iet import InvariantViolation, fraction_point, identity, inverse, rotation, swap
from ietlab.schreier import (complexity_profile, lambda_embedding, rho_counts, schreier_ball, subshift_cutpoints,
                             word_ball_size)

G1 = AngleGroup(thetas=("sqrt(2)-1",))
G2 = AngleGroup(thetas=("sqrt(2)-1", "sqrt(3)-1"))


def rot_pair(g, i):
    r = rotation(g.theta(i))
    return [r, inverse(r)]


def test_line_ball():
    ball = schreier_ball(rot_pair(G1, 0), G1.point(0), 3)
    assert len(ball.vertices) == 7
    emb = lambda_embedding(ball, G1.point(0))
    assert sorted(c.k[0] for c in emb.coords) == list(range(-3, 4))
    assert emb.lipschitz == 1
    assert emb.coords[0].is_zero()


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_square_lattice_ball(n):
    gens = rot_pair(G2, 0) + rot_pair(G2, 1)
    ball = schreier_ball(gens, G2.point(0), n)
    assert len(ball.vertices) == 2 * n * n + 2 * n + 1


def test_identity_ball():
    assert len(schreier_ball([identity(G1)], G1.point(0), 4).vertices) == 1


def test_generators_must_be_symmetric():
    with pytest.raises(ConfigurationError):
        schreier_ball([rotation(G1.theta(0))], G1.point(0), 2)


def test_balls_are_nested_and_bounded():
    G = AngleGroup(thetas=("sqrt(2)-1",), m=4)
    P = lambda q: fraction_point(G, q)
    gens = rot_pair(G, 0) + [swap(P("0"), P("1/4"), P("1/2"))]
    prev = set()
    for n in range(6):
        ball = schreier_ball(gens, P("1/4"), n)
        verts = set(ball.vertices)
        assert prev <= verts and len(verts) <= 3**n * 2 + 1
        prev = verts
        for a, _, b in ball.edges:
            assert ball.vertices[b] in verts
    emb = lambda_embedding(ball, P("1/4"))
    steps = [(emb.coords[b] - emb.coords[a]).free_norm for a, _, b in ball.edges]
    assert emb.lipschitz == max(steps) == 1
    assert len(set(emb.coords)) == len(emb.coords)


def test_embedding_rejects_other_coset():
    G = AngleGroup(thetas=("sqrt(2)-1",), bases=("0", "0.123456789012345678901234567890123"))
    ball = schreier_ball(rot_pair(G, 0), G.point(1), 1)
    with pytest.raises(InvariantViolation):
        lambda_embedding(ball, G.point(0))


def test_cutpoints():
    part = subshift_cutpoints(G1, [G1.theta(0)])
    assert part.atoms == 2 and part.cutpoints == sorted([G1.point(0), G1.point(0, G1.theta(0))])
    G = AngleGroup(thetas=("sqrt(2)-1",), bases=("0", "0.123456789012345678901234567890123"))
    assert subshift_cutpoints(G, [G.theta(0)]).atoms == 4
    with pytest.raises(ConfigurationError):
        subshift_cutpoints(G1, [G1.theta(0)], bases=[])
    with pytest.raises(ConfigurationError):
        subshift_cutpoints(AngleGroup(m=5), [AngleGroup(m=5).rational("1/5")])


def test_rank_one_profile_is_affine():
    prof = complexity_profile(G1, [G1.theta(0)], 40)
    assert prof.rho == [2 * n + 2 for n in range(41)]
    diffs = {b - a for a, b in zip(prof.rho[1:], prof.rho[2:])}
    assert diffs == {2}


def test_rank_one_oracle():
    # cut points at k theta for -n <= k <= n + 1
    for n in range(10):
        assert rho_counts(G1, [G1.theta(0), -G1.theta(0)], n)[n] == len(range(-n, n + 2))


def test_rank_two_exponent():
    prof = complexity_profile(G2, [G2.theta(0), G2.theta(1)], 64, fit_range=(16, 64))
    assert 1.8 <= prof.exponent <= 2.2
    assert prof.band[0] < prof.exponent < prof.band[1]
    rho = prof.rho
    assert rho == sorted(rho) and rho[0] == 3
    assert all(rho[n] <= rho[1] * n**2 for n in range(1, 65))


def test_profile_bounds_by_ball():
    S = [G2.theta(0), G2.theta(1)]
    rho = rho_counts(G2, S, 20)
    cuts = subshift_cutpoints(G2, S).atoms
    for n in range(21):
        assert rho[n] <= cuts * word_ball_size(G2, S, n)
    for a in range(8):
        for b in range(8):
            assert rho[a + b] <= rho[a] * word_ball_size(G2, S, b)


def test_profile_csv():
    text = complexity_profile(G1, [G1.theta(0)], 5).to_csv()
    assert text.splitlines()[:3] == ["n,rho", "0,2", "1,4"]


def test_dot_export():
    ball = schreier_ball(rot_pair(G1, 0), G1.point(0), 1, names=["a", "A"])
    dot = ball.to_dot()
    assert dot.startswith("digraph") and '[label="a"]' in dot
