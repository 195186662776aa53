import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from ietlab.actions import FreeProductAction, IetAction, LatticeAction
from ietlab.angles import AngleGroup
from ietlab.iet import fraction_point, identity, inverse, rotation, swap
from ietlab.walks import (BudgetExceeded, WalkSpec, collect_orbit_stats, draw_steps, drift_probe,
                          estimate_prop41, estimate_recurrence, exact_orbit_oracle, exact_sws_return,
                          report_csv, report_from_stats, report_records, sample_inverted_orbit, tau_infinity_probe,
                          tau_probe_reference, tau_probe_rows)

Z = LatticeAction.on_integers()
G = AngleGroup(thetas=("sqrt(2)-1",), m=4)
P = lambda q: fraction_point(G, q)
R = rotation(G.theta(0))
SW = swap(P("0"), P("1/4"), P("1/2"))
IET3 = IetAction(G, [R, inverse(R), SW], P("1/4"), names=["r", "R", "s"])
FIXED = IetAction(G, [identity(G)], P("0"), names=["e"])


def brute_z(n):
    dist = Counter()
    for word in range(2**n):
        steps = [1 if word >> i & 1 else -1 for i in range(n)]
        pos, pts = 0, {0}
        for s in steps:  # g_j^-1 x0 = -(h_1 + ... + h_j)
            pos -= s
            pts.add(pos)
        dist[len(pts)] += Fraction(1, 2**n)
    return dist


def test_z_oracle_matches_brute_force():
    o = exact_orbit_oracle(Z, 2)
    assert o.distribution == {2: Fraction(1, 2), 3: Fraction(1, 2)}
    assert o.expectation == Fraction(3, 16)
    for n in range(7):
        assert exact_orbit_oracle(Z, n).distribution == dict(brute_z(n))


def test_oracle_small_n():
    assert exact_orbit_oracle(Z, 0).expectation == Fraction(1, 2)
    assert exact_orbit_oracle(IET3, 1).expectation == Fraction(1, 4)
    assert exact_orbit_oracle(FIXED, 5).expectation == Fraction(1, 2)


def test_sws_return_small_n():
    assert exact_sws_return(Z, 0) == 1
    for n in (1, 2, 5):
        assert exact_sws_return(FIXED, n) == Fraction(1, 2)


@pytest.mark.parametrize("action", [Z, IET3], ids=["Z", "iet3"])
def test_return_identity(action):
    for n in range(1, 7):
        assert exact_sws_return(action, n) == exact_orbit_oracle(action, n).expectation


def test_budget():
    with pytest.raises(BudgetExceeded):
        exact_orbit_oracle(Z, 30, budget=1000)
    with pytest.raises(BudgetExceeded):
        exact_sws_return(IET3, 12, budget=50)


def test_fixed_point_orbit():
    s = sample_inverted_orbit(WalkSpec(FIXED, 50, 1, seed=1))
    assert list(s.sizes) == [1] * 51
    assert s.return_time == 1


@pytest.mark.parametrize("action", [Z, IET3, FreeProductAction()], ids=["Z", "iet3", "free"])
def test_size_invariants(action):
    spec = WalkSpec(action, 60, 64, seed=4, checkpoints=range(61))
    st = collect_orbit_stats(spec)
    for i in range(64):
        s = sample_inverted_orbit(spec, i)
        d = np.diff(s.sizes)
        assert s.sizes[0] == 1 and set(d) <= {0, 1}
        assert all(s.sizes[k] <= k + 1 for k in range(61))
    assert st.trajectories == 64


def test_kernel_agrees_with_exact_replay():
    spec = WalkSpec(IET3, 40, 300, seed=5, checkpoints=(0, 1, 5, 17, 40))
    a = collect_orbit_stats(spec)
    b = collect_orbit_stats(spec, exact=True)
    assert a.sizes == b.sizes and a.returns == b.returns


def test_prime_route_has_same_law():
    n, N = 20, 10_000
    direct = WalkSpec(IET3, n, N, seed=21)
    prime = WalkSpec(IET3, n, N, seed=22)
    a = np.array([sample_inverted_orbit(direct, i).sizes[n] for i in range(N)])
    b = np.array([sample_inverted_orbit(prime, i, route="prime").sizes[n] for i in range(N)])
    se = math.sqrt(a.var(ddof=1) / N + b.var(ddof=1) / N)
    assert abs(a.mean() - b.mean()) <= 3 * se
    for v in set(a) | set(b):
        pa, pb = (a == v).mean(), (b == v).mean()
        s = math.sqrt(pa * (1 - pa) / N + pb * (1 - pb) / N)
        assert abs(pa - pb) <= 3 * s + 1e-12


def test_increment_matches_no_return():
    spec = WalkSpec(IET3, 12, 20_000, seed=6, checkpoints=range(13))
    rep = report_from_stats(collect_orbit_stats(spec), 6)
    for k in range(1, 12):
        inc = rep.mean_size[k + 1] - rep.mean_size[k]
        p = rep.p_no_return[k + 1]
        # both are means of Bernoulli variables over the same 20000 trajectories
        se = math.sqrt(p * (1 - p) / 20_000) + math.sqrt(inc * (1 - inc) / 20_000)
        assert abs(inc - p) <= 3 * se


def test_single_point_rate():
    rep = estimate_prop41(WalkSpec(FIXED, 100, 100, seed=1))
    for n, r in zip(rep.n, rep.rate):
        if n:
            assert r == pytest.approx(math.log(2) / n)


def test_recurrent_z_rate():
    rep = estimate_prop41(WalkSpec(Z, 10_000, 500, seed=2, checkpoints=(10_000,)))
    assert rep.rate[-1] <= 0.015
    # |O_n| is the range of simple random walk, about sqrt(8n/pi)
    assert rep.mean_size[-1] == pytest.approx(math.sqrt(8 * 10_000 / math.pi), rel=0.05)


def test_free_product_orbit_ratio():
    # escape probability of the uniform walk on Z/2*Z/2*Z/2 is 1/2
    rep = estimate_prop41(WalkSpec(FreeProductAction(), 4000, 400, seed=3, checkpoints=(2000, 4000)))
    assert abs(rep.mean_ratio[-1] - 0.5) < 0.01


def test_recurrence_finite_orbit():
    Q = AngleGroup(m=4)
    q = rotation(Q.rational("1/4"))
    act = IetAction(Q, [q, inverse(q)], fraction_point(Q, "0"))
    rec = estimate_recurrence(WalkSpec(act, 2000, 200, seed=1))
    assert rec.no_return == 0 and rec.slope == 0


def test_recurrence_z():
    rec = estimate_recurrence(WalkSpec(Z, 10_000, 1000, seed=3))
    assert rec.slope < 0.05 and rec.no_return < 0.05


def test_determinism_across_threads():
    spec = WalkSpec(IET3, 200, 1000, seed=9)
    a = collect_orbit_stats(spec, threads=1)
    b = collect_orbit_stats(spec, threads=4)
    assert a.sizes == b.sizes and a.returns == b.returns
    ra, rb = report_from_stats(a, 9), report_from_stats(b, 9)
    assert report_csv(ra) == report_csv(rb)
    assert report_records(ra, "x") == report_records(rb, "x")


def test_streams_are_per_trajectory():
    w = Z.weights
    assert (draw_steps(w, 5, 0, 10, 30)[3:7] == draw_steps(w, 5, 3, 7, 30)).all()


def test_drift():
    d = drift_probe(Z, 1000, 2000, seed=1)
    assert abs(d.drift[0]) <= 3 * d.drift_se[0]
    only_r = IetAction(G, [R], P("1/4"))
    assert drift_probe(only_r, 100, 5, seed=1).drift == [1.0]
    mixed = IetAction(G, [R, SW, inverse(SW)], P("1/4"))
    d = drift_probe(mixed, 2000, 300, seed=2)
    assert abs(d.drift[0] - 1 / 3) <= max(3 * d.drift_se[0], 0.005)


def rank_example(d):
    th = ("sqrt(2)-1", "sqrt(3)-1", "sqrt(5)-2")[:d]
    H = AngleGroup(thetas=th, m=4)
    gens = []
    for i in range(d):
        r = rotation(H.theta(i))
        gens += [r, inverse(r)]
    gens.append(swap(*(fraction_point(H, q) for q in ("0", "1/4", "1/2"))))
    act = IetAction(H, gens, H.point(0))
    rng = np.random.default_rng(0)
    pts = [H.point(0, H.angle(j % 4, rng.integers(-2, 3, size=d))) for j in range(8)]
    return act, pts


def test_tau_rotations_only():
    H = AngleGroup(thetas=("sqrt(2)-1",), m=4)
    r = rotation(H.theta(0))
    act = IetAction(H, [r, inverse(r)], H.point(0))
    rep = tau_infinity_probe(act, [H.point(0)], 300, [0, 100, 300], 20, seed=1)
    assert rep.stabilized == [1.0, 1.0, 1.0] and rep.mean_changes == 0


@pytest.mark.parametrize("d", [1, 3])
def test_tau_three_routes_agree(d):
    act, pts = rank_example(d)
    steps = draw_steps(act.weights, 3, 0, 4, 50)
    cps = [0, 10, 50]
    last, ch, vals = tau_probe_rows(act, steps, pts, cps)
    last2, ch2, vals2 = tau_probe_rows(act, steps, pts, cps, exact=True)
    ref = [tau_probe_reference(act.gens, steps[b], pts, cps) for b in range(4)]
    assert vals == vals2 == ref
    assert [list(x) for x in last] == [list(x) for x in last2]
    assert [list(x) for x in ch] == [list(x) for x in ch2]


def test_tau_stabilized_fraction_monotone():
    act, pts = rank_example(3)
    rep = tau_infinity_probe(act, pts, 1000, [10, 100, 1000], 50, seed=2)
    assert rep.stabilized == sorted(rep.stabilized)


def test_tau_rank1_keeps_changing():
    act, pts = rank_example(1)
    short = tau_infinity_probe(act, pts, 200, [200], 50, seed=3)
    long = tau_infinity_probe(act, pts, 2000, [2000], 50, seed=3)
    assert long.mean_changes > 2 * short.mean_changes


def test_csv_and_records():
    rep = estimate_prop41(WalkSpec(Z, 20, 200, seed=1))
    text = report_csv(rep)
    assert text.splitlines()[0].startswith("n,mean_size,mean_size_se")
    recs = report_records(rep, "z")
    assert all({"n", "estimate", "stderr", "trajectories", "seed"} <= set(r) for r in recs)
