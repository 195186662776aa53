"""Build actions from configurations, run experiments, persist records.

Every record is one JSON object per line with sorted keys.  Records hold
only quantities that are functions of (configuration bytes, seed); wall
clock goes to a sidecar file so that reruns compare byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from ..actions import Action, FreeProductAction, IetAction, LatticeAction
from ..angles import AngleGroup, ConfigurationError
from ..colored_line import ColoredLine, MarkRegistry, decay_estimate, spectral_probe
from ..iet import inverse, parse_iet, rotation, swap
from ..schreier import complexity_profile, lambda_embedding, schreier_ball
from ..walks import (BudgetExceeded, WalkSpec, collect_orbit_stats, drift_probe, estimate_recurrence,
                     exact_orbit_oracle, exact_sws_return, report_csv, report_from_stats, report_records,
                     tau_infinity_probe)
from .config import (ConfigError, ExperimentConfig, Node, as_float, as_fraction, as_int, as_list, as_map,
                     as_str, get, load_config)

THREADS_ENV = "IETLAB_THREADS"


def default_threads() -> int:
    v = os.environ.get(THREADS_ENV, "").strip()
    if not v:
        return 1
    try:
        n = int(v)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {v!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {v!r}")
    return n


# ---------------------------------------------------------------------------
# actions


@dataclass
class Built:
    action: Action | None
    group: AngleGroup | None = None
    line: ColoredLine | None = None


def _weights(cfg: ExperimentConfig, names: list[str]) -> list[Fraction] | None:
    walk = cfg.walk
    node = get(walk, "weights", required=False) if walk is not None else None
    if node is None:
        return None
    wmap = as_map(node)
    for k, v in wmap.items():
        if k not in names:
            raise v.error(f"weight given for unknown generator {k!r}")
    missing = [n for n in names if n not in wmap]
    if missing:
        raise node.error(f"no weight for generator(s) {', '.join(missing)}")
    ws = [as_fraction(wmap[n]) for n in names]
    if any(w <= 0 for w in ws):
        raise node.error("weights must be positive")
    if sum(ws) != 1:
        raise node.error(f"weights sum to {sum(ws)}, not 1")
    return ws


def _group(node: Node) -> AngleGroup:
    thetas = tuple(as_str(t) for t in as_list(get(node, "thetas", required=False, default=Node([], 0, 0))))
    m = as_int(get(node, "m", required=False, default=Node("1", 0, 0)), 1)
    sig = get(node, "sigma", required=False)
    bases = tuple(as_str(s) for s in as_list(sig)) if sig is not None else ("0",)
    try:
        return AngleGroup(thetas=thetas, m=m, bases=bases)
    except ConfigurationError as e:
        raise node.error(str(e)) from None


def _iet_generators(group: AngleGroup, node: Node):
    gens, names = [], []
    defs = as_map(node)
    pending = []
    for name, spec in defs.items():
        d = as_map(spec)
        if len(d) != 1:
            raise spec.error("a generator is given by exactly one of rotation, swap, iet, inverse")
        (how, arg), = d.items()
        try:
            if how == "rotation":
                g = rotation(group.parse_angle(as_str(arg)))
            elif how == "swap":
                pts = [group.parse_point(as_str(p)) for p in as_list(arg)]
                if len(pts) != 3:
                    raise arg.error("swap takes three points a < b < c")
                g = swap(*pts)
            elif how == "iet":
                g = parse_iet(group, as_str(arg))
            elif how == "inverse":
                pending.append((len(gens), as_str(arg), arg))
                g = None
            else:
                raise spec.error(f"unknown generator form {how!r}")
        except ConfigurationError as e:
            raise arg.error(str(e)) from None
        gens.append(g)
        names.append(name)
    for idx, target, node_ in pending:
        if target not in names:
            raise node_.error(f"inverse of unknown generator {target!r}")
        g = gens[names.index(target)]
        if g is None:
            raise node_.error("inverse of an inverse; name the generator directly")
        gens[idx] = inverse(g)
    return gens, names


def build_action(cfg: ExperimentConfig) -> Built:
    node = cfg.section("action")
    kind = as_str(get(node, "type"))
    if kind == "lattice":
        vmap = as_map(get(node, "vectors"))
        names = list(vmap)
        vecs = [[as_int(c) for c in as_list(v)] for v in vmap.values()]
        m = as_int(get(node, "m", required=False, default=Node("1", 0, 0)), 1)
        try:
            return Built(LatticeAction(vecs, m, names, _weights(cfg, names)))
        except ConfigurationError as e:
            raise node.error(str(e)) from None
    if kind == "free-product":
        k = as_int(get(node, "k", required=False, default=Node("3", 0, 0)), 2)
        a = FreeProductAction(k)
        return Built(FreeProductAction(k, weights=_weights(cfg, list(a.names))))
    if kind == "iet":
        group = _group(get(node, "group"))
        gens, names = _iet_generators(group, get(node, "generators"))
        base = get(node, "base", required=False)
        try:
            x0 = group.parse_point(as_str(base)) if base is not None else group.point(0)
            return Built(IetAction(group, gens, x0, names, _weights(cfg, names)), group=group)
        except ConfigurationError as e:
            raise (base or node).error(str(e)) from None
    # colored line
    seed = as_int(get(node, "seed"), 0)
    layout = as_str(get(node, "layout", required=False, default=Node("planted", 0, 0)))
    gap = as_int(get(node, "gap", required=False, default=Node("4", 0, 0)), 1)
    try:
        return Built(None, line=ColoredLine(seed, layout, gap))
    except ConfigurationError as e:
        raise node.error(str(e)) from None


# ---------------------------------------------------------------------------
# records


class Recorder:
    def __init__(self, cfg: ExperimentConfig, seed: int | None, streams: int):
        self.cfg = cfg
        self.base = {"experiment": cfg.id, "kind": cfg.kind, "config_hash": cfg.config_hash,
                     "input_hash": cfg.input_hash, "seed": seed, "rng_streams": streams}
        self.rows: list[dict] = []

    def add(self, metric: str, x, value, stderr, trajectories, **extra) -> None:
        r = dict(self.base, metric=metric, x=x, value=_num(value), stderr=_num(stderr), trajectories=trajectories)
        r.update({k: _num(v) for k, v in extra.items()})
        self.rows.append(r)

    def exact(self, metric: str, x, value: Fraction, **extra) -> None:
        self.add(metric, x, float(value), 0.0, 0, exact=f"{value.numerator}/{value.denominator}", **extra)


def _num(v):
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, (np.integer,)):
        v = int(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _walk_params(cfg: ExperimentConfig, need_trajectories: bool = True):
    walk = cfg.section("walk")
    horizon = as_int(get(walk, "horizon"), 0)
    T = as_int(get(walk, "trajectories"), 1) if need_trajectories else \
        as_int(get(walk, "trajectories", required=False, default=Node("0", 0, 0)), 0)
    if cfg.seed is None:
        raise walk.error("a seed is required (walk.seed or --seed)")
    cp = get(walk, "checkpoints", required=False)
    cps = tuple(as_int(c, 0) for c in as_list(cp)) if cp is not None else None
    if cps is not None and any(c > horizon for c in cps):
        raise cp.error("checkpoints must not exceed the horizon")
    return horizon, T, cfg.seed, cps


def _param(cfg: ExperimentConfig, key: str, conv: Callable, default=None):
    if cfg.params is None:
        if default is None:
            raise ConfigError(f"missing params.{key}")
        return default
    node = get(cfg.params, key, required=default is None)
    return default if node is None else conv(node)


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# experiments; each returns (recorder, csv text, extra files)


def _need(built: Built, what: str, cfg: ExperimentConfig):
    ok = {"walk": built.action is not None, "iet": isinstance(built.action, IetAction),
          "line": built.line is not None}[what]
    if not ok:
        need = {"walk": "a lattice, iet or free-product action", "iet": "an iet action",
                "line": "a colored-line action"}[what]
        raise get(cfg.section("action"), "type").error(f"experiment kind {cfg.kind!r} needs {need}")


def exp_inverted_orbit(cfg, built, threads):
    _need(built, "walk", cfg)
    n, T, seed, cps = _walk_params(cfg)
    eps = _param(cfg, "eps", lambda v: [as_float(x) for x in as_list(v)], [0.01, 0.05, 0.1])
    if T < 100:
        raise get(cfg.walk, "trajectories").error("inverted-orbit estimators need at least 100 trajectories")
    spec = WalkSpec(built.action, n, T, seed, cps)
    rep = report_from_stats(collect_orbit_stats(spec, threads), seed, eps)
    rec = Recorder(cfg, seed, T)
    for r in report_records(rep, cfg.id):
        rec.add(r["estimator"], r["n"], r["estimate"], r["stderr"], T)
    return rec, report_csv(rep), {}


def exp_recurrence(cfg, built, threads):
    _need(built, "walk", cfg)
    n, T, seed, cps = _walk_params(cfg)
    cps = tuple(sorted(set(cps or ()) | {n // 2, n}))
    spec = WalkSpec(built.action, n, T, seed, cps)
    stats = collect_orbit_stats(spec, threads)
    rep = report_from_stats(stats, seed, ())
    rr = estimate_recurrence(spec, stats=stats)
    rec = Recorder(cfg, seed, T)
    rows = []
    for i, c in enumerate(rep.n):
        if c == 0:
            continue
        rec.add("mean_ratio", c, rep.mean_ratio[i], rep.mean_ratio_se[i], T)
        rec.add("p_no_return", c, rep.p_no_return[i], rep.p_no_return_se[i], T)
        rows.append([c, rep.mean_ratio[i], rep.mean_ratio_se[i], rep.p_no_return[i], rep.p_no_return_se[i]])
    rec.add("slope", n, rr.slope, rr.slope_se, T, note=rr.note)
    rec.add("no_return", n, rr.no_return, rr.no_return_se, T)
    return rec, _csv(["n", "mean_ratio", "mean_ratio_se", "p_no_return", "p_no_return_se"], rows), {}


def _budget(cfg):
    return _param(cfg, "budget", lambda v: as_int(v, 1), 10**7)


def exp_sws_return(cfg, built, threads):
    _need(built, "walk", cfg)
    n_max = _param(cfg, "n_max", lambda v: as_int(v, 0))
    rec = Recorder(cfg, None, 0)
    rows = []
    for n in range(n_max + 1):
        v = exact_sws_return(built.action, n, _budget(cfg))
        rec.exact("sws_return", n, v)
        rows.append([n, f"{v.numerator}/{v.denominator}", float(v)])
    return rec, _csv(["n", "exact", "value"], rows), {}


def exp_oracle_crosscheck(cfg, built, threads):
    _need(built, "walk", cfg)
    n_max = _param(cfg, "n_max", lambda v: as_int(v, 0))
    budget = _budget(cfg)
    T = 0
    rep = None
    if cfg.walk is not None and get(cfg.walk, "trajectories", required=False) is not None:
        _, T, seed, _ = _walk_params(cfg)
        spec = WalkSpec(built.action, n_max, T, seed, tuple(range(n_max + 1)))
        rep = report_from_stats(collect_orbit_stats(spec, threads), seed, ())
    rec = Recorder(cfg, cfg.seed if rep else None, T)
    rows = []
    for n in range(n_max + 1):
        o = exact_orbit_oracle(built.action, n, budget).expectation
        s = exact_sws_return(built.action, n, budget)
        rec.exact("orbit_oracle", n, o)
        rec.exact("sws_return", n, s)
        # at n = 0 the lamp chain has not moved yet, so only n >= 1 is compared
        agree = None if n == 0 else o == s
        row = [n, f"{o.numerator}/{o.denominator}", f"{s.numerator}/{s.denominator}", agree]
        if rep is not None:
            z = (rep.mean_pow2[n] - float(o)) / rep.mean_pow2_se[n] if rep.mean_pow2_se[n] > 0 else None
            rec.add("mean_pow2", n, rep.mean_pow2[n], rep.mean_pow2_se[n], T, z_vs_oracle=z)
            row += [rep.mean_pow2[n], rep.mean_pow2_se[n], z]
        rec.add("oracle_agreement", n, None if agree is None else float(agree), 0.0, 0)
        rows.append(row)
    header = ["n", "orbit_oracle", "sws_return", "agree"] + (["mc", "mc_se", "z"] if rep is not None else [])
    return rec, _csv(header, rows), {}


def exp_drift(cfg, built, threads):
    _need(built, "walk", cfg)
    n, T, seed, _ = _walk_params(cfg)
    rep = drift_probe(built.action, n, T, seed, threads)
    rec = Recorder(cfg, seed, T)
    rows = []
    for i, (d, s) in enumerate(zip(rep.drift, rep.drift_se)):
        rec.add("drift", n, d, s, T, coordinate=i)
        rows.append([i, n, d, s])
    return rec, _csv(["coordinate", "n", "drift", "drift_se"], rows), {}


def _sample_points(cfg, built):
    group = built.group
    pts_node = get(cfg.params, "points", required=False) if cfg.params is not None else None
    if pts_node is not None:
        out = []
        for p in as_list(pts_node):
            try:
                out.append(group.parse_point(as_str(p)))
            except ConfigurationError as e:
                raise p.error(str(e)) from None
        return out
    samp = get(cfg.section("params"), "sample")
    count = as_int(get(samp, "count"), 1)
    bound = as_int(get(samp, "bound", required=False, default=Node("2", 0, 0)), 0)
    pseed = as_int(get(samp, "seed"), 0)
    rng = np.random.default_rng(pseed)
    base = built.action.x0
    out = []
    for j in range(count):
        k = [int(c) for c in rng.integers(-bound, bound + 1, size=group.d)]
        out.append(base + group.angle(j % group.m, k))
    return out


def exp_tau_probe(cfg, built, threads):
    _need(built, "iet", cfg)
    n, T, seed, cps = _walk_params(cfg)
    pts = _sample_points(cfg, built)
    pairs_node = get(cfg.params, "pairs", required=False) if cfg.params is not None else None
    pairs = [tuple(as_int(c) for c in as_list(p)) for p in as_list(pairs_node)] if pairs_node is not None else ()
    rep = tau_infinity_probe(built.action, pts, n, cps or (n,), T, seed, threads, pairs)
    rec = Recorder(cfg, seed, T)
    N = T * len(pts)
    note = "pairs within a trajectory are correlated; stderr treats them as independent"
    rows = []
    for c, s in zip(rep.checkpoints, rep.stabilized):
        rec.add("stabilized", c, s, math.sqrt(s * (1 - s) / N), T, points=len(pts), note=note)
        rows.append(["stabilized", c, c, s])
    for (a, b), u in rep.unchanged.items():
        rec.add("unchanged", b, u, math.sqrt(u * (1 - u) / N), T, since=a, points=len(pts), note=note)
        rows.append(["unchanged", a, b, u])
    rec.add("mean_changes", n, rep.mean_changes, float(np.std(rep.changes_by_point) / math.sqrt(len(pts))), T,
            points=len(pts))
    return rec, _csv(["metric", "a", "b", "value"], rows), {}


def exp_schreier(cfg, built, threads):
    _need(built, "iet", cfg)
    radius = _param(cfg, "radius", lambda v: as_int(v, 0))
    a = built.action
    gens, names = [], []
    for g, nm in zip(a.gens + a.inv_gens, list(a.names) + [f"{x}^-1" for x in a.names]):
        if g not in gens:
            gens.append(g)
            names.append(nm)
    ball = schreier_ball(gens, a.x0, radius, names)
    emb = lambda_embedding(ball, a.x0)
    rec = Recorder(cfg, None, 0)
    rows = []
    for r in range(radius + 1):
        size = sum(1 for d in ball.distance if d <= r)
        rec.add("ball_size", r, size, 0.0, 0)
        rows.append([r, size])
    rec.add("lipschitz", radius, emb.lipschitz, 0.0, 0)
    return rec, _csv(["radius", "ball_size"], rows), {f"{cfg.id}.dot": ball.to_dot()}


def exp_complexity(cfg, built, threads):
    node = cfg.section("action")
    if as_str(get(node, "type")) != "iet":
        raise get(node, "type").error("complexity needs an iet action block for its angle group")
    group = built.group
    S = []
    for s in as_list(get(cfg.section("params"), "S")):
        try:
            S.append(group.parse_angle(as_str(s)))
        except ConfigurationError as e:
            raise s.error(str(e)) from None
    n_max = _param(cfg, "n_max", lambda v: as_int(v, 3))
    fr = _param(cfg, "fit_range", lambda v: tuple(as_int(c, 1) for c in as_list(v)), ())
    bases = _param(cfg, "bases", lambda v: [as_int(c, 0) for c in as_list(v)], ())
    prof = complexity_profile(group, S, n_max, list(bases) or None, fr or None)
    rec = Recorder(cfg, None, 0)
    for n, r in enumerate(prof.rho):
        rec.add("rho", n, r, 0.0, 0)
    rec.add("exponent", prof.fit_range[1], prof.exponent, prof.exponent_se, 0, band=list(prof.band),
            fit_range=list(prof.fit_range), d=prof.d)
    rec.add("constant", n_max, prof.constant, 0.0, 0, d=prof.d)
    return rec, prof.to_csv(), {}


def exp_colored_line_decay(cfg, built, threads):
    _need(built, "line", cfg)
    n, T, seed, cps = _walk_params(cfg)
    chi_len = _param(cfg, "chi_max_len", lambda v: as_int(v, 1), 6)
    level = _param(cfg, "level", as_float, 0.01)
    reg = MarkRegistry(built.line)
    rep = decay_estimate(built.line, reg, T, n, seed, cps, threads, chi_max_len=chi_len)
    rec = Recorder(cfg, seed, T)
    for i, c in enumerate(rep.checkpoints):
        p = rep.freq(i)
        rec.add("agree_freq", c, p, math.sqrt(p * (1 - p) / T), T)
        rec.add("rate", c, rep.rate(i), rep.rate_se(i), T, lower99=rep.rate_lower(i))
        e = rep.empty[i] / T
        rec.add("empty_freq", c, e, math.sqrt(e * (1 - e) / T), T, agree_given_empty=(
            rep.agree_empty[i] / rep.empty[i] if rep.empty[i] else None))
    chi = rep.chi_square(level)
    for key in ("by_length", "by_word"):
        c = chi[key]
        rec.add(f"chi_square_{key}", n, c["stat"], 0.0, T, df=c["df"], p=c["p"], passes=c["passes"],
                tables=len(c["tables"]), level=level)
    return rec, rep.to_csv(), {}


def exp_spectral_probe(cfg, built, threads):
    _need(built, "line", cfg)
    n = _param(cfg, "n", lambda v: as_int(v, 2), 24)
    extra = _param(cfg, "extra", lambda v: [as_int(c, 1) for c in as_list(v)], [])
    rep = spectral_probe(built.line, n, extra)
    rec = Recorder(cfg, None, 0)
    rec.exact("group_return", n, rep.group_return, check=rep.group_return == rep.group_return_check)
    rec.add("group_root", n, rep.group_root, 0.0, 0, target=rep.target, within=rep.group_ok)
    rec.exact("line_return", n, rep.line_return)
    rec.add("line_rate", n, rep.line_rate, 0.0, 0, bound=rep.line_bound, within=rep.line_ok)
    rows = [[n, rep.group_root, rep.line_rate]]
    for m, r in rep.line_rates.items():
        rec.add("line_rate", m, r, 0.0, 0, bound=rep.line_bound, within=r <= rep.line_bound)
        rows.append([m, None, r])
    return rec, _csv(["n", "group_root", "line_rate"], rows), {}


EXPERIMENTS = {
    "inverted-orbit": exp_inverted_orbit,
    "recurrence": exp_recurrence,
    "sws-return": exp_sws_return,
    "tau-probe": exp_tau_probe,
    "drift": exp_drift,
    "schreier": exp_schreier,
    "complexity": exp_complexity,
    "colored-line-decay": exp_colored_line_decay,
    "oracle-crosscheck": exp_oracle_crosscheck,
    "spectral-probe": exp_spectral_probe,
}


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def execute(cfg: ExperimentConfig, threads: int = 1):
    """Run one experiment; returns (records, csv text, extra files)."""
    built = build_action(cfg)
    rec, text, files = EXPERIMENTS[cfg.kind](cfg, built, threads)
    header = dict(rec.base, metric="config", config=cfg.canonical)
    return [header] + rec.rows, text, files


def run(config_path: str, out_dir: str, seed: int | None = None, threads: int | None = None) -> list[dict]:
    cfg = load_config(config_path, seed)
    threads = threads if threads is not None else default_threads()
    t0 = time.perf_counter()
    try:
        records, text, files = execute(cfg, threads)
    except ConfigError as e:
        raise ConfigError(e.message, e.line, e.column, config_path) from None
    except ConfigurationError as e:
        raise ConfigError(str(e), path=config_path) from None
    wall = time.perf_counter() - t0
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "records.jsonl"), "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(dumps(r) + "\n")
    with open(os.path.join(out_dir, f"{cfg.id}.csv"), "w", encoding="utf-8") as fh:
        fh.write(text)
    for name, body in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(body)
    with open(os.path.join(out_dir, f"{cfg.id}.timing.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"experiment": cfg.id, "wall_seconds": wall, "threads": threads}) + "\n")
    return records


def oracle(config_path: str, n: int, budget: int | None = None) -> dict:
    cfg = load_config(config_path)
    built = build_action(cfg)
    if built.action is None:
        raise ConfigError("the oracle needs a lattice, iet or free-product action", path=config_path)
    b = budget or (_budget(cfg) if cfg.params is not None else 10**7)
    o = exact_orbit_oracle(built.action, n, b)
    s = exact_sws_return(built.action, n, b)
    return {"n": n, "orbit_oracle": o.expectation, "sws_return": s, "distribution": o.distribution,
            "words": o.words}


__all__ = ["BudgetExceeded", "EXPERIMENTS", "THREADS_ENV", "build_action", "default_threads", "dumps",
           "execute", "oracle", "run"]
