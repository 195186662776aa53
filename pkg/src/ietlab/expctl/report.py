"""Summaries and plot-ready CSVs from a records file."""

from __future__ import annotations

import hashlib
import io
import json
import os
from collections import OrderedDict


class ReportError(RuntimeError):
    pass


def _config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def load_records(path: str) -> "OrderedDict[str, list[dict]]":
    """Records grouped by experiment id, keeping the most recent run of each."""
    if os.path.isdir(path):
        path = os.path.join(path, "records.jsonl")
    runs: OrderedDict[str, list[dict]] = OrderedDict()
    hashes: dict[str, str] = {}
    kinds: dict[str, str] = {}
    if not os.path.exists(path):
        return runs
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                r = json.loads(line)
            except json.JSONDecodeError as e:
                raise ReportError(f"{path}:{lineno}: not a JSON record ({e.msg})") from None
            exp = r.get("experiment")
            if exp is None or "metric" not in r:
                raise ReportError(f"{path}:{lineno}: record lacks experiment or metric")
            if exp in kinds and (kinds[exp] != r.get("kind") or hashes[exp] != r.get("config_hash")):
                raise ReportError(f"{path}:{lineno}: experiment id {exp!r} is used by incompatible runs")
            kinds[exp], hashes[exp] = r.get("kind"), r.get("config_hash")
            if r["metric"] == "config":
                if _config_hash(r["config"]) != r["config_hash"]:
                    raise ReportError(f"{path}:{lineno}: stored config does not match its hash")
                runs[exp] = []
                runs.move_to_end(exp)
                continue
            runs.setdefault(exp, []).append(r)
    return runs


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _pm(r: dict) -> str:
    if r.get("exact"):
        return r["exact"]
    s = _fmt(r["value"])
    if r.get("stderr"):
        s += f" ± {_fmt(r['stderr'])}"
    return s


def _recurrence(rows: list[dict], out: io.StringIO) -> None:
    by = {}
    for r in rows:
        by.setdefault(r["x"], {})[r["metric"]] = r
    out.write(f"  {'n':>8}  {'E|O_n|/n':>24}  {'P(T > n)':>24}\n")
    for n in sorted(by):
        d = by[n]
        if "mean_ratio" in d:
            out.write(f"  {n:>8}  {_pm(d['mean_ratio']):>24}  {_pm(d['p_no_return']):>24}\n")
    for n in sorted(by):
        d = by[n]
        if "slope" in d:
            out.write(f"  escape probability at n={n}: slope {_pm(d['slope'])} | no-return {_pm(d['no_return'])}"
                      f"  (trajectories {d['slope']['trajectories']})\n")


def _complexity(rows: list[dict], out: io.StringIO) -> None:
    for r in rows:
        if r["metric"] == "exponent":
            lo, hi = r["band"]
            out.write(f"  fitted exponent {_fmt(r['value'])} ± {_fmt(r['stderr'])}, 95% band [{_fmt(lo)}, {_fmt(hi)}]"
                      f" on n in {r['fit_range']} (d = {r['d']})\n")
        elif r["metric"] == "constant":
            out.write(f"  max rho(n)/n^d = {_fmt(r['value'])}\n")
    rho = [r for r in rows if r["metric"] == "rho"]
    if rho:
        out.write("  rho: " + " ".join(str(r["value"]) for r in rho[:12]) + (" ..." if len(rho) > 12 else "") + "\n")


def _generic(rows: list[dict], out: io.StringIO) -> None:
    out.write(f"  {'metric':<22} {'x':>8}  {'value':>28}  {'trajectories':>12}\n")
    for r in rows:
        out.write(f"  {r['metric']:<22} {_fmt(r['x']):>8}  {_pm(r):>28}  {_fmt(r['trajectories']):>12}\n")


def summarize(runs) -> str:
    out = io.StringIO()
    for exp, rows in runs.items():
        if not rows:
            continue
        kind = rows[0]["kind"]
        out.write(f"{exp} [{kind}]\n")
        if kind == "recurrence":
            _recurrence(rows, out)
        elif kind == "complexity":
            _complexity(rows, out)
        else:
            _generic(rows, out)
        out.write("\n")
    return out.getvalue()


def plot_tables(runs) -> dict[str, str]:
    """One CSV (x, y, yerr) per experiment and metric."""
    tables = {}
    for exp, rows in runs.items():
        by: dict[str, list] = {}
        for r in rows:
            if isinstance(r.get("value"), (int, float)) and not isinstance(r.get("value"), bool):
                by.setdefault(r["metric"], []).append((r["x"], r["value"], r.get("stderr") or 0.0))
        for metric, pts in by.items():
            body = "x,y,yerr\n" + "".join(f"{x},{y!r},{e!r}\n" for x, y, e in pts)
            safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in metric)
            tables[f"{exp}__{safe}.csv"] = body
    return tables


def report(path: str, write: bool = True) -> str:
    runs = load_records(path)
    text = summarize(runs)
    if write and runs:
        d = path if os.path.isdir(path) else os.path.dirname(path) or "."
        pd = os.path.join(d, "plots")
        os.makedirs(pd, exist_ok=True)
        for name, body in plot_tables(runs).items():
            with open(os.path.join(pd, name), "w", encoding="utf-8") as fh:
                fh.write(body)
    return text
