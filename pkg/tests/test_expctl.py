import json
import os
import subprocess
import sys
import textwrap

import pytest

from ietlab.expctl.cli import main
from ietlab.expctl.config import ConfigError, parse_config
from ietlab.expctl.report import ReportError, load_records, report
from ietlab.expctl.runner import dumps, execute

Z_ORACLE = """\
id: z-small
kind: oracle-crosscheck
action:
  type: lattice
  vectors:
    "+1": [0, 1]
    "-1": [0, -1]
walk:
  weights: {"+1": 1/2, "-1": 1/2}
  horizon: 4
  trajectories: 3000
  seed: 11
params:
  n_max: 4
"""

COMPLEXITY = """\
id: cx
kind: complexity
action:
  type: iet
  group:
    thetas: ["sqrt(2)-1"]
  generators:
    a: {rotation: "[1]"}
params:
  S: ["[1]"]
  n_max: 12
"""

RECURRENCE = """\
id: rec
kind: recurrence
action:
  type: iet
  group:
    thetas: ["sqrt(2)-1"]
  generators:
    a: {rotation: "[1]"}
    A: {inverse: a}
walk:
  horizon: 400
  trajectories: 300
  seed: 1
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def records(out):
    with open(os.path.join(out, "records.jsonl")) as fh:
        return [json.loads(l) for l in fh]


def test_oracle_crosscheck_record_has_exact_value(tmp_path):
    cfg = write(tmp_path, "z.yaml", Z_ORACLE)
    out = str(tmp_path / "out")
    assert main(["run", cfg, "--out", out]) == 0
    recs = records(out)
    hit = [r for r in recs if r["metric"] == "orbit_oracle" and r["x"] == 2]
    assert hit and hit[0]["exact"] == "3/16"
    assert all(r["metric"] == "config" or ("trajectories" in r and "stderr" in r) for r in recs)
    assert os.path.exists(os.path.join(out, "z-small.csv"))
    assert os.path.exists(os.path.join(out, "z-small.timing.json"))


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, "r.yaml", RECURRENCE)
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["run", cfg, "--out", a, "--threads", "1"]) == 0
    assert main(["run", cfg, "--out", b, "--threads", "4"]) == 0
    ra = open(os.path.join(a, "records.jsonl"), "rb").read()
    rb = open(os.path.join(b, "records.jsonl"), "rb").read()
    assert ra == rb
    assert open(os.path.join(a, "rec.csv"), "rb").read() == open(os.path.join(b, "rec.csv"), "rb").read()


def test_seed_override_changes_records(tmp_path):
    cfg = write(tmp_path, "r.yaml", RECURRENCE)
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    main(["run", cfg, "--out", a])
    main(["run", cfg, "--out", b, "--seed", "2"])
    ra, rb = records(a), records(b)
    assert ra[0]["config_hash"] != rb[0]["config_hash"] and rb[0]["seed"] == 2
    assert [r["value"] for r in ra[1:]] != [r["value"] for r in rb[1:]]


def test_records_append(tmp_path):
    cfg = write(tmp_path, "c.yaml", COMPLEXITY)
    out = str(tmp_path / "o")
    main(["run", cfg, "--out", out])
    n = len(records(out))
    main(["run", cfg, "--out", out])
    assert len(records(out)) == 2 * n
    assert len(load_records(out)["cx"]) == n - 1


def test_malformed_config_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.yaml", "id: x\nkind: [unclosed\n")
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "bad.yaml:3:1:" in err


def test_config_error_positions():
    with pytest.raises(ConfigError) as e:
        parse_config("id: x\nkind: nonsense\n")
    assert e.value.line == 2 and e.value.column == 7
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("id: x\nkind: schreier\nextra: 1\n")


@pytest.mark.parametrize("text, needle", [
    (RECURRENCE.replace("    A: {inverse: a}", "    A: {inverse: q}"), "q"),
    (Z_ORACLE.replace('"-1": 1/2}', '"-1": 1/3}'), "sum"),
    (RECURRENCE.replace("  seed: 1\n", ""), "seed"),
    (RECURRENCE.replace("type: iet", "type: torus"), "torus"),
])
def test_semantic_errors_exit_2(tmp_path, capsys, text, needle):
    cfg = write(tmp_path, "bad.yaml", text)
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert needle in capsys.readouterr().err


def test_budget_exit_3(tmp_path, capsys):
    cfg = write(tmp_path, "z.yaml", Z_ORACLE)
    assert main(["oracle", cfg, "--n", "20", "--budget", "1000"]) == 3
    big = Z_ORACLE.replace("n_max: 4", "n_max: 4\n  budget: 10").replace("horizon: 4", "horizon: 4")
    cfg2 = write(tmp_path, "z2.yaml", big)
    assert main(["run", cfg2, "--out", str(tmp_path / "o")]) == 3
    assert "budget" in capsys.readouterr().err


def test_oracle_subcommand(tmp_path, capsys):
    cfg = write(tmp_path, "z.yaml", Z_ORACLE)
    assert main(["oracle", cfg, "--n", "2"]) == 0
    out = capsys.readouterr().out
    assert "3/16" in out


def test_empty_report(tmp_path, capsys):
    d = tmp_path / "empty"
    d.mkdir()
    (d / "records.jsonl").write_text("")
    assert main(["report", str(d)]) == 0
    assert capsys.readouterr().out.strip() == ""


def test_report_tables(tmp_path):
    out = str(tmp_path / "o")
    main(["run", write(tmp_path, "r.yaml", RECURRENCE), "--out", out])
    main(["run", write(tmp_path, "c.yaml", COMPLEXITY), "--out", out])
    text = report(out)
    assert "slope" in text and "no-return" in text
    assert "exponent" in text
    plots = os.listdir(os.path.join(out, "plots"))
    assert plots
    head = open(os.path.join(out, "plots", plots[0])).readline().strip()
    assert head == "x,y,yerr"


def test_report_rejects_mixed_ids(tmp_path, capsys):
    out = str(tmp_path / "o")
    main(["run", write(tmp_path, "c.yaml", COMPLEXITY), "--out", out])
    main(["run", write(tmp_path, "c2.yaml", COMPLEXITY.replace("n_max: 12", "n_max: 13")), "--out", out])
    with pytest.raises(ReportError):
        load_records(out)
    assert main(["report", out]) == 1


def test_report_detects_tampering(tmp_path):
    out = str(tmp_path / "o")
    main(["run", write(tmp_path, "c.yaml", COMPLEXITY), "--out", out])
    path = os.path.join(out, "records.jsonl")
    lines = open(path).read().splitlines()
    head = json.loads(lines[0])
    head["config"]["params"]["n_max"] = "99"
    lines[0] = dumps(head)
    open(path, "w").write("\n".join(lines) + "\n")
    with pytest.raises(ReportError, match="hash"):
        load_records(out)


def test_config_hash_recomputable():
    cfg = parse_config(COMPLEXITY)
    recs, _, _ = execute(cfg)
    from ietlab.expctl.report import _config_hash
    assert _config_hash(recs[0]["config"]) == recs[0]["config_hash"] == cfg.config_hash


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "z.yaml", Z_ORACLE)
    res = subprocess.run([sys.executable, "-m", "ietlab.expctl", "oracle", cfg, "--n", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "3/16" in res.stdout


def test_thread_env(tmp_path, monkeypatch):
    from ietlab.expctl.runner import default_threads
    monkeypatch.setenv("IETLAB_THREADS", "3")
    assert default_threads() == 3
