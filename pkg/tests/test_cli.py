import csv
import json
from pathlib import Path

import numpy as np
import pytest

from infeig.cli import TRACE_COLUMNS, ConfigError, main, read_config

ROOT = Path(__file__).resolve().parents[1]

SMALL = """
[domain]
kind = interval
n = 1
components = 1
extents = 2.0
h = 0.02

[schedule]
p = 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024

[diagnostics]
measures = true
mollifier = false
du_star = false
oracle = false
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(tmp_path, text, *extra, command="solve", out="out"):
    cfg = _write(tmp_path, text)
    return main([command, str(cfg), "--out", str(tmp_path / out), "--quiet", *extra])


def test_decreasing_schedule_exit_2(tmp_path, capsys):
    text = SMALL.replace("p = 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024", "p = 8, 4")
    assert _run(tmp_path, text) == 2
    assert "schedule not increasing" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_oracle_on_box_exit_2(tmp_path, capsys):
    text = SMALL.replace("kind = interval\nn = 1", "kind = box\nn = 2").replace(
        "extents = 2.0", "extents = 2.0, 2.0").replace("oracle = false", "oracle = true")
    assert _run(tmp_path, text) == 2
    assert "oracle requires ball or interval" in capsys.readouterr().err


def test_oracle_command_on_box_exit_2(tmp_path):
    text = SMALL.replace("kind = interval\nn = 1", "kind = box\nn = 2").replace(
        "extents = 2.0", "extents = 2.0, 2.0")
    assert _run(tmp_path, text, command="oracle") == 2


@pytest.mark.parametrize("bad", ["[solver]\nmystery = 1\n", "[diagnostics]\nplots = yes\n",
                                 "[schedule]\np = 1, 2\n"])
def test_config_errors(tmp_path, bad):
    text = SMALL.replace("[schedule]\np = 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024", "") + bad
    assert _run(tmp_path, text) == 2


def test_missing_file_exit_2(tmp_path):
    assert main(["solve", str(tmp_path / "nope.cfg"), "--quiet"]) == 2


def test_env_override(tmp_path):
    cfg = _write(tmp_path, SMALL)
    rc = read_config(cfg, {"INFEIG_DOMAIN__H": "0.05", "INFEIG_SCHEDULE__P": "2, 3"})
    assert rc.domain.h == 0.05 and rc.schedule == [2.0, 3.0]
    with pytest.raises(ConfigError):
        read_config(cfg, {"INFEIG_SCHEDULE__P": "4, 2"})


def test_geometric_schedule_keys(tmp_path):
    text = SMALL.replace("p = 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024", "k_min = 1\nk_max = 10")
    assert read_config(_write(tmp_path, text), {}).schedule == [2.0 ** k for k in range(1, 11)]


def test_validate_command(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, SMALL))]) == 0
    out = capsys.readouterr().out
    assert "Lambda bracket" in out and "[PASS] hypotheses" in out


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("small")
    codes = [_run(tmp, SMALL, out=f"o{k}") for k in range(2)]
    return tmp, codes


def test_small_run_outputs(small_run):
    tmp, codes = small_run
    assert codes == [0, 0]
    out = tmp / "o0"
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == TRACE_COLUMNS
    assert [float(r[0]) for r in rows[1:]] == [2 ** k for k in range(1, 11)]
    for p in (2, 16, 1024):
        assert (out / f"fields_p{p}.csv").exists()
    with open(out / "fields_p1024.csv") as fh:
        head = next(csv.reader(fh))
    assert head == ["x_0", "u_0", "du_0_0", "mu", "nu"]


def test_results_json_schema(small_run):
    tmp, _ = small_run
    text = (tmp / "o0" / "results.json").read_text()
    assert "NaN" not in text and "Infinity" not in text
    b = json.loads(text)
    assert b["schema_version"] == "1.0"
    assert set(b) >= {"config", "trace", "summary", "measure_masses", "diagnostics", "passed",
                      "timing"}
    names = [d["name"] for d in b["diagnostics"]]
    assert len(names) == len(set(names))
    assert b["trace"][0]["p"] == 2.0


def test_trace_floats_round_trip(small_run):
    tmp, _ = small_run
    b = json.loads((tmp / "o0" / "results.json").read_text())
    with open(tmp / "o0" / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    for r, t in zip(rows, b["trace"]):
        assert float(r["Lambda_p"]) == t["Lambda_p"]


def test_determinism(small_run):
    tmp, _ = small_run
    a, b = (json.loads((tmp / o / "results.json").read_text()) for o in ("o0", "o1"))
    a.pop("timing"), b.pop("timing")
    assert a == b
    for name in ("trace.csv", "fields_p1024.csv"):
        assert (tmp / "o0" / name).read_bytes() == (tmp / "o1" / name).read_bytes()


def test_seed_flag_changes_competitor_only(tmp_path):
    a = _run(tmp_path, SMALL, "--seed", "3", out="s3")
    assert a == 0
    b = json.loads((tmp_path / "s3" / "results.json").read_text())
    assert b["config"]["seed"] == 3


def test_bundled_1d_fixture(tmp_path):
    rc = main(["solve", str(ROOT / "configs" / "cone1d.cfg"), "--out", str(tmp_path), "--quiet"])
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 11  # header + p = 2 .. 1024
    b = json.loads((tmp_path / "results.json").read_text())
    failed = {d["name"] for d in b["diagnostics"] if not d["passed"]}
    # the Du-star agreement and the limit mass identities need a finer grid than
    # h = 1/200 (see README); everything else must hold on the fixture
    assert failed <= {"Du-star", "limit mass identities"}
    assert rc == (1 if failed else 0)
    assert (tmp_path / "du_star.csv").exists()
    oracle = next(d for d in b["diagnostics"] if d["name"] == "cone oracle")
    assert oracle["passed"]


def test_box_two_components_runs(tmp_path):
    text = (SMALL.replace("kind = interval\nn = 1", "kind = box\nn = 2")
            .replace("extents = 2.0", "extents = 2.0, 1.0").replace("components = 1", "components = 2")
            .replace("h = 0.02", "h = 0.1").replace(", 256, 512, 1024", ""))
    rc = _run(tmp_path, text)
    assert rc in (0, 1)
    with open(tmp_path / "out" / "fields_p128.csv") as fh:
        head = next(csv.reader(fh))
    assert head == ["x_0", "x_1", "u_0", "u_1", "du_0_0", "du_0_1", "du_1_0", "du_1_1", "mu", "nu"]


@pytest.mark.slow
@pytest.mark.skipif(not __import__("os").environ.get("INFEIG_SLOW"),
                    reason="three-minute 2D run; set INFEIG_SLOW=1")
def test_bundled_2d_cone(tmp_path):
    rc = main(["solve", str(ROOT / "configs" / "cone2d.cfg"), "--out", str(tmp_path), "--quiet"])
    b = json.loads((tmp_path / "results.json").read_text())
    oracle = next(d for d in b["diagnostics"] if d["name"] == "cone oracle")
    prof = next(c for c in oracle["checks"] if c["name"].startswith("sup | |u|"))
    assert prof["value"] <= 0.05
    assert rc == 0
