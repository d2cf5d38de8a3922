import csv
import io
import json

import numpy as np
import pytest

from roughshe import cli, report, rng
from roughshe.checks import (CHECKS, FAIL, PASS, SKIPPED, CheckResult, VerifyContext, exit_code,
                             run_check, select)
from roughshe.config import ConfigError, parse_config


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    g = cfg.sections["global"]
    assert (g["alpha"], g["seed"]) == (1.5, 0)
    assert cfg.section("field")["N"] == 64
    assert cfg.section("field")["alpha"] == 1.5


def test_rough_range_enforced_per_section():
    with pytest.raises(ConfigError) as exc:
        parse_config("[field]\nalpha = 0.9\n")
    assert any("[field] alpha" in e for e in exc.value.errors)
    # the kernel is defined for any alpha > 1
    cfg = parse_config("[kernel]\nalpha = 2.5\n[field]\nalpha = 1.5\n[solve]\nalpha = 1.5\n"
                       "[moments]\nalpha = 1.5\n[oscillation]\nalpha = 1.5\n")
    assert cfg.section("kernel")["alpha"] == 2.5


def test_flags_override_file():
    cfg = parse_config("alpha = 1.8\n", overrides={"global.alpha": 1.2})
    assert cfg.sections["global"]["alpha"] == 1.2
    cfg = parse_config("[field]\nN = 32\n", overrides={("field", "N"): 16})
    assert cfg.section("field")["N"] == 16


def test_all_errors_collected():
    text = "[field]\nN = 48\nbogus = 1\n[solve]\nsigma = square:1\n[nowhere]\nx = 1\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    errs = exc.value.errors
    assert any("unknown key 'bogus'" in e for e in errs)
    assert any("unknown section [nowhere]" in e for e in errs)
    with pytest.raises(ConfigError) as exc:
        parse_config("[field]\nN = 48\n[solve]\nsigma = square:1\n")
    errs = exc.value.errors
    assert any("power of two" in e for e in errs) and any("sigma" in e for e in errs)


def test_config_file_path(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("[global]\nseed = 7\n[solve]\nsnapshots = 0.1, 0.2\n")
    cfg = parse_config(path=str(p))
    assert cfg.seed == 7 and cfg.section("solve")["snapshots"] == [0.1, 0.2]
    assert cfg.section("solve")["seed"] == 7


def test_rng_streams():
    a = rng.stream(1, "field", 3).standard_normal(4)
    b = rng.stream(1, "field", 3).standard_normal(4)
    c = rng.stream(1, "field", 4).standard_normal(4)
    d = rng.stream(2, "field", 3).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    assert rng.stream_key(0, "a", 1) != rng.stream_key(0, "a1")


def test_csv_schema_and_svg(tmp_path):
    text = report.csv_text("moments", [{"point": "k=2", "statistic": "s", "value": 0.1,
                                        "ci_low": None, "ci_high": 1.0, "flags": ""}])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == report.SCHEMAS["moments"]
    assert rows[1][2] == "0.1" and rows[1][3] == ""
    svg = report.svg_plot([{"x": [1, 10, 100], "y": [1, 2, 3], "lo": [0, 1, 2],
                            "hi": [2, 3, 4], "label": "a<b"}], title="t")
    assert svg.startswith("<svg") and "a&lt;b" in svg and "polygon" in svg


def test_check_selection_and_exit_codes():
    assert [c.id for c in select("kernel.phi")] == ["kernel.phi"]
    assert [c.criterion for c in select("3,1")] == [1, 3]
    assert len(select("kernel")) == 4
    assert len(select(None)) == len(CHECKS) == 12
    with pytest.raises(KeyError):
        select("nonsense")
    mk = lambda s: CheckResult("x", 1, s, "")  # noqa: E731
    assert exit_code([mk(PASS), mk(PASS)]) == 0
    assert exit_code([mk(PASS), mk(FAIL)]) == 1
    assert exit_code([mk(SKIPPED), mk(SKIPPED)]) == 3
    assert exit_code([mk(PASS), mk(SKIPPED)]) == 0


def test_zero_budget_skips_every_monte_carlo_check():
    ctx = VerifyContext(replicas=0)
    for spec in CHECKS:
        if spec.monte_carlo:
            assert run_check(spec, ctx).status == SKIPPED


def test_cli_verify_only_one(tmp_path, capsys):
    code = cli.main(["verify", "--only", "kernel.phi", "--out", str(tmp_path)])
    out = capsys.readouterr()
    lines = [json.loads(x) for x in out.out.splitlines()]
    assert code == 0 and len(lines) == 1 and lines[0]["id"] == "kernel.phi"
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["exit_code"] == 0 and summary["checks"][0]["status"] == "pass"
    assert "criterion  1" in out.err


def test_cli_skipped_only_exit_code(capsys):
    assert cli.main(["verify", "--only", "5,7", "--replicas", "0"]) == 3


def test_cli_config_error_exit_code(capsys):
    assert cli.main(["field", "--alpha", "2.5"]) == 2
    assert cli.main(["verify", "--only", "nope"]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_solve_is_reproducible(tmp_path):
    args = ["solve", "--N", "4", "--dt", "0.01", "--T", "0.03", "--replicas", "2",
            "--sigma", "tanh:1", "--coupled", "--seed", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(a.open()))
    assert len(rows) == 2 * 64 and rows[0].keys() == set(report.SCHEMAS["solve"])
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["seed"] == 3 and man["config"]["solve"]["sigma"] == "tanh:1"
    assert "code_version" in man


def test_cli_kernel_and_moments(tmp_path):
    k = tmp_path / "k.csv"
    svg = tmp_path / "k.svg"
    assert cli.main(["kernel", "--verify", "fhat", "--out", str(k), "--svg", str(svg)]) == 0
    rows = list(csv.DictReader(k.open()))
    assert {r["check"] for r in rows} == {"fhat"} and all(r["pass"] == "true" for r in rows)
    assert svg.read_text().startswith("<svg")
    m = tmp_path / "m.csv"
    assert cli.main(["moments", "--k", "1,2", "--t-grid", "0.01,0.02,0.03", "--replicas", "200",
                     "--out", str(m)]) == 0
    rows = list(csv.DictReader(m.open()))
    k1 = [r for r in rows if r["point"].startswith("k=1;")]
    assert k1 and all(float(r["value"]) == 0.0 for r in k1)
    assert any(r["statistic"] == "lyapunov_slope" for r in rows)


def test_cli_field_and_oscillation(tmp_path):
    f = tmp_path / "f.csv"
    assert cli.main(["field", "--N", "16", "--scan", "2,4,8", "--replicas", "40",
                     "--out", str(f)]) == 0
    rows = list(csv.DictReader(f.open()))
    assert [int(r["N"]) for r in rows] == [2, 4, 8]
    assert all(float(r["entropy_integral"]) > 0 for r in rows)
    o = tmp_path / "o.csv"
    assert cli.main(["oscillation", "--N", "16", "--t", "0.004", "--deltas", "0.25,0.0625",
                     "--replicas", "2", "--budget", "8", "--out", str(o)]) == 0
    rows = list(csv.DictReader(o.open()))
    assert {r["statistic"] for r in rows} >= {"u_max", "z_max", "d_max", "z_ratio"}


def test_workers_env(monkeypatch):
    cfg = parse_config("")
    ns = cli.build_parser().parse_args(["verify"])
    monkeypatch.setenv(cli.WORKERS_ENV, "3")
    assert cli._workers(cfg, ns) == 3
    ns = cli.build_parser().parse_args(["verify", "--workers", "2"])
    cfg = parse_config("", overrides=cli._overrides(ns))
    assert cli._workers(cfg, ns) == 2
