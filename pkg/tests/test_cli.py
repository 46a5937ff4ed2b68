import csv
import json
import os

import pytest

from ipevo.cli import ExperimentConfig, parse_grid, run


def data_rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_sample_pdip_lines(capsys):
    assert run(["sample", "pdip", "--alpha", "0.5", "--variant", "aa", "--n", "3", "--seed", "1"]) == 0
    lines = [json.loads(ln) for ln in capsys.readouterr().out.splitlines() if ln.strip()]
    assert len(lines) == 3
    assert all(d["total_mass"] == 1.0 for d in lines)


def test_evolve_trace_shape(tmp_path):
    out = tmp_path / "trace.csv"
    code = run(["evolve", "--method", "kernel", "--type", "1", "--alpha", "0.5", "--levels", "0:0.5:0.1",
                "--init", "pdip:a0", "--n", "100", "--seed", "7", "--out", str(out)])
    assert code == 0
    text = out.read_text()
    assert text.startswith("# {")
    rows = data_rows(text)
    assert len(rows) == 600
    assert sorted({float(r["level"]) for r in rows}) == pytest.approx([0, 0.1, 0.2, 0.3, 0.4, 0.5])
    assert all(float(r["total_mass"]) == pytest.approx(1.0) for r in rows if float(r["level"]) == 0)


def test_evolve_is_reproducible(tmp_path):
    args = ["evolve", "--method", "scaffold", "--type", "0", "--alpha", "0.5", "--levels", "0,0.2",
            "--init", "empty", "--n", "20", "--seed", "3", "--out"]
    run(args + [str(tmp_path / "a.csv")])
    run(args + [str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_depoissonize_from_trace(tmp_path):
    tr = tmp_path / "trace.csv"
    run(["evolve", "--type", "0", "--alpha", "0.5", "--levels", "0:0.4:0.05", "--init", "pdip:aa", "--n", "5",
         "--seed", "2", "--out", str(tr)])
    dp = tmp_path / "dp.csv"
    assert run(["depoissonize", "--in", str(tr), "--alpha", "0.5", "--out", str(dp)]) == 0
    rows = data_rows(dp.read_text())
    assert {"u", "level_at_u"} <= set(rows[0])
    assert all(float(r["total_mass"]) == 1.0 for r in rows)


def test_report_writes_svg(tmp_path):
    tr = tmp_path / "trace.csv"
    run(["evolve", "--type", "1", "--alpha", "0.5", "--levels", "0,0.1", "--init", "pdip:a0", "--n", "30",
         "--seed", "4", "--out", str(tr)])
    out = tmp_path / "fig"
    out.mkdir()
    assert run(["report", "--input", str(tr), "--out", str(out)]) == 0
    svgs = sorted(os.listdir(out))
    assert svgs and all(s.endswith(".svg") for s in svgs)
    assert "<svg" in (out / svgs[0]).read_text()


def test_verify_all_deterministic(tmp_path):
    args = ["verify", "all", "--alpha", "0.5", "--seed", "42", "--n-scale", "0.01", "--out"]
    assert run(args + [str(tmp_path / "a")]) == 0
    assert run(args + [str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "summary.csv").read_bytes()
    assert a == (tmp_path / "b" / "summary.csv").read_bytes()
    rows = data_rows(a.decode())
    assert rows and all(r["runtime"] == "NA" for r in rows)
    assert all(r["p"] == "" or 0 <= float(r["p"]) <= 1 for r in rows)


def test_verify_json_output(tmp_path):
    out = tmp_path / "r.json"
    assert run(["verify", "clades", "--stats", "iv,v", "--n", "500", "--seed", "1", "--out", str(out)]) == 0
    docs = json.loads(out.read_text())
    assert [d["id"] for d in docs] == ["clade:iv", "clade:v"]
    assert all(d["meta"]["seed"] == "1" for d in docs)


def test_exit_codes(tmp_path, capsys):
    assert run(["sample", "pdip", "--bogus"]) == 1
    assert run(["sample", "pdip", "--alpha", "1.5"]) == 1
    assert run(["evolve", "--levels", "0.5,0.1"]) == 1
    assert run(["report", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(command="verify", target="kernels", alpha=0.25, seed="9")
    cfg.validate()
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg and back.digest() == cfg.digest()
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"alpha": 0.3, "unknown_key": 1}))
    assert run(["--config", str(p), "sample", "pdip"]) == 1


def test_parse_grid():
    assert parse_grid("0:0.5:0.1") == pytest.approx([0, 0.1, 0.2, 0.3, 0.4, 0.5])
    assert list(parse_grid("0,0.2,1")) == [0, 0.2, 1]
