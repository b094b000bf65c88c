import numpy as np
import pytest

from privf import io
from privf.cli import main
from privf.dist_core import leakage


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def toy(tmp_path):
    _write(tmp_path / "toy.csv", "a,b\nx,u\nx,v\ny,u\ny,v\n")
    return tmp_path


def _cfg(dir_, body, name="run.ini"):
    return str(_write(dir_ / name, body))


def test_estimate_uniform(toy):
    cfg = _cfg(toy, "[data]\npath=toy.csv\nprivate=a\npublic=b\n[prior]\nalpha=0\n")
    assert main(["estimate", "--config", cfg, "--out", str(toy / "o")]) == 0
    p = io.read_prior(toy / "o" / "prior.csv")
    np.testing.assert_allclose(p.mass, 0.25)
    rep = io.read_report(toy / "o" / "summary.txt")
    assert float(rep["I_AB_bits"]) == 0.0 and rep["public_size"] == "2"


def test_missing_column_and_malformed(toy):
    cfg = _cfg(toy, "[data]\npath=toy.csv\nprivate=zz\npublic=b\n")
    assert main(["estimate", "--config", cfg, "--out", str(toy / "o")]) == 2
    _write(toy / "bad.csv", 'a,b\nx,"u\n')
    cfg = _cfg(toy, "[data]\npath=bad.csv\nprivate=a\npublic=b\n", "bad.ini")
    assert main(["estimate", "--config", cfg, "--out", str(toy / "o")]) == 2
    cfg = _cfg(toy, "[data]\npath=toy.csv\nprivate=a\npublic=b\nwhat=1\n", "typo.ini")
    assert main(["estimate", "--config", cfg]) == 2


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


CORR = "a,b\n" + "x,u\n" * 4 + "x,v\n" + "y,u\n" + "y,v\n" * 4


@pytest.fixture
def corr(tmp_path):
    _write(tmp_path / "c.csv", CORR)
    return tmp_path


def test_solve_matches_direct_and_roundtrips(corr):
    cfg = _cfg(corr, "[data]\npath=c.csv\nprivate=a\npublic=b\n[prior]\nalpha=0\n[solve]\ndeltas=0, 0.25, 0.6\n")
    out = corr / "o"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    rows = io.read_curve(out / "curve.csv")
    assert [r["status"] for r in rows] == ["ok"] * 3
    # 0.25 on this prior is the tabulated oracle instance
    assert rows[1]["leakage_bits"] == pytest.approx(0.06593194462450883, abs=1e-6)
    assert rows[-1]["leakage_bits"] <= 1e-6
    from privf.cli import build_problem
    from privf.config import load_config

    prob = build_problem(load_config(cfg))
    for i, r in enumerate(rows):
        m = io.read_mapping(out / f"mapping_{i:03d}.csv", out_alphabet=prob.prior.col_alphabet)
        assert leakage(prob.prior, m) == pytest.approx(r["leakage_bits"], abs=1e-9)


def test_solve_byte_identical(corr):
    cfg = _cfg(corr, "[data]\npath=c.csv\nprivate=a\npublic=b\n[solve]\ndeltas=0.1, 0.3\n")
    for o in ("r1", "r2"):
        assert main(["solve", "--config", cfg, "--out", str(corr / o), "--seed", "3"]) == 0
    for f in sorted((corr / "r1").iterdir()):
        assert f.read_bytes() == (corr / "r2" / f.name).read_bytes()


def test_infeasible_delta_is_failed_row(corr):
    cfg = _cfg(corr, "[data]\npath=c.csv\nprivate=a\npublic=b\n[distortion]\nmetric=l2\n")
    # l2 on non-numeric labels is a data error
    assert main(["solve", "--config", cfg, "--out", str(corr / "o")]) == 2


def test_var_cap_env(corr, monkeypatch):
    cfg = _cfg(corr, "[data]\npath=c.csv\nprivate=a\npublic=b\n[solve]\ndeltas=0.1\n")
    monkeypatch.setenv("PRIVF_VAR_CAP", "2")
    assert main(["solve", "--config", cfg, "--out", str(corr / "o")]) == 2
    monkeypatch.setenv("PRIVF_VAR_CAP", "lots")
    assert main(["solve", "--config", cfg, "--out", str(corr / "o")]) == 2


def test_evaluate_identity_and_private(corr):
    body = "[data]\npath=c.csv\nprivate=a\npublic=b\n[prior]\nalpha=0\n[solve]\ndeltas=0, 0.6\n[evaluate]\nfolds=2\n"
    cfg = _cfg(corr, body)
    out = corr / "o"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    assert main(["evaluate", "--config", cfg, "--out", str(out), "--mapping", str(out / "mapping_000.csv")]) == 0
    rep = io.read_report(out / "evaluate_report.txt")
    assert rep["map_before"] == rep["map_after"] and rep["auc_before"] == rep["auc_after"]
    assert main(["evaluate", "--config", cfg, "--out", str(out), "--mapping", str(out / "mapping_001.csv")]) == 0
    rep = io.read_report(out / "evaluate_report.txt")
    assert float(rep["map_after"]) == pytest.approx(float(rep["majority"]), abs=1e-3)
    assert (out / "roc_after.csv").exists()


def test_evaluate_alphabet_mismatch(corr):
    _write(corr / "m.csv", "in_symbol,out_symbol,probability\nu,u,1.0\n")
    cfg = _cfg(corr, "[data]\npath=c.csv\nprivate=a\npublic=b\n")
    assert main(["evaluate", "--config", cfg, "--out", str(corr / "o"), "--mapping", str(corr / "m.csv")]) == 2


def test_bounds(corr):
    cfg = _cfg(corr, "[data]\npath=c.csv\nprivate=a\npublic=b\n[prior]\nalpha=0\n"
                     "[bounds]\ngrid_n=10000\ngrid_eps=0.1\n")
    out = corr / "o"
    assert main(["estimate", "--config", cfg, "--out", str(out)]) == 0
    assert main(["bounds", "--config", cfg, "--out", str(out), "--second-prior", str(out / "prior.csv")]) == 0
    rep = io.read_report(out / "bounds_report.txt")
    assert float(rep["l1"]) == 0 and float(rep["leakage_bound"]) == 0 and float(rep["distortion_slack"]) == 0
    sanov = (out / "sanov.csv").read_text().splitlines()
    assert float(sanov[1].split(",")[-1]) == pytest.approx(6.3e-45, rel=0.01)
    # L1 = 0.6 -> flagged invalid
    _write(out / "far.csv", "private_symbol,public_symbol,probability\n"
                            "x,u,0.7\nx,v,0.1\ny,u,0.1\ny,v,0.1\n")
    assert main(["bounds", "--config", cfg, "--out", str(out), "--second-prior", str(out / "far.csv")]) == 0
    rep = io.read_report(out / "bounds_report.txt")
    assert float(rep["l1"]) == pytest.approx(0.6) and rep["valid"] == "false"
    _write(out / "other.csv", "private_symbol,public_symbol,probability\nx,w,0.5\ny,w,0.5\n")
    assert main(["bounds", "--config", cfg, "--out", str(out), "--second-prior", str(out / "other.csv")]) == 2


def test_synth_pipeline(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--out", str(out), "--seed", "0"]) == 0
    ini = out / "synth_top5.ini"
    assert main(["solve", "--config", str(ini)]) == 0
    rows = io.read_curve(out / "curve.csv")
    assert rows[-1]["leakage_bits"] <= 1e-6
    last = out / f"mapping_{len(rows) - 1:03d}.csv"
    assert main(["evaluate", "--config", str(ini), "--mapping", str(last)]) == 0
    rep = io.read_report(out / "evaluate_report.txt")
    assert float(rep["map_after"]) == pytest.approx(float(rep["majority"]), abs=1e-3)


def test_quantized_run_on_50_bits(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--out", str(out)]) == 0
    cols = ", ".join(f"show_{j:02d}" for j in range(50))
    cfg = _cfg(out, f"[data]\npath=synth.csv\nprivate=party\npublic={cols}\n[distortion]\nscale=50\n"
                    "[solve]\nk=25\ndeltas=0, 0.6\n[run]\nout=q\n")
    assert main(["solve", "--config", cfg]) == 0
    summ = io.read_report(out / "q" / "solve_summary.txt")
    assert int(summ["variables"]) == 625
    assert (out / "q" / "quantizer.csv").exists() and (out / "q" / "centers.csv").exists()
    rows = io.read_curve(out / "q" / "curve.csv")
    assert rows[-1]["leakage_bits"] <= 1e-6
    assert main(["evaluate", "--config", cfg, "--mapping", str(out / "q" / "mapping_001.csv")]) == 0
    rep = io.read_report(out / "q" / "evaluate_report.txt")
    assert float(rep["auc_before"]) > 0.75
