import json
import os
import subprocess
import sys

import pytest

from geomc.cli import main

SMALL = "target = gaussian\nsampler = hmc\nn_samples = 2\ndim = 2\nwarmup = 0\n"
BASE = "target = gaussian\nsampler = hmc\nn_samples = 50\ndim = 2\nwarmup = 10\ntau = 0.2\nL = 5\n"


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("GEOMC_SEED", raising=False)
    return tmp_path


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_sample_writes_chains_and_summary(workdir):
    cfg = _write(workdir / "run.cfg", BASE + "seed = 3\nn_chains = 4\noutput = out/run\n")
    assert main(["sample", cfg]) == 0
    files = sorted(os.listdir(workdir / "out"))
    assert files == [f"run_chain{i}.csv" for i in range(4)] + ["run_summary.json"]
    summary = json.loads((workdir / "out" / "run_summary.json").read_text())
    assert summary["config"]["seed"] == 3 and len(summary["chains"]) == 4
    assert summary["chains"][0]["var_H_minus_Hshadow"] is not None
    lines = (workdir / "out" / "run_chain0.csv").read_text().splitlines()
    assert len(lines) == 51


def test_sample_is_byte_reproducible(workdir):
    cfg = _write(workdir / "run.cfg", BASE + "seed = 3\nn_chains = 2\n")
    assert main(["sample", cfg, "--output", "a"]) == 0
    assert main(["sample", cfg, "--output", "b"]) == 0
    for suffix in ("_chain0.csv", "_chain1.csv"):
        assert (workdir / f"a{suffix}").read_bytes() == (workdir / f"b{suffix}").read_bytes()
    sa = json.loads((workdir / "a_summary.json").read_text())
    sb = json.loads((workdir / "b_summary.json").read_text())
    sa["config"].pop("output"), sb["config"].pop("output")
    for c in sa["chains"] + sb["chains"]:
        c.pop("file")
    assert sa == sb


def test_seed_precedence(workdir, monkeypatch):
    cfg = _write(workdir / "run.cfg", SMALL + "seed = 1\n")

    def seed_used(*extra):
        assert main(["sample", cfg, "--output", "s", *extra]) == 0
        return json.loads((workdir / "s_summary.json").read_text())["config"]["seed"]

    assert seed_used() == 1
    monkeypatch.setenv("GEOMC_SEED", "5")
    assert seed_used() == 5
    assert seed_used("--seed", "7") == 7


def test_missing_seed_records_entropy(workdir):
    cfg = _write(workdir / "run.cfg", SMALL)
    assert main(["sample", cfg, "--output", "s"]) == 0
    seed = json.loads((workdir / "s_summary.json").read_text())["config"]["seed"]
    assert isinstance(seed, int) and seed >= 0


def test_exit_codes(workdir, capsys):
    bad = _write(workdir / "bad.cfg", BASE + "L = 0\n")
    assert main(["sample", bad]) == 1
    assert "'L'" in capsys.readouterr().err
    assert main(["nonsense"]) == 1
    assert main(["sample"]) == 1
    assert main(["sample", str(workdir / "missing.cfg")]) == 2
    assert main(["report", str(bad)]) == 1
    diverging = _write(workdir / "div.cfg", BASE.replace("dim = 2", "dim = 1\ncov = diag:1e-6").replace("tau = 0.2", "tau = 0.5") + "seed = 0\nmax_divergences = 0\n")
    assert main(["sample", diverging]) == 2
    assert "divergence" in capsys.readouterr().err


def test_zero_samples(workdir):
    cfg = _write(workdir / "run.cfg", BASE.replace("n_samples = 50", "n_samples = 0") + "seed = 1\n")
    assert main(["sample", cfg]) == 0
    assert (workdir / "geomc_out_chain0.csv").read_text().count("\n") == 1


def test_check_and_shadow_scan(workdir, capsys):
    cfg = _write(workdir / "run.cfg", "target = logreg\nseed = 2\nn_phases = 3\ntaus = 0.1, 0.05\n")
    assert main(["check", cfg]) == 0
    rows = (workdir / "geomc_out_check.csv").read_text().splitlines()
    assert rows[0] == "property,system,integrator,tau,deviation,lower,upper,passed"
    assert len(rows) == 1 + 2 * 2 * 4
    assert all(r.endswith(",1") for r in rows[1:])
    assert "16/16 checks passed" in capsys.readouterr().out
    assert main(["shadow-scan", cfg]) == 0
    scan = (workdir / "geomc_out_shadow_scan.csv").read_text().splitlines()
    assert scan[0] == "tau,max_dH,max_dHshadow" and len(scan) == 3


def test_report(workdir, capsys):
    cfg = _write(workdir / "run.cfg", BASE + "seed = 3\n")
    main(["sample", cfg])
    capsys.readouterr()
    assert main(["report", "geomc_out_chain0.csv"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["geomc_out_chain0.csv"]["n"] == 50
    assert main(["report", "geomc_out_chain0.csv", "-o", "r.json"]) == 0
    assert json.loads((workdir / "r.json").read_text()) == out


def test_demo(workdir):
    assert main(["demo", "--output-dir", "d", "--seed", "1"]) == 0
    assert sorted(os.listdir(workdir / "d")) == ["demo_hmc.csv", "demo_plot.gp", "demo_rwm.csv"]
    for name in ("demo_rwm.csv", "demo_hmc.csv"):
        assert len((workdir / "d" / name).read_text().splitlines()) == 31
    assert "demo_rwm.csv" in (workdir / "d" / "demo_plot.gp").read_text()


def test_console_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "geomc.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("geomc ")
