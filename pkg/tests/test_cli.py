import csv
import json
import pathlib

import pytest

from roughmag import __version__
from roughmag.cli import RunConfig, main, run
from roughmag.errors import ConfigError

CONFIGS = pathlib.Path(__file__).parent.parent / "configs"

SMALL = """
[model]
M = [[1.0, 1.0], [-1.0, 1.0]]
T = 1.0

[experiment]
eps_list = [0.4, 0.3]
n_paths = 60
grid_steps = 16
resolution = 4.0
"""


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_correction_symmetric(tmp_path):
    code = main(["correction", "--config", str(CONFIGS / "symmetric.toml"), "--out", str(tmp_path)])
    assert code == 0
    rows = {r["statistic"]: float(r["mean"]) for r in _rows(tmp_path / "report.csv")}
    assert all(abs(rows[f"Gamma_{i}{j}"]) < 1e-15 for i in range(2) for j in range(2))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] and summary["details"]["symmetric_M"]
    assert summary["version"] == __version__
    assert summary["config"]["model"]["T"] == 1.0


def test_correction_example_quarter(tmp_path):
    assert main(["correction", "--config", str(CONFIGS / "example.toml"),
                 "--out", str(tmp_path)]) == 0
    rows = {r["statistic"]: float(r["mean"]) for r in _rows(tmp_path / "report.csv")}
    assert abs(abs(rows["GammaX_01"]) - 0.25) < 1e-12
    assert rows["GammaX_01"] == -rows["GammaX_10"]


def test_report_format(tmp_path):
    main(["correction", "--config", str(CONFIGS / "example.toml"), "--out", str(tmp_path)])
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "eps,statistic,mean,se,n"
    text = (tmp_path / "summary.json").read_text()
    d = json.loads(text)
    assert list(d) == sorted(d)


def test_same_seed_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    outs = []
    for k, workers in enumerate(("1", "2", "1")):
        out = tmp_path / f"run{k}"
        main(["theorem", "--config", cfg, "--seed", "7", "--workers", workers, "--out", str(out)])
        outs.append((out / "report.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    other = tmp_path / "other"
    main(["theorem", "--config", cfg, "--seed", "8", "--out", str(other)])
    assert (other / "report.csv").read_bytes() != outs[0]


def test_simulate_writes_path(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "path.csv")
    assert len(rows) == 17


def test_signature_and_rde_smoke(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["signature", "--config", cfg, "--out", str(tmp_path / "s")]) in (0, 1)
    assert main(["rde", "--config", cfg, "--out", str(tmp_path / "r")]) in (0, 1)
    s = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert set(s["criteria"]) == {"matches_corrected_within_3se", "differs_from_uncorrected_3se"}


def test_driver_command(tmp_path):
    cfg = _write(tmp_path, SMALL + "\n[driver]\nkind = \"fourier\"\nmasses = [0.1, 0.01]\n"
                 "n_steps = 256\nK = 8\n")
    assert main(["driver", "--config", cfg, "--out", str(tmp_path)]) in (0, 1)
    s = json.loads((tmp_path / "summary.json").read_text())
    assert "var1_uniform_bound" in s["criteria"]


def test_exit_codes(tmp_path, capsys):
    assert main(["nonsense", "--config", "x"]) == 2
    assert main(["correction", "--config", str(tmp_path / "missing.toml")]) == 2
    bad = _write(tmp_path, "[model]\nM = [[1.0, 0.0], [0.0, 1.0]]\n")
    assert main(["correction", "--config", bad]) == 2
    assert "T" in capsys.readouterr().err
    broken = _write(tmp_path, "[model\n", "b.toml")
    assert main(["correction", "--config", broken]) == 2
    # the rate ladder needs >= 4 eps values
    assert main(["rate", "--config", _write(tmp_path, SMALL, "r.toml"),
                 "--out", str(tmp_path)]) == 2


def test_numerical_error_exit(tmp_path):
    # a single path makes the standard errors exceed half the means
    text = SMALL.replace("eps_list = [0.4, 0.3]", "eps_list = [0.8, 0.4, 0.2, 0.1]")
    text = text.replace("n_paths = 60", "n_paths = 1").replace("resolution = 4.0", "resolution = 1.0")
    assert main(["rate", "--config", _write(tmp_path, text), "--out", str(tmp_path)]) == 3


def test_run_config_validates_command():
    with pytest.raises(ConfigError):
        RunConfig("plot", "x.toml")
    assert run(RunConfig("correction", str(CONFIGS / "example.toml"), "/proc/forbidden")) == 2
