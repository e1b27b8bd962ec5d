import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from congestion_pricing import DomainError, decay_fit
from congestion_pricing.cli import (ExperimentConfig, main, replicate_seed, run_experiment, splitmix64,
                                    summarize)

SMALL = {"kind": "quadratic", "n": 3, "d": 2, "capacity": 6.25}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_splitmix_reference_values():
    # first outputs of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert replicate_seed(0, 1) == splitmix64(1)
    assert len({replicate_seed(7, k) for k in range(1000)}) == 1000


def test_beta_sweep_smoke(tmp_path):
    out = tmp_path / "run"
    assert main(["--sweep", "beta=0,2", "--seeds", "1", "--horizon", "10", "--out", str(out)]) == 0
    assert (out / "T10" / "beta=0" / "seed0.csv").exists()
    assert (out / "T10" / "beta=2" / "seed0.csv").exists()
    rows = read_csv(out / "T10" / "summary.csv")
    assert rows[0] == ["sweep_param", "value", "seed", "terminal_anccvc", "tc_satisfied", "bound_value"]
    assert [r[1] for r in rows[1:]] == ["0", "2"]
    traj = read_csv(out / "T10" / "beta=2" / "seed0.csv")
    assert traj[0] == ["t", "anccvc"] + [f"price_r{r}" for r in range(1, 6)] + [f"phi_r{r}" for r in range(1, 6)]
    assert len(traj) == 11
    assert float(traj[-1][1]) == pytest.approx(float(rows[2][3]), rel=0, abs=0)
    report = json.loads((out / "report.json").read_text())
    assert all("tc_satisfied" in c and "gamma" in c and "eta" in c for c in report["cells"])


def test_reruns_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["--sweep", "sigma=0,5", "--seeds", "3", "--horizon", "30,60", "--format", "both",
                     "--out", str(tmp_path / name)]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert len(files) == 2 * 2 * 3 * 1 + 2
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    for f in (tmp_path / "a").rglob("*.json"):
        if f.name != "report.json":
            rel = f.relative_to(tmp_path / "a")
            assert f.read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_parallel_matches_sequential(tmp_path):
    args = ["--sweep", "alpha=1,10", "--seeds", "2", "--horizon", "20"]
    assert main(args + ["--out", str(tmp_path / "seq")]) == 0
    assert main(args + ["--out", str(tmp_path / "par"), "--jobs", "2"]) == 0
    for f in (tmp_path / "seq").rglob("*.csv"):
        assert f.read_bytes() == (tmp_path / "par" / f.relative_to(tmp_path / "seq")).read_bytes()


def test_bound_written_only_when_hypotheses_hold(tmp_path):
    cfg = {"game": SMALL, "horizon": 100, "gamma_scale": 0.3, "alpha": 100, "beta": 2, "sigma": 0,
           "n_seeds": 2, "out": str(tmp_path / "r"), "sweep": {"param": "beta", "values": [1, 2]}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["--config", str(path)]) == 0
    rows = read_csv(tmp_path / "r" / "T100" / "summary.csv")[1:]
    by_value = {r[1]: r for r in rows}
    assert by_value["1"][4] == "true" and by_value["1"][5] == ""
    assert by_value["2"][4] == "true" and float(by_value["2"][5]) > 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert report["vi"]["residuals"]["stationarity"] <= 1e-8


def test_summarize(tmp_path):
    out = tmp_path / "r"
    assert main(["--sweep", "beta=0,2", "--seeds", "2", "--horizon", "20,40,80", "--out", str(out)]) == 0
    table = summarize(out)
    by = {(r["value"], r["horizon"]): r for r in table}
    rows = read_csv(out / "T40" / "summary.csv")[1:]
    vals = [float(r[3]) for r in rows if r[1] == "2"]
    assert by[("2", 40)]["mean_terminal_anccvc"] == pytest.approx((vals[0] + vals[1]) / 2, rel=1e-15)
    assert by[("2", 40)]["std_terminal_anccvc"] == pytest.approx(np.std(vals))
    means = [by[("0", T)]["mean_terminal_anccvc"] for T in (20, 40, 80)]
    assert by[("0", 20)]["decay_slope"] == decay_fit(means, [20, 40, 80])
    assert (out / "summary_table.csv").exists()


def test_summarize_single_run(tmp_path):
    out = tmp_path / "r"
    assert main(["--seeds", "1", "--horizon", "15", "--out", str(out)]) == 0
    (row,) = summarize(out)
    rows = read_csv(out / "T15" / "summary.csv")
    assert rows[1][0] == "none"
    assert row["mean_terminal_anccvc"] == float(rows[1][3]) and row["std_terminal_anccvc"] == 0.0


def test_summarize_errors(tmp_path, capsys):
    assert main(["summarize", str(tmp_path)]) != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"]
    (tmp_path / "T5").mkdir()
    (tmp_path / "T5" / "summary.csv").write_text("garbage\n1,2\n")
    assert main(["summarize", str(tmp_path)]) != 0


@pytest.mark.parametrize("argv", [
    ["--sweep", "foo=1,2"],
    ["--sweep", "alpha=1e6", "--horizon", "10"],
    ["--sweep", "beta=-1"],
    ["--sweep", "beta"],
    ["--horizon", "x"],
    ["--config", "/nonexistent/cfg.json"],
    ["--format", "xml"],
])
def test_bad_input_gives_json_error(argv, tmp_path, capsys):
    code = main(argv + ["--out", str(tmp_path / "o")])
    assert code != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert set(err) == {"error", "message", "details"}


def test_config_round_trip():
    cfg = ExperimentConfig.from_dict({"horizon": [100, 200], "sweep": {"param": "gamma_scale", "values": [0.05, 0.5]},
                                      "n_seeds": 3})
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    with pytest.raises(DomainError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_default_benchmark_setting_runs(tmp_path):
    cfg = ExperimentConfig(horizons=[500], n_seeds=1, out=str(tmp_path / "p"))
    report = run_experiment(cfg)
    assert report["cells"][0]["tc_satisfied"] is False
    rows = read_csv(tmp_path / "p" / "T500" / "summary.csv")
    assert np.isfinite(float(rows[1][3]))


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "congestion_pricing", "--horizon", "5", "--out",
                          str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["cells"] == 1
