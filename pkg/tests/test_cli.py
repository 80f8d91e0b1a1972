import csv
import json

import numpy as np
import pytest

from conftest import small_config_dict
from pvvolt import cli
from pvvolt.config import RunConfig, load_config
from pvvolt.dataset import load_day_matrix
from pvvolt.errors import ConfigError
from pvvolt.seeding import derive_seed
from pvvolt.voltage_model import VoltageModel


def test_bundled_config_loads():
    cfg = load_config(cli.bundled_config_path())
    assert isinstance(cfg, RunConfig)
    assert cfg.process.days == 160
    assert [c.pv_capacity_kw for c in cfg.feeder.consumers] == [1.9, 3.9, 7.3, 11.6, 9.2]
    assert cfg.regulated_consumer == "1.9kW"
    # Feeder order runs from the transformer outwards.
    assert cfg.ids == ["9.2kW", "11.6kW", "7.3kW", "3.9kW", "1.9kW"]


def test_derive_seed_is_stable():
    assert derive_seed(0, "feeder_sim") == 3450150151682829814
    assert derive_seed(0, "feeder_sim") != derive_seed(0, "qq/1.9kW")
    assert derive_seed(1, "feeder_sim") != derive_seed(0, "feeder_sim")


@pytest.mark.parametrize(
    "overrides, field",
    [
        ({"regulator__delta": 0}, "RegulatorConfig.delta"),
        ({"sparse_svd__alpha": -1.0}, "SparseSvdConfig.alpha"),
        ({"model__sample_count": 10}, "VoltageModel.sample_count"),
        ({"regulator__consumer": "nobody"}, "RegulatorConfig.consumer"),
        ({"analysis__window_end": 5000}, "Analysis.window_start/window_end"),
    ],
)
def test_invalid_values_exit_two(overrides, field, write_config, capsys):
    path = write_config(small_config_dict(**overrides))
    assert cli.main(["simulate", "--config", str(path)]) == 2
    assert field in capsys.readouterr().err


def test_unknown_keys_rejected(write_config):
    data = small_config_dict()
    data["regulator"]["gain"] = 1
    with pytest.raises(ConfigError, match=r"RegulatorConfig: unknown key\(s\) \['gain'\]"):
        load_config(write_config(data))
    data = small_config_dict()
    data["extra"] = {}
    with pytest.raises(ConfigError, match="RunConfig"):
        load_config(write_config(data))


def test_missing_and_malformed_config(tmp_path, write_config):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError, match="FeederTopology.consumers"):
        load_config(write_config({"feeder": {"consumers": []}}))


def test_override_precedence(write_config, monkeypatch, tmp_path):
    path = write_config(small_config_dict())
    monkeypatch.setenv("PVVOLT_SEED", "17")
    monkeypatch.setenv("PVVOLT_OUT", str(tmp_path / "env"))
    cfg = load_config(path)
    assert (cfg.seed, cfg.output_dir) == (17, str(tmp_path / "env"))
    cfg = load_config(path, seed=3, output_dir="x")
    assert (cfg.seed, cfg.output_dir) == (3, "x")
    monkeypatch.setenv("PVVOLT_SEED", "abc")
    with pytest.raises(ConfigError, match="PVVOLT_SEED"):
        load_config(path)


def test_missing_upstream_exits_three(write_config, tmp_path, capsys):
    path = write_config(small_config_dict())
    assert cli.main(["fit", "--config", str(path), "--out", str(tmp_path / "empty")]) == 3
    err = capsys.readouterr().err
    assert err.startswith("error [cli.") and "stack.json" in err


def test_numerical_failure_exits_four(write_config, tmp_path, capsys):
    # A 12 V base makes the line impedances huge in per unit; the evening load then collapses the feeder.
    data = small_config_dict(process__days=1)
    data["feeder"]["base_voltage_v"] = 12.0
    path = write_config(data)
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 4
    assert "NonPositiveSquaredVoltage" in capsys.readouterr().err


def test_pipeline_outputs(small_run):
    cfg, out, lines = small_run
    assert [line.split(":")[0] for line in lines] == list(cli.PIPELINE)
    ids = cfg.ids
    for cid in ids:
        p = load_day_matrix(out / f"power_{cid}.csv", 1440)
        assert p.shape == (24, 1440)
        VoltageModel.from_json(json.loads((out / f"model_{cid}.json").read_text()))
        qq = cli.read_table(out / f"qq_{cid}.csv")
        assert np.all(np.diff(qq["model"]) >= 0) and np.all(np.diff(qq["residual"]) >= 0)
        cli.read_table(out / f"qq_unclustered_{cid}.csv")

    clusters = json.loads((out / "clusters.json").read_text())
    meta = json.loads((out / "stack.json").read_text())
    rows = set().union(*map(set, clusters.values()))
    assert rows == set(range(24 * len(ids)))
    bases = np.loadtxt(out / "bases.csv", delimiter=",", ndmin=2)
    assert bases.shape == (meta["grouping_bases"] + meta["spare_basis"], 420)
    np.testing.assert_allclose(np.linalg.norm(bases, axis=1), 1.0)
    spectrum = cli.read_table(out / "spectrum.csv")["singular_value"]
    assert np.all(np.diff(spectrum) <= 1e-9 * spectrum[0])

    with open(out / "regulation.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["minute", "input_v", "conventional_ltc", "conventional_out", "stochastic_ltc", "stochastic_out"]
    reg = cli.read_table(out / "regulation.csv")
    np.testing.assert_allclose(reg["conventional_out"], reg["conventional_ltc"] * reg["input_v"], rtol=1e-15)
    summary = json.loads((out / "regulation_summary.json").read_text())
    assert summary["ltc_variation_conventional"] == pytest.approx(np.abs(np.diff(reg["conventional_ltc"])).sum())

    report = json.loads((out / "report.json").read_text())
    assert set(report["beta"]) == set(ids)
    for cid in ids:
        assert report["weight_sums"][cid] == pytest.approx(1.0, abs=1e-12)
    profiles = cli.read_table(out / "profiles.csv")
    assert profiles["minute"][0] == 600 and profiles["minute"].size == 420
    assert json.loads((out / "qq_summary.json").read_text()).keys() == set(ids)


def test_stage_rerun_is_byte_identical(small_run):
    cfg, out, _ = small_run
    before = {p.name: p.read_bytes() for p in out.iterdir()}
    for name in cli.PIPELINE[1:]:
        cli.COMMANDS[name](cfg)
    after = {p.name: p.read_bytes() for p in out.iterdir()}
    assert before == after


def test_main_prints_one_line(small_run, write_config, capsys):
    cfg, out, _ = small_run
    path = write_config(small_config_dict())
    assert cli.main(["report", "--config", str(path), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert printed.count("\n") == 1 and printed.startswith("report:")
