"""Config validation, manifests, CSV layout, and the CLI entry point."""

import json

import numpy as np
import pytest

from logsob import cli
from logsob.errors import ConfigError
from logsob.runio import (
    EXPERIMENTS,
    RunConfig,
    RunManifest,
    format_float,
    load_config,
    make_run_dir,
    write_csv,
)


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig(experiment="classical-growth")
        assert cfg.l == 2
        assert cfg.tol == 1e-10
        assert cfg.kappa == 1.0
        assert cfg.hbar_list is None
        assert cfg.seedless is True

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="experiment"):
            RunConfig(experiment="warmup")

    @pytest.mark.parametrize("field,value", [
        ("l", 1),
        ("l", 2.0),
        ("l", True),
        ("hbar_list", ()),
        ("hbar_list", (0.0,)),
        ("hbar_list", (1.5,)),
        ("r_list", (0.5,)),
        ("r_list", (-1,)),
        ("r_list", (True,)),
        ("t_max", 0.0),
        ("t_max", float("inf")),
        ("tol", 1e-5),
        ("tol", 1e-14),
        ("kappa", 0.0),
        ("kappa", 1.5),
        ("seedless", False),
    ])
    def test_rejects_bad_field(self, field, value):
        kw = {"experiment": "classical-growth", field: value}
        with pytest.raises(ConfigError, match=field):
            RunConfig(**kw)

    def test_normalizes_sequences(self):
        cfg = RunConfig(experiment="flow-norm", hbar_list=[1e-2, 1e-3],
                        r_list=[0, 2.0])
        assert cfg.hbar_list == (1e-2, 1e-3)
        assert cfg.r_list == (0, 2)
        assert all(isinstance(r, int) for r in cfg.r_list)

    def test_resolved_fills_only_none(self):
        cfg = RunConfig(experiment="sobolev-growth", t_max=7.0)
        out = cfg.resolved(t_max=99.0, hbar_list=(1e-3,))
        assert out.t_max == 7.0
        assert out.hbar_list == (1e-3,)

    def test_round_trip_dict(self):
        cfg = RunConfig(experiment="semiclassical-error",
                        hbar_list=(1e-2,), r_list=(0, 1), t_max=5.0)
        again = RunConfig(**cfg.to_dict())
        assert again == cfg


class TestLoadConfig:
    def test_from_file(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"l": 3, "tol": 1e-9}))
        cfg = load_config(p, experiment="classical-growth")
        assert cfg.l == 3
        assert cfg.tol == 1e-9

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"l": 2, "hbar": 1e-3}))
        with pytest.raises(ConfigError, match="hbar"):
            load_config(p, experiment="classical-growth")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json", experiment="calibrate")

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{broken")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(p, experiment="calibrate")

    def test_overrides_beat_file(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"t_max": 10.0}))
        cfg = load_config(p, experiment="flow-norm",
                          overrides={"t_max": 20.0, "hbar_list": None})
        assert cfg.t_max == 20.0
        assert cfg.hbar_list is None

    def test_experiment_required(self):
        with pytest.raises(ConfigError, match="experiment"):
            load_config({}, experiment=None)


class TestManifest:
    def test_checks_and_verdict(self):
        man = RunManifest(config={"experiment": "calibrate"}, version="0.1.0")
        man.add_check("a", True, "fine")
        assert man.all_passed()
        man.add_check("b", False, "broke")
        assert not man.all_passed()

    def test_json_deterministic(self):
        kw = dict(config={"experiment": "calibrate", "l": 2},
                  version="0.1.0",
                  constants={"C1": 0.2018731646275847},
                  notes=["n1"])
        man1 = RunManifest(**{k: (dict(v) if isinstance(v, dict) else v)
                              for k, v in kw.items()})
        man2 = RunManifest(**{k: (dict(v) if isinstance(v, dict) else v)
                              for k, v in kw.items()})
        man1.add_check("x", True, "d")
        man2.add_check("x", True, "d")
        assert man1.to_json() == man2.to_json()

    def test_write_atomic_and_timing_sidecar(self, tmp_path):
        man = RunManifest(config={}, version="0.1.0")
        man.write(tmp_path, wall_time_s=1.25)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["version"] == "0.1.0"
        assert "wall_time_s" not in json.dumps(doc)
        timing = json.loads((tmp_path / "timing.json").read_text())
        assert timing["wall_time_s"] == 1.25
        assert not (tmp_path / "manifest.json.tmp").exists()


class TestRunDir:
    def test_layout_and_collision(self, tmp_path):
        cfg = RunConfig(experiment="flow-norm",
                        output_dir=str(tmp_path / "runs"))
        d1 = make_run_dir(cfg)
        d2 = make_run_dir(cfg)
        assert d1 != d2
        for d in (d1, d2):
            assert d.parent.name == "flow-norm"
            assert (d / "checkpoints").is_dir()


class TestCsv:
    def test_round_trip_17_digits(self, tmp_path):
        rows = [
            {"t": 0.1 + 0.2, "E": 1.0 / 3.0, "n": 3},
            {"t": 1e-17, "E": 123456.789012345678, "n": 4},
        ]
        p = tmp_path / "out.csv"
        write_csv(p, ["t", "E", "n"], rows, int_cols={"n"})
        back = np.genfromtxt(p, delimiter=",", names=True)
        assert back["t"][0] == rows[0]["t"]
        assert back["E"][1] == rows[1]["E"]
        assert p.read_text().splitlines()[1].split(",")[2] == "3"

    def test_sequence_rows(self, tmp_path):
        p = tmp_path / "seq.csv"
        write_csv(p, ["a", "b"], [(1.5, 2.5), (3.5, 4.5)])
        assert p.read_text().splitlines()[2] == "3.5,4.5"

    def test_format_float_is_repr_exact(self):
        for x in (math_pi := 3.141592653589793, 1e-300, -0.0):
            assert float(format_float(x)) == x


class TestCli:
    def test_bad_config_exits_2(self, tmp_path, capsys):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"bogus": 1}))
        rc = cli.main(["classical-growth", "--config", str(p)])
        assert rc == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        rc = cli.main(["classical-growth", "--config",
                       str(tmp_path / "none.json")])
        assert rc == 2

    def test_unknown_experiment_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{}")
        with pytest.raises(SystemExit):
            cli.main(["mystery", "--config", str(p)])

    def test_quick_run_exit_zero(self, tmp_path, capsys):
        # smallest real run: classical growth over a short horizon
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"t_max": 200.0,
                                 "output_dir": str(tmp_path / "runs")}))
        rc = cli.main(["classical-growth", "--config", str(p)])
        out = capsys.readouterr().out
        assert rc == 0, out
        assert "[PASS]" in out
        assert "results:" in out
        run_dir = out.strip().splitlines()[-1].split("results: ")[1]
        doc = json.loads((tmp_path / "runs" / "classical-growth").joinpath(
            run_dir.split("/")[-1], "manifest.json").read_text())
        assert doc["checks"]
        assert (tmp_path / "runs" / "classical-growth").joinpath(
            run_dir.split("/")[-1], "results.csv").exists()
