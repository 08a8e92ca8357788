"""CLI and report tests: determinism, schema validity, exit codes."""

import json

import jsonschema
import pytest

from flamelab import cli, harness
from flamelab.reports import ExperimentConfig
from flamelab.serialize import canonical_dumps

SCHEMA = json.load(open("docs/report_schema.json"))


def run_cli(args):
    return cli.main(args)


def small_cfg(**kw):
    base = dict(experiment="games", seed=4, trials=2000)
    base.update(kw)
    return ExperimentConfig(**base)


class TestSerialize:
    def test_sorted_keys_and_compact(self):
        assert canonical_dumps({"b": 1, "a": [1.5, None, True]}) == \
            '{"a":[1.5,null,true],"b":1}'

    def test_float_formatting(self):
        assert canonical_dumps(0.1 + 0.2) == "0.3"
        assert canonical_dumps(1.0) == "1.0"
        assert canonical_dumps(123456789012345.0) == "1.23456789012e+14"

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            canonical_dumps(float("nan"))

    def test_string_escapes(self):
        assert canonical_dumps({"a": 'x"\n'}) == '{"a":"x\\"\\n"}'


class TestConfig:
    def test_defaults_fill_in(self):
        cfg = ExperimentConfig(experiment="oss-correctness")
        assert cfg.params["n"] == 4 and cfg.params["j_max"] == 10
        assert cfg.trials == 10_000
        assert "sign_failure_bound" in cfg.thresholds

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(experiment="games", params={"n": 3, "r": 3})

    def test_threshold_override(self):
        cfg = ExperimentConfig(
            experiment="oss-correctness", thresholds={"sign_equivalence_tv": 0.5}
        )
        assert cfg.thresholds["sign_equivalence_tv"] == 0.5

    def test_params_flag_parsing(self):
        assert cli.parse_params("4,2,4,3,3,4,10") == {
            "n": 4, "r": 2, "k": 4, "att_width": 3, "sig_width": 3,
            "msg_width": 4, "j_max": 10,
        }
        assert cli.parse_params("6,2,6") == {"n": 6, "r": 2, "k": 6}
        with pytest.raises(ValueError):
            cli.parse_params("1,2,3,4,5,6,7,8")


class TestReports:
    def test_schema_valid(self):
        rep = harness.cmd_games(small_cfg())
        jsonschema.validate(json.loads(rep.to_json()), SCHEMA)

    def test_deterministic_across_runs(self):
        a = harness.cmd_games(small_cfg()).to_json()
        b = harness.cmd_games(small_cfg()).to_json()
        assert a == b

    def test_deterministic_with_threads(self):
        cfg1 = ExperimentConfig(experiment="oss-correctness", seed=2, trials=400,
                                threads=1)
        cfg4 = ExperimentConfig(experiment="oss-correctness", seed=2, trials=400,
                                threads=4)
        a = harness.cmd_oss_correctness(cfg1)
        b = harness.cmd_oss_correctness(cfg4)
        assert a.to_json().replace('"threads":1', '"threads":4') == b.to_json()

    def test_summary_lines_have_verdicts(self):
        rep = harness.cmd_games(small_cfg())
        lines = rep.summary_lines()
        assert all(l.startswith(("PASS", "FAIL")) for l in lines)
        assert lines[-1].endswith("games")


class TestCli:
    def test_games_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        code = run_cli(["games", "--seed", "4", "--trials", "2000",
                        "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, SCHEMA)
        assert doc["passed"] is True

    def test_cli_determinism_bytes(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run_cli(["games", "--seed", "7", "--trials", "1500", "--out", str(a)]) == 0
        assert run_cli(["games", "--seed", "7", "--trials", "1500", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_failing_threshold_sets_exit_code(self, tmp_path, capsys):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({
            "thresholds": {"sign_equivalence_tv": -1.0}, "trials": 200,
        }))
        code = run_cli(["oss-correctness", "--config", str(cfgfile),
                        "--seed", "1", "--out", str(tmp_path / "r.json")])
        assert code == 1

    def test_bad_config_exit_code(self, tmp_path):
        code = run_cli(["games", "--params", "3,9"])
        assert code == 2

    def test_config_file_with_flag_override(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({"seed": 5, "trials": 1000}))
        out = tmp_path / "r.json"
        code = run_cli(["games", "--config", str(cfgfile), "--trials", "1200",
                        "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["config"]["seed"] == 5
        assert doc["config"]["trials"] == 1200

    def test_instance_save_load_audit(self, tmp_path):
        inst_file = tmp_path / "inst.json"
        code = run_cli(["instance", "save", "--path", str(inst_file),
                        "--seed", "5", "--out", str(tmp_path / "r1.json")])
        assert code == 0
        code = run_cli(["instance", "audit", "--path", str(inst_file),
                        "--out", str(tmp_path / "r2.json")])
        assert code == 0
        doc = json.loads((tmp_path / "r2.json").read_text())
        assert doc["passed"] is True

    def test_instance_corrupt_file_errors(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        code = run_cli(["instance", "load", "--path", str(bad),
                        "--out", str(tmp_path / "r.json")])
        assert code == 2

    def test_stdout_report_when_no_out(self, capsys):
        code = run_cli(["games", "--seed", "4", "--trials", "1500"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        jsonschema.validate(doc, SCHEMA)


class TestInstanceAcquisition:
    def test_good_vk_seed_scan(self):
        cfg = ExperimentConfig(experiment="clone-fidelity", seed=0,
                               require_good_vk_instance=True)
        inst, meta = harness.acquire_instance(cfg)
        assert meta["all_vk_good"]
        assert len(inst.oss.good_vk_set()) == 4

    def test_instance_from_file(self, tmp_path):
        from flamelab.oracles import gen_keyfire_oracles, save_instance
        cfg0 = ExperimentConfig(experiment="games", seed=1)
        inst = gen_keyfire_oracles(cfg0.keyfire_params(), 9)
        path = tmp_path / "i.json"
        save_instance(inst, str(path))
        cfg = ExperimentConfig(experiment="games", instance_path=str(path))
        loaded, meta = harness.acquire_instance(cfg)
        assert meta["source"] == "file"
        assert loaded.seed == 9
