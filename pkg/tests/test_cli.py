"""End-to-end CLI coverage: config resolution plus every subcommand."""

import json
import math

import numpy as np
import pytest

from skypatrol.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from skypatrol.config import (ConfigError, build_world, load_config)
from skypatrol.dataset import LabeledDataset, tree_hash
from skypatrol.world import RoadGraph


# -- config resolution -------------------------------------------------------

class TestLoadConfig:
    def test_defaults_complete(self):
        cfg = load_config("generate")
        assert cfg["runs"] == 4
        assert cfg["world"]["kind"] == "hex"
        assert cfg["collect"]["nav_speed"] == 1.5

    def test_file_overrides_defaults(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"runs": 2, "collect": {"altitude": 80.0}}))
        cfg = load_config("generate", p)
        assert cfg["runs"] == 2
        assert cfg["collect"]["altitude"] == 80.0
        assert cfg["collect"]["dt"] == 0.02  # untouched sibling survives

    def test_flag_beats_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"seed": 11}))
        cfg = load_config("generate", p, [("seed", 99)])
        assert cfg["seed"] == 99

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"rnus": 2}))
        with pytest.raises(ConfigError, match="rnus"):
            load_config("generate", p)

    def test_unknown_nested_key_rejected(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"collect": {"altitud": 50}}))
        with pytest.raises(ConfigError, match="altitud"):
            load_config("generate", p)

    def test_world_params_subtree_is_free(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(
            {"world": {"kind": "arc", "params": {"radius": 120.0}}}))
        cfg = load_config("generate", p)
        assert cfg["world"]["params"] == {"radius": 120.0}

    def test_bad_enum_rejected(self):
        with pytest.raises(ConfigError, match="mode"):
            load_config("eval", None, [("mode", "fuzzy")])

    def test_bad_world_kind_rejected(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"world": {"kind": "moebius"}}))
        with pytest.raises(ConfigError, match="moebius"):
            load_config("generate", p)

    def test_dotted_override_path(self):
        cfg = load_config("train", None, [("train.epochs", 3)])
        assert cfg["train"]["epochs"] == 3

    def test_unknown_dotted_override_rejected(self):
        with pytest.raises(ConfigError):
            load_config("train", None, [("train.epcohs", 3)])

    def test_unparseable_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config("generate", p)


class TestBuildWorld:
    def test_each_kind_builds(self):
        for kind in ("straight", "arc", "hex", "fork"):
            w = build_world({"kind": kind, "params": {}})
            assert isinstance(w, RoadGraph)

    def test_params_forwarded(self):
        w = build_world({"kind": "straight",
                         "params": {"length": 500.0, "angle": 0.3}})
        pts = np.array(list(w.nodes.values()))
        assert np.linalg.norm(pts[-1] - pts[0]) == pytest.approx(500.0)

    def test_unknown_param_rejected(self):
        with pytest.raises(ConfigError, match="curvature"):
            build_world({"kind": "straight", "params": {"curvature": 1.0}})

    def test_fork_turns_list_accepted(self):
        w = build_world({"kind": "fork", "params": {"turns": ["L", "R"]}})
        assert len(w.junction_nodes) == 2


# -- subcommand plumbing -----------------------------------------------------

TINY_GEN = {
    "runs": 2,
    "world": {"kind": "straight", "params": {"length": 420.0}},
    "collect": {"max_frames": 12, "route_min_length": 300.0},
}

TINY_NET = {"pool": 20, "stem_channels": 2, "block_channels": 3,
            "dir_hidden": [8, 6], "trans_hidden": [6]}


def _write_cfg(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """generate -> label -> train once; several tests share the artifacts."""

    root = tmp_path_factory.mktemp("cli")
    gen_cfg = _write_cfg(root, "gen.json", TINY_GEN)
    runs_dir = str(root / "runs")
    assert main(["generate", "--config", gen_cfg, "--seed", "5",
                 "--out", runs_dir]) == EXIT_OK

    ds_dir = str(root / "ds")
    assert main(["label", "--runs", runs_dir, "--out", ds_dir]) == EXIT_OK

    train_cfg = _write_cfg(root, "train.json", {
        "net": TINY_NET,
        "train": {"epochs": 2, "batch": 16, "val_frac": 0.0}})
    model_dir = str(root / "model")
    assert main(["train", "--config", train_cfg, "--dataset", ds_dir,
                 "--out", model_dir]) == EXIT_OK
    return root, runs_dir, ds_dir, model_dir


class TestGenerate:
    def test_layout_and_determinism(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, "g.json", TINY_GEN)
        assert main(["generate", "--config", cfg, "--seed", "5",
                     "--out", str(tmp_path / "a")]) == EXIT_OK
        out_a = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert main(["generate", "--config", cfg, "--seed", "5",
                     "--out", str(tmp_path / "b")]) == EXIT_OK
        out_b = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert out_a["content_hash"] == out_b["content_hash"]
        assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")
        assert (tmp_path / "a" / "world.json").exists()
        assert (tmp_path / "a" / "run_000" / "meta.jsonl").exists()

    def test_seed_changes_content(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, "g.json", TINY_GEN)
        assert main(["generate", "--config", cfg, "--seed", "5",
                     "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(["generate", "--config", cfg, "--seed", "6",
                     "--out", str(tmp_path / "b")]) == EXIT_OK
        assert tree_hash(tmp_path / "a") != tree_hash(tmp_path / "b")

    def test_bad_config_is_usage_error(self, tmp_path):
        cfg = _write_cfg(tmp_path, "g.json", {"wrold": {}})
        assert main(["generate", "--config", cfg,
                     "--out", str(tmp_path / "x")]) == EXIT_USAGE


class TestLabel:
    def test_dataset_loads_and_has_truth(self, pipeline):
        _, __, ds_dir, ___ = pipeline
        ds = LabeledDataset.load(ds_dir)
        assert len(ds.samples) >= 10
        s = ds.samples[0]
        assert -1.0 < s.d < 1.0 and -1.0 < s.t < 1.0
        assert s.gt_d is not None
        assert "run" in s.diag

    def test_missing_runs_dir_is_runtime_error(self, tmp_path):
        assert main(["label", "--runs", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "ds")]) == EXIT_RUNTIME

    def test_no_runs_flag_is_usage_error(self, tmp_path):
        assert main(["label", "--out", str(tmp_path / "ds")]) == EXIT_USAGE


class TestTrain:
    def test_artifacts(self, pipeline):
        root, _, __, model_dir = pipeline
        from skypatrol.net import load_weights
        w = load_weights(root / "model" / "weights.json")
        assert w.config.pool == 20
        log = (root / "model" / "training_log.csv").read_text()
        assert len(log.strip().splitlines()) == 3  # header + 2 epochs

    def test_missing_dataset_is_usage_error(self, tmp_path):
        assert main(["train", "--out", str(tmp_path / "m")]) == EXIT_USAGE


class TestEval:
    def test_self_eval_is_perfect(self, pipeline, capsys, tmp_path):
        _, __, ds_dir, ___ = pipeline
        out = str(tmp_path / "rep")
        assert main(["eval", "--dataset", ds_dir, "--self",
                     "--out", out]) == EXIT_OK
        result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert result["acc_d"] == 1.0
        report = json.loads((tmp_path / "rep" / "report.json").read_text())
        assert report["report"]["acc_t"] == 1.0
        assert report["baseline"]["acc_d"] < 0.6
        assert (tmp_path / "rep" / "predictions.csv").exists()

    def test_trained_weights_round_trip(self, pipeline, capsys, tmp_path):
        _, __, ds_dir, model_dir = pipeline
        out = str(tmp_path / "rep")
        assert main(["eval", "--dataset", ds_dir,
                     "--weights", str(model_dir) + "/weights.json",
                     "--mode", "argmax", "--out", out]) == EXIT_OK
        result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert 0.0 <= result["acc_d"] <= 1.0

    def test_missing_weights_is_usage_error(self, pipeline, tmp_path):
        _, __, ds_dir, ___ = pipeline
        assert main(["eval", "--dataset", ds_dir,
                     "--out", str(tmp_path / "r")]) == EXIT_USAGE


class TestPatrol:
    def test_schedule_run_writes_trace(self, pipeline, capsys, tmp_path):
        root, _, __, model_dir = pipeline
        sched = tmp_path / "sched.jsonl"
        sched.write_text(json.dumps(
            {"type": "instruct", "tick": 0, "x": 110.0, "y": 0.0,
             "du": 0.55, "radius": 55.0, "id": 1}) + "\n")
        cfg = _write_cfg(tmp_path, "p.json", {
            "patrol": {"max_steps": 8}, "schedule": str(sched)})
        out = str(tmp_path / "run")
        assert main(["patrol", "--config", cfg,
                     "--weights", str(model_dir) + "/weights.json",
                     "--out", out]) == EXIT_OK
        result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert result["steps"] <= 8
        rows = [json.loads(x) for x in
                (tmp_path / "run" / "trace.jsonl").read_text().splitlines()]
        assert [r["tick"] for r in rows] == sorted(r["tick"] for r in rows)
        score = json.loads((tmp_path / "run" / "score.json").read_text())
        assert set(score) >= {"direction_score", "translation_score", "lost"}

    def test_malformed_schedule_is_runtime_error(self, pipeline, tmp_path):
        _, __, ___, model_dir = pipeline
        sched = tmp_path / "sched.jsonl"
        sched.write_text(json.dumps({"type": "teleport", "x": 0, "y": 0,
                                     "du": 0.1}) + "\n")
        cfg = _write_cfg(tmp_path, "p.json", {
            "patrol": {"max_steps": 4}, "schedule": str(sched)})
        assert main(["patrol", "--config", cfg,
                     "--weights", str(model_dir) + "/weights.json",
                     "--out", str(tmp_path / "run")]) == EXIT_RUNTIME


class TestArgparse:
    def test_no_subcommand_is_usage_error(self):
        assert main([]) == EXIT_USAGE

    def test_unknown_flag_is_usage_error(self):
        assert main(["generate", "--frobnicate", "--out", "/tmp/x"]) == EXIT_USAGE

    def test_help_exits_clean(self):
        assert main(["--help"]) == 0
