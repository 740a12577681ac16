import json

import pytest
import torch

from anomtrainer import TrainerConfigError, TrainerIOError, load_checkpoint, train
from deskvol import tiny_config


class TestSummary:
    def test_summary_written_and_returned(self, tiny_run):
        on_disk = json.loads((tiny_run.out / "summary.json").read_text())
        assert on_disk == tiny_run.summary
        assert on_disk["parameter_count"] > 0
        assert on_disk["config"]["steps"] == tiny_run.config.steps
        assert len(on_disk["folds"]) == 1

    def test_checkpoint_contents(self, tiny_run):
        ckpt = load_checkpoint(tiny_run.checkpoint)
        assert ckpt["step"] == tiny_run.config.steps
        assert ckpt["fold"] == 0
        assert len(ckpt["history"]) == tiny_run.config.steps
        assert ckpt["config"] == tiny_run.config.to_dict()

    def test_fold_result_fields(self, tiny_run):
        fold = tiny_run.summary["folds"][0]
        assert fold["train_entries"] == 9
        assert fold["step"] == tiny_run.config.steps
        assert fold["first_loss"] > 0.0 and fold["final_loss"] > 0.0


class TestFolds:
    def test_two_folds_two_checkpoints(self, tiny_dataset, tmp_path):
        config = tiny_config(steps=6, folds=2)
        summary = train(config, tiny_dataset, tmp_path)
        assert (tmp_path / "ckpt_fold0.pt").exists()
        assert (tmp_path / "ckpt_fold1.pt").exists()
        # 9 entries: fold 0 trains on odd indices, fold 1 on even ones
        assert [f["train_entries"] for f in summary["folds"]] == [4, 5]


class TestResume:
    def test_resume_matches_straight_run(self, tiny_dataset, tmp_path):
        config = tiny_config(steps=24)
        straight = train(config, tiny_dataset, tmp_path / "a")
        train(config, tiny_dataset, tmp_path / "b", stop_after=10)
        paused = load_checkpoint(tmp_path / "b" / "ckpt_fold0.pt")
        assert paused["step"] == 10
        assert len(paused["history"]) == 10
        resumed = train(config, tiny_dataset, tmp_path / "b",
                        resume=tmp_path / "b" / "ckpt_fold0.pt")
        ckpt_a = load_checkpoint(tmp_path / "a" / "ckpt_fold0.pt")
        ckpt_b = load_checkpoint(tmp_path / "b" / "ckpt_fold0.pt")
        assert ckpt_b["step"] == 24
        assert ckpt_a["history"][:10] == paused["history"]
        assert ckpt_a["history"] == ckpt_b["history"]
        for key, val in ckpt_a["model_state"].items():
            assert torch.equal(val, ckpt_b["model_state"][key]), key
        assert resumed["folds"][0]["final_loss"] == pytest.approx(
            straight["folds"][0]["final_loss"])

    def test_identical_runs_agree(self, tiny_dataset, tmp_path):
        config = tiny_config(steps=30)
        one = train(config, tiny_dataset, tmp_path / "one")
        two = train(config, tiny_dataset, tmp_path / "two")
        a, b = one["folds"][0]["final_loss"], two["folds"][0]["final_loss"]
        assert abs(a - b) <= 0.05 * max(a, b)

    def test_config_mismatch_rejected(self, tiny_dataset, tmp_path):
        train(tiny_config(steps=4), tiny_dataset, tmp_path)
        with pytest.raises(TrainerConfigError, match="match"):
            train(tiny_config(steps=4, seed=99), tiny_dataset, tmp_path,
                  resume=tmp_path / "ckpt_fold0.pt")

    def test_stop_before_saved_step_rejected(self, tiny_dataset, tmp_path):
        config = tiny_config(steps=12)
        train(config, tiny_dataset, tmp_path, stop_after=8)
        with pytest.raises(TrainerConfigError, match="beyond"):
            train(config, tiny_dataset, tmp_path,
                  resume=tmp_path / "ckpt_fold0.pt", stop_after=5)


class TestCheckpointIO:
    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(TrainerIOError, match="missing"):
            load_checkpoint(tmp_path / "nope.pt")

    def test_malformed_checkpoint(self, tmp_path):
        torch.save({"step": 3}, tmp_path / "bad.pt")
        with pytest.raises(TrainerIOError, match="required fields"):
            load_checkpoint(tmp_path / "bad.pt")
