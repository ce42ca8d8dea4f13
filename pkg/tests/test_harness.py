import dataclasses
import json

import numpy as np
import pytest

from noisecorr.harness import (
    DatasetConfig,
    ExperimentConfig,
    StageError,
    config_from_dict,
    config_to_dict,
    load_config,
    run_experiment,
    sweep,
    write_sweep_csv,
)
from noisecorr.noise import NoiseMatrix, NoiseSpec


def synthetic_doc(**overrides):
    doc = {
        "seed": 0,
        "out_dir": "out",
        "dataset": {
            "kind": "synthetic", "classes": 3, "per_class": 400,
            "separation": 4.0, "test_per_class": 200,
        },
        "noise": {"kind": "symmetric", "level": 0.3},
        "loss": "plain",
        "network": {"hidden": [16]},
        "train": {"epochs": 6},
    }
    doc.update(overrides)
    return doc


class TestConfig:
    def test_round_trip(self):
        cfg = config_from_dict(synthetic_doc(loss="forward", t_source="ground_truth"))
        again = config_from_dict(config_to_dict(cfg))
        assert again == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            config_from_dict(synthetic_doc(typo=1))

    def test_t_source_aliases(self):
        cfg = config_from_dict(synthetic_doc(t_source="truth"))
        assert cfg.t_source == "ground_truth"
        cfg = config_from_dict(synthetic_doc(t_source="estimate"))
        assert cfg.t_source == "estimated"

    def test_missing_t_file_rejected(self):
        with pytest.raises(ValueError, match="t_file"):
            config_from_dict(synthetic_doc(t_source="file"))

    def test_missing_idx_paths_rejected(self):
        with pytest.raises(ValueError, match="requires train_images"):
            DatasetConfig(kind="idx")

    def test_seed_propagates_to_train_config(self):
        cfg = config_from_dict(synthetic_doc(seed=99))
        assert cfg.train.seed == 99

    def test_load_config_with_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(synthetic_doc()))
        cfg = load_config(path, {"seed": 5, "noise.level": 0.6, "loss": "forward"})
        assert cfg.seed == 5
        assert cfg.noise.level == 0.6
        assert cfg.loss == "forward"

    def test_default_config_is_valid(self):
        cfg = config_from_dict({})
        assert cfg.dataset.kind == "synthetic"


class TestRun:
    def test_clean_separable_reaches_high_accuracy(self, tmp_path):
        doc = synthetic_doc(out_dir=str(tmp_path / "o"))
        doc["noise"] = {"kind": "identity"}
        doc["dataset"]["separation"] = 6.0
        report = run_experiment(config_from_dict(doc))
        assert report.test_accuracy >= 0.99

    def test_forward_with_identity_noise_matches_plain(self, tmp_path):
        base = synthetic_doc(out_dir=str(tmp_path / "a"))
        base["noise"] = {"kind": "identity"}
        plain = run_experiment(config_from_dict(base), write_outputs=False)
        fwd_doc = synthetic_doc(loss="forward", t_source="ground_truth",
                                out_dir=str(tmp_path / "b"))
        fwd_doc["noise"] = {"kind": "identity"}
        fwd = run_experiment(config_from_dict(fwd_doc), write_outputs=False)
        assert fwd.test_accuracy == plain.test_accuracy
        assert fwd.histories["final"] == plain.histories["final"]

    def test_test_labels_never_corrupted(self, tmp_path):
        doc = synthetic_doc(out_dir=str(tmp_path / "o"), loss="forward",
                            t_source="ground_truth")
        doc["noise"]["level"] = 0.5
        report = run_experiment(config_from_dict(doc), write_outputs=False)
        assert len(report.test_label_checksum) == 64

    def test_estimated_pipeline_records_stage1_and_error(self, tmp_path):
        doc = synthetic_doc(loss="forward", t_source="estimated",
                            out_dir=str(tmp_path / "o"))
        doc["dataset"]["separation"] = 6.0
        report = run_experiment(config_from_dict(doc), write_outputs=False)
        assert "stage1" in report.histories and "final" in report.histories
        assert report.t_error_max is not None
        assert report.t_error_max < 0.3

    def test_t_from_file(self, tmp_path):
        t_path = tmp_path / "t.csv"
        NoiseMatrix(np.array([[0.7, 0.15, 0.15], [0.15, 0.7, 0.15], [0.15, 0.15, 0.7]])).to_csv(t_path)
        doc = synthetic_doc(loss="backward", t_source="file", t_file=str(t_path),
                            out_dir=str(tmp_path / "o"))
        report = run_experiment(config_from_dict(doc), write_outputs=False)
        np.testing.assert_allclose(report.t_used.matrix[0, 0], 0.7)

    def test_singular_backward_suggests_identity_mix(self, tmp_path):
        doc = synthetic_doc(loss="backward", t_source="ground_truth",
                            out_dir=str(tmp_path / "o"))
        doc["dataset"]["classes"] = 2
        doc["noise"] = {"kind": "symmetric", "level": 0.5}
        with pytest.raises(StageError, match="identity_mix") as exc:
            run_experiment(config_from_dict(doc), write_outputs=False)
        assert exc.value.stage == "train"
        # the suggested flag rescues the run
        doc["identity_mix"] = 0.2
        run_experiment(config_from_dict(doc), write_outputs=False)

    def test_warm_start_runs(self, tmp_path):
        doc = synthetic_doc(loss="forward", t_source="estimated", warm_start=True,
                            out_dir=str(tmp_path / "o"))
        report = run_experiment(config_from_dict(doc), write_outputs=False)
        assert report.test_accuracy > 0.5

    def test_report_files_deterministic(self, tmp_path):
        doc = synthetic_doc(loss="forward", t_source="ground_truth",
                            out_dir=str(tmp_path / "same"))
        doc["network"]["dropout"] = 0.3
        cfg = config_from_dict(doc)
        run_experiment(cfg)
        out = tmp_path / "same"
        first = {f.name: f.read_bytes() for f in out.iterdir()}
        run_experiment(cfg)
        for f in sorted(out.iterdir()):
            if f.name == "timings.json":
                continue
            assert first[f.name] == f.read_bytes(), f.name

    def test_report_json_structure(self, tmp_path):
        doc = synthetic_doc(loss="forward", t_source="estimated",
                            out_dir=str(tmp_path / "o"))
        run_experiment(config_from_dict(doc))
        doc_json = json.loads((tmp_path / "o" / "report.json").read_text())
        assert set(doc_json) == {
            "config", "histories", "test_accuracy", "test_label_checksum",
            "t_ground_truth", "t_used", "t_estimated", "t_error",
        }
        assert doc_json["t_estimated"]["anchors"]
        assert 0.0 <= doc_json["test_accuracy"] <= 1.0
        timings = json.loads((tmp_path / "o" / "timings.json").read_text())
        assert "train" in timings["wall_clock"]

    def test_history_csv_layout(self, tmp_path):
        doc = synthetic_doc(out_dir=str(tmp_path / "o"))
        run_experiment(config_from_dict(doc))
        lines = (tmp_path / "o" / "history.csv").read_text().splitlines()
        assert lines[0] == "stage,epoch,train_loss,val_loss,val_accuracy"
        assert len(lines) == 1 + 6


class TestSweep:
    def test_single_cell_matches_run(self, tmp_path):
        doc = synthetic_doc(loss="forward", t_source="ground_truth")
        cfg = config_from_dict(doc)
        rows = sweep(cfg, [0.3], ["forward"], [0])
        single = run_experiment(
            dataclasses.replace(cfg, noise=dataclasses.replace(cfg.noise, level=0.3),
                                loss="forward"),
            write_outputs=False,
        )
        assert len(rows) == 1
        assert rows[0].acc_mean == single.test_accuracy
        assert rows[0].acc_std == 0.0

    def test_std_over_exactly_five_seeds(self):
        doc = synthetic_doc(loss="forward", t_source="ground_truth")
        doc["dataset"]["per_class"] = 150
        doc["train"]["epochs"] = 3
        cfg = config_from_dict(doc)
        rows = sweep(cfg, [0.2], ["plain"], [0, 1, 2, 3, 4])
        assert rows[0].seeds == 5
        accs = [
            run_experiment(dataclasses.replace(
                cfg, noise=dataclasses.replace(cfg.noise, level=0.2), loss="plain",
                seed=s, train=dataclasses.replace(cfg.train, seed=s),
            ), write_outputs=False).test_accuracy
            for s in range(5)
        ]
        assert rows[0].acc_mean == pytest.approx(np.mean(accs))
        assert rows[0].acc_std == pytest.approx(np.std(accs))

    def test_cell_failure_recorded_and_sweep_continues(self, tmp_path):
        doc = synthetic_doc(loss="backward", t_source="ground_truth")
        doc["dataset"]["classes"] = 2
        doc["dataset"]["per_class"] = 150
        doc["train"]["epochs"] = 2
        cfg = config_from_dict(doc)
        # symmetric N=0.5 on 2 classes is singular: backward cell fails
        rows = sweep(cfg, [0.2, 0.5], ["backward"], [0], out_dir=tmp_path)
        assert rows[0].note == "" and rows[0].acc_mean is not None
        assert "singular" in rows[1].note and rows[1].acc_mean is None
        csv_text = (tmp_path / "sweep.csv").read_text()
        assert csv_text.splitlines()[0] == (
            "dataset,noise_kind,N,loss_mode,T_source,seeds,acc_mean,acc_std,note"
        )

    def test_empty_grid_rejected(self):
        cfg = config_from_dict(synthetic_doc())
        with pytest.raises(ValueError, match="nonempty"):
            sweep(cfg, [], ["plain"], [0])

    def test_outputs_written(self, tmp_path):
        doc = synthetic_doc(loss="forward", t_source="ground_truth")
        doc["dataset"]["per_class"] = 150
        doc["train"]["epochs"] = 2
        cfg = config_from_dict(doc)
        sweep(cfg, [0.2, 0.4], ["plain", "forward"], [0], out_dir=tmp_path)
        assert (tmp_path / "sweep.csv").exists()
        assert (tmp_path / "sweep.png").exists()

    def test_forward_beats_plain_at_high_pair_flip_noise(self):
        doc = synthetic_doc(loss="forward", t_source="ground_truth")
        doc["dataset"].update({"separation": 3.0, "per_class": 600})
        doc["noise"] = {"kind": "pair_flip", "level": 0.6,
                        "pairs": [[0, 1], [1, 2], [2, 0]]}
        doc["train"]["epochs"] = 12
        cfg = config_from_dict(doc)
        rows = sweep(cfg, [0.6], ["plain", "forward"], [0, 1, 2])
        by_mode = {r.loss_mode: r for r in rows}
        assert by_mode["forward"].acc_mean > by_mode["plain"].acc_mean


class TestSweepCsv:
    def test_formatting(self, tmp_path):
        from noisecorr.harness import SweepRow

        rows = [
            SweepRow("synthetic", "symmetric", 0.25, "plain", "-", 3, 0.5, 0.125),
            SweepRow("synthetic", "symmetric", 0.5, "backward", "ground_truth",
                     3, None, None, note="seed 0: [train] boom, with commas"),
        ]
        path = tmp_path / "sweep.csv"
        write_sweep_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[1] == "synthetic,symmetric,0.25,plain,-,3,0.5,0.125,"
        assert lines[2].endswith("3,,,seed 0: [train] boom; with commas")
