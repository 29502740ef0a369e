import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from schoolsweep.cli import EXIT_CONFIG, EXIT_DATA, main
from schoolsweep.synthetic import make_fixture_country


def write_config(fixture_dir: Path, output_dir: Path, **overrides) -> Path:
    config = {
        "country": "FIX",
        "seed": 5,
        "output_dir": str(output_dir),
        "inputs": {
            "points": [
                {"path": "gov.geojson", "source": "government"},
                {"path": "osm.geojson", "source": "osm"},
                {"path": "overture.csv", "source": "overture"},
            ],
            "government_raw": "gov.geojson",
            "settlement_rasters": ["settlement_a.asc", "settlement_b.asc"],
            "smod": "smod.asc",
            "boundary": "boundary.geojson",
            "image_store": {"type": "synthetic", "truth": "truth.json"},
        },
        "tile": {"size_m": 300.0, "px": 64, "overlap": 0.5},
        "train": {"max_epochs": 4, "channels": [4, 8, 12], "final_channels": 12,
                  "initial_lr": 0.003, "free_rotation_prob": 0.0},
        "road": {"max_images": 4, "methods": ["gradcam", "eigencam"]},
        "sweep": {"workers": 2},
        "match": {"tau": 0.3, "d_m": 250.0},
    }
    config.update(overrides)
    path = fixture_dir / "config.json"
    path.write_text(json.dumps(config, indent=2))
    return path


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("fixture")
    make_fixture_country(directory, seed=7)
    return directory


@pytest.fixture(scope="module")
def pipeline(fixture_dir):
    """Full chain run once; tests inspect the outputs."""
    output_dir = fixture_dir / "out"
    config = write_config(fixture_dir, output_dir)
    assert main(["all", "--config", str(config)]) == 0
    return fixture_dir, output_dir, config


class TestPipelineChain:
    def test_ingest_audit(self, pipeline):
        _, out, _ = pipeline
        audit = json.loads((out / "audit.json").read_text())
        stages = audit["stages"]
        assert stages["loaded"] == 19  # 14 gov + 4 osm + 1 overture
        # the malformed overture row lands in rejects, not the counts
        reject_reasons = [r["reason"] for rs in audit["rejects"].values() for r in rs]
        assert "lat out of range" in reject_reasons
        # kindergarten + university excluded
        assert stages["after_keyword_filter"] == stages["loaded"] - 2
        # two osm duplicates collapse into their government representatives
        assert stages["after_dedup"] == stages["after_keyword_filter"] - 2
        # the lake phantom is dropped for lack of settlement
        drops = {d["id"]: d["reason"] for d in audit["settlement_drops"]}
        assert drops == {"government:G90": "no settlement within buffer"}
        assert stages["negatives_sampled"] == 2 * stages["after_settlement_filter"]

    def test_dataset_and_gov_clean(self, pipeline):
        _, out, _ = pipeline
        dataset = json.loads((out / "dataset.geojson").read_text())
        schools = [f for f in dataset["features"] if f["properties"]["class_label"] == "school"]
        negatives = [f for f in dataset["features"] if f["properties"]["class_label"] == "non_school"]
        assert len(negatives) == 2 * len(schools)
        gov_clean = json.loads((out / "gov_clean.geojson").read_text())
        gov_ids = {f["properties"]["id"] for f in gov_clean["features"]}
        assert all(i.startswith("government:G") for i in gov_ids)
        assert "government:G90" not in gov_ids  # lake phantom cleaned out
        assert "government:G91" not in gov_ids  # kindergarten excluded

    def test_split_outputs(self, pipeline):
        _, out, _ = pipeline
        splits = (out / "splits.csv").read_text().splitlines()
        assert splits[0] == "id,split"
        strata = json.loads((out / "strata.json").read_text())
        assert set(strata) == {"school", "non_school"}
        dataset = json.loads((out / "dataset_strata.geojson").read_text())
        assert all(f["properties"]["stratum"] in ("urban", "rural") for f in dataset["features"])

    def test_model_and_scores(self, pipeline):
        _, out, _ = pipeline
        assert (out / "model.npz").exists()
        history = json.loads((out / "history.json").read_text())
        assert history["epochs"] >= 1
        scores = (out / "scores_test.csv").read_text().splitlines()
        assert scores[0] == "id,score,label,stratum"
        assert len(scores) > 1

    def test_bundle_contract(self, pipeline):
        _, out, _ = pipeline
        bundle_dirs = sorted((out / "bundles_test").iterdir())
        assert bundle_dirs
        expected = {"logits.gten", "softmax.gten", "activations.gten", "gradients.gten", "meta.json"}
        for d in bundle_dirs:
            assert {p.name for p in d.iterdir()} == expected
        meta = json.loads((bundle_dirs[0] / "meta.json").read_text())
        assert meta["model_id"] == "toy"
        assert meta["tile"]["px"] == 64

    def test_metrics_and_threshold(self, pipeline):
        _, out, _ = pipeline
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.0 <= metrics["test"]["auprc"] <= 1.0
        assert set(metrics["test"]["by_stratum"]) <= {"urban", "rural"}
        assert "tau_star" in metrics["val"]

    def test_road_report(self, pipeline):
        _, out, _ = pipeline
        report = json.loads((out / "road_report.json").read_text())
        assert set(report["method_means"]) == {"gradcam", "eigencam"}
        assert (out / "road_table.txt").read_text().startswith("method")

    def test_tiles_manifest(self, pipeline):
        _, out, _ = pipeline
        tiles = json.loads((out / "tiles.json").read_text())
        assert tiles["total_tiles"] >= tiles["kept_tiles"] > 0
        assert tiles["stride_m"] == 150.0

    def test_sweep_and_aggregate_chain(self, pipeline):
        _, out, _ = pipeline
        raw = json.loads((out / "predictions_raw.geojson").read_text())
        merged = json.loads((out / "predictions.geojson").read_text())
        assert len(merged["features"]) <= len(raw["features"])
        manifest = json.loads((out / "sweep_manifest.json").read_text())
        assert manifest["tiles_scored"] == manifest["tiles_kept"]
        assert manifest["cam_method"] == "gradcam"
        for f in merged["features"]:
            props = f["properties"]
            assert props["probability"] > manifest["tau_star"]

    def test_match_venn_identities(self, pipeline):
        _, out, _ = pipeline
        result = json.loads((out / "match.json").read_text())
        assert result["matched"] + result["unmatched_government"] == result["government_total"]
        assert result["matched"] + result["unmatched_predictions"] == result["predictions_total"]

    def test_rerun_skips_all_stages(self, pipeline, capfd):
        fixture, out, config = pipeline
        capfd.readouterr()
        assert main(["all", "--config", str(config)]) == 0
        err = capfd.readouterr().err
        events = [json.loads(line) for line in err.splitlines() if line.strip()]
        assert all(e["event"] == "stage_up_to_date" for e in events if e["event"].startswith("stage"))

    def test_rerun_is_byte_identical(self, pipeline, fixture_dir, tmp_path_factory):
        _, out, _ = pipeline
        clone_out = tmp_path_factory.mktemp("clone-out")
        clone_config = fixture_dir / "config_clone.json"
        base = json.loads((fixture_dir / "config.json").read_text())
        base["output_dir"] = str(clone_out)
        clone_config.write_text(json.dumps(base, indent=2))
        assert main(["all", "--config", str(clone_config)]) == 0
        for name in ("dataset.geojson", "gov_clean.geojson", "predictions_raw.geojson",
                     "predictions.geojson", "splits.csv", "match.json"):
            assert (out / name).read_bytes() == (clone_out / name).read_bytes(), name


class TestCliErrors:
    def test_missing_config(self, tmp_path):
        assert main(["ingest", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_config_without_output_dir(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{}")
        assert main(["ingest", "--config", str(path)]) == EXIT_CONFIG

    def test_missing_input_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({
            "output_dir": str(tmp_path / "out"),
            "inputs": {
                "points": [{"path": "absent.geojson", "source": "government"}],
                "settlement_rasters": ["absent.asc"],
            },
        }))
        assert main(["ingest", "--config", str(path)]) == EXIT_DATA

    def test_stage_requires_upstream_outputs(self, fixture_dir, tmp_path):
        config = write_config(fixture_dir, tmp_path / "fresh-out")
        # metrics before infer: missing inputs -> data error
        assert main(["metrics", "--config", str(config)]) == EXIT_DATA
        shutil.rmtree(tmp_path / "fresh-out", ignore_errors=True)
