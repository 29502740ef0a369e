"""Pipeline orchestrator.

One binary, one JSON config, one subcommand per stage:

    ingest | split | train-toy | lr-find | infer | cam | road-eval |
    metrics | tiles | sweep | aggregate | match | serve

Every stage writes its outputs plus a manifest (content hashes of inputs
and the exact parameters).  Reruns with unchanged inputs are skipped.
Partial outputs are cleaned up on failure.  Exit codes: 0 success,
2 config error, 3 data error, 4 internal error.  Logs are JSON lines on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import shutil
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .cam import CAM_METHODS, cam_to_png_bytes, compute_cam, peak_to_geo, upsample_cam
from .geo import GeoPoint, ProjectedPoint, TileSpec, tile_centered_at
from .imagestore import DirectoryImageStore, MissingImageError
from .ingest import (
    DatasetError,
    ExclusionRules,
    PoiRecord,
    load_points,
    read_ascii_grid,
    run_ingest,
    write_points_geojson,
)
from .metrics import disaggregate, optimize_threshold, pr_curve
from .model import backend as model_backend
from .model.net import SCHOOL
from .model.tensorio import write_tensor
from .model.train import TrainConfig, lr_range_test, train_toy
from .nationwide import (
    AggregationConfig,
    aggregate,
    generate_tiles,
    predictions_from_geojson,
    predictions_to_geojson,
    prefilter_tiles,
    read_boundary_geojson,
    sweep,
)
from .roadeval import PerturbationConfig, evaluate_methods
from .split import (
    CoverageError,
    SpacingError,
    assign_strata,
    split_from_csv,
    split_to_csv,
    strata_report,
    stratified_split,
)
from .synthetic import load_truth_store
from .valsvc.matching import MatchConfig, match
from .valsvc.service import ServiceState, create_app

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class ConfigError(ValueError):
    pass


def log_event(event: str, **fields):
    record = {"ts": datetime.now(timezone.utc).isoformat(), "event": event}
    record.update(fields)
    print(json.dumps(record, sort_keys=True, default=str), file=sys.stderr)


DEFAULTS = {
    "seed": 0,
    "ingest": {
        "dedup_buffer_m": 150.0,
        "settlement_buffer_m": 150.0,
        "negative_ratio": 2.0,
        "min_spacing_m": 300.0,
        "min_school_dist_m": 300.0,
        "keywords": None,
    },
    "split": {"fractions": [0.8, 0.1, 0.1]},
    "tile": {"size_m": 300.0, "px": 500, "overlap": 0.5},
    "train": {
        "batch_size": 32,
        "max_epochs": 60,
        "label_smoothing": 0.1,
        "initial_lr": 3e-3,
        "plateau_factor": 0.1,
        "plateau_patience": 7,
        "early_stop_lr": 1e-7,
        "channels": [8, 16, 32],
        "final_channels": 32,
        "augment": True,
        "free_rotation_prob": 0.5,
    },
    "lr_find": {"lr_min": 1e-6, "lr_max": 1e-3, "iterations": 1000},
    "cam": {"method": "gradcam", "min_probability": 0.5},
    "road": {
        "top_fraction": 0.1,
        "noise_std": 0.01,
        "edge_density_threshold": 0.01,
        "canny_sigma": 1.4,
        "canny_low": 0.1,
        "canny_high": 0.3,
        "methods": list(CAM_METHODS),
        "max_images": None,
    },
    "sweep": {"tau_star": None, "workers": 4},
    "aggregate": {"buffer_m": 50.0},
    "match": {"tau": 0.5, "d_m": 250.0},
    "serve": {"host": "127.0.0.1", "port": 8000},
}


class Config:
    def __init__(self, path: Path):
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
        self.path = path
        self.base = path.parent
        self.raw = raw
        if "output_dir" not in raw:
            raise ConfigError("config requires 'output_dir'")
        self.output_dir = self.resolve(raw["output_dir"])
        self.country = raw.get("country", "")
        self.seed = int(raw.get("seed", DEFAULTS["seed"]))

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else (self.base / path)

    def section(self, name: str) -> dict:
        merged = dict(DEFAULTS.get(name, {}))
        merged.update(self.raw.get(name, {}))
        return merged

    def input_path(self, *keys, required=True) -> Path | None:
        node = self.raw.get("inputs", {})
        for k in keys:
            if not isinstance(node, dict) or k not in node:
                if required:
                    raise ConfigError(f"config missing inputs.{'.'.join(keys)}")
                return None
            node = node[k]
        return self.resolve(node)

    def point_sources(self) -> list[tuple[Path, str]]:
        entries = self.raw.get("inputs", {}).get("points")
        if not entries:
            raise ConfigError("config missing inputs.points")
        out = []
        for e in entries:
            if "path" not in e or "source" not in e:
                raise ConfigError("each inputs.points entry needs 'path' and 'source'")
            out.append((self.resolve(e["path"]), e["source"]))
        return out

    def image_store(self):
        node = self.raw.get("inputs", {}).get("image_store")
        if not node:
            raise ConfigError("config missing inputs.image_store")
        kind = node.get("type")
        if kind == "synthetic":
            return load_truth_store(self.resolve(node["truth"])), [self.resolve(node["truth"])]
        if kind == "directory":
            return DirectoryImageStore(self.resolve(node["path"])), []
        raise ConfigError(f"unknown image_store type {kind!r}")


def sha256_path(path: Path) -> str:
    """Content hash of a file, or of a directory tree (names + contents)."""
    digest = hashlib.sha256()
    if path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            digest.update(str(child.relative_to(path)).encode())
            digest.update(child.read_bytes())
        return digest.hexdigest()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class StageRunner:
    """Runs one pipeline stage with manifest-based skip and cleanup."""

    def __init__(self, config: Config, name: str):
        self.config = config
        self.name = name
        self.manifest_dir = config.output_dir / "manifests"

    def manifest(self, params: dict, inputs: list[Path], outputs: list[str]) -> dict:
        for p in inputs:
            if not Path(p).exists():
                raise DatasetError(f"stage {self.name}: missing input {p}")
        return {
            "stage": self.name,
            "pipeline_version": __version__,
            "params": params,
            "inputs": {str(p): sha256_path(Path(p)) for p in sorted(set(map(str, inputs)))},
            "outputs": sorted(outputs),
        }

    def run(self, params: dict, inputs: list[Path], outputs: list[str], fn) -> bool:
        """fn(stage_dir) must create each declared output inside stage_dir.
        Returns False when skipped as up to date."""
        manifest = self.manifest(params, inputs, outputs)
        manifest_path = self.manifest_dir / f"{self.name}.json"
        if manifest_path.exists():
            previous = json.loads(manifest_path.read_text())
            if previous == manifest and all(
                (self.config.output_dir / name).exists() for name in outputs
            ):
                log_event("stage_up_to_date", stage=self.name)
                return False
        tmp = self.config.output_dir / f".tmp-{self.name}"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        try:
            fn(tmp)
            for name in outputs:
                produced = tmp / name
                if not produced.exists():
                    raise RuntimeError(f"stage {self.name} did not produce declared output {name}")
                final = self.config.output_dir / name
                if final.is_dir():
                    shutil.rmtree(final)
                elif final.exists():
                    final.unlink()
                final.parent.mkdir(parents=True, exist_ok=True)
                produced.rename(final)
            self.manifest_dir.mkdir(parents=True, exist_ok=True)
            manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        finally:
            if tmp.exists():
                shutil.rmtree(tmp)
        log_event("stage_done", stage=self.name, outputs=outputs)
        return True


def dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# dataset helpers shared by stages


def load_dataset_geojson(path: Path) -> list[PoiRecord]:
    doc = json.loads(path.read_text())
    records = []
    for f in doc["features"]:
        props = f["properties"]
        lon, lat = f["geometry"]["coordinates"][:2]
        records.append(
            PoiRecord(
                props["id"],
                props.get("name", ""),
                props["source"],
                props["class_label"],
                GeoPoint(lat, lon),
                props.get("stratum"),
            )
        )
    return records


def record_tile(record: PoiRecord, tile_cfg: dict) -> TileSpec:
    return tile_centered_at(
        record.location,
        size_m=float(tile_cfg["size_m"]),
        px=int(tile_cfg["px"]),
        resolution_m_per_px=float(tile_cfg["size_m"]) / int(tile_cfg["px"]),
    )


def split_records(config: Config, split: str) -> list[PoiRecord]:
    records = load_dataset_geojson(config.output_dir / "dataset_strata.geojson")
    assignment = split_from_csv((config.output_dir / "splits.csv").read_text())
    return [r for r in records if assignment.get(r.id) == split]


def images_for_records(records, store, tile_cfg):
    images = []
    for r in records:
        images.append(store.get(record_tile(r, tile_cfg), r.id))
    return np.stack(images) if images else np.empty((0, 3, tile_cfg["px"], tile_cfg["px"]))


# ---------------------------------------------------------------------------
# stages


def stage_ingest(config: Config) -> bool:
    params = config.section("ingest")
    params["seed"] = config.seed
    sources = config.point_sources()
    raster_paths = [config.resolve(p) for p in config.raw.get("inputs", {}).get("settlement_rasters", [])]
    if not raster_paths:
        raise ConfigError("config missing inputs.settlement_rasters")
    inputs = [p for p, _ in sources] + raster_paths

    def build(stage_dir: Path):
        loaded = []
        for path, source in sources:
            records, rejects = load_points(path, source)
            loaded.append((str(path), source, records, rejects))
            log_event("points_loaded", path=str(path), records=len(records), rejects=len(rejects))
        rasters = [read_ascii_grid(p) for p in raster_paths]
        rules = ExclusionRules(params["keywords"]) if params["keywords"] else ExclusionRules()
        dataset, audit = run_ingest(
            loaded,
            rasters,
            rules=rules,
            country=config.country,
            dedup_buffer_m=params["dedup_buffer_m"],
            settlement_buffer_m=params["settlement_buffer_m"],
            negative_ratio=params["negative_ratio"],
            min_spacing_m=params["min_spacing_m"],
            min_school_dist_m=params["min_school_dist_m"],
            seed=config.seed,
        )
        write_points_geojson(dataset.records, stage_dir / "dataset.geojson")
        gov_clean = [r for r in dataset.records if r.source == "government" and r.class_label == "school"]
        write_points_geojson(gov_clean, stage_dir / "gov_clean.geojson")
        audit["provenance"] = dataset.provenance
        dump_json(audit, stage_dir / "audit.json")

    return StageRunner(config, "ingest").run(
        params, inputs, ["dataset.geojson", "gov_clean.geojson", "audit.json"], build
    )


def stage_split(config: Config) -> bool:
    params = config.section("split")
    params["seed"] = config.seed
    smod_path = config.input_path("smod")
    dataset_path = config.output_dir / "dataset.geojson"

    def build(stage_dir: Path):
        records = load_dataset_geojson(dataset_path)
        smod = read_ascii_grid(smod_path)
        with_strata = assign_strata(records, smod)
        assignment = stratified_split(with_strata, tuple(params["fractions"]), config.seed)
        write_points_geojson(with_strata, stage_dir / "dataset_strata.geojson")
        (stage_dir / "splits.csv").write_text(split_to_csv(assignment))
        dump_json(strata_report(with_strata, assignment), stage_dir / "strata.json")

    return StageRunner(config, "split").run(
        params,
        [dataset_path, smod_path],
        ["dataset_strata.geojson", "splits.csv", "strata.json"],
        build,
    )


def train_config_from(config: Config) -> TrainConfig:
    params = config.section("train")
    return TrainConfig(
        batch_size=int(params["batch_size"]),
        max_epochs=int(params["max_epochs"]),
        label_smoothing=float(params["label_smoothing"]),
        initial_lr=float(params["initial_lr"]),
        plateau_factor=float(params["plateau_factor"]),
        plateau_patience=int(params["plateau_patience"]),
        early_stop_lr=float(params["early_stop_lr"]),
        seed=config.seed,
        channels=tuple(params["channels"]),
        final_channels=int(params["final_channels"]),
        augment=bool(params["augment"]),
        free_rotation_prob=float(params["free_rotation_prob"]),
    )


def stage_train(config: Config) -> bool:
    params = config.section("train")
    params["seed"] = config.seed
    params["tile"] = config.section("tile")
    store, store_inputs = config.image_store()
    inputs = [config.output_dir / "dataset_strata.geojson", config.output_dir / "splits.csv"] + store_inputs

    def build(stage_dir: Path):
        tile_cfg = config.section("tile")
        train_recs = split_records(config, "train")
        val_recs = split_records(config, "val")
        labels = lambda recs: np.array([1 if r.class_label == "school" else 0 for r in recs], dtype=np.int64)
        x_train = images_for_records(train_recs, store, tile_cfg)
        x_val = images_for_records(val_recs, store, tile_cfg)
        trained, history = train_toy(x_train, labels(train_recs), x_val, labels(val_recs), train_config_from(config))
        model_backend.save_params(trained, stage_dir / "model.npz")
        dump_json({"history": history, "epochs": len(history)}, stage_dir / "history.json")

    return StageRunner(config, "train-toy").run(params, inputs, ["model.npz", "history.json"], build)


def stage_lr_find(config: Config) -> bool:
    params = config.section("lr_find")
    params["seed"] = config.seed
    store, store_inputs = config.image_store()
    inputs = [config.output_dir / "dataset_strata.geojson", config.output_dir / "splits.csv"] + store_inputs

    def build(stage_dir: Path):
        tile_cfg = config.section("tile")
        train_recs = split_records(config, "train")
        x = images_for_records(train_recs, store, tile_cfg)
        y = np.array([1 if r.class_label == "school" else 0 for r in train_recs], dtype=np.int64)
        suggested, curve = lr_range_test(
            x, y, train_config_from(config),
            lr_min=float(params["lr_min"]), lr_max=float(params["lr_max"]),
            iterations=int(params["iterations"]),
        )
        dump_json({"suggested_lr": suggested, "curve": curve}, stage_dir / "lr_curve.json")

    return StageRunner(config, "lr-find").run(params, inputs, ["lr_curve.json"], build)


def stage_infer(config: Config, split: str) -> bool:
    params = {"split": split, "tile": config.section("tile")}
    store, store_inputs = config.image_store()
    inputs = [
        config.output_dir / "dataset_strata.geojson",
        config.output_dir / "splits.csv",
        config.output_dir / "model.npz",
    ] + store_inputs

    def build(stage_dir: Path):
        tile_cfg = config.section("tile")
        records = split_records(config, split)
        if not records:
            raise DatasetError(f"no records in split {split!r}")
        params_npz = model_backend.load_params(config.output_dir / "model.npz")
        toy = model_backend.ToyBackend(params_npz)
        bundle_root = stage_dir / f"bundles_{split}"
        rows = []
        for r in records:
            tile = record_tile(r, tile_cfg)
            image = store.get(tile, r.id)
            bundle = toy.bundle(image)
            meta = {
                "image_id": r.id,
                "model_id": "toy",
                "tile": {
                    "min_x": tile.min_corner.x,
                    "min_y": tile.min_corner.y,
                    "size_m": tile.size_m,
                    "px": tile.px,
                    "resolution_m_per_px": tile.resolution_m_per_px,
                },
            }
            model_backend.write_bundle(bundle_root / r.id, bundle, meta)
            rows.append(
                {
                    "id": r.id,
                    "score": float(bundle.softmax[SCHOOL]),
                    "label": 1 if r.class_label == "school" else 0,
                    "stratum": r.stratum or "",
                }
            )
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["id", "score", "label", "stratum"])
        writer.writeheader()
        writer.writerows(rows)
        (stage_dir / f"scores_{split}.csv").write_text(buf.getvalue())

    return StageRunner(config, f"infer-{split}").run(
        params, inputs, [f"bundles_{split}", f"scores_{split}.csv"], build
    )


def stage_cam(config: Config, split: str) -> bool:
    params = config.section("cam")
    params["split"] = split
    bundles_dir = config.output_dir / f"bundles_{split}"

    def build(stage_dir: Path):
        method = params["method"]
        if method not in CAM_METHODS:
            raise ConfigError(f"unknown CAM method {method!r}")
        out_root = stage_dir / f"cams_{split}"
        out_root.mkdir(parents=True)
        features = []
        for bundle_dir in sorted(p for p in bundles_dir.iterdir() if p.is_dir()):
            bundle, meta = model_backend.read_bundle(bundle_dir)
            if float(bundle.softmax[SCHOOL]) < float(params["min_probability"]):
                continue
            cam = compute_cam(method, bundle)
            write_tensor(cam.values, out_root / f"{bundle_dir.name}.gten")
            (out_root / f"{bundle_dir.name}.png").write_bytes(cam_to_png_bytes(cam))
            t = meta["tile"]
            tile = TileSpec(
                ProjectedPoint(t["min_x"], t["min_y"]), t["size_m"], t["px"], t["resolution_m_per_px"]
            )
            if cam.degenerate:
                point, peak = tile.center(), 0.0
            else:
                point, peak = peak_to_geo(upsample_cam(cam, tile.px), tile)
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [point.lon, point.lat]},
                    "properties": {
                        "id": bundle_dir.name,
                        "method": method,
                        "peak": peak,
                        "probability": float(bundle.softmax[SCHOOL]),
                        "degenerate": cam.degenerate,
                    },
                }
            )
        dump_json({"type": "FeatureCollection", "features": features}, stage_dir / f"peaks_{split}.geojson")

    return StageRunner(config, f"cam-{split}").run(
        params, [bundles_dir], [f"cams_{split}", f"peaks_{split}.geojson"], build
    )


def stage_road_eval(config: Config, split: str) -> bool:
    params = config.section("road")
    params["split"] = split
    store, store_inputs = config.image_store()
    inputs = [
        config.output_dir / "dataset_strata.geojson",
        config.output_dir / "splits.csv",
        config.output_dir / "model.npz",
    ] + store_inputs

    def build(stage_dir: Path):
        tile_cfg = config.section("tile")
        records = split_records(config, split)
        if params["max_images"]:
            records = records[: int(params["max_images"])]
        images = images_for_records(records, store, tile_cfg)
        toy = model_backend.ToyBackend(model_backend.load_params(config.output_dir / "model.npz"))
        road_config = PerturbationConfig(
            top_fraction=float(params["top_fraction"]),
            noise_std=float(params["noise_std"]),
            edge_density_threshold=float(params["edge_density_threshold"]),
            canny_sigma=float(params["canny_sigma"]),
            canny_low=float(params["canny_low"]),
            canny_high=float(params["canny_high"]),
            seed=config.seed,
        )
        report = evaluate_methods(images, [r.id for r in records], toy, list(params["methods"]), road_config)
        dump_json(report.as_json(), stage_dir / "road_report.json")
        (stage_dir / "road_table.txt").write_text(report.as_table() + "\n")

    return StageRunner(config, f"road-eval-{split}").run(
        params, inputs, ["road_report.json", "road_table.txt"], build
    )


def read_scores_csv(path: Path):
    rows = list(csv.DictReader(path.read_text().splitlines()))
    scores = np.array([float(r["score"]) for r in rows])
    labels = np.array([int(r["label"]) for r in rows])
    strata = np.array([r.get("stratum", "") for r in rows])
    return scores, labels, strata


def stage_metrics(config: Config) -> bool:
    params = {"beta": 2.0}
    val_path = config.output_dir / "scores_val.csv"
    test_path = config.output_dir / "scores_test.csv"

    def build(stage_dir: Path):
        out: dict = {"beta": params["beta"]}
        scores, labels, strata = read_scores_csv(test_path)
        curve = pr_curve(scores, labels)
        out["test"] = {
            "auprc": curve.auprc,
            "by_stratum": disaggregate(scores, labels, strata),
            "n": int(len(scores)),
        }
        v_scores, v_labels, _ = read_scores_csv(val_path)
        sweep_result = optimize_threshold(v_scores, v_labels, beta=params["beta"])
        out["val"] = {
            "tau_star": sweep_result.best_threshold,
            "f2": sweep_result.best_fbeta,
            "precision": sweep_result.best_precision,
            "recall": sweep_result.best_recall,
            "auprc": pr_curve(v_scores, v_labels).auprc,
            "n": int(len(v_scores)),
        }
        dump_json(out, stage_dir / "metrics.json")
        table = (
            f"{'country':<10}{'AUPRC':>8}{'F2':>8}{'recall':>8}{'precision':>11}{'tau*':>8}\n"
            f"{config.country or '-':<10}{out['test']['auprc']:>8.3f}{out['val']['f2']:>8.3f}"
            f"{out['val']['recall']:>8.3f}{out['val']['precision']:>11.3f}{out['val']['tau_star']:>8.3f}\n"
        )
        (stage_dir / "metrics_table.txt").write_text(table)

    return StageRunner(config, "metrics").run(
        params, [val_path, test_path], ["metrics.json", "metrics_table.txt"], build
    )


def stage_tiles(config: Config) -> bool:
    params = config.section("tile")
    boundary_path = config.input_path("boundary")
    raster_paths = [config.resolve(p) for p in config.raw.get("inputs", {}).get("settlement_rasters", [])]

    def build(stage_dir: Path):
        ring = read_boundary_geojson(boundary_path)
        grid = generate_tiles(ring, float(params["size_m"]), float(params["overlap"]), int(params["px"]))
        rasters = [read_ascii_grid(p) for p in raster_paths]
        kept = prefilter_tiles(grid, rasters)
        dump_json(
            {
                "size_m": grid.size_m,
                "stride_m": grid.stride_m,
                "px": int(params["px"]),
                "total_tiles": len(grid.tiles),
                "kept_tiles": len(kept),
                "tiles": [
                    {"id": tid, "min_x": t.min_corner.x, "min_y": t.min_corner.y}
                    for tid, t in kept
                ],
            },
            stage_dir / "tiles.json",
        )

    return StageRunner(config, "tiles").run(
        params, [boundary_path] + raster_paths, ["tiles.json"], build
    )


def stage_sweep(config: Config) -> bool:
    params = config.section("sweep")
    params["cam"] = config.section("cam")["method"]
    store, store_inputs = config.image_store()
    tiles_path = config.output_dir / "tiles.json"
    model_path = config.output_dir / "model.npz"
    metrics_path = config.output_dir / "metrics.json"
    inputs = [tiles_path, model_path] + store_inputs
    if params["tau_star"] is None:
        inputs.append(metrics_path)

    def build(stage_dir: Path):
        doc = json.loads(tiles_path.read_text())
        tiles = [
            (
                t["id"],
                TileSpec(
                    ProjectedPoint(t["min_x"], t["min_y"]),
                    doc["size_m"],
                    doc["px"],
                    doc["size_m"] / doc["px"],
                ),
            )
            for t in doc["tiles"]
        ]
        tau_star = params["tau_star"]
        if tau_star is None:
            tau_star = json.loads(metrics_path.read_text())["val"]["tau_star"]
        toy = model_backend.ToyBackend(model_backend.load_params(model_path))
        result = sweep(tiles, toy, store, params["cam"], float(tau_star), workers=int(params["workers"]))
        doc_out = predictions_to_geojson(result.predictions)
        (stage_dir / "predictions_raw.geojson").write_text(json.dumps(doc_out, sort_keys=True) + "\n")
        dump_json(
            {
                "tau_star": tau_star,
                "cam_method": params["cam"],
                "model_id": "toy",
                "tiles_total": doc["total_tiles"],
                "tiles_kept": doc["kept_tiles"],
                "tiles_scored": result.scored,
                "tiles_positive": result.positives,
                "tiles_skipped": len(result.skipped_tiles),
                "skipped": result.skipped_tiles,
            },
            stage_dir / "sweep_manifest.json",
        )

    return StageRunner(config, "sweep").run(
        params, inputs, ["predictions_raw.geojson", "sweep_manifest.json"], build
    )


def stage_aggregate(config: Config) -> bool:
    params = config.section("aggregate")
    raw_path = config.output_dir / "predictions_raw.geojson"

    def build(stage_dir: Path):
        predictions = predictions_from_geojson(json.loads(raw_path.read_text()))
        merged = aggregate(predictions, AggregationConfig(buffer_r=float(params["buffer_m"])))
        doc = predictions_to_geojson(merged)
        (stage_dir / "predictions.geojson").write_text(json.dumps(doc, sort_keys=True) + "\n")

    return StageRunner(config, "aggregate").run(params, [raw_path], ["predictions.geojson"], build)


def stage_match(config: Config) -> bool:
    params = config.section("match")
    predictions_path = config.output_dir / "predictions.geojson"
    gov_path = config.output_dir / "gov_clean.geojson"

    def build(stage_dir: Path):
        predictions = predictions_from_geojson(json.loads(predictions_path.read_text()))
        gov_records = load_dataset_geojson(gov_path)
        result = match(
            [(p.tile_id, p.location, p.probability) for p in predictions],
            [(r.id, r.location) for r in gov_records],
            MatchConfig(tau=float(params["tau"]), d=float(params["d_m"])),
        )
        payload = result.venn()
        payload.update(
            {
                "tau": params["tau"],
                "d_m": params["d_m"],
                "pairs": [
                    {"prediction_id": p.prediction_id, "government_id": p.government_id, "distance_m": p.distance_m}
                    for p in result.pairs
                ],
                "unmatched_prediction_ids": result.unmatched_predictions,
                "unmatched_government_ids": result.unmatched_government,
            }
        )
        dump_json(payload, stage_dir / "match.json")

    return StageRunner(config, "match").run(params, [predictions_path, gov_path], ["match.json"], build)


def stage_serve(config: Config):
    import uvicorn

    params = config.section("serve")
    gov_raw = config.input_path("government_raw")
    state = ServiceState.from_files(
        config.output_dir / "predictions.geojson",
        config.output_dir / "gov_clean.geojson",
        gov_raw,
        config.output_dir / "verdicts.jsonl",
    )
    app = create_app(state)
    log_event("serving", host=params["host"], port=params["port"])
    uvicorn.run(app, host=params["host"], port=int(params["port"]), log_level="warning")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="schoolsweep", description=__doc__)
    parser.add_argument("stage", choices=[
        "ingest", "split", "train-toy", "lr-find", "infer", "cam", "road-eval",
        "metrics", "tiles", "sweep", "aggregate", "match", "serve", "all",
    ])
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--split", default="test", choices=["train", "val", "test"],
                        help="dataset split for infer/cam/road-eval")
    args = parser.parse_args(argv)
    try:
        config = Config(Path(args.config))
        config.output_dir.mkdir(parents=True, exist_ok=True)
        if args.stage == "ingest":
            stage_ingest(config)
        elif args.stage == "split":
            stage_split(config)
        elif args.stage == "train-toy":
            stage_train(config)
        elif args.stage == "lr-find":
            stage_lr_find(config)
        elif args.stage == "infer":
            stage_infer(config, args.split)
        elif args.stage == "cam":
            stage_cam(config, args.split)
        elif args.stage == "road-eval":
            stage_road_eval(config, args.split)
        elif args.stage == "metrics":
            stage_metrics(config)
        elif args.stage == "tiles":
            stage_tiles(config)
        elif args.stage == "sweep":
            stage_sweep(config)
        elif args.stage == "aggregate":
            stage_aggregate(config)
        elif args.stage == "match":
            stage_match(config)
        elif args.stage == "serve":
            stage_serve(config)
        elif args.stage == "all":
            stage_ingest(config)
            stage_split(config)
            stage_train(config)
            stage_infer(config, "val")
            stage_infer(config, "test")
            stage_metrics(config)
            stage_cam(config, "test")
            stage_road_eval(config, "test")
            stage_tiles(config)
            stage_sweep(config)
            stage_aggregate(config)
            stage_match(config)
        return EXIT_OK
    except ConfigError as exc:
        log_event("config_error", error=str(exc))
        return EXIT_CONFIG
    except (DatasetError, CoverageError, SpacingError, MissingImageError, FileNotFoundError, ValueError) as exc:
        log_event("data_error", error=str(exc), type=type(exc).__name__)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        log_event("internal_error", error=str(exc), traceback=traceback.format_exc())
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
