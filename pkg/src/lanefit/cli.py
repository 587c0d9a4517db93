"""Batch pipeline driver.

Reads label maps from a directory (or renders synthetic scenes from a YAML
spec), infers lane parameters per frame, and writes line-delimited parameter
records plus timing, optional metric reports, and optional overlay figures.

    lanefit --input scenes.yaml --out results/ --overlay --seed 7
    lanefit --input masks/ --camera camera.yaml --classes classes.yaml --out results/
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import yaml
from PIL import Image, ImageDraw

from .cost import CostConfig, offset_histogram
from .geometry import (CameraModel, Roi, SlopeModel, bev_to_image_arrays,
                       camera_from_dict, load_camera_config,
                       slope_correct_arrays)
from .inference import (PeakConfig, PipelineConfig, TrackerState,
                        find_offset_peaks, infer_lanes)
from .ingest import (IngestConfig, ClassMap, default_class_map, extract_points,
                     load_class_map, load_mask)
from .lane_model import (LaneAttributes, LaneSet, SharedParams, eval_lane,
                         residual_offsets)
from .metrics import ground_truth_from_lane_set, point_accuracy
from .optimizer import OptimizerConfig
from .scenegen import (ClipMotion, Degradation, SceneSpec, generate_clip,
                       generate_scene)

logger = logging.getLogger("lanefit")

LABEL_PALETTE = {0: (45, 45, 45), 1: (95, 140, 185), 2: (105, 105, 105),
                 3: (235, 235, 235), 4: (205, 185, 70)}
LANE_DRAW_COLORS = {"white": (60, 110, 255), "yellow": (250, 220, 40),
                    "unknown": (240, 70, 70)}
VIZ_DASH = (2.0, 2.0)  # meters on/off used to draw dashed predictions


@dataclass
class RunConfig:
    input_path: Path
    out_dir: Path
    camera: Optional[CameraModel] = None
    class_map: ClassMap = field(default_factory=default_class_map)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    roi: Roi = field(default_factory=Roi)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    overlay: bool = False
    seed: int = 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lanefit",
        description="Infer multi-lane geometry from semantic label maps.")
    p.add_argument("--input", required=True,
                   help="directory of label-map images, or a YAML scene spec")
    p.add_argument("--camera", help="camera config YAML (required for mask input)")
    p.add_argument("--classes", help="class-map YAML (default: built-in vocabulary)")
    p.add_argument("--config", help="pipeline config YAML (cost/optimizer/peaks/roi/ingest)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-slope", action="store_true",
                   help="disable slope compensation (grade pinned at 0)")
    p.add_argument("--no-seq", action="store_true",
                   help="disable sequential initialization (grid scan every frame)")
    p.add_argument("--expected-lanes", type=int, default=None,
                   help="keep only the N most prominent offset peaks")
    p.add_argument("--overlay", action="store_true",
                   help="write overlay images and stage figures per frame")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for synthetic scenes and optimizer restarts")
    return p


def _load_yaml(path) -> dict:
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return raw


def _dataclass_from(cls, raw: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    coerced = {}
    for key, value in raw.items():
        coerced[key] = tuple(tuple(v) if isinstance(v, list) else v
                             for v in value) if isinstance(value, list) else value
    return cls(**coerced)


def load_pipeline_config(path, *, slope: bool, sequential: bool,
                         expected_lanes, tag_colors,
                         jitter_seed: int) -> tuple[PipelineConfig, Roi, IngestConfig]:
    raw = _load_yaml(path) if path else {}
    allowed = {"cost", "optimizer", "peaks", "roi", "ingest", "assign_gate"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"pipeline config: unknown sections {sorted(unknown)}")
    cost = _dataclass_from(CostConfig, raw.get("cost", {}), "cost")
    opt_raw = dict(raw.get("optimizer", {}))
    opt_raw.setdefault("jitter_seed", jitter_seed)
    opt_raw["optimize_slope"] = slope
    optimizer = _dataclass_from(OptimizerConfig, opt_raw, "optimizer")
    peaks = _dataclass_from(PeakConfig, raw.get("peaks", {}), "peaks")
    roi = _dataclass_from(Roi, raw.get("roi", {}), "roi")
    ingest = _dataclass_from(IngestConfig, raw.get("ingest", {}), "ingest")
    pipeline = PipelineConfig(cost=cost, optimizer=optimizer, peaks=peaks,
                              assign_gate=float(raw.get("assign_gate", 0.5)),
                              sequential=sequential,
                              expected_lanes=expected_lanes,
                              tag_colors=tag_colors)
    return pipeline, roi, ingest


def load_scene_config(path, camera: Optional[CameraModel],
                      seed_override: Optional[int] = None):
    """Parse a scene-spec YAML into (SceneSpec, frames, ClipMotion)."""
    raw = _load_yaml(path)
    if camera is None:
        if "camera" not in raw:
            raise ValueError(f"{path}: no camera section and no --camera given")
        camera = camera_from_dict(raw["camera"])
    lanes = raw.get("lanes", {})
    offsets = tuple(float(v) for v in lanes.get("offsets", ()))
    colors = list(lanes.get("colors", ["white"] * len(offsets)))
    styles = list(lanes.get("styles", ["solid"] * len(offsets)))
    attributes = tuple(LaneAttributes(c, s) for c, s in zip(colors, styles))
    truth = LaneSet(
        shared=SharedParams(float(lanes.get("a1", 0.0)), float(lanes.get("a2", 0.0))),
        slope=SlopeModel(float(raw.get("b", 0.0))),
        offsets=offsets,
        central_offset=float(lanes.get("central_offset", 0.0)),
        attributes=attributes, confidence=1.0)
    deg_raw = dict(raw.get("degradation", {}))
    rects = tuple(tuple(int(v) for v in r) for r in deg_raw.pop("occlusions", ()))
    degradation = Degradation(occlusion_rects=rects, **deg_raw)
    dash = raw.get("dash")
    patterns = ()
    if dash is not None:
        patterns = tuple((float(dash["on"]), float(dash["off"]))
                         if a.style == "dashed" else None for a in attributes)
    seed = int(raw.get("seed", 0)) if seed_override is None else seed_override
    spec = SceneSpec(truth=truth, camera=camera,
                     road_half_width=float(raw.get("road_half_width", 7.0)),
                     marking_half_width=float(raw.get("marking_half_width", 0.075)),
                     y_max=float(raw.get("y_max", 60.0)),
                     dash_patterns=patterns, seed=seed,
                     degradation=degradation)
    frames = int(raw.get("frames", 1))
    motion = _dataclass_from(ClipMotion, raw.get("motion", {}), "motion")
    return spec, frames, motion


def colorize_labels(labels: np.ndarray) -> Image.Image:
    lut = np.zeros((256, 3), dtype=np.uint8)
    for label, rgb in LABEL_PALETTE.items():
        lut[label] = rgb
    return Image.fromarray(lut[labels])


def render_overlay(canvas: Optional[np.ndarray], lane_set: LaneSet,
                   camera: CameraModel, dash_pattern=VIZ_DASH,
                   y_range=(1.0, 60.0)) -> Image.Image:
    """Draw the detected lanes onto a label map (or a blank canvas).

    White lanes are drawn blue, yellow lanes yellow; dashed lanes are drawn
    with gaps following dash_pattern.  An empty LaneSet leaves the canvas
    unmodified.
    """
    if canvas is None:
        img = Image.new("RGB", camera.image_size, (0, 0, 0))
    else:
        img = colorize_labels(canvas)
    if lane_set.lane_count == 0:
        return img
    draw = ImageDraw.Draw(img)
    on_len, off_len = dash_pattern
    w, h = camera.image_size
    ys = np.arange(y_range[0], y_range[1] + 1e-9, 0.25)
    for a0, attr in zip(lane_set.offsets, lane_set.attributes):
        color = LANE_DRAW_COLORS[attr.color]
        xs = eval_lane(a0, lane_set.shared, ys)
        uv, valid = bev_to_image_arrays(camera, xs, ys, lane_set.slope.grade)
        inside = valid & (uv[:, 1] >= 0) & (uv[:, 1] < h) \
            & (uv[:, 0] > -w) & (uv[:, 0] < 2 * w)
        for k in range(ys.size - 1):
            if not (inside[k] and inside[k + 1]):
                continue
            if attr.style == "dashed":
                mid = 0.5 * (ys[k] + ys[k + 1])
                if np.mod(mid, on_len + off_len) >= on_len:
                    continue
            draw.line([tuple(uv[k]), tuple(uv[k + 1])], fill=color, width=2)
    return img


def render_stage_figure(labels: np.ndarray, residual_y: np.ndarray,
                        residuals: np.ndarray, hist, peaks, overlay: Image.Image,
                        path: Path) -> None:
    """Four-panel diagnostic figure: input labels, residual scatter, offset
    histogram with detected peaks, and the lane overlay."""
    fig, axes = plt.subplots(2, 2, figsize=(11, 7))
    axes[0, 0].imshow(colorize_labels(labels))
    axes[0, 0].set_title("label map")
    axes[0, 0].axis("off")
    axes[0, 1].scatter(residuals, residual_y, s=2, c="crimson")
    axes[0, 1].set_xlim(hist.bin_edges[0], hist.bin_edges[-1])
    axes[0, 1].set_xlabel("residual offset (m)")
    axes[0, 1].set_ylabel("y (m)")
    axes[0, 1].set_title("residuals vs range")
    axes[1, 0].bar(hist.bin_centers, hist.counts,
                   width=hist.bin_edges[1] - hist.bin_edges[0], color="steelblue")
    for p in peaks:
        axes[1, 0].axvline(p, color="red", linestyle="--", linewidth=1)
    axes[1, 0].set_xlabel("residual offset (m)")
    axes[1, 0].set_ylabel("points")
    axes[1, 0].set_title("offset histogram and peaks")
    axes[1, 1].imshow(overlay)
    axes[1, 1].set_title("detected lanes")
    axes[1, 1].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _frame_metrics(lane_set: LaneSet, truth: LaneSet, camera: CameraModel) -> dict:
    rows = np.arange(camera.image_size[1] * 0.45, camera.image_size[1], 10.0)
    gt = ground_truth_from_lane_set(truth, camera, rows)
    acc = point_accuracy(lane_set, gt, camera)
    errs = []
    for a0 in truth.offsets:
        if lane_set.offsets:
            errs.append(min(abs(p - a0) for p in lane_set.offsets))
        else:
            errs.append(3.0)
    return {
        "point_accuracy": acc,
        "offset_mae": float(np.mean(errs)) if errs else 0.0,
        "a1_err": abs(lane_set.shared.heading - truth.shared.heading),
        "a2_err": abs(lane_set.shared.curvature - truth.shared.curvature),
        "b_err": abs(lane_set.slope.grade - truth.slope.grade),
        "n_pred": lane_set.lane_count,
        "n_gt": truth.lane_count,
    }


def run_pipeline(cfg: RunConfig) -> dict:
    """Process all frames and write artifacts into cfg.out_dir.

    Returns a summary dict (frames processed, aggregate metrics when ground
    truth was available).
    """
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    overlays_dir = out / "overlays"
    if cfg.overlay:
        overlays_dir.mkdir(exist_ok=True)

    frames = _iter_frames(cfg)
    tracker = TrackerState()
    metric_rows: list[dict] = []
    n_frames = 0

    with open(out / "lanes.jsonl", "w") as lanes_f, \
            open(out / "timing.jsonl", "w") as timing_f:
        for frame_id, labels, camera, truth in frames:
            t0 = time.perf_counter()
            try:
                mask_points = extract_points(
                    _as_mask(labels), cfg.class_map, camera, cfg.roi, cfg.ingest)
                t1 = time.perf_counter()
                lane_set = infer_lanes(mask_points, cfg.pipeline, tracker)
                t2 = time.perf_counter()
            except Exception:
                logger.exception("frame %d failed; continuing", frame_id)
                continue

            record = lane_set.to_record(frame_id)
            lanes_f.write(json.dumps(record, sort_keys=True) + "\n")
            total_ms = (time.perf_counter() - t0) * 1000.0
            timing_f.write(json.dumps({
                "frame_id": frame_id,
                "extract_ms": (t1 - t0) * 1000.0,
                "optimize_ms": (t2 - t1) * 1000.0,
                "total_ms": total_ms,
            }, sort_keys=True) + "\n")

            if truth is not None:
                row = {"frame": frame_id}
                row.update(_frame_metrics(lane_set, truth, camera))
                metric_rows.append(row)
            if cfg.overlay:
                _write_overlays(overlays_dir, frame_id, labels, lane_set,
                                camera, mask_points, cfg.pipeline)
            n_frames += 1

    summary = {"frames": n_frames}
    if metric_rows:
        keys = ("point_accuracy", "offset_mae", "a1_err", "a2_err", "b_err")
        for key in keys:
            summary[f"{key}_mean"] = float(np.mean([r[key] for r in metric_rows]))
        _write_metrics(out / "metrics.txt", metric_rows, summary)
    if n_frames == 0:
        logger.warning("no frames processed from %s", cfg.input_path)
    return summary


def _as_mask(labels):
    from .ingest import SemanticMask
    return labels if hasattr(labels, "labels") else SemanticMask(labels=labels)


def _write_overlays(overlays_dir: Path, frame_id: int, labels, lane_set: LaneSet,
                    camera: CameraModel, points, pipeline: PipelineConfig) -> None:
    arr = labels.labels if hasattr(labels, "labels") else labels
    overlay = render_overlay(arr, lane_set, camera)
    overlay.save(overlays_dir / f"frame_{frame_id:06d}.png")
    lane = points.lane_xy
    if lane.shape[0]:
        lx, ly, ok = slope_correct_arrays(lane[:, 0], lane[:, 1],
                                          lane_set.slope.grade,
                                          points.camera_height)
        res = residual_offsets(np.stack([lx[ok], ly[ok]], axis=1), lane_set.shared)
        ys = ly[ok]
    else:
        res, ys = np.zeros(0), np.zeros(0)
    hist = offset_histogram(res, pipeline.cost)
    peaks = find_offset_peaks(hist, pipeline.peaks, pipeline.expected_lanes)
    render_stage_figure(arr, ys, res, hist, peaks, overlay,
                        overlays_dir / f"frame_{frame_id:06d}_stages.png")


def _write_metrics(path: Path, rows: list[dict], summary: dict) -> None:
    with open(path, "w") as f:
        for row in rows:
            fields = " ".join(f"{k}={row[k]:.6g}" if isinstance(row[k], float)
                              else f"{k}={row[k]}" for k in row if k != "frame")
            f.write(f"frame {row['frame']:06d} {fields}\n")
        f.write("summary\n")
        for key, value in summary.items():
            f.write(f"{key} {value:.6g}\n" if isinstance(value, float)
                    else f"{key} {value}\n")


def _iter_frames(cfg: RunConfig):
    """Yield (frame_id, labels, camera, truth_or_none)."""
    path = cfg.input_path
    if path.is_dir():
        if cfg.camera is None:
            raise ValueError("mask-directory input requires --camera")
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in (".png", ".bmp", ".tif", ".tiff"))
        for i, f in enumerate(files):
            mask = load_mask(f, cfg.class_map, expected_size=cfg.camera.image_size)
            yield i, mask, cfg.camera, None
    else:
        spec, frames, motion = load_scene_config(path, cfg.camera,
                                                 seed_override=cfg.seed or None)
        if frames > 1:
            scenes = generate_clip(spec, frames, motion)
        else:
            scenes = [generate_scene(spec)]
        for i, scene in enumerate(scenes):
            yield i, scene.mask, spec.camera, scene.truth


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        camera = load_camera_config(args.camera) if args.camera else None
        class_map = load_class_map(args.classes) if args.classes else default_class_map()
        pipeline, roi, ingest = load_pipeline_config(
            args.config, slope=not args.no_slope, sequential=not args.no_seq,
            expected_lanes=args.expected_lanes, tag_colors=class_map.color_table(),
            jitter_seed=args.seed + 916)
        cfg = RunConfig(input_path=Path(args.input), out_dir=Path(args.out),
                        camera=camera, class_map=class_map, pipeline=pipeline,
                        roi=roi, ingest=ingest, overlay=args.overlay,
                        seed=args.seed)
        summary = run_pipeline(cfg)
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 2
    logger.info("processed %d frames -> %s", summary["frames"], args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
