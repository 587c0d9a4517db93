"""lanefit: multi-lane geometry inference from semantic label maps.

The pipeline back-projects road and lane-marking pixels onto the ground
plane, then jointly estimates a shared lane polynomial (heading, curvature),
a road grade, and the central-line offset by derivative-free minimization of
a physics-based cost; per-lane lateral offsets fall out of the residual
histogram's peaks.
"""

from .cost import CostConfig, OffsetHistogram, frame_cost, lane_entropy_cost, \
    offset_histogram, road_fit_cost
from .geometry import (BevPoint, CameraModel, FlatBevPoint, ImagePoint, Roi,
                       SlopeModel, bev_to_image, build_transform,
                       image_to_flat_bev, load_camera_config,
                       rotation_from_rpy, slope_correct)
from .inference import (PeakConfig, PipelineConfig, TrackerState,
                        assign_points_to_lanes, classify_attributes,
                        find_offset_peaks, infer_lanes)
from .ingest import (ClassMap, IngestConfig, SemanticMask, default_class_map,
                     extract_points, load_class_map, load_mask)
from .lane_model import (FramePoints, LaneAttributes, LaneHypothesis, LaneSet,
                         SharedParams, eval_lane, residual_offsets,
                         sample_lane)
from .metrics import (LaneGroundTruth, PixelMetrics, curvature_series_rmse,
                      ego_lane_mask, ground_truth_from_lane_set,
                      pixel_f_measure, point_accuracy, true_positive_rate)
from .optimizer import (OptResult, OptimizerConfig, init_by_scan,
                        init_from_previous, nelder_mead)
from .scenegen import (ClipMotion, Degradation, Scene, SceneSpec,
                       generate_clip, generate_scene,
                       occlusions_covering_fraction, write_mask)

__version__ = "0.1.0"
