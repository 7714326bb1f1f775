"""Visual positioning by matching material-segmented images against views
rendered from a segmented 3D city model."""

__version__ = "0.1.0"

from .camera import CameraIntrinsics, ImuAttitude, derectify, rectify
from .city_model import CityModel, Material, cast_ray, contains_point, load_model
from .geodesy import HK1980, DatumSpec, GeoCoord, GridCoord, geo_to_grid, grid_to_geo
from .images import LabelImage, Pose, Rotation
from .matching import DEFAULT_FUSION, FusionParams, MetricScores, bf_score, fuse, score_to_prob, weighted_region_score
from .projection import build_erp_lut, capture_cubemap, cube_to_erp, erp_to_view
from .search import CandidateDatabase, QueryRecord, SearchConfig, build_database, emit_heatmap, enumerate_candidates, localize
from .sensitivity import DistortionSpec, elastic_distort, measure_errors, run_study

__all__ = [
    "CameraIntrinsics", "ImuAttitude", "rectify", "derectify",
    "CityModel", "Material", "load_model", "contains_point", "cast_ray",
    "DatumSpec", "HK1980", "GeoCoord", "GridCoord", "geo_to_grid", "grid_to_geo",
    "LabelImage", "Pose", "Rotation",
    "MetricScores", "FusionParams", "DEFAULT_FUSION", "weighted_region_score", "bf_score", "score_to_prob", "fuse",
    "build_erp_lut", "capture_cubemap", "cube_to_erp", "erp_to_view",
    "SearchConfig", "CandidateDatabase", "QueryRecord", "build_database", "enumerate_candidates", "localize", "emit_heatmap",
    "DistortionSpec", "elastic_distort", "measure_errors", "run_study",
]
