"""Knowledge-guided detection of building elements in point clouds.

A rule base drives plane-detection built-ins to find walls, floors,
panels and counters, either around known prior positions or from class
knowledge alone, and annotates the results in a knowledge base.
"""

from .boxes import BoundingBox
from .builtins import DetectionConfig, PlaneDetectionArgs, PlaneDetector, plane_detection
from .knowledge import KnowledgeBase, builtin_vocabulary, load_kb, save_kb
from .pipeline import RunReport, evaluate_against_truth, run_generic, run_specific
from .pointcloud import PointCloud, load_cloud, save_cloud
from .rules import evaluate_fixpoint, parse_rules
from .scenegen import default_scene_spec, generate_scene

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "DetectionConfig", "KnowledgeBase", "PlaneDetectionArgs", "PlaneDetector",
    "PointCloud", "RunReport", "builtin_vocabulary", "default_scene_spec", "evaluate_against_truth",
    "evaluate_fixpoint", "generate_scene", "load_cloud", "load_kb", "parse_rules", "plane_detection",
    "run_generic", "run_specific", "save_cloud", "save_kb",
]
