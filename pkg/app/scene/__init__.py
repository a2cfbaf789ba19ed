from app.scene.dataset import build_split, load_split, scene_from_record, scene_to_record
from app.scene.generator import TEMPLATE_WORDS, caption_scene, generate_scene
from app.scene.planner import oracle_plan, plan_trajectory
from app.scene.raster import cell_centers, rasterize
from app.scene.types import Box, EgoState, GridFeatures, SceneSample

__all__ = [
    "TEMPLATE_WORDS",
    "Box",
    "EgoState",
    "GridFeatures",
    "SceneSample",
    "build_split",
    "caption_scene",
    "cell_centers",
    "generate_scene",
    "load_split",
    "oracle_plan",
    "plan_trajectory",
    "rasterize",
    "scene_from_record",
    "scene_to_record",
]
