from app.storage.checkpoints import CheckpointFile, checkpoint_paths, read_checkpoint, write_checkpoint
from app.storage.curves import CURVE_SUFFIX, read_loss_curve, write_loss_curves
from app.storage.datasets import read_scene_records, write_scene_records
from app.storage.reports import read_json, read_report, write_report

__all__ = [
    "CURVE_SUFFIX",
    "CheckpointFile",
    "checkpoint_paths",
    "read_checkpoint",
    "read_json",
    "read_loss_curve",
    "read_report",
    "read_scene_records",
    "write_checkpoint",
    "write_loss_curves",
    "write_report",
    "write_scene_records",
]
