from __future__ import annotations

import logging
from pathlib import Path

from app.errors import ConfigError
from app.models import COMMANDS, SceneRecord, WorldConfig
from app.scene.generator import generate_scene
from app.scene.types import Box, EgoState, SceneSample
from app.storage import read_scene_records, write_scene_records

log = logging.getLogger(__name__)


def scene_to_record(scene: SceneSample) -> SceneRecord:
    objects = [
        v for o in scene.objects
        for v in (o.x, o.y, o.w, o.l, o.heading, float(o.cls), o.speed)
    ]
    lanes: list[float] = []
    for lane in scene.lanes:
        lanes.append(float(len(lane)))
        lanes.extend(c for point in lane for c in point)
    e = scene.ego
    return SceneRecord(
        seed=scene.seed,
        objects=objects,
        lanes=lanes,
        ego=[e.x, e.y, e.heading, e.speed, e.acceleration, e.yaw_rate, float(COMMANDS.index(e.command))],
        gt_trajectory=[c for point in scene.gt_trajectory for c in point],
        caption=" ".join(scene.caption),
    )


def scene_from_record(record: SceneRecord) -> SceneSample:
    o = record.objects
    objects = tuple(
        Box(x=o[i], y=o[i + 1], w=o[i + 2], l=o[i + 3], heading=o[i + 4], cls=int(o[i + 5]), speed=o[i + 6])
        for i in range(0, len(o), 7)
    )
    lanes = []
    flat, i = record.lanes, 0
    while i < len(flat):
        k = int(flat[i])
        coords = flat[i + 1:i + 1 + 2 * k]
        lanes.append(tuple((coords[j], coords[j + 1]) for j in range(0, 2 * k, 2)))
        i += 1 + 2 * k
    x, y, heading, speed, accel, yaw_rate, command = record.ego
    t = record.gt_trajectory
    return SceneSample(
        objects=objects,
        lanes=tuple(lanes),
        ego=EgoState(x, y, heading, speed, accel, yaw_rate, COMMANDS[int(command)]),
        gt_trajectory=tuple((t[j], t[j + 1]) for j in range(0, len(t), 2)),
        caption=tuple(record.caption.split()),
        seed=record.seed,
    )


def build_split(n: int, base_seed: int, cfg: WorldConfig, path: Path | str) -> Path:
    if n < 1:
        raise ConfigError("a split needs at least one sample")
    path = Path(path)
    scenes = [generate_scene(base_seed + i, cfg) for i in range(n)]
    write_scene_records(path, (scene_to_record(s) for s in scenes))
    log.info("Wrote %d scenes (seeds %d..%d) to %s", n, base_seed, base_seed + n - 1, path)
    return path


def load_split(path: Path | str) -> list[SceneSample]:
    return [scene_from_record(r) for r in read_scene_records(Path(path))]
