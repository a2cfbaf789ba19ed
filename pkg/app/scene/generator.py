from __future__ import annotations

import logging
import math

import numpy as np

from app.errors import SceneGenerationError
from app.models import COMMANDS, Command, WorldConfig
from app.scene.geometry import disc_hits_box, point_box_distance
from app.scene.planner import plan_trajectory
from app.scene.types import Box, EgoState, Lane, SceneSample

log = logging.getLogger(__name__)

MAX_PLACEMENT_ATTEMPTS = 1000

# (w_min, w_max, l_min, l_max) per class: car, pedestrian, cyclist.
CLASS_EXTENTS = (
    (0.8, 1.0, 1.6, 2.0),
    (0.3, 0.5, 0.3, 0.5),
    (0.4, 0.6, 1.0, 1.4),
)

COUNT_WORDS = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine")
COMMAND_PHRASES = {
    Command.LEFT: ("turns", "left"),
    Command.STRAIGHT: ("goes", "straight"),
    Command.RIGHT: ("turns", "right"),
}
SLOWDOWN_PHRASE = ("and", "slows", "down")

TEMPLATE_WORDS: frozenset[str] = frozenset(
    {"there", "are", "objects", "ahead", "ego", "many"}
    | set(COUNT_WORDS)
    | {w for phrase in COMMAND_PHRASES.values() for w in phrase}
    | set(SLOWDOWN_PHRASE)
)


def generate_scene(seed: int, cfg: WorldConfig) -> SceneSample:
    rng = np.random.default_rng(seed)
    E = cfg.world_extent
    ego = EgoState(
        x=float(rng.uniform(-E / 4, E / 4)),
        y=float(rng.uniform(-E / 4, E / 4)),
        heading=float(rng.uniform(-math.pi / 6, math.pi / 6)),
        speed=float(rng.uniform(*cfg.speed_range)),
        acceleration=float(rng.uniform(-0.5, 0.5)),
        yaw_rate=float(rng.uniform(-0.1, 0.1)),
        command=COMMANDS[int(rng.integers(len(COMMANDS)))],
    )
    lo, hi = cfg.n_lanes_range
    lanes = tuple(_sample_lane(rng, ego, cfg) for _ in range(int(rng.integers(lo, hi + 1))))

    lo, hi = cfg.n_objects_range
    objects: list[Box] = []
    for i in range(int(rng.integers(lo, hi + 1))):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            candidate = _sample_box(rng, cfg)
            if _acceptable(candidate, objects, ego, lanes, cfg):
                objects.append(candidate)
                break
        else:
            raise SceneGenerationError(
                f"Could not place object {i} of scene {seed} after "
                f"{MAX_PLACEMENT_ATTEMPTS} attempts; the world config is too dense"
            )

    waypoints, slowed = plan_trajectory(ego, objects, lanes, cfg)
    scene = SceneSample(
        objects=tuple(objects),
        lanes=lanes,
        ego=ego,
        gt_trajectory=tuple((float(x), float(y)) for x, y in waypoints),
        caption=(),
        seed=seed,
    )
    return _with_caption(scene, slowed)


def caption_scene(scene: SceneSample) -> list[str]:
    """Fill the caption template; the slowdown clause is read off the trajectory."""
    return _caption_words(len(scene.objects), scene.ego.command, _slows_down(scene))


def _caption_words(n_objects: int, command: Command, slowed: bool) -> list[str]:
    count = COUNT_WORDS[n_objects] if n_objects < len(COUNT_WORDS) else "many"
    words = ["there", "are", count, "objects", "ahead", "ego", *COMMAND_PHRASES[command]]
    if slowed:
        words.extend(SLOWDOWN_PHRASE)
    return words


def _with_caption(scene: SceneSample, slowed: bool) -> SceneSample:
    words = _caption_words(len(scene.objects), scene.ego.command, slowed)
    return SceneSample(
        objects=scene.objects,
        lanes=scene.lanes,
        ego=scene.ego,
        gt_trajectory=scene.gt_trajectory,
        caption=tuple(words),
        seed=scene.seed,
    )


def _slows_down(scene: SceneSample) -> bool:
    traj = scene.trajectory_array()
    if len(traj) == 0:
        return False
    pts = np.vstack([np.zeros((1, 2)), traj])
    chords = np.hypot(*np.diff(pts, axis=0).T)
    if chords[0] <= 1e-9:
        return True
    return len(chords) > 1 and chords[0] - chords[-1] > 1e-6


def _sample_lane(rng: np.random.Generator, ego: EgoState, cfg: WorldConfig) -> Lane:
    E = cfg.world_extent
    theta = ego.heading + rng.uniform(-0.3, 0.3)
    d = np.array([math.cos(theta), math.sin(theta)])
    n = np.array([-d[1], d[0]])
    center = np.clip(ego.position + rng.uniform(-E / 2, E / 2) * n, -0.9 * E, 0.9 * E)
    half = rng.uniform(0.5 * E, 0.9 * E)
    for axis in range(2):
        if abs(d[axis]) > 1e-12:
            half = min(half, (E - abs(center[axis])) / abs(d[axis]))
    ts = np.linspace(-half, half, cfg.lane_points)
    points = np.clip(center + ts[:, None] * d, -E, E)
    return tuple((float(x), float(y)) for x, y in points)


def _sample_box(rng: np.random.Generator, cfg: WorldConfig) -> Box:
    cls = int(rng.integers(cfg.n_classes))
    w_lo, w_hi, l_lo, l_hi = CLASS_EXTENTS[cls % len(CLASS_EXTENTS)]
    w = float(rng.uniform(w_lo, w_hi))
    length = float(rng.uniform(l_lo, l_hi))
    margin = cfg.world_extent - math.hypot(w, length) / 2
    return Box(
        x=float(rng.uniform(-margin, margin)),
        y=float(rng.uniform(-margin, margin)),
        w=w,
        l=length,
        heading=float(rng.uniform(-math.pi, math.pi)),
        cls=cls,
        speed=float(rng.uniform(0.0, 2.0)),
    )


def _acceptable(
    candidate: Box, placed: list[Box], ego: EgoState, lanes: tuple[Lane, ...], cfg: WorldConfig,
) -> bool:
    start = ego.position[None, :]
    if point_box_distance(start, candidate)[0] <= cfg.ego_radius + cfg.safety_margin:
        return False
    for other in placed:
        if math.hypot(candidate.x - other.x, candidate.y - other.y) <= candidate.radius + other.radius:
            return False
    objects = [*placed, candidate]
    waypoints, _ = plan_trajectory(ego, objects, lanes, cfg)
    world = ego.to_world(waypoints)
    return not any(disc_hits_box(world, cfg.ego_radius, obj).any() for obj in objects)
