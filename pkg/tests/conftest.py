from __future__ import annotations

import pytest
import torch

from app.decoder import DecoderModel
from app.models import DecoderConfig, ExperimentConfig, LayoutConfig, StageConfig, StageName, WorldConfig
from app.scene import TEMPLATE_WORDS, generate_scene
from app.tokens import SequenceLayout, build_vocab, compute_plan_anchors
from app.training import prepare_split

N_SCENES = 6


@pytest.fixture
def world() -> WorldConfig:
    return WorldConfig(
        grid_hw=(4, 4),
        grid_channels=4,
        horizon=3,
        lane_points=4,
        n_objects_range=(0, 2),
        n_lanes_range=(1, 2),
    )


@pytest.fixture
def layout_cfg() -> LayoutConfig:
    return LayoutConfig(n_det=2, n_lane=2, n_text_max=14)


@pytest.fixture
def decoder_cfg() -> DecoderConfig:
    return DecoderConfig(d_model=16, n_heads=2, n_layers=2, n_mixed=1, d_ffn=32)


@pytest.fixture
def layout(layout_cfg, world) -> SequenceLayout:
    return SequenceLayout.from_config(layout_cfg, world)


@pytest.fixture
def vocab():
    return build_vocab(TEMPLATE_WORDS)


@pytest.fixture
def scenes(world):
    return [generate_scene(seed, world) for seed in range(N_SCENES)]


@pytest.fixture
def anchors(scenes, world):
    return compute_plan_anchors(scenes, world)


@pytest.fixture
def split(scenes, world, layout, vocab, anchors):
    return prepare_split(scenes, world, layout, vocab, anchors)


@pytest.fixture
def split64(split):
    return split.to(torch.float64)


@pytest.fixture
def make_model(decoder_cfg, layout, world, vocab, anchors):
    def build(cfg: DecoderConfig | None = None, seed: int = 0, dtype: torch.dtype = torch.float32) -> DecoderModel:
        model = DecoderModel(cfg or decoder_cfg, layout, world, len(vocab), seed=seed).to(dtype)
        model.set_plan_anchors(anchors)
        return model.eval()

    return build


@pytest.fixture
def model(make_model) -> DecoderModel:
    return make_model()


@pytest.fixture
def model64(make_model) -> DecoderModel:
    return make_model(dtype=torch.float64)


@pytest.fixture
def experiment(tmp_path, world, layout_cfg, decoder_cfg) -> ExperimentConfig:
    """A complete pipeline small enough to train in seconds."""
    stage = {"steps": 2, "batch_size": 2, "log_every": 0}
    return ExperimentConfig(
        world=world,
        model=decoder_cfg,
        layout=layout_cfg,
        stages=(
            StageConfig(stage=StageName.PRETRAIN_PERC_LANG, **stage),
            StageConfig(stage=StageName.PLAN_ADAPT, **stage),
            StageConfig(stage=StageName.JOINT, **stage),
        ),
        pretrain={"steps": 2, "batch_size": 2, "log_every": 0},
        data={"n_train": 4, "n_val": 2, "n_test": 2, "val_seed": 100, "test_seed": 200},
        bench={"n_runs": 10, "warmup": 10},
        output_dir=tmp_path / "runs",
    )
