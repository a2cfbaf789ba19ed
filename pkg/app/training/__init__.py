from app.training.checkpoint import (
    CheckpointBundle,
    bundle_from_model,
    load_bundle,
    load_state,
    model_from_bundle,
    save_bundle,
)
from app.training.data import PreparedSplit, prepare_split
from app.training.groups import (
    PERCEPTION_EXCLUSIVE,
    STAGE_TRAINABLE,
    group_digest,
    grouped_parameters,
    parameter_group,
    set_trainable,
)
from app.training.lora import LoRALinear, apply_lora, has_lora, merge_lora
from app.training.loop import StageResult, lr_lambda, run_stage
from app.training.objective import STAGE_COMPONENTS, StepLosses, compute_components, total_loss
from app.training.pretrain import pretrain_toy_vlm
from app.training.transfer import ALL_POLICIES, TransferPolicy, init_from_pretrained

__all__ = [
    "ALL_POLICIES",
    "PERCEPTION_EXCLUSIVE",
    "STAGE_COMPONENTS",
    "STAGE_TRAINABLE",
    "CheckpointBundle",
    "LoRALinear",
    "PreparedSplit",
    "StageResult",
    "StepLosses",
    "TransferPolicy",
    "apply_lora",
    "bundle_from_model",
    "compute_components",
    "group_digest",
    "grouped_parameters",
    "has_lora",
    "init_from_pretrained",
    "load_bundle",
    "load_state",
    "lr_lambda",
    "merge_lora",
    "model_from_bundle",
    "parameter_group",
    "prepare_split",
    "pretrain_toy_vlm",
    "run_stage",
    "save_bundle",
    "set_trainable",
    "total_loss",
]
