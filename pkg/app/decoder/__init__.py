from app.decoder.layers import (
    DecoderLayer,
    FeedForward,
    LayerContext,
    MultiHeadAttention,
    RoleRoutes,
    backbone_attention,
    ffn_dispatch,
    group_self_attention,
)
from app.decoder.model import DecoderModel, ForwardTrace, Predictions, generate_text
from app.decoder.positional import E3DEncoder, e3d_embed, rotary_apply
from app.decoder.toy_vlm import ToyVLM

__all__ = [
    "DecoderLayer",
    "DecoderModel",
    "E3DEncoder",
    "FeedForward",
    "ForwardTrace",
    "LayerContext",
    "MultiHeadAttention",
    "Predictions",
    "RoleRoutes",
    "ToyVLM",
    "backbone_attention",
    "e3d_embed",
    "ffn_dispatch",
    "generate_text",
    "group_self_attention",
    "rotary_apply",
]
