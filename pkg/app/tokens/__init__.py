from app.tokens.batch import SequenceBatch, collate
from app.tokens.sequence import (
    EGO_STATUS_DIM,
    MaskSpec,
    SequenceLayout,
    TokenSequence,
    assemble_sequence,
    build_backbone_mask,
    build_group_mask,
    compute_plan_anchors,
    ego_status_vector,
    sequences_for,
)
from app.tokens.vocab import BOS, EOS, PAD, SPECIAL_TOKENS, Vocab, build_vocab, decode_text, encode_text

__all__ = [
    "BOS",
    "EGO_STATUS_DIM",
    "EOS",
    "PAD",
    "SPECIAL_TOKENS",
    "MaskSpec",
    "SequenceBatch",
    "SequenceLayout",
    "TokenSequence",
    "Vocab",
    "assemble_sequence",
    "build_backbone_mask",
    "build_group_mask",
    "build_vocab",
    "collate",
    "compute_plan_anchors",
    "decode_text",
    "ego_status_vector",
    "encode_text",
    "sequences_for",
]
