from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from app.decoder.layers import DecoderLayer, LayerContext, RoleRoutes
from app.decoder.model import INIT_STD
from app.models import DecoderConfig, WorldConfig
from app.tokens import SequenceBatch


class ToyVLM(nn.Module):
    """Plain causal decoder over [IMG tokens; caption], the pretrained-weight source.

    Parameter names mirror DecoderModel (``layers.{i}.attn.w_q``, ``layers.{i}.ffn.fc_in``, ...)
    so transfer is a name-wise copy.
    """

    def __init__(
        self, cfg: DecoderConfig, world: WorldConfig, vocab_size: int, n_text_max: int, seed: int = 0,
    ) -> None:
        super().__init__()
        self.cfg = cfg
        self.world = world
        self.vocab_size = vocab_size
        self.n_text_max = n_text_max
        d = cfg.d_model
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.raster_embed = nn.Linear(world.grid_channels, d)
            self.token_embed = nn.Embedding(vocab_size, d)
            self.layers = nn.ModuleList(DecoderLayer(cfg, mixed=False) for _ in range(cfg.n_layers))
            self.final_norm = nn.RMSNorm(d)
            for module in self.modules():
                if isinstance(module, (nn.Linear, nn.Embedding)):
                    nn.init.normal_(module.weight, std=INIT_STD)
                if isinstance(module, nn.Linear) and module.bias is not None:
                    nn.init.zeros_(module.bias)

        length = world.n_cells + n_text_max
        self.register_buffer("causal_mask", torch.ones(length, length, dtype=torch.bool).tril(), persistent=False)
        self.register_buffer("rotary_pos", torch.arange(length), persistent=False)
        self.routes = RoleRoutes.plain(length)

    def forward(self, batch: SequenceBatch) -> torch.Tensor:
        """Text logits (B, n_text_max, V); position t predicts token t + 1."""
        states = torch.cat([self.raster_embed(batch.img_features), self.token_embed(batch.text_ids)], dim=1)
        ctx = LayerContext(
            backbone_mask=self.causal_mask,
            group_mask=self.causal_mask,
            rotary_pos=self.rotary_pos,
            e3d=None,
            routes=self.routes,
        )
        for layer in self.layers:
            states = layer(states, ctx)
        text = self.final_norm(states[:, -self.n_text_max:])
        return F.linear(text, self.token_embed.weight)

    def text_logits(self, batch: SequenceBatch) -> torch.Tensor:
        return self(batch)
