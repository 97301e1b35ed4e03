"""Small encoder-decoder transformer with a KV cache for fast CPU sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    ff: int = 256
    dropout: float = 0.1
    max_len: int = 512
    nucleus_p: float = 0.85

    def to_dict(self) -> dict:
        return asdict(self)


class Attention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, query, key_value, *, key_padding_mask=None, causal=False,
                cache: dict | None = None):
        q = self._split(self.q(query))
        if cache is not None and "k" in cache and key_value is None:
            # cross-attention with precomputed memory
            k, v = cache["k"], cache["v"]
        else:
            k = self._split(self.k(key_value))
            v = self._split(self.v(key_value))
            if cache is not None and key_value is query:
                # self-attention cache: append the new step
                if "k" in cache:
                    k = torch.cat([cache["k"], k], dim=2)
                    v = torch.cat([cache["v"], v], dim=2)
                cache["k"], cache["v"] = k, v
            elif cache is not None:
                cache["k"], cache["v"] = k, v
        mask = None
        if key_padding_mask is not None:
            # key_padding_mask holds True for real tokens; sdpa wants True = attend
            mask = key_padding_mask[:, None, None, :]
        attended = F.scaled_dot_product_attention(
            q, k, v, attn_mask=mask, is_causal=causal and cache is None)
        b, _, t, _ = attended.shape
        merged = attended.transpose(1, 2).reshape(b, t, -1)
        return self.out(merged)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn = Attention(cfg.d_model, cfg.n_heads)
        self.ff = nn.Sequential(nn.Linear(cfg.d_model, cfg.ff), nn.GELU(),
                                nn.Linear(cfg.ff, cfg.d_model))
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, pad_mask):
        h = self.norm1(x)
        x = x + self.drop(self.attn(h, h, key_padding_mask=pad_mask))
        x = x + self.drop(self.ff(self.norm2(x)))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = Attention(cfg.d_model, cfg.n_heads)
        self.cross_attn = Attention(cfg.d_model, cfg.n_heads)
        self.ff = nn.Sequential(nn.Linear(cfg.d_model, cfg.ff), nn.GELU(),
                                nn.Linear(cfg.ff, cfg.d_model))
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, memory, memory_pad_mask, caches: dict | None = None):
        self_cache = cross_cache = None
        if caches is not None:
            self_cache = caches.setdefault("self", {})
            cross_cache = caches.setdefault("cross", {})
        h = self.norm1(x)
        x = x + self.drop(self.self_attn(h, h, causal=True, cache=self_cache))
        h = self.norm2(x)
        if cross_cache is not None and "k" in cross_cache:
            attended = self.cross_attn(h, None, key_padding_mask=memory_pad_mask,
                                       cache=cross_cache)
        else:
            attended = self.cross_attn(h, memory, key_padding_mask=memory_pad_mask,
                                       cache=cross_cache)
        x = x + self.drop(attended)
        x = x + self.drop(self.ff(self.norm3(x)))
        return x


class Seq2Seq(nn.Module):
    """Encoder-decoder over token ids. The pad token doubles as the decoder
    start token; padding is excluded via attention masks and the loss mask."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.pos_emb = nn.Embedding(config.max_len, config.d_model)
        self.encoder = nn.ModuleList(EncoderLayer(config)
                                     for _ in range(config.encoder_layers))
        self.decoder = nn.ModuleList(DecoderLayer(config)
                                     for _ in range(config.decoder_layers))
        self.enc_norm = nn.LayerNorm(config.d_model)
        self.dec_norm = nn.LayerNorm(config.d_model)
        self.head = nn.Linear(config.d_model, config.vocab_size)
        self.drop = nn.Dropout(config.dropout)
        self.scale = math.sqrt(config.d_model)

    def _embed(self, ids, offset: int = 0):
        positions = torch.arange(offset, offset + ids.shape[1], device=ids.device)
        return self.drop(self.tok_emb(ids) * self.scale + self.pos_emb(positions))

    def encode(self, src, src_pad_mask):
        x = self._embed(src)
        for layer in self.encoder:
            x = layer(x, src_pad_mask)
        return self.enc_norm(x)

    def decode(self, tgt_in, memory, memory_pad_mask, *, caches=None, offset=0):
        if caches is not None and tgt_in.shape[1] != 1:
            raise ValueError("cached decoding feeds one token per step")
        x = self._embed(tgt_in, offset=offset)
        for i, layer in enumerate(self.decoder):
            layer_caches = caches[i] if caches is not None else None
            x = layer(x, memory, memory_pad_mask, caches=layer_caches)
        return self.head(self.dec_norm(x))

    def forward(self, src, src_pad_mask, tgt_in):
        memory = self.encode(src, src_pad_mask)
        return self.decode(tgt_in, memory, src_pad_mask)

    def new_caches(self):
        return [dict() for _ in range(self.config.decoder_layers)]
