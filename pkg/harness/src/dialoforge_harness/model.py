"""Bidirectional transformer encoder with reconstruction and span heads.

Assembled from torch primitives (no transformers library, no pretrained
weights): learned token + position embeddings, pre-LN multi-head
self-attention blocks, a vocabulary head for masked reconstruction, and two
linear heads producing start/end position distributions for span extraction.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .config import HarnessConfig, ShapeError
from .data import Vocab

NEG_INF = -1e9


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, hidden: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = hidden // heads
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.out = nn.Linear(hidden, hidden)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        b, n, h = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        shape = (b, n, self.heads, self.head_dim)
        q = q.view(shape).transpose(1, 2)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~pad_mask[:, None, None, :], NEG_INF)
        attn = self.drop(torch.softmax(scores, dim=-1))
        ctx = (attn @ v).transpose(1, 2).reshape(b, n, h)
        return self.out(ctx)


class EncoderBlock(nn.Module):
    def __init__(self, cfg: HarnessConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.hidden)
        self.attn = MultiHeadSelfAttention(cfg.hidden, cfg.heads, cfg.dropout)
        self.ln2 = nn.LayerNorm(cfg.hidden)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.hidden, cfg.ffn_mult * cfg.hidden),
            nn.GELU(),
            nn.Linear(cfg.ffn_mult * cfg.hidden, cfg.hidden),
        )
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        x = x + self.drop(self.attn(self.ln1(x), pad_mask))
        x = x + self.drop(self.ffn(self.ln2(x)))
        return x


class HarnessModel(nn.Module):
    """Encoder plus both task heads; pre-training uses the vocabulary head,
    fine-tuning the span heads."""

    def __init__(self, cfg: HarnessConfig, vocab_size: int):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.tok_emb = nn.Embedding(vocab_size, cfg.hidden)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.hidden)
        self.drop = nn.Dropout(cfg.dropout)
        self.blocks = nn.ModuleList(EncoderBlock(cfg) for _ in range(cfg.layers))
        self.ln_f = nn.LayerNorm(cfg.hidden)
        self.lm_head = nn.Linear(cfg.hidden, vocab_size)
        self.start_head = nn.Linear(cfg.hidden, 1)
        self.end_head = nn.Linear(cfg.hidden, 1)

    def encode(
        self,
        ids: torch.Tensor,
        pad_mask: torch.Tensor,
        pos_offset: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """pos_offset shifts each row's position ids; pre-training randomizes
        it so the encoder tolerates the downstream question prefix moving the
        dialogue to later positions."""
        b, n = ids.shape
        if n > self.cfg.max_len:
            raise ShapeError(f"sequence length {n} exceeds max_len {self.cfg.max_len}")
        pos = torch.arange(n, device=ids.device)[None, :]
        if pos_offset is not None:
            pos = pos + pos_offset[:, None]
            if int(pos.max()) >= self.cfg.max_len:
                raise ShapeError("position offset pushes sequence past max_len")
        x = self.drop(self.tok_emb(ids) + self.pos_emb(pos))
        for block in self.blocks:
            x = block(x, pad_mask)
        return self.ln_f(x)

    def reconstruction_logits(self, ids, pad_mask, pos_offset=None) -> torch.Tensor:
        return self.lm_head(self.encode(ids, pad_mask, pos_offset))

    def span_logits(self, ids, pad_mask, emit_mask) -> tuple[torch.Tensor, torch.Tensor]:
        """Start/end logits with non-emitting positions masked out."""
        h = self.encode(ids, pad_mask)
        start = self.start_head(h).squeeze(-1)
        end = self.end_head(h).squeeze(-1)
        start = start.masked_fill(~emit_mask, NEG_INF)
        end = end.masked_fill(~emit_mask, NEG_INF)
        return start, end


def masked_reconstruction_loss(
    logits: torch.Tensor, target: torch.Tensor, loss_mask: torch.Tensor
) -> torch.Tensor:
    """Cross-entropy averaged over loss_mask=1 positions only; 0 when the
    batch has no masked positions."""
    if logits.shape[:2] != target.shape or target.shape != loss_mask.shape:
        raise ShapeError(
            f"logits {tuple(logits.shape)} vs target {tuple(target.shape)} "
            f"vs loss_mask {tuple(loss_mask.shape)}"
        )
    flat = loss_mask.reshape(-1)
    if not bool(flat.any()):
        return torch.zeros((), dtype=logits.dtype, device=logits.device)
    picked_logits = logits.reshape(-1, logits.shape[-1])[flat]
    picked_target = target.reshape(-1)[flat]
    return nn.functional.cross_entropy(picked_logits, picked_target)


def span_loss(
    start_logits: torch.Tensor,
    end_logits: torch.Tensor,
    gold_start: torch.Tensor,
    gold_end: torch.Tensor,
) -> torch.Tensor:
    """Mean of start and end cross-entropy over window positions."""
    loss_s = nn.functional.cross_entropy(start_logits, gold_start)
    loss_e = nn.functional.cross_entropy(end_logits, gold_end)
    return 0.5 * (loss_s + loss_e)


def emission_probs(
    start_logits: torch.Tensor,
    end_logits: torch.Tensor,
    window,
) -> tuple[list[float], list[float]]:
    """Project one window's logits onto the [No-Answer] + dialogue-token
    emission space as normalized probabilities."""
    idx = [0] + list(range(window.dialogue_offset, window.dialogue_offset + window.n_dialogue))
    index = torch.tensor(idx, device=start_logits.device)
    p_start = torch.softmax(start_logits.index_select(0, index), dim=-1)
    p_end = torch.softmax(end_logits.index_select(0, index), dim=-1)
    return p_start.tolist(), p_end.tolist()


def build_model(cfg: HarnessConfig, vocab: Vocab, seed: int | None = None) -> HarnessModel:
    if seed is None:
        seed = cfg.seed
    torch.manual_seed(seed)
    return HarnessModel(cfg, len(vocab))
