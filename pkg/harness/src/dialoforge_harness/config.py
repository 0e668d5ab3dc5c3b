"""Harness configuration and errors."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

PIPELINE_MAX_LEN = 512
VOCAB_LIMIT = 100_000


class HarnessError(ValueError):
    pass


class VocabOverflow(HarnessError):
    pass


class ShapeError(HarnessError):
    pass


class GradMismatch(HarnessError):
    pass


@dataclass(frozen=True)
class HarnessConfig:
    layers: int = 2
    hidden: int = 128
    heads: int = 4
    ffn_mult: int = 4
    max_len: int = 512
    batch: int = 32
    lr_pretrain: float = 1e-5
    lr_finetune: float = 2e-5
    dropout: float = 0.2
    # None scales warmup to 5% of total steps, replacing the absolute
    # step count used at full-corpus scale
    warmup_steps: int | None = None
    epochs: int = 5
    patience: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise HarnessError(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if not (8 <= self.max_len <= PIPELINE_MAX_LEN):
            raise HarnessError(f"max_len must be in [8, {PIPELINE_MAX_LEN}], got {self.max_len}")
        if not (0.0 <= self.dropout < 1.0):
            raise HarnessError(f"dropout must be in [0, 1), got {self.dropout}")
        for name in ("layers", "hidden", "heads", "batch", "epochs"):
            if getattr(self, name) < 1:
                raise HarnessError(f"{name} must be >= 1")

    def to_record(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_record(rec: dict) -> "HarnessConfig":
        return HarnessConfig(**rec)

    @staticmethod
    def load(path: str | Path) -> "HarnessConfig":
        return HarnessConfig.from_record(json.loads(Path(path).read_text("utf-8")))
