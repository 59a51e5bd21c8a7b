"""Model hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass


class ModelError(ValueError):
    """Invalid model configuration or input."""


class NumericsError(ArithmeticError):
    """Non-finite values encountered during training/optimization."""


@dataclass(frozen=True)
class ModelConfig:
    """Causal character-transformer shape.

    Defaults give the full model: 6 layers, 6 heads, 384-dim embeddings,
    256-token context, dropout 0.2, 64-dim heads, weight-tied output head.
    """

    vocab_size: int
    n_layer: int = 6
    n_head: int = 6
    n_embd: int = 384
    block_size: int = 256
    dropout: float = 0.2

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ModelError(f"vocab_size must be >= 1, got {self.vocab_size}")
        if self.n_embd % self.n_head:
            raise ModelError(
                f"n_embd={self.n_embd} not divisible by n_head={self.n_head}"
            )
        if not (0.0 <= self.dropout < 1.0):
            raise ModelError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.block_size < 1 or self.n_layer < 1:
            raise ModelError("block_size and n_layer must be positive")

    @property
    def head_dim(self) -> int:
        return self.n_embd // self.n_head

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)
