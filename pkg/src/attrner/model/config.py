from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from ..errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    """Encoder dimensions and vocabulary sizes.

    Defaults are the desk-scale preset; :meth:`bert_base` gives the
    BERT-base widths (768 hidden, 12 heads, 12 layers).
    """

    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 64
    dropout_rate: float = 0.0
    token_vocab: int = 2
    pos_vocab: int = 2
    label_vocab: int = 1
    tag_vocab: int = 3

    def __post_init__(self):
        for name in ("d_model", "n_heads", "n_layers", "d_ff", "max_len", "token_vocab",
                     "pos_vocab", "label_vocab", "tag_vocab"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def num_positions(self) -> int:
        # classification slot + text pseudo-token + max_len tokens
        return self.max_len + 2

    def with_vocab(self, vocab) -> "ModelConfig":
        return replace(
            self,
            token_vocab=vocab.num_tokens,
            pos_vocab=vocab.num_pos,
            label_vocab=max(1, vocab.num_labels),
            tag_vocab=vocab.scheme.num_labels,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def tiny(cls, **kw) -> "ModelConfig":
        base = dict(d_model=8, n_heads=2, n_layers=2, d_ff=12, max_len=8)
        base.update(kw)
        return cls(**base)

    @classmethod
    def bert_base(cls, **kw) -> "ModelConfig":
        base = dict(d_model=768, n_heads=12, n_layers=12, d_ff=3072, max_len=512, dropout_rate=0.1)
        base.update(kw)
        return cls(**base)
