"""Run configuration: flat key/value file format mirroring the field names."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

ABLATION_MODES = ("full", "graph_only", "seq_only")


@dataclass
class RunConfig:
    seed: int = 0
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    lambda_geo: float = 0.1
    pool_mode: str = "mean"
    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15
    ablation: str = "full"
    alphabet: str = "amino"
    # architecture sizes
    gin_layers: int = 3
    gin_hidden: int = 64
    readout: str = "sum"
    embed_dim: int = 64
    tx_layers: int = 2
    tx_heads: int = 4
    ff_hidden: int = 128
    max_len: int = 128
    window_half_width: int = 8
    conv_channels: int = 32
    conv_kernel: int = 3
    lstm_hidden: int = 32
    geo_pairs: int = 32
    finetune_seq: bool = True

    def validate(self) -> None:
        positive = ("lr", "batch_size", "max_epochs", "patience", "gin_layers", "gin_hidden", "embed_dim", "tx_layers", "tx_heads", "ff_hidden", "max_len", "window_half_width", "conv_channels", "conv_kernel", "lstm_hidden", "geo_pairs")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config: {name} must be positive, got {getattr(self, name)}")
        if self.lambda_geo < 0:
            raise ValueError(f"config: lambda_geo must be >= 0, got {self.lambda_geo}")
        if abs(self.train_frac + self.val_frac + self.test_frac - 1.0) > 1e-9:
            raise ValueError(f"config: split fractions sum to {self.train_frac + self.val_frac + self.test_frac}, expected 1")
        if self.ablation not in ABLATION_MODES:
            raise ValueError(f"config: ablation must be one of {ABLATION_MODES}, got {self.ablation!r}")
        if self.pool_mode not in ("mean", "attention"):
            raise ValueError(f"config: pool_mode must be 'mean' or 'attention', got {self.pool_mode!r}")
        if self.readout not in ("sum", "mean"):
            raise ValueError(f"config: readout must be 'sum' or 'mean', got {self.readout!r}")
        if self.alphabet not in ("amino", "nucleotide"):
            raise ValueError(f"config: alphabet must be 'amino' or 'nucleotide', got {self.alphabet!r}")
        if self.embed_dim % self.tx_heads != 0:
            raise ValueError(f"config: embed_dim {self.embed_dim} not divisible by tx_heads {self.tx_heads}")
        if self.conv_kernel % 2 == 0:
            raise ValueError(f"config: conv_kernel must be odd, got {self.conv_kernel}")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_frac, self.val_frac, self.test_frac)

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @staticmethod
    def from_dict(mapping: dict) -> "RunConfig":
        known = {f.name: f for f in fields(RunConfig)}
        values = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ValueError(f"config: unknown key {key!r}")
            values[key] = _coerce(raw, known[key].type)
        cfg = RunConfig(**values)
        cfg.validate()
        return cfg

    @staticmethod
    def from_file(path: str | Path) -> "RunConfig":
        """Parse `key = value` lines; '#' starts a comment. Unknown keys reject."""
        mapping = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config {path}, line {lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            mapping[key] = value
        return RunConfig.from_dict(mapping)


def _coerce(raw, annotation):
    if isinstance(raw, str):
        ann = str(annotation)
        if "bool" in ann:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"config: bad boolean {raw!r}")
        if "int" in ann:
            return int(raw)
        if "float" in ann:
            return float(raw)
        return raw
    return raw
