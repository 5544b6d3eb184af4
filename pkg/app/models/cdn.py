from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from app.models.sequence import Vocabulary

DecoderMode = Literal["argmax", "sampling"]
KLNormalization = Literal["token", "molecule"]

CHECKPOINT_FORMAT_VERSION = 1


class ModelConfig(BaseModel):
    """Hyperparameters of the conditional diversity network"""

    max_len: int = Field(50, gt=0)
    embed_dim: int = Field(128, gt=0)
    filter_widths: List[int] = [3, 4, 5, 6]
    filters_per_width: int = Field(128, gt=0)
    latent_dim: int = Field(300, gt=0)
    lstm_units: int = Field(150, gt=0)
    batch_size: int = Field(64, gt=0)
    initial_learning_rate: float = Field(0.001, ge=0.0)
    lr_decay_rate: float = Field(0.95, gt=0.0, le=1.0)
    kl_start_weight: float = Field(0.0, ge=0.0, le=1.0)
    kl_ramp_steps: Optional[int] = Field(None, ge=0)  # None: 10% of the step budget
    early_stop_patience: int = Field(5, gt=0)
    max_epochs: int = Field(50, gt=0)
    max_steps: Optional[int] = Field(None, gt=0)
    # KL divisor: target tokens in the batch (as reconstruction), or molecules
    kl_normalization: KLNormalization = "token"
    seed: int = 0

    @field_validator("filter_widths", mode="before")
    @classmethod
    def parse_widths(cls, value):
        if isinstance(value, str):
            value = [int(part) for part in value.split(",") if part.strip()]
        return value

    @model_validator(mode="after")
    def check_widths(self) -> "ModelConfig":
        if not self.filter_widths:
            raise ValueError("filter_widths must not be empty")
        for width in self.filter_widths:
            if width <= 0 or width > self.max_len + 2:
                raise ValueError(f"filter width {width} must lie in [1, max_len + 2]")
        return self

    @property
    def kl_weight_schedule(self) -> Tuple[float, Optional[int]]:
        return self.kl_start_weight, self.kl_ramp_steps

    @property
    def total_filters(self) -> int:
        return len(self.filter_widths) * self.filters_per_width


class DiversityConfig(BaseModel):
    """Sampling controls for prototype-conditioned generation"""

    diversity: float = Field(1.0, gt=0.0)
    k: int = Field(1, gt=0)
    decoder_mode: DecoderMode = "argmax"
    seed: int = 0


@dataclass(frozen=True)
class LatentGaussian:
    """Per-molecule latent parameters; leading axes may batch molecules"""

    mu: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.log_sigma.shape:
            raise ValueError(f"mu shape {self.mu.shape} != log_sigma shape {self.log_sigma.shape}")
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("mu must be finite")
        # -inf is a degenerate zero spread, +inf and NaN are not allowed
        if np.any(np.isnan(self.log_sigma)) or np.any(self.log_sigma == np.inf):
            raise ValueError("log_sigma must not be NaN or +inf")

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    def row(self, i: int) -> "LatentGaussian":
        return LatentGaussian(self.mu[i], self.log_sigma[i])


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float  # mean masked cross-entropy per token
    kl: float  # nats per token or per molecule, see ModelConfig.kl_normalization
    kl_weight: float
    total: float
    tokens: int = 0


@dataclass
class EpochRecord:
    epoch: int
    steps: int
    learning_rate: float
    kl_weight: float
    train_total: float
    train_reconstruction: float
    train_kl: float
    validation_reconstruction: float


@dataclass
class TrainingMetadata:
    epoch: int = 0
    steps: int = 0
    best_validation_loss: float = float("inf")
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "steps": self.steps,
            "best_validation_loss": self.best_validation_loss,
            "stopped_early": self.stopped_early,
        }


@dataclass
class Checkpoint:
    config: ModelConfig
    vocabulary: Vocabulary
    parameters: Dict[str, np.ndarray]
    metadata: TrainingMetadata = field(default_factory=TrainingMetadata)
    history: List[EpochRecord] = field(default_factory=list)
    format_version: int = CHECKPOINT_FORMAT_VERSION
