from typing import Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from prosoref.common.constants import (
    HIDDEN_DIM,
    INPUT_DIM,
    KL_END_ITER,
    KL_PERIOD,
    KL_START_ITER,
    LATENT_DIM,
    LEARNING_RATE,
)
from prosoref.schemas.base import ArraySchema, BaseSchema

# encoder 7 -> H -> H -> 2D, decoder D -> H -> 7
PARAM_NAMES = (
    "enc_w1",
    "enc_b1",
    "enc_w2",
    "enc_b2",
    "enc_w3",
    "enc_b3",
    "dec_w1",
    "dec_b1",
    "dec_w2",
    "dec_b2",
)


def param_shapes(hidden: int, latent: int) -> dict[str, tuple[int, ...]]:
    return {
        "enc_w1": (INPUT_DIM, hidden),
        "enc_b1": (hidden,),
        "enc_w2": (hidden, hidden),
        "enc_b2": (hidden,),
        "enc_w3": (hidden, 2 * latent),
        "enc_b3": (2 * latent,),
        "dec_w1": (latent, hidden),
        "dec_b1": (hidden,),
        "dec_w2": (hidden, INPUT_DIM),
        "dec_b2": (INPUT_DIM,),
    }


class EncoderParams(ArraySchema):
    hidden: int = Field(default=HIDDEN_DIM, ge=1)
    latent: int = Field(default=LATENT_DIM, ge=1)
    arrays: dict[str, np.ndarray]

    @model_validator(mode="after")
    def check_arrays(self):
        expected = param_shapes(self.hidden, self.latent)
        if set(self.arrays) != set(expected):
            raise ValueError(f"parameters must be exactly {', '.join(PARAM_NAMES)}")
        for name, shape in expected.items():
            array = self.arrays[name]
            if array.shape != shape:
                raise ValueError(f"{name} has shape {array.shape}, expected {shape}")
            if not np.all(np.isfinite(array)):
                raise ValueError(f"{name} has non-finite values")
        return self

    @field_validator("arrays", mode="before")
    @classmethod
    def as_arrays(cls, value):
        return {name: np.asarray(array, dtype=np.float64) for name, array in dict(value).items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy_arrays(self) -> dict[str, np.ndarray]:
        return {name: self.arrays[name].copy() for name in PARAM_NAMES}

    def freeze(self) -> "EncoderParams":
        for array in self.arrays.values():
            array.setflags(write=False)
        return self


class GaussianPosterior(ArraySchema):
    """Per-phoneme posterior; arrays are (D,) or batched (N, D)."""

    mu: np.ndarray
    log_sigma: np.ndarray

    @field_validator("mu", "log_sigma", mode="before")
    @classmethod
    def check_finite(cls, value):
        array = np.asarray(value, dtype=np.float64)
        if array.ndim not in (1, 2):
            raise ValueError(f"expected a 1-d or 2-d array, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("posterior parameters must be finite")
        return array

    @model_validator(mode="after")
    def check_shapes(self):
        if self.mu.shape != self.log_sigma.shape:
            raise ValueError("mu and log_sigma differ in shape")
        return self

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)


class TrainConfig(BaseSchema):
    kl_start_iter: int = Field(default=KL_START_ITER, ge=0)
    kl_end_iter: int = KL_END_ITER
    kl_period: int = Field(default=KL_PERIOD, ge=1)
    kl_fixed_scale: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    learning_rate: float = Field(default=LEARNING_RATE, gt=0)
    iterations: int = Field(default=10_000, ge=0)
    batch_size: int = Field(default=64, ge=1)
    hidden: int = Field(default=HIDDEN_DIM, ge=1)
    latent: int = Field(default=LATENT_DIM, ge=1)
    log_every: int = Field(default=500, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def check_schedule(self):
        if not self.kl_start_iter < self.kl_end_iter:
            raise ValueError("kl_start_iter must be below kl_end_iter")
        return self


class LossRecord(BaseSchema):
    iteration: int
    recon: float
    kl: float
    scale: float
    active: bool


class TrainResult(ArraySchema):
    params: EncoderParams
    history: tuple[LossRecord, ...] = ()

