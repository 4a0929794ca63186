from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict


class BaseSchema(BaseModel):
    model_config = ConfigDict(frozen=True)


class ArraySchema(BaseModel):
    """Base for models that carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def as_float_array(value: Any, ndim: int) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    if array.ndim != ndim:
        if ndim == 2 and array.size == 0:
            return array.reshape(0, 0)
        raise ValueError(f"expected a {ndim}-d array, got shape {array.shape}")
    return array


def as_bool_array(value: Any) -> np.ndarray:
    array = np.asarray(value, dtype=bool)
    if array.ndim != 1:
        raise ValueError(f"expected a 1-d array, got shape {array.shape}")
    return array
