# src/schemas/unlearn_schemas.py
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

LossKind = Literal["U2U-R", "D2D-R"]
# sgd: plain step on the total loss; prox: exact step on the anchor term
UnlearnOptimizer = Literal["adam", "sgd", "prox"]

DEFAULT_UNLEARN_EPOCHS = {"U2U-R": 5000, "D2D-R": 1000}


class UnlearnConfig(BaseModel):
    loss_kind: LossKind = "D2D-R"
    alpha: float = Field(1e-4, ge=0)
    learning_rate: float = Field(0.001, gt=0)
    epochs: Optional[int] = Field(None, ge=0)  # None -> per-loss default
    # "median" -> median heuristic recomputed each epoch; a float -> fixed sigma
    mmd_bandwidth: Union[Literal["median"], float] = "median"
    optimizer: UnlearnOptimizer = "adam"
    batch_size: Optional[int] = Field(None, ge=2)  # row mini-batching, off by default
    seed: int = 2023

    @field_validator("mmd_bandwidth")
    @classmethod
    def bandwidth_positive(cls, value):
        if value != "median" and not value > 0:
            raise ValueError("a fixed MMD bandwidth must be > 0")
        return value

    @property
    def n_epochs(self) -> int:
        return self.epochs if self.epochs is not None else DEFAULT_UNLEARN_EPOCHS[self.loss_kind]


class LossTerms(BaseModel):
    total: float
    lu: float
    lr: float


class UnlearnResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    theta: np.ndarray
    loss_trace: List[LossTerms]
    wall_time: float
    config: UnlearnConfig
