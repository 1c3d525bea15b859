# src/schemas/attack_schemas.py
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

AttackerName = Literal["MLP", "GBT"]


class ShadowSplit(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    exposed: np.ndarray
    held_out: np.ndarray
    seed: int


class MlpSettings(BaseModel):
    hidden_layers: tuple = (100,)
    activation: str = "relu"
    l2_weight: float = Field(1.0, ge=0)
    max_iterations: int = Field(1000, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    tolerance: float = Field(1e-4, gt=0)
    patience: int = Field(10, ge=1)


class GbtSettings(BaseModel):
    rounds: int = Field(100, ge=0)  # 0 -> constant prior
    max_depth: int = Field(6, ge=1)
    shrinkage: float = Field(0.3, gt=0)
    objective: str = "binary:logistic"


class AttackerConfig(BaseModel):
    mlp: MlpSettings = Field(default_factory=MlpSettings)
    gbt: GbtSettings = Field(default_factory=GbtSettings)
    seed: int = 2023
    n_jobs: int = 1


class AttackReport(BaseModel):
    attacker: AttackerName
    accuracy: float = Field(..., ge=0, le=1)
    precision: float = Field(..., ge=0, le=1)
    recall: float = Field(..., ge=0, le=1)
    auc: float = Field(..., ge=0, le=1)
