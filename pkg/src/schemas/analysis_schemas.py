# src/schemas/analysis_schemas.py
from typing import List

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field


class HistogramSet(BaseModel):
    """Per-dimension histograms of the two attribute groups on shared bin edges."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    edges: List[np.ndarray]
    counts: List[np.ndarray]  # each of shape (2, n_bins)
    downsampled: bool
    seed: int
    degenerate_dims: List[int] = Field(default_factory=list)

    @property
    def n_dims(self) -> int:
        return len(self.edges)


class OverlapScore(BaseModel):
    per_dim: List[float]
    mean: float = Field(..., ge=0, le=1)


class SweepRow(BaseModel):
    alpha: float
    auc_mlp: float
    auc_gbt: float
    ndcg10: float
    hr10: float
    frob_dist: float


class ReportArtifact(BaseModel):
    """One CSV-bound table handed to write_report."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    frame: pd.DataFrame


class Projection(BaseModel):
    """Principal-component coordinates; `degenerate` marks components zeroed for lack of rank."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coords: np.ndarray
    explained_variance: List[float]
    degenerate: List[int] = Field(default_factory=list)
