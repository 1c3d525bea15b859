# src/schemas/model_schemas.py
from typing import Dict, Literal, Optional

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, model_validator

ModelKind = Literal["MF", "LightGCN"]
OptimizerName = Literal["adam", "sgd"]

DEFAULT_EPOCHS = {"MF": 50, "LightGCN": 400}
DEFAULT_BATCH_SIZE = {"MF": 256, "LightGCN": 2048}


class TrainConfig(BaseModel):
    learning_rate: float = Field(0.001, gt=0)
    epochs: Optional[int] = Field(None, ge=0)  # None -> per-kind default
    batch_size: Optional[int] = Field(None, ge=1)
    negatives: int = Field(4, ge=1)
    init_std: float = Field(0.01, gt=0)
    embedding_size: int = Field(16, ge=1)
    n_layers: int = Field(3, ge=0)
    optimizer: OptimizerName = "adam"
    weight_decay: float = Field(0.0, ge=0)
    seed: int = 2023

    def epochs_for(self, kind: str) -> int:
        return self.epochs if self.epochs is not None else DEFAULT_EPOCHS[kind]

    def batch_size_for(self, kind: str) -> int:
        return self.batch_size if self.batch_size is not None else DEFAULT_BATCH_SIZE[kind]


class EmbeddingModel(BaseModel):
    """
    Trained recommender. `user_emb` / `item_emb` are what scoring uses:
    for MF the trained factors, for LightGCN the layer-averaged final embeddings.
    `base_user` / `base_item` hold LightGCN layer-0 parameters.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: ModelKind
    method: str = "original"
    user_emb: np.ndarray
    item_emb: np.ndarray
    n_layers: int = 0
    base_user: Optional[np.ndarray] = None
    base_item: Optional[np.ndarray] = None
    adjacency: Optional[sp.csr_matrix] = None
    train_config: TrainConfig = Field(default_factory=TrainConfig)
    seed: int = 0
    epoch: int = 0

    @model_validator(mode="after")
    def check_shapes(self):
        if self.user_emb.ndim != 2 or self.item_emb.ndim != 2:
            raise ValueError("embeddings must be 2-D")
        if self.user_emb.shape[1] != self.item_emb.shape[1]:
            raise ValueError("user and item embeddings must share the embedding size")
        if not (np.isfinite(self.user_emb).all() and np.isfinite(self.item_emb).all()):
            raise ValueError("embeddings contain non-finite entries")
        return self

    @property
    def n_users(self) -> int:
        return int(self.user_emb.shape[0])

    @property
    def n_items(self) -> int:
        return int(self.item_emb.shape[0])

    @property
    def embedding_size(self) -> int:
        return int(self.user_emb.shape[1])


class RecReport(BaseModel):
    ndcg: Dict[int, float]
    hr: Dict[int, float]
    n_users: int = 0

    def flat(self) -> Dict[str, float]:
        row = {}
        for k in sorted(self.ndcg):
            row[f"ndcg@{k}"] = self.ndcg[k]
            row[f"hr@{k}"] = self.hr[k]
        return row
