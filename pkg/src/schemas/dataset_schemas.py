# src/schemas/dataset_schemas.py
import math
from typing import Dict, List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..exceptions import GroupError

RatingFormat = Literal["ml100k", "ml1m", "generic-delimited"]
AttributeFormat = Literal["ml100k", "ml1m", "generic-delimited"]

# Split codes stored in InteractionDataset.split
TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = {TRAIN: "train", VAL: "val", TEST: "test"}

# Loader constant: gender token -> binary label
GENDER_LABELS = {"M": 0, "F": 1}


class RawInteraction(BaseModel):
    model_config = ConfigDict(frozen=True)

    user_ext: str
    item_ext: str
    rating: float
    timestamp: int = Field(..., ge=0)

    @field_validator("rating")
    @classmethod
    def rating_is_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("rating must be finite")
        return value


class GenericColumns(BaseModel):
    """Column layout for `generic-delimited` files (LFM-2B style exports)."""
    delimiter: str = "\t"
    user_col: int = Field(0, ge=0)
    item_col: int = Field(1, ge=0)
    rating_col: int = Field(2, ge=0)
    timestamp_col: int = Field(3, ge=0)
    gender_col: int = Field(1, ge=0)
    has_header: bool = False


class InteractionDataset(BaseModel):
    """
    Implicit-feedback dataset with dense internal ids and a per-interaction split.
    Interaction arrays are sorted by (user, item) and never mutated.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    split: np.ndarray
    user_ids: List[str]  # internal index -> external id
    item_ids: List[str]
    seed: int
    ratios: Tuple[float, float, float]

    @model_validator(mode="after")
    def check_dense_ids(self):
        if len(self.user_ids) != self.n_users or len(self.item_ids) != self.n_items:
            raise ValueError("id maps do not match n_users / n_items")
        n = len(self.users)
        if not (len(self.items) == len(self.ratings) == len(self.split) == n):
            raise ValueError("interaction arrays have different lengths")
        if n and (self.users.max() >= self.n_users or self.items.max() >= self.n_items):
            raise ValueError("internal index out of range")
        return self

    @property
    def n_interactions(self) -> int:
        return int(len(self.users))

    def pairs(self, split: int) -> Tuple[np.ndarray, np.ndarray]:
        mask = self.split == split
        return self.users[mask], self.items[mask]

    def split_counts(self) -> Dict[str, int]:
        return {name: int(np.sum(self.split == code)) for code, name in SPLIT_NAMES.items()}


class AttributeTable(BaseModel):
    """Binary attribute per internal user index (0 = male, 1 = female)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labels: np.ndarray

    @field_validator("labels", mode="before")
    @classmethod
    def labels_are_binary(cls, value: np.ndarray) -> np.ndarray:
        value = np.asarray(value, dtype=np.int64)
        if value.ndim != 1:
            raise ValueError("labels must be a 1-D array")
        if not np.isin(value, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        return value

    @property
    def n_users(self) -> int:
        return int(len(self.labels))

    @property
    def group_0(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)

    @property
    def group_1(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)

    @property
    def sizes(self) -> Tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

    def require_both_groups(self) -> None:
        size_0, size_1 = self.sizes
        if size_0 == 0 or size_1 == 0:
            raise GroupError(
                f"Both attribute groups must be non-empty (sizes: {size_0}, {size_1})."
            )

    def subset(self, rows: np.ndarray) -> "AttributeTable":
        return AttributeTable(labels=self.labels[rows])
