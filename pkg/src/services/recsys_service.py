# src/services/recsys_service.py
"""Model dispatch, scoring and top-K ranking evaluation."""
import logging
from typing import Iterable, List, Optional, Sequence

import numpy as np

from ..exceptions import ShapeError
from ..schemas.dataset_schemas import SPLIT_NAMES, TEST, TRAIN, InteractionDataset
from ..schemas.model_schemas import EmbeddingModel, RecReport, TrainConfig
from .lightgcn_service import train_lightgcn
from .mf_service import train_mf
from .training import UserPenalty

logger = logging.getLogger(__name__)

DEFAULT_CUTOFFS = (5, 10)


def train_model(dataset: InteractionDataset, cfg: TrainConfig, kind: str, user_penalty: UserPenalty = None) -> EmbeddingModel:
    if kind == "MF":
        return train_mf(dataset, cfg, user_penalty)
    if kind == "LightGCN":
        return train_lightgcn(dataset, cfg, user_penalty)
    raise ValueError(f"unknown model kind '{kind}'")


def user_embedding(model: EmbeddingModel) -> np.ndarray:
    """The attack / unlearning target. A copy, so callers never touch the model's array."""
    return model.user_emb.copy()


def replace_user_embedding(model: EmbeddingModel, theta_new: np.ndarray, method: Optional[str] = None) -> EmbeddingModel:
    theta_new = np.asarray(theta_new, dtype=np.float64)
    if theta_new.shape != model.user_emb.shape:
        raise ShapeError(f"expected user embedding of shape {model.user_emb.shape}, got {theta_new.shape}")
    if not np.isfinite(theta_new).all():
        raise ValueError("replacement user embedding contains non-finite entries")
    update = {"user_emb": theta_new.copy()}
    if method is not None:
        update["method"] = method
    return model.model_copy(update=update)


def recommend_topk(model: EmbeddingModel, user: int, k: int, exclude: Iterable[int] = ()) -> List[int]:
    """
    Top-k items by dot-product score, excluded items removed. Ties go to the
    lower item index; asking for more items than remain returns them all.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = model.item_emb @ model.user_emb[user]
    order = np.argsort(-scores, kind="stable")
    excluded = np.zeros(model.n_items, dtype=bool)
    excluded[np.asarray(list(exclude), dtype=np.int64)] = True
    return [int(i) for i in order[~excluded[order]][:k]]


def _ranking_report(scores: np.ndarray, dataset: InteractionDataset, cutoffs: Sequence[int], split: int) -> RecReport:
    """Full-catalog ranking with each user's train items masked out."""
    cutoffs = sorted(set(int(k) for k in cutoffs))
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive")
    train_users, train_items = dataset.pairs(TRAIN)
    scores = scores.astype(np.float64, copy=True)
    scores[train_users, train_items] = -np.inf

    target = np.zeros((dataset.n_users, dataset.n_items), dtype=bool)
    target_users, target_items = dataset.pairs(split)
    target[target_users, target_items] = True
    n_targets = target.sum(axis=1)
    evaluated = np.flatnonzero(n_targets > 0)
    if len(evaluated) < dataset.n_users:
        logger.debug("   - %d users have no %s items and are skipped", dataset.n_users - len(evaluated), SPLIT_NAMES[split])

    top = min(cutoffs[-1], dataset.n_items)
    ranked = np.argsort(-scores[evaluated], axis=1, kind="stable")[:, :top]
    hits = target[evaluated[:, None], ranked].astype(np.float64)
    n_targets = n_targets[evaluated]

    discounts = 1.0 / np.log2(np.arange(2, top + 2))
    ideal = np.cumsum(discounts)
    ndcg, hr = {}, {}
    for k in cutoffs:
        kk = min(k, top)
        dcg = hits[:, :kk] @ discounts[:kk]
        idcg = ideal[np.minimum(n_targets, kk) - 1]
        ndcg[k] = float(np.mean(dcg / idcg)) if len(evaluated) else 0.0
        hr[k] = float(np.mean(hits[:, :kk].sum(axis=1) / n_targets)) if len(evaluated) else 0.0
    return RecReport(ndcg=ndcg, hr=hr, n_users=len(evaluated))


def eval_ranking(
    model: EmbeddingModel,
    dataset: InteractionDataset,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    split: int = TEST,
) -> RecReport:
    """
    HR@k is the fraction of a user's held-out items in the top k; NDCG@k uses
    binary gains and an ideal list of min(k, |held-out|) hits.
    """
    if model.n_users != dataset.n_users or model.n_items != dataset.n_items:
        raise ShapeError("model and dataset disagree on the number of users or items")
    return _ranking_report(model.user_emb @ model.item_emb.T, dataset, cutoffs, split)


def eval_popularity(dataset: InteractionDataset, cutoffs: Sequence[int] = DEFAULT_CUTOFFS, split: int = TEST) -> RecReport:
    """Baseline that ranks every user's candidates by train interaction count."""
    _, train_items = dataset.pairs(TRAIN)
    counts = np.bincount(train_items, minlength=dataset.n_items).astype(np.float64)
    return _ranking_report(np.tile(counts, (dataset.n_users, 1)), dataset, cutoffs, split)
