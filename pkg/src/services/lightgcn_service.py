# src/services/lightgcn_service.py

import logging
import time
from typing import Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import expit
from tqdm import tqdm

from ..config import show_progress
from ..exceptions import DatasetError, TrainingDivergedError
from ..schemas.dataset_schemas import TRAIN, InteractionDataset
from ..schemas.model_schemas import EmbeddingModel, TrainConfig
from .optimizers import make_optimizer
from .training import PositiveIndex, UserPenalty, iterate_batches

logger = logging.getLogger(__name__)


def build_adjacency(
    n_users: int, n_items: int, users: np.ndarray, items: np.ndarray, allow_isolated_items: bool = False
) -> sp.csr_matrix:
    """
    Symmetric normalized adjacency D^-1/2 A D^-1/2 of the bipartite user-item
    graph. Users occupy rows [0, n_users), items the rows after them.
    A zero-degree node cannot be normalized; with `allow_isolated_items` an item
    without train interactions gets an empty row instead.
    """
    size = n_users + n_items
    keys = np.unique(users.astype(np.int64) * n_items + items)
    rows, cols = keys // n_items, n_users + keys % n_items
    data = np.ones(2 * len(keys))
    adjacency = sp.coo_matrix(
        (data, (np.concatenate([rows, cols]), np.concatenate([cols, rows]))), shape=(size, size)
    ).tocsr()

    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    isolated = np.flatnonzero(degree == 0)
    if allow_isolated_items:
        n_items_isolated = int(np.sum(isolated >= n_users))
        if n_items_isolated:
            logger.warning("⚠️ %d items without train interactions keep only their own embedding.", n_items_isolated)
        isolated = isolated[isolated < n_users]
    if len(isolated):
        node = int(isolated[0])
        what = f"user index {node}" if node < n_users else f"item index {node - n_users}"
        raise DatasetError(f"{what} has no train interactions; cannot normalize the graph")
    inv_sqrt = np.zeros_like(degree)
    np.divide(1.0, np.sqrt(degree), out=inv_sqrt, where=degree > 0)
    scale = sp.diags(inv_sqrt)
    return (scale @ adjacency @ scale).tocsr()


def propagate(adjacency: sp.csr_matrix, base: np.ndarray, n_layers: int) -> np.ndarray:
    """Mean of the layer embeddings 0..n_layers."""
    layer = base
    total = base.copy()
    for _ in range(n_layers):
        layer = adjacency @ layer
        total += layer
    return total / (n_layers + 1)


def bpr_loss_and_grad(
    user_vecs: np.ndarray, pos_vecs: np.ndarray, neg_vecs: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Mean -log sigmoid(score_pos - score_neg) and the gradients w.r.t. each row set."""
    diff = np.einsum("ij,ij->i", user_vecs, pos_vecs - neg_vecs)
    loss = float(np.mean(np.logaddexp(0.0, -diff)))
    d_diff = (-expit(-diff) / len(diff))[:, None]
    return loss, d_diff * (pos_vecs - neg_vecs), d_diff * user_vecs, -d_diff * user_vecs


def train_lightgcn(dataset: InteractionDataset, cfg: TrainConfig, user_penalty: UserPenalty = None) -> EmbeddingModel:
    """
    LightGCN with BPR: one sampled negative per train positive per epoch.
    Gradients flow back through the (symmetric) propagation, so the layer-0
    gradient is the same layer average applied to the output gradient.
    """
    rng = np.random.default_rng(cfg.seed)
    n_users, n_items, k = dataset.n_users, dataset.n_items, cfg.embedding_size
    n_layers = cfg.n_layers
    pos_users, pos_items = dataset.pairs(TRAIN)
    adjacency = build_adjacency(n_users, n_items, pos_users, pos_items, allow_isolated_items=True)
    positives = PositiveIndex(pos_users, pos_items, n_users, n_items)

    base = rng.normal(0.0, cfg.init_std, size=(n_users + n_items, k))
    optimizer = make_optimizer(cfg.optimizer, [base], cfg.learning_rate)
    epochs, batch_size = cfg.epochs_for("LightGCN"), cfg.batch_size_for("LightGCN")
    logger.info(
        "🤖 Training LightGCN: %d users, %d items, K=%d, L=%d, %d epochs.",
        n_users, n_items, k, n_layers, epochs,
    )

    started = time.perf_counter()
    for epoch in tqdm(range(1, epochs + 1), desc="LightGCN", disable=not show_progress()):
        neg_items = positives.sample_negatives(rng, pos_users)
        penalty = None
        if user_penalty is not None:
            penalty = user_penalty(propagate(adjacency, base, n_layers)[:n_users])

        total = 0.0
        for batch in iterate_batches(rng.permutation(len(pos_users)), batch_size):
            final = propagate(adjacency, base, n_layers)
            u, i, j = pos_users[batch], n_users + pos_items[batch], n_users + neg_items[batch]
            loss, grad_u, grad_i, grad_j = bpr_loss_and_grad(final[u], final[i], final[j])
            grad_final = np.zeros_like(final)
            np.add.at(grad_final, u, grad_u)
            np.add.at(grad_final, i, grad_i)
            np.add.at(grad_final, j, grad_j)
            if penalty is not None:
                grad_final[:n_users] += penalty
            grad_base = propagate(adjacency, grad_final, n_layers)
            if cfg.weight_decay:
                grad_base += cfg.weight_decay * base
            optimizer.step([grad_base])
            total += loss * len(batch)

        epoch_loss = total / max(len(pos_users), 1)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch, epoch_loss)
        logger.debug("   - epoch %d: loss %.6f", epoch, epoch_loss)

    final = propagate(adjacency, base, n_layers)
    logger.info("✅ LightGCN trained in %.1fs.", time.perf_counter() - started)
    return EmbeddingModel(
        kind="LightGCN", user_emb=final[:n_users], item_emb=final[n_users:], n_layers=n_layers,
        base_user=base[:n_users].copy(), base_item=base[n_users:].copy(), adjacency=adjacency,
        train_config=cfg, seed=cfg.seed, epoch=epochs,
    )

