# src/services/mf_service.py

import logging
import time
from typing import Tuple

import numpy as np
from scipy.special import expit
from tqdm import tqdm

from ..config import show_progress
from ..exceptions import TrainingDivergedError
from ..schemas.dataset_schemas import TRAIN, InteractionDataset
from ..schemas.model_schemas import EmbeddingModel, TrainConfig
from .optimizers import make_optimizer
from .training import PositiveIndex, UserPenalty, iterate_batches

logger = logging.getLogger(__name__)


def bce_loss_and_grad(
    user_vecs: np.ndarray, item_vecs: np.ndarray, labels: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean binary cross-entropy of dot-product logits and its row gradients."""
    logits = np.einsum("ij,ij->i", user_vecs, item_vecs)
    loss = float(np.mean(np.logaddexp(0.0, logits) - labels * logits))
    d_logits = (expit(logits) - labels) / len(labels)
    return loss, d_logits[:, None] * item_vecs, d_logits[:, None] * user_vecs


def train_mf(dataset: InteractionDataset, cfg: TrainConfig, user_penalty: UserPenalty = None) -> EmbeddingModel:
    """
    Matrix-factorization core of NMF: dot-product scores trained with BCE on
    observed train positives plus `cfg.negatives` uniform negatives each.
    """
    rng = np.random.default_rng(cfg.seed)
    n_users, n_items, k = dataset.n_users, dataset.n_items, cfg.embedding_size
    user_emb = rng.normal(0.0, cfg.init_std, size=(n_users, k))
    item_emb = rng.normal(0.0, cfg.init_std, size=(n_items, k))

    pos_users, pos_items = dataset.pairs(TRAIN)
    positives = PositiveIndex(pos_users, pos_items, n_users, n_items)
    neg_users = np.repeat(pos_users, cfg.negatives)
    labels = np.concatenate([np.ones(len(pos_users)), np.zeros(len(neg_users))])

    optimizer = make_optimizer(cfg.optimizer, [user_emb, item_emb], cfg.learning_rate)
    epochs, batch_size = cfg.epochs_for("MF"), cfg.batch_size_for("MF")
    logger.info("🤖 Training MF: %d users, %d items, K=%d, %d epochs.", n_users, n_items, k, epochs)

    started = time.perf_counter()
    for epoch in tqdm(range(1, epochs + 1), desc="MF", disable=not show_progress()):
        neg_items = positives.sample_negatives(rng, neg_users)
        users = np.concatenate([pos_users, neg_users])
        items = np.concatenate([pos_items, neg_items])
        penalty = user_penalty(user_emb) if user_penalty is not None else None

        total = 0.0
        for batch in iterate_batches(rng.permutation(len(users)), batch_size):
            u, i = users[batch], items[batch]
            loss, grad_u_rows, grad_i_rows = bce_loss_and_grad(user_emb[u], item_emb[i], labels[batch])
            grad_user = np.zeros_like(user_emb)
            grad_item = np.zeros_like(item_emb)
            np.add.at(grad_user, u, grad_u_rows)
            np.add.at(grad_item, i, grad_i_rows)
            if cfg.weight_decay:
                grad_user += cfg.weight_decay * user_emb
                grad_item += cfg.weight_decay * item_emb
            if penalty is not None:
                grad_user += penalty
            optimizer.step([grad_user, grad_item])
            total += loss * len(batch)

        epoch_loss = total / len(users)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch, epoch_loss)
        logger.debug("   - epoch %d: loss %.6f", epoch, epoch_loss)

    logger.info("✅ MF trained in %.1fs.", time.perf_counter() - started)
    return EmbeddingModel(
        kind="MF", user_emb=user_emb, item_emb=item_emb, n_layers=0,
        train_config=cfg, seed=cfg.seed, epoch=epochs,
    )
