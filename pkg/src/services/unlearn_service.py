# src/services/unlearn_service.py

import logging
import time

import numpy as np
from tqdm import tqdm

from ..config import show_progress
from ..exceptions import ShapeError, UnlearnDivergedError
from ..schemas.dataset_schemas import AttributeTable, InteractionDataset
from ..schemas.model_schemas import EmbeddingModel, TrainConfig
from ..schemas.unlearn_schemas import LossTerms, UnlearnConfig, UnlearnResult
from .optimizers import Adam
from .recsys_service import train_model
from .unlearn_losses import as_label_table, d2d_loss_and_grad, distinguishability

logger = logging.getLogger(__name__)


def _evaluate(theta: np.ndarray, theta_star: np.ndarray, table: AttributeTable, cfg: UnlearnConfig):
    lu, grad_u = distinguishability(theta, table, cfg)
    diff = theta - theta_star
    lr_term = float(np.sum(diff * diff))
    return LossTerms(total=lu + cfg.alpha * lr_term, lu=lu, lr=lr_term), grad_u


class _GradientStep:
    """theta <- theta - lr * (grad_u + 2 alpha (theta - theta*))."""

    def __init__(self, theta: np.ndarray, theta_star: np.ndarray, lr: float, alpha: float):
        self.theta, self.theta_star = theta, theta_star
        self.lr, self.alpha = lr, alpha

    def step(self, grad_u: np.ndarray, rows=slice(None)) -> None:
        anchor = 2.0 * self.alpha * (self.theta[rows] - self.theta_star[rows])
        self.theta[rows] -= self.lr * (grad_u + anchor)


class _ProximalStep:
    """
    Gradient step on l_u followed by the exact minimizer of the anchor term:
    theta <- (theta - lr * grad_u + 2 lr alpha theta*) / (1 + 2 lr alpha).
    Same fixed point as the plain step, stable for any alpha.
    """

    def __init__(self, theta: np.ndarray, theta_star: np.ndarray, lr: float, alpha: float):
        self.theta, self.theta_star = theta, theta_star
        self.lr, self.alpha = lr, alpha

    def step(self, grad_u: np.ndarray, rows=slice(None)) -> None:
        pull = 2.0 * self.lr * self.alpha
        self.theta[rows] = (self.theta[rows] - self.lr * grad_u + pull * self.theta_star[rows]) / (1.0 + pull)


class _AdamStep:
    def __init__(self, theta: np.ndarray, theta_star: np.ndarray, lr: float, alpha: float):
        self.theta, self.theta_star, self.alpha = theta, theta_star, alpha
        self.adam = Adam([theta], lr)

    def step(self, grad_u: np.ndarray, rows=slice(None)) -> None:
        grad = np.zeros_like(self.theta)
        grad[rows] = grad_u + 2.0 * self.alpha * (self.theta[rows] - self.theta_star[rows])
        self.adam.step([grad])


STEPPERS = {"sgd": _GradientStep, "prox": _ProximalStep, "adam": _AdamStep}


def unlearn(theta_star: np.ndarray, labels: AttributeTable, cfg: UnlearnConfig) -> UnlearnResult:
    """
    Post-training attribute unlearning: starting from theta*, minimize
    l_u(theta) + alpha * ||theta - theta*||_F^2 for cfg.n_epochs steps.
    The median bandwidth (D2D-R) is recomputed from the current theta every epoch.
    """
    theta_star = np.asarray(theta_star, dtype=np.float64)
    if theta_star.ndim != 2:
        raise ShapeError("theta* must be an N x K matrix")
    table = as_label_table(labels, len(theta_star))
    rng = np.random.default_rng(cfg.seed)
    theta = theta_star.copy()
    stepper_cls = STEPPERS[cfg.optimizer]
    stepper = stepper_cls(theta, theta_star, cfg.learning_rate, cfg.alpha)

    logger.info(
        "🧹 Unlearning with %s: alpha=%g, lr=%g, %d epochs, optimizer=%s.",
        cfg.loss_kind, cfg.alpha, cfg.learning_rate, cfg.n_epochs, cfg.optimizer,
    )
    started = time.perf_counter()
    terms, grad_u = _evaluate(theta, theta_star, table, cfg)
    trace = [terms]
    for epoch in tqdm(range(1, cfg.n_epochs + 1), desc=cfg.loss_kind, disable=not show_progress()):
        last_finite = theta.copy()
        if cfg.batch_size is None:
            stepper.step(grad_u)
        else:
            _minibatch_epoch(stepper, theta, table, cfg, rng)
        with np.errstate(over="ignore", invalid="ignore"):
            finite = np.isfinite(theta).all()
            if finite:
                terms, grad_u = _evaluate(theta, theta_star, table, cfg)
        if not finite or not np.isfinite(terms.total):
            logger.error("❌ Unlearning diverged at epoch %d.", epoch)
            raise UnlearnDivergedError(epoch, last_finite)
        trace.append(terms)

    wall_time = time.perf_counter() - started
    logger.info(
        "✅ %s done in %.2fs: total %.6g -> %.6g.", cfg.loss_kind, wall_time, trace[0].total, trace[-1].total
    )
    return UnlearnResult(theta=theta, loss_trace=trace, wall_time=wall_time, config=cfg)


def _minibatch_epoch(stepper, theta: np.ndarray, table: AttributeTable, cfg: UnlearnConfig, rng) -> None:
    """One pass over shuffled row batches; batches holding a single group are skipped."""
    order = rng.permutation(len(theta))
    for start in range(0, len(order), cfg.batch_size):
        rows = np.sort(order[start:start + cfg.batch_size])
        sub = table.subset(rows)
        if min(sub.sizes) == 0:
            continue
        _, grad_u = distinguishability(theta[rows], sub, cfg)
        stepper.step(grad_u, rows)


def retrain_with_d2d(
    dataset: InteractionDataset,
    labels: AttributeTable,
    cfg_train: TrainConfig,
    weight: float,
    kind: str = "MF",
    bandwidth="median",
) -> EmbeddingModel:
    """
    Retrain baseline: train from scratch on recommendation loss + weight * MMD
    between the groups' user embeddings. The D2D gradient is taken over all
    users once per epoch and added to every batch's user gradient.
    """
    table = as_label_table(labels, dataset.n_users)
    penalty = None
    if weight > 0:
        def penalty(user_emb: np.ndarray) -> np.ndarray:
            _, grad = d2d_loss_and_grad(user_emb, table, bandwidth)
            return weight * grad

    logger.info("🔁 Retraining %s with D2D weight %g.", kind, weight)
    model = train_model(dataset, cfg_train, kind, penalty)
    return model.model_copy(update={"method": "Retrain"})
