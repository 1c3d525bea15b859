# src/services/unlearn_losses.py
"""
Distinguishability losses between the two attribute groups, the Frobenius
anchor, and their analytic gradients. All functions are pure.
"""
from typing import Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..exceptions import BandwidthError, GroupError, ShapeError
from ..schemas.dataset_schemas import AttributeTable
from ..schemas.unlearn_schemas import LossTerms, UnlearnConfig

Labels = Union[AttributeTable, np.ndarray]


def as_label_table(labels: Labels, n_rows: int) -> AttributeTable:
    table = labels if isinstance(labels, AttributeTable) else AttributeTable(labels=labels)
    if table.n_users != n_rows:
        raise ShapeError(f"{table.n_users} labels for {n_rows} embedding rows")
    table.require_both_groups()
    return table


def frobenius_reg(theta: np.ndarray, theta_star: np.ndarray) -> float:
    if theta.shape != theta_star.shape:
        raise ShapeError(f"shape mismatch: {theta.shape} vs {theta_star.shape}")
    diff = theta - theta_star
    return float(np.sum(diff * diff))


def inverse_adjacency(labels: np.ndarray) -> np.ndarray:
    """Attribute divergence weights: 1 for a cross-group pair, 0 otherwise."""
    labels = np.asarray(labels)
    return (labels[:, None] != labels[None, :]).astype(np.float64)


def u2u_loss_bruteforce(theta: np.ndarray, labels: Labels) -> float:
    """Sum over all ordered cross-group pairs of squared embedding distances."""
    table = as_label_table(labels, len(theta))
    distances = cdist(theta, theta, "sqeuclidean")
    return float(np.sum(distances * inverse_adjacency(table.labels)))


def _group_moments(theta: np.ndarray, table: AttributeTable):
    g0, g1 = theta[table.group_0], theta[table.group_1]
    return len(g0), len(g1), float(np.sum(g0 * g0)), float(np.sum(g1 * g1)), g0.sum(axis=0), g1.sum(axis=0)


def u2u_loss(theta: np.ndarray, labels: Labels) -> float:
    """Closed form of the Laplacian quadratic form, without any N x N matrix."""
    table = as_label_table(labels, len(theta))
    n0, n1, q0, q1, s0, s1 = _group_moments(theta, table)
    return 2.0 * (n1 * q0 + n0 * q1 - 2.0 * float(s0 @ s1))


def u2u_grad(theta: np.ndarray, labels: Labels) -> np.ndarray:
    table = as_label_table(labels, len(theta))
    n0, n1, _, _, s0, s1 = _group_moments(theta, table)
    grad = np.empty_like(theta, dtype=np.float64)
    grad[table.group_0] = 4.0 * (n1 * theta[table.group_0] - s1)
    grad[table.group_1] = 4.0 * (n0 * theta[table.group_1] - s0)
    return grad


def median_bandwidth(x: np.ndarray, y: np.ndarray) -> float:
    """Median pairwise distance over the pooled rows of x and y."""
    distances = pdist(np.vstack([x, y]))
    sigma = float(np.median(distances)) if len(distances) else 0.0
    if sigma <= 0.0:
        raise BandwidthError(
            "median pairwise distance is 0 (all embeddings identical); set a fixed mmd_bandwidth instead"
        )
    return sigma


def _check_mmd_inputs(x: np.ndarray, y: np.ndarray, sigma: float) -> None:
    if len(x) == 0 or len(y) == 0:
        raise GroupError("MMD needs at least one row in each group")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"feature widths differ: {x.shape[1]} vs {y.shape[1]}")
    if not sigma > 0:
        raise BandwidthError(f"bandwidth must be > 0, got {sigma}")


def _kernels(x: np.ndarray, y: np.ndarray, sigma: float):
    scale = 2.0 * sigma * sigma
    return (
        np.exp(-cdist(x, x, "sqeuclidean") / scale),
        np.exp(-cdist(y, y, "sqeuclidean") / scale),
        np.exp(-cdist(x, y, "sqeuclidean") / scale),
    )


def mmd_rbf(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """Biased (V-statistic) squared MMD with a Gaussian kernel, clamped at 0."""
    _check_mmd_inputs(x, y, sigma)
    kxx, kyy, kxy = _kernels(x, y, sigma)
    return max(float(kxx.mean() + kyy.mean() - 2.0 * kxy.mean()), 0.0)


def mmd_grad(x: np.ndarray, y: np.ndarray, sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of mmd_rbf w.r.t. every row of x and y, sigma held fixed."""
    _check_mmd_inputs(x, y, sigma)
    n1, n2, s2 = len(x), len(y), sigma * sigma
    kxx, kyy, kxy = _kernels(x, y, sigma)
    grad_x = (
        -2.0 / (n1 * n1 * s2) * (x * kxx.sum(axis=1, keepdims=True) - kxx @ x)
        + 2.0 / (n1 * n2 * s2) * (x * kxy.sum(axis=1, keepdims=True) - kxy @ y)
    )
    grad_y = (
        -2.0 / (n2 * n2 * s2) * (y * kyy.sum(axis=1, keepdims=True) - kyy @ y)
        + 2.0 / (n1 * n2 * s2) * (y * kxy.sum(axis=0)[:, None] - kxy.T @ x)
    )
    return grad_x, grad_y


def resolve_bandwidth(bandwidth, x: np.ndarray, y: np.ndarray) -> float:
    return median_bandwidth(x, y) if bandwidth == "median" else float(bandwidth)


def d2d_loss_and_grad(theta: np.ndarray, labels: Labels, bandwidth="median") -> Tuple[float, np.ndarray]:
    """MMD between the two groups' rows of theta, with its gradient scattered back to theta's shape."""
    table = as_label_table(labels, len(theta))
    x, y = theta[table.group_0], theta[table.group_1]
    sigma = resolve_bandwidth(bandwidth, x, y)
    grad_x, grad_y = mmd_grad(x, y, sigma)
    grad = np.empty_like(theta, dtype=np.float64)
    grad[table.group_0] = grad_x
    grad[table.group_1] = grad_y
    return mmd_rbf(x, y, sigma), grad


def distinguishability(theta: np.ndarray, labels: Labels, cfg: UnlearnConfig) -> Tuple[float, np.ndarray]:
    """The l_u term selected by cfg.loss_kind and its gradient."""
    if cfg.loss_kind == "U2U-R":
        return u2u_loss(theta, labels), u2u_grad(theta, labels)
    return d2d_loss_and_grad(theta, labels, cfg.mmd_bandwidth)


def total_loss(theta: np.ndarray, theta_star: np.ndarray, labels: Labels, cfg: UnlearnConfig) -> LossTerms:
    lr_term = frobenius_reg(theta, theta_star)
    if cfg.loss_kind == "U2U-R":
        lu = u2u_loss(theta, labels)
    else:
        table = as_label_table(labels, len(theta))
        x, y = theta[table.group_0], theta[table.group_1]
        lu = mmd_rbf(x, y, resolve_bandwidth(cfg.mmd_bandwidth, x, y))
    return LossTerms(total=lu + cfg.alpha * lr_term, lu=lu, lr=lr_term)
