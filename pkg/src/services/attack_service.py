# src/services/attack_service.py

import logging
import warnings
from typing import Sequence, Union

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import accuracy_score, precision_score, recall_score, roc_auc_score
from sklearn.neural_network import MLPClassifier
from xgboost import XGBClassifier

from ..exceptions import GroupError, ShapeError, TrainingDivergedError
from ..schemas.attack_schemas import AttackerConfig, AttackReport, ShadowSplit
from ..schemas.dataset_schemas import AttributeTable

logger = logging.getLogger(__name__)

MAX_SPLIT_ATTEMPTS = 100


def shadow_split(n_users: int, labels: AttributeTable, fraction: float = 0.1, seed: int = 2023) -> ShadowSplit:
    """
    Exposes a uniform sample of round(fraction * n_users) users (with labels) to
    the attacker; both groups must appear in the exposed sample.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if labels.n_users != n_users:
        raise ShapeError(f"{labels.n_users} labels for {n_users} users")
    labels.require_both_groups()
    n_exposed = int(round(fraction * n_users))
    if n_exposed < 2 or n_exposed > n_users - 1:
        raise GroupError(
            f"exposing {n_exposed} of {n_users} users cannot cover both groups and leave held-out users; "
            f"need n_users * fraction >= 2"
        )

    rng = np.random.default_rng(seed)
    for _ in range(MAX_SPLIT_ATTEMPTS):
        order = rng.permutation(n_users)
        exposed = np.sort(order[:n_exposed])
        if len(np.unique(labels.labels[exposed])) == 2:
            return ShadowSplit(exposed=exposed, held_out=np.sort(order[n_exposed:]), seed=seed)
    raise GroupError(f"no exposed sample covered both groups after {MAX_SPLIT_ATTEMPTS} draws")


def _check_training_data(features: np.ndarray, labels: np.ndarray):
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or len(features) != len(labels):
        raise ShapeError("expected a 2-D feature matrix with one label per row")
    counts = np.bincount(labels, minlength=2)
    if len(counts) > 2 or counts.min() < 2:
        raise GroupError(f"each class needs at least 2 training examples (got {counts.tolist()})")
    return features, labels


class MlpAttacker:
    """One hidden rectifier layer, cross-entropy + L2, adaptive-moment steps with early stopping."""

    def __init__(self, cfg: AttackerConfig):
        settings = cfg.mlp
        self.classifier = MLPClassifier(
            hidden_layer_sizes=tuple(settings.hidden_layers),
            activation=settings.activation,
            solver="adam",
            alpha=settings.l2_weight,
            learning_rate_init=settings.learning_rate,
            max_iter=settings.max_iterations,
            tol=settings.tolerance,
            n_iter_no_change=settings.patience,
            random_state=cfg.seed,
        )
        self.n_features = None

    def fit(self, features: np.ndarray, labels: np.ndarray) -> "MlpAttacker":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            self.classifier.fit(features, labels)
        if not np.isfinite(self.classifier.loss_):
            raise TrainingDivergedError(self.classifier.n_iter_, self.classifier.loss_)
        self.n_features = features.shape[1]
        return self

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        return self.classifier.predict_proba(rows)[:, 1]


class GbtAttacker:
    """Gradient-boosted trees on logistic loss with exact greedy splits."""

    def __init__(self, cfg: AttackerConfig):
        self.settings = cfg.gbt
        self.seed = cfg.seed
        self.n_jobs = cfg.n_jobs
        self.booster = None
        self.prior = 0.5
        self.n_features = None

    def fit(self, features: np.ndarray, labels: np.ndarray) -> "GbtAttacker":
        self.prior = float(np.mean(labels))
        self.n_features = features.shape[1]
        if self.settings.rounds == 0:
            return self
        self.booster = XGBClassifier(
            n_estimators=self.settings.rounds,
            max_depth=self.settings.max_depth,
            learning_rate=self.settings.shrinkage,
            objective=self.settings.objective,
            tree_method="exact",
            base_score=self.prior,
            random_state=self.seed,
            n_jobs=self.n_jobs,
        )
        self.booster.fit(features, labels)
        return self

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        if self.booster is None:
            return np.full(len(rows), self.prior)
        return self.booster.predict_proba(rows)[:, 1]


Attacker = Union[MlpAttacker, GbtAttacker]


def train_mlp_attacker(theta_exposed: np.ndarray, labels_exposed: np.ndarray, cfg: AttackerConfig) -> MlpAttacker:
    features, labels = _check_training_data(theta_exposed, labels_exposed)
    return MlpAttacker(cfg).fit(features, labels)


def train_gbt_attacker(theta_exposed: np.ndarray, labels_exposed: np.ndarray, cfg: AttackerConfig) -> GbtAttacker:
    features, labels = _check_training_data(theta_exposed, labels_exposed)
    return GbtAttacker(cfg).fit(features, labels)


def predict_proba(classifier: Attacker, theta_rows: np.ndarray) -> np.ndarray:
    """Probability of label 1 (female) per row."""
    theta_rows = np.asarray(theta_rows, dtype=np.float64)
    if theta_rows.ndim != 2 or theta_rows.shape[1] != classifier.n_features:
        raise ShapeError(f"attacker was trained on {classifier.n_features} features, got shape {theta_rows.shape}")
    return np.clip(classifier.predict_proba(theta_rows), 0.0, 1.0)


def evaluate_attack(scores: np.ndarray, labels_heldout: np.ndarray, threshold: float = 0.5, attacker: str = "MLP") -> AttackReport:
    """
    Positive class is label 1 (female). AUC is the rank statistic, ties count one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels_heldout = np.asarray(labels_heldout, dtype=np.int64)
    if len(np.unique(labels_heldout)) < 2:
        raise GroupError("held-out labels contain a single class; AUC is undefined")
    predicted = (scores >= threshold).astype(np.int64)
    return AttackReport(
        attacker=attacker,
        accuracy=float(accuracy_score(labels_heldout, predicted)),
        precision=float(precision_score(labels_heldout, predicted, zero_division=0)),
        recall=float(recall_score(labels_heldout, predicted, zero_division=0)),
        auc=float(roc_auc_score(labels_heldout, scores)),
    )


TRAINERS = {"MLP": train_mlp_attacker, "GBT": train_gbt_attacker}


def run_attack(
    theta: np.ndarray, labels: AttributeTable, split: ShadowSplit, cfg: AttackerConfig, attacker: str
) -> AttackReport:
    """Train on the exposed rows, score the held-out rows."""
    classifier = TRAINERS[attacker](theta[split.exposed], labels.labels[split.exposed], cfg)
    scores = predict_proba(classifier, theta[split.held_out])
    report = evaluate_attack(scores, labels.labels[split.held_out], attacker=attacker)
    logger.info("   - %s attack: AUC %.4f, acc %.4f", attacker, report.auc, report.accuracy)
    return report


def run_attacks(theta: np.ndarray, labels: AttributeTable, split: ShadowSplit, cfg: AttackerConfig,
                attackers: Sequence[str] = ("MLP", "GBT")):
    return [run_attack(theta, labels, split, cfg, name) for name in attackers]
