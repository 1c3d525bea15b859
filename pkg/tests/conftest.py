# tests/conftest.py
from pathlib import Path
from typing import Tuple

import numpy as np
import pytest

from src.schemas.dataset_schemas import AttributeTable, RawInteraction
from src.services.data_loader import build_attribute_table, build_dataset, parse_attributes, parse_ratings


def write_movielens(directory: Path, n_users: int = 200, n_items: int = 60, per_user: int = 20,
                    seed: int = 0) -> Tuple[Path, Path]:
    """
    ml100k-format u.data / u.user pair. Female users draw 80% of their items
    from the first half of the catalog, male users from the second half.
    """
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    genders = np.where(rng.random(n_users) < 0.4, "F", "M")
    half = n_items // 2
    lines = []
    for u in range(n_users):
        own = np.arange(half) if genders[u] == "F" else np.arange(half, n_items)
        other = np.arange(half, n_items) if genders[u] == "F" else np.arange(half)
        n_own = int(round(per_user * 0.8))
        items = np.concatenate([
            rng.choice(own, size=n_own, replace=False),
            rng.choice(other, size=per_user - n_own, replace=False),
        ])
        for i in items:
            lines.append(f"{u + 1}\t{i + 1}\t{int(rng.integers(1, 6))}\t{881250000 + int(rng.integers(0, 10**6))}")
    ratings = directory / "u.data"
    ratings.write_text("\n".join(lines) + "\n", encoding="latin-1")
    users = directory / "u.user"
    users.write_text(
        "".join(f"{u + 1}|{20 + u % 40}|{genders[u]}|other|0000{u % 10}\n" for u in range(n_users)),
        encoding="latin-1",
    )
    return ratings, users


def write_experiment_config(path: Path, ratings: Path, users: Path, out_dir: Path, **overrides) -> Path:
    """An override of None drops the key so the library default applies."""
    values = {
        "dataset__name": "synthetic",
        "dataset__format": "ml100k",
        "dataset__ratings_path": str(ratings),
        "dataset__users_path": str(users),
        "model__kind": "MF",
        "model__epochs": "3",
        "model__learning_rate": "0.01",
        "unlearn__methods": "U2U-R,D2D-R",
        "unlearn__u2u_epochs": "20",
        "unlearn__d2d_epochs": "20",
        "unlearn__optimizer": "adam",
        "retrain__enabled": "true",
        "attack__fraction": "0.3",
        "analysis__bins": "10",
        "analysis__alpha_grid": "0.0001,1",
        "output_dir": str(out_dir),
        "repeat": "1",
        "seed": "7",
    }
    values.update({k: str(v) for k, v in overrides.items()})
    values = {k: v for k, v in values.items() if overrides.get(k, "") is not None}
    path.write_text("".join(f"{k}={v}\n" for k, v in values.items()), encoding="utf-8")
    return path


@pytest.fixture
def movielens_files(tmp_path):
    return write_movielens(tmp_path / "ml")


@pytest.fixture
def synthetic_dataset(movielens_files):
    ratings, users = movielens_files
    dataset = build_dataset(parse_ratings(str(ratings), "ml100k"), min_count=5, seed=11)
    labels = build_attribute_table(dataset, parse_attributes(str(users), "ml100k"))
    return dataset, labels


@pytest.fixture
def experiment_config(tmp_path, movielens_files):
    ratings, users = movielens_files
    return write_experiment_config(tmp_path / "experiment.env", ratings, users, tmp_path / "run")


def two_gaussians(n_per_group: int = 30, k: int = 4, gap: float = 2.0, seed: int = 0):
    """Embeddings from two isotropic Gaussians with means 0 and `gap`; labels = component."""
    rng = np.random.default_rng(seed)
    theta = np.vstack([rng.normal(0.0, 1.0, (n_per_group, k)), rng.normal(gap, 1.0, (n_per_group, k))])
    labels = AttributeTable(labels=np.repeat([0, 1], n_per_group))
    return theta, labels


def block_interactions(n_users: int = 40, n_items: int = 20):
    """Users in the first half interact with every item of the first half, and vice versa."""
    records = []
    for u in range(n_users):
        block = range(n_items // 2) if u < n_users // 2 else range(n_items // 2, n_items)
        for i in block:
            records.append(RawInteraction(user_ext=str(u), item_ext=str(i), rating=1.0, timestamp=0))
    return records
