# src/services/data_loader.py

import logging
import math
import re
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..exceptions import DatasetError, ParseError
from ..schemas.dataset_schemas import (
    GENDER_LABELS, TEST, TRAIN, VAL,
    AttributeTable, GenericColumns, InteractionDataset, RawInteraction,
)

logger = logging.getLogger(__name__)

# --- File layouts: separator, (user, item, rating, timestamp) columns ---
RATING_LAYOUTS = {
    "ml100k": ("\t", (0, 1, 2, 3)),
    "ml1m": ("::", (0, 1, 2, 3)),
}
# separator, (user, gender) columns
ATTRIBUTE_LAYOUTS = {
    "ml100k": ("|", (0, 2)),
    "ml1m": ("::", (0, 1)),
}
GENDER_ALIASES = {"M": "M", "MALE": "M", "F": "F", "FEMALE": "F"}

_FIELD_COUNT_ERROR = re.compile(r"line (\d+)")


def _read_columns(path: str, sep: str, columns: Sequence[int], has_header: bool = False) -> pd.DataFrame:
    """
    Reads a delimited file as strings. The returned frame is indexed by the
    1-based file line number and only holds the requested columns.
    """
    try:
        df = pd.read_csv(
            path, sep=sep, header=None, dtype=str, engine="python", encoding="latin-1",
            skip_blank_lines=False, keep_default_na=False, na_values=[""],
        )
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty", path)
    except pd.errors.ParserError as e:
        match = _FIELD_COUNT_ERROR.search(str(e))
        raise ParseError(f"malformed line ({e})", path, int(match.group(1)) if match else None)

    df.index = np.arange(1, len(df) + 1)
    if has_header:
        df = df.iloc[1:]
    df = df.dropna(how="all")
    if df.empty:
        raise ParseError("file is empty", path)

    if max(columns) >= df.shape[1]:
        raise ParseError(f"expected at least {max(columns) + 1} fields per line", path, int(df.index[0]))
    df = df[list(columns)]

    missing = df.isna().any(axis=1)
    if missing.any():
        raise ParseError("missing field", path, int(df.index[missing.argmax()]))
    return df.apply(lambda col: col.str.strip())


def parse_ratings(path: str, format: str = "ml100k", columns: Optional[GenericColumns] = None) -> List[RawInteraction]:
    """
    Parses a MovieLens-style ratings file into RawInteraction records, one per
    well-formed line, in file order. Any malformed line aborts with its line number.
    """
    if format == "generic-delimited":
        columns = columns or GenericColumns()
        sep = columns.delimiter
        cols = (columns.user_col, columns.item_col, columns.rating_col, columns.timestamp_col)
        has_header = columns.has_header
    elif format in RATING_LAYOUTS:
        sep, cols = RATING_LAYOUTS[format]
        has_header = False
    else:
        raise ParseError(f"unknown ratings format '{format}'", path)

    df = _read_columns(path, sep, cols, has_header)
    df.columns = ["user", "item", "rating", "timestamp"]

    ratings = pd.to_numeric(df["rating"], errors="coerce")
    bad = ~np.isfinite(ratings.to_numpy(dtype=float))
    if bad.any():
        line = int(df.index[bad.argmax()])
        raise ParseError(f"non-numeric rating '{df['rating'].iloc[bad.argmax()]}'", path, line)

    timestamps = pd.to_numeric(df["timestamp"], errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(timestamps) | (timestamps < 0) | (timestamps != np.floor(timestamps))
    if bad.any():
        line = int(df.index[bad.argmax()])
        raise ParseError(f"invalid timestamp '{df['timestamp'].iloc[bad.argmax()]}'", path, line)

    records = [
        RawInteraction(user_ext=u, item_ext=i, rating=float(r), timestamp=int(t))
        for u, i, r, t in zip(df["user"], df["item"], ratings.to_numpy(dtype=float), timestamps)
    ]
    logger.info("Parsed %d interactions from %s (%s).", len(records), path, format)
    return records


def parse_attributes(path: str, format: str = "ml100k", columns: Optional[GenericColumns] = None) -> Dict[str, int]:
    """Maps external user id -> binary gender label (M=0, F=1)."""
    if format == "generic-delimited":
        columns = columns or GenericColumns()
        sep, cols, has_header = columns.delimiter, (columns.user_col, columns.gender_col), columns.has_header
    elif format in ATTRIBUTE_LAYOUTS:
        sep, cols = ATTRIBUTE_LAYOUTS[format]
        has_header = False
    else:
        raise ParseError(f"unknown attribute format '{format}'", path)

    df = _read_columns(path, sep, cols, has_header)
    labels: Dict[str, int] = {}
    for line, user, token in zip(df.index, df.iloc[:, 0], df.iloc[:, 1]):
        gender = GENDER_ALIASES.get(token.upper())
        if gender is None:
            raise ParseError(f"unknown gender token '{token}'", path, int(line))
        if user in labels:
            raise ParseError(f"duplicate user id '{user}'", path, int(line))
        labels[user] = GENDER_LABELS[gender]

    n_female = sum(labels.values())
    logger.info("Parsed attributes for %d users (%d F / %d M).", len(labels), n_female, len(labels) - n_female)
    return labels


def filter_min_interactions(
    interactions: List[RawInteraction], min_count: int = 5, iterate: bool = True
) -> List[RawInteraction]:
    """
    Drops users and items with fewer than `min_count` interactions. With
    `iterate` the filter is repeated until nothing changes, so every surviving
    user and item meets the threshold.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if not interactions:
        raise DatasetError("no interactions to filter")

    user_codes, _ = pd.factorize(np.array([r.user_ext for r in interactions], dtype=object))
    item_codes, _ = pd.factorize(np.array([r.item_ext for r in interactions], dtype=object))
    keep = np.ones(len(interactions), dtype=bool)

    passes = 0
    while True:
        passes += 1
        user_counts = np.bincount(user_codes[keep], minlength=user_codes.max() + 1)
        item_counts = np.bincount(item_codes[keep], minlength=item_codes.max() + 1)
        new_keep = keep & (user_counts[user_codes] >= min_count) & (item_counts[item_codes] >= min_count)
        changed = bool((new_keep != keep).any())
        keep = new_keep
        if not changed or not iterate:
            break

    if not keep.any():
        raise DatasetError(f"no interactions left after filtering with min_count={min_count}")

    kept = [interactions[j] for j in np.flatnonzero(keep)]
    logger.info("   - Filter (min_count=%d, %d pass(es)): %d -> %d interactions.",
                min_count, passes, len(interactions), len(kept))
    return kept


def _sorted_ids(ids) -> List[str]:
    unique = set(ids)
    if all(s.isdigit() for s in unique):
        return sorted(unique, key=int)
    return sorted(unique)


def split_counts(n: int, ratios: Tuple[float, float, float]) -> Tuple[int, int, int]:
    """
    Rounding rule for one user's n interactions: train gets ceil(n * r_train),
    the remainder is divided with floor() going to validation, the rest to test.
    """
    r_train, r_val, r_test = ratios
    n_train = min(n, max(1, math.ceil(n * r_train - 1e-9)))
    rest = n - n_train
    n_val = math.floor(rest * r_val / (r_val + r_test) + 1e-9) if (r_val + r_test) > 0 else 0
    return n_train, n_val, rest - n_val


def split_dataset(
    interactions: List[RawInteraction], ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1), seed: int = 2023
) -> InteractionDataset:
    """
    Remaps ids to dense indices and splits every user's interactions at random
    into train/val/test. Ratings are kept but treated as implicit positives.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValueError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    if not interactions:
        raise DatasetError("no interactions to split")

    frame = pd.DataFrame({
        "user": [r.user_ext for r in interactions],
        "item": [r.item_ext for r in interactions],
        "rating": [r.rating for r in interactions],
    })
    duplicated = frame.duplicated(subset=["user", "item"])
    if duplicated.any():
        logger.warning("⚠️ Dropping %d repeated user-item pairs (implicit feedback).", int(duplicated.sum()))
        frame = frame[~duplicated]

    user_ids = _sorted_ids(frame["user"])
    item_ids = _sorted_ids(frame["item"])
    users = frame["user"].map({ext: idx for idx, ext in enumerate(user_ids)}).to_numpy(dtype=np.int64)
    items = frame["item"].map({ext: idx for idx, ext in enumerate(item_ids)}).to_numpy(dtype=np.int64)
    ratings = frame["rating"].to_numpy(dtype=np.float64)

    order = np.lexsort((items, users))
    users, items, ratings = users[order], items[order], ratings[order]

    split = np.empty(len(users), dtype=np.int8)
    starts = np.searchsorted(users, np.arange(len(user_ids) + 1))
    rng = np.random.default_rng(seed)
    for u in range(len(user_ids)):
        lo, hi = starts[u], starts[u + 1]
        n = hi - lo
        if n < 3:
            raise DatasetError(
                f"user '{user_ids[u]}' has only {n} interaction(s); at least 3 are needed to split",
                user=user_ids[u],
            )
        n_train, n_val, _ = split_counts(n, ratios)
        codes = np.full(n, TEST, dtype=np.int8)
        codes[:n_train] = TRAIN
        codes[n_train:n_train + n_val] = VAL
        split[lo:hi] = codes[rng.permutation(n)]

    dataset = InteractionDataset(
        n_users=len(user_ids), n_items=len(item_ids),
        users=users, items=items, ratings=ratings, split=split,
        user_ids=user_ids, item_ids=item_ids, seed=seed, ratios=tuple(ratios),
    )
    logger.info("   - Split %d users x %d items: %s", dataset.n_users, dataset.n_items, dataset.split_counts())
    return dataset


def build_attribute_table(dataset: InteractionDataset, raw_labels: Dict[str, int]) -> AttributeTable:
    """
    Aligns external labels with internal user indices. Labels of users that were
    filtered out are dropped; a retained user without a label is an error.
    """
    labels = np.empty(dataset.n_users, dtype=np.int64)
    for idx, ext in enumerate(dataset.user_ids):
        if ext not in raw_labels:
            raise DatasetError(f"no attribute label for retained user '{ext}'", user=ext)
        labels[idx] = raw_labels[ext]
    table = AttributeTable(labels=labels)
    logger.info("   - Attribute groups: %d (label 0) / %d (label 1).", *table.sizes)
    return table


def build_dataset(
    interactions: List[RawInteraction],
    min_count: int = 5,
    ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 2023,
    iterate: bool = True,
) -> InteractionDataset:
    filtered = filter_min_interactions(interactions, min_count=min_count, iterate=iterate)
    return split_dataset(filtered, ratios=ratios, seed=seed)
