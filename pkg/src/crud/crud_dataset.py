# src/crud/crud_dataset.py
"""
Dataset and attribute files.

Dataset file (UTF-8 text, stable across versions):

    # unlearn-dataset v1
    # n_users=<N>
    # n_items=<M>
    # n_interactions=<count>
    # n_train=<count> n_val=<count> n_test=<count>
    # seed=<int>
    # ratios=<train>,<val>,<test>
    [users]
    <external user id of internal index 0>
    ...
    [items]
    <external item id of internal index 0>
    ...
    [interactions]
    <user index>\t<item index>\t<rating>\t<split: 0 train, 1 val, 2 test>
    ...

Interactions are sorted by (user, item). Attribute file: header
`# unlearn-attributes v1`, then `<external user id>\t<label>` per internal index.
"""
from pathlib import Path
from typing import Dict, List

import numpy as np

from ..exceptions import DatasetError, ParseError
from ..schemas.dataset_schemas import AttributeTable, InteractionDataset

DATASET_MAGIC = "# unlearn-dataset v1"
ATTRIBUTES_MAGIC = "# unlearn-attributes v1"


def _check_ids(ids, kind: str) -> None:
    for ext in ids:
        if ext.startswith("[") and ext.endswith("]") or any(ch in ext for ch in "\t\r\n"):
            raise DatasetError(f"{kind} id {ext!r} cannot be stored in a dataset file", ext if kind == "user" else None)


def save_dataset(dataset: InteractionDataset, path: str) -> str:
    _check_ids(dataset.user_ids, "user")
    _check_ids(dataset.item_ids, "item")
    counts = dataset.split_counts()
    lines = [
        DATASET_MAGIC,
        f"# n_users={dataset.n_users}",
        f"# n_items={dataset.n_items}",
        f"# n_interactions={dataset.n_interactions}",
        f"# n_train={counts['train']} n_val={counts['val']} n_test={counts['test']}",
        f"# seed={dataset.seed}",
        "# ratios=" + ",".join(repr(float(r)) for r in dataset.ratios),
        "[users]", *dataset.user_ids,
        "[items]", *dataset.item_ids,
        "[interactions]",
    ]
    lines.extend(
        f"{u}\t{i}\t{float(r)!r}\t{s}"
        for u, i, r, s in zip(dataset.users.tolist(), dataset.items.tolist(),
                              dataset.ratings.tolist(), dataset.split.tolist())
    )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def load_dataset(path: str) -> InteractionDataset:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != DATASET_MAGIC:
        raise ParseError("not a dataset file (bad magic line)", path, 1)

    header: Dict[str, str] = {}
    sections: Dict[str, List[str]] = {}
    current = None
    for line in text[1:]:
        if line.startswith("# ") and current is None:
            for pair in line[2:].split():
                key, _, value = pair.partition("=")
                header[key] = value
        elif line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)

    rows = [line.split("\t") for line in sections.get("interactions", []) if line]
    arr = np.array(rows, dtype=object).reshape(-1, 4)
    return InteractionDataset(
        n_users=int(header["n_users"]),
        n_items=int(header["n_items"]),
        users=arr[:, 0].astype(np.int64),
        items=arr[:, 1].astype(np.int64),
        ratings=arr[:, 2].astype(np.float64),
        split=arr[:, 3].astype(np.int8),
        user_ids=sections.get("users", []),
        item_ids=sections.get("items", []),
        seed=int(header["seed"]),
        ratios=tuple(float(r) for r in header["ratios"].split(",")),
    )


def save_attributes(table: AttributeTable, dataset: InteractionDataset, path: str) -> str:
    lines = [ATTRIBUTES_MAGIC]
    lines.extend(f"{ext}\t{label}" for ext, label in zip(dataset.user_ids, table.labels.tolist()))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def load_attributes(path: str, dataset: InteractionDataset) -> AttributeTable:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != ATTRIBUTES_MAGIC:
        raise ParseError("not an attribute file (bad magic line)", path, 1)
    labels = {}
    for line in lines[1:]:
        if line:
            ext, label = line.split("\t")
            labels[ext] = int(label)
    return AttributeTable(labels=np.array([labels[ext] for ext in dataset.user_ids], dtype=np.int64))
