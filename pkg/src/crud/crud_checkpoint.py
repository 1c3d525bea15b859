# src/crud/crud_checkpoint.py
"""
Model checkpoints.

    UNLEARNCKPT v1 kind=<MF|LightGCN> method=<name> N=<users> M=<items> K=<size> L=<layers> seed=<int> epoch=<int> matrices=<names>
    # train_config <json>
    <little-endian float64 row-major matrices, in the order listed by `matrices`>

`matrices` is `user,item` for MF and `user,item,base_user,base_item` for
LightGCN. The normalized adjacency is not stored; pass the dataset to
load_checkpoint to rebuild it.
"""
import json
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from ..exceptions import ParseError
from ..schemas.dataset_schemas import TRAIN, InteractionDataset
from ..schemas.model_schemas import EmbeddingModel, TrainConfig
from ..services.lightgcn_service import build_adjacency

CHECKPOINT_MAGIC = "UNLEARNCKPT"
CHECKPOINT_VERSION = "v1"
LITTLE_F64 = np.dtype("<f8")


def save_checkpoint(model: EmbeddingModel, path: str) -> str:
    matrices = {"user": model.user_emb, "item": model.item_emb}
    if model.base_user is not None and model.base_item is not None:
        matrices["base_user"] = model.base_user
        matrices["base_item"] = model.base_item
    header = (
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} kind={model.kind} method={model.method} "
        f"N={model.n_users} M={model.n_items} K={model.embedding_size} L={model.n_layers} "
        f"seed={model.seed} epoch={model.epoch} matrices={','.join(matrices)}\n"
        f"# train_config {json.dumps(model.train_config.model_dump(), sort_keys=True)}\n"
    )
    payload = b"".join(np.ascontiguousarray(m, dtype=LITTLE_F64).tobytes() for m in matrices.values())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(header.encode("utf-8") + payload)
    return str(path)


def _parse_header(line: str, path: str) -> Dict[str, str]:
    parts = line.split()
    if len(parts) < 2 or parts[0] != CHECKPOINT_MAGIC:
        raise ParseError("not a checkpoint file (bad magic)", path, 1)
    if parts[1] != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version '{parts[1]}'", path, 1)
    fields = {}
    for part in parts[2:]:
        key, _, value = part.partition("=")
        fields[key] = value
    for key in ("kind", "method", "N", "M", "K", "L", "seed", "epoch", "matrices"):
        if key not in fields:
            raise ParseError(f"checkpoint header lacks '{key}'", path, 1)
    return fields


def load_checkpoint(path: str, dataset: Optional[InteractionDataset] = None) -> EmbeddingModel:
    raw = Path(path).read_bytes()
    first_end = raw.find(b"\n")
    second_end = raw.find(b"\n", first_end + 1)
    if first_end < 0 or second_end < 0:
        raise ParseError("truncated checkpoint header", path, 1)
    fields = _parse_header(raw[:first_end].decode("utf-8"), path)
    config_line = raw[first_end + 1:second_end].decode("utf-8")
    if not config_line.startswith("# train_config "):
        raise ParseError("missing train_config line", path, 2)
    train_config = TrainConfig(**json.loads(config_line[len("# train_config "):]))

    n_users, n_items, k = int(fields["N"]), int(fields["M"]), int(fields["K"])
    rows = {"user": n_users, "item": n_items, "base_user": n_users, "base_item": n_items}
    names = fields["matrices"].split(",")
    values = np.frombuffer(raw[second_end + 1:], dtype=LITTLE_F64)
    expected = sum(rows[name] for name in names) * k
    if len(values) != expected:
        raise ParseError(f"expected {expected} float64 values, found {len(values)}", path)

    matrices, offset = {}, 0
    for name in names:
        size = rows[name] * k
        matrices[name] = values[offset:offset + size].reshape(rows[name], k).copy()
        offset += size

    adjacency = None
    if fields["kind"] == "LightGCN" and dataset is not None:
        adjacency = build_adjacency(dataset.n_users, dataset.n_items, *dataset.pairs(TRAIN), allow_isolated_items=True)
    return EmbeddingModel(
        kind=fields["kind"], method=fields["method"],
        user_emb=matrices["user"], item_emb=matrices["item"], n_layers=int(fields["L"]),
        base_user=matrices.get("base_user"), base_item=matrices.get("base_item"), adjacency=adjacency,
        train_config=train_config, seed=int(fields["seed"]), epoch=int(fields["epoch"]),
    )
