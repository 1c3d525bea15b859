# src/crud/crud_results.py
"""
Unlearning result directories and per-cell result rows.

An unlearning result directory holds `model.ckpt` (checkpoint with the
unlearned user embedding), `loss_trace.csv` (`epoch,total,lu,lr`) and
`meta.txt` (`key=value` lines: config fields and wall_time).
"""
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import pandas as pd

from ..schemas.model_schemas import EmbeddingModel
from ..schemas.unlearn_schemas import UnlearnResult
from .crud_checkpoint import save_checkpoint

ATTACK_COLUMNS = ["dataset", "model", "method", "attacker", "acc", "precision", "recall", "auc", "seed"]
REC_COLUMNS = ["dataset", "model", "method", "ndcg@5", "hr@5", "ndcg@10", "hr@10", "seed"]
TIMING_COLUMNS = ["dataset", "model", "method", "wall_time", "seed"]
STATS_COLUMNS = ["dataset", "model", "method", "mean_variance", "mean_overlap", "seed"]


def save_unlearn_result(result: UnlearnResult, model: EmbeddingModel, out_dir: str) -> List[str]:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    checkpoint = save_checkpoint(model, str(root / "model.ckpt"))

    trace = pd.DataFrame(
        [(epoch, t.total, t.lu, t.lr) for epoch, t in enumerate(result.loss_trace)],
        columns=["epoch", "total", "lu", "lr"],
    )
    trace_path = root / "loss_trace.csv"
    trace.to_csv(trace_path, index=False, lineterminator="\n")

    meta = dict(result.config.model_dump())
    meta["wall_time"] = result.wall_time
    meta["epochs_run"] = len(result.loss_trace) - 1
    meta_path = root / "meta.txt"
    meta_path.write_text("".join(f"{key}={value}\n" for key, value in sorted(meta.items())), encoding="utf-8")
    return [checkpoint, str(trace_path), str(meta_path)]


def load_unlearn_meta(out_dir: str) -> Dict[str, str]:
    meta = {}
    for line in (Path(out_dir) / "meta.txt").read_text(encoding="utf-8").splitlines():
        key, sep, value = line.partition("=")
        if sep:
            meta[key] = value
    return meta


def load_loss_trace(out_dir: str) -> pd.DataFrame:
    return pd.read_csv(Path(out_dir) / "loss_trace.csv")


def write_rows(path: str, records: Iterable[Dict], columns: Sequence[str]) -> str:
    """Writes one grid cell's result rows; the aggregator reads them back."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(records), columns=list(columns)).to_csv(path, index=False, lineterminator="\n")
    return str(path)


def read_rows(paths: Iterable[str], columns: Sequence[str]) -> pd.DataFrame:
    frames = [pd.read_csv(p) for p in paths if Path(p).is_file()]
    if not frames:
        return pd.DataFrame(columns=list(columns))
    return pd.concat(frames, ignore_index=True)[list(columns)]
