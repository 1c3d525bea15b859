# src/services/analysis_service.py

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.decomposition import PCA

from ..exceptions import ShapeError
from ..schemas.analysis_schemas import HistogramSet, OverlapScore, Projection, ReportArtifact, SweepRow
from ..schemas.attack_schemas import AttackerConfig, ShadowSplit
from ..schemas.dataset_schemas import AttributeTable, InteractionDataset
from ..schemas.experiment_schemas import RunManifest
from ..schemas.model_schemas import EmbeddingModel
from ..schemas.unlearn_schemas import UnlearnConfig
from .attack_service import run_attack
from .recsys_service import eval_ranking, replace_user_embedding
from .unlearn_losses import frobenius_reg
from .unlearn_service import unlearn

logger = logging.getLogger(__name__)


def embedding_histograms(
    theta: np.ndarray, labels: AttributeTable, bins: int = 50, downsample: bool = True, seed: int = 2023
) -> HistogramSet:
    """
    Per-dimension histograms of both groups on shared edges. Edges span all
    users; with `downsample` the larger group is subsampled to the smaller size.
    """
    if labels.n_users != len(theta):
        raise ShapeError(f"{labels.n_users} labels for {len(theta)} embedding rows")
    labels.require_both_groups()
    rng = np.random.default_rng(seed)
    group_0, group_1 = labels.group_0, labels.group_1
    if downsample and len(group_0) != len(group_1):
        size = min(len(group_0), len(group_1))
        if len(group_0) > size:
            group_0 = np.sort(rng.choice(group_0, size=size, replace=False))
        else:
            group_1 = np.sort(rng.choice(group_1, size=size, replace=False))

    edges, counts, degenerate = [], [], []
    for dim in range(theta.shape[1]):
        column = theta[:, dim]
        lo, hi = float(column.min()), float(column.max())
        if hi <= lo:
            dim_edges = np.array([lo - 0.5, lo + 0.5])
            degenerate.append(dim)
        else:
            dim_edges = np.linspace(lo, hi, bins + 1)
        edges.append(dim_edges)
        counts.append(np.vstack([
            np.histogram(column[group_0], bins=dim_edges)[0],
            np.histogram(column[group_1], bins=dim_edges)[0],
        ]))
    if degenerate:
        logger.warning("⚠️ Constant embedding dimensions %s collapsed to a single bin.", degenerate)
    return HistogramSet(
        edges=edges, counts=counts, downsampled=downsample, seed=seed, degenerate_dims=degenerate
    )


def overlap_score(hist: HistogramSet) -> OverlapScore:
    """Histogram intersection of the two groups' normalized bin masses, per dimension."""
    per_dim = []
    for counts in hist.counts:
        totals = counts.sum(axis=1, keepdims=True).astype(np.float64)
        masses = np.divide(counts, totals, out=np.zeros(counts.shape), where=totals > 0)
        per_dim.append(float(min(np.minimum(masses[0], masses[1]).sum(), 1.0)))
    mean = float(np.mean(per_dim)) if per_dim else 0.0
    return OverlapScore(per_dim=per_dim, mean=min(max(mean, 0.0), 1.0))


def pca_project(theta: np.ndarray, dims: int = 2) -> Projection:
    """
    Projection of mean-centered theta onto its top principal components. Each
    component's largest-magnitude loading is made positive; components without
    variance come back as zero columns.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or len(theta) < 2:
        raise ShapeError("pca_project needs at least 2 rows")
    n_fit = min(dims, theta.shape[0], theta.shape[1])
    pca = PCA(n_components=n_fit, svd_solver="full")
    fitted = pca.fit_transform(theta)

    coords = np.zeros((len(theta), dims))
    variances = [0.0] * dims
    degenerate = []
    top = float(pca.singular_values_[0]) if n_fit else 0.0
    for c in range(dims):
        if c >= n_fit or pca.singular_values_[c] <= 1e-10 * max(top, 1e-300):
            degenerate.append(c)
            continue
        loading = pca.components_[c]
        sign = 1.0 if loading[np.argmax(np.abs(loading))] >= 0 else -1.0
        coords[:, c] = sign * fitted[:, c]
        variances[c] = float(pca.explained_variance_[c])
    if degenerate:
        logger.warning("⚠️ PCA components %s have no variance and were zeroed.", degenerate)
    return Projection(coords=coords, explained_variance=variances, degenerate=degenerate)


def mean_dimension_variance(theta: np.ndarray) -> float:
    return float(np.mean(np.var(theta, axis=0)))


def embedding_stats(theta: np.ndarray, labels: AttributeTable, bins: int = 50,
                    downsample: bool = True, seed: int = 2023) -> Dict[str, float]:
    hist = embedding_histograms(theta, labels, bins=bins, downsample=downsample, seed=seed)
    return {"mean_variance": mean_dimension_variance(theta), "mean_overlap": overlap_score(hist).mean}


def alpha_sweep(
    theta_star: np.ndarray,
    labels: AttributeTable,
    dataset: InteractionDataset,
    model: EmbeddingModel,
    alpha_grid: Sequence[float],
    cfg: UnlearnConfig,
    attacker_cfg: AttackerConfig,
    split: ShadowSplit,
) -> List[SweepRow]:
    """One unlearn + attack + ranking run per alpha, everything else fixed."""
    if not alpha_grid:
        raise ValueError("alpha grid is empty")
    rows = []
    for alpha in alpha_grid:
        logger.info("📈 Sweep point alpha=%g", alpha)
        result = unlearn(theta_star, labels, cfg.model_copy(update={"alpha": float(alpha)}))
        rec = eval_ranking(replace_user_embedding(model, result.theta, cfg.loss_kind), dataset)
        rows.append(SweepRow(
            alpha=float(alpha),
            auc_mlp=run_attack(result.theta, labels, split, attacker_cfg, "MLP").auc,
            auc_gbt=run_attack(result.theta, labels, split, attacker_cfg, "GBT").auc,
            ndcg10=rec.ndcg.get(10, math.nan),
            hr10=rec.hr.get(10, math.nan),
            frob_dist=math.sqrt(frobenius_reg(result.theta, theta_star)),
        ))
    return rows


# --- CSV layouts ---

def histogram_frame(hist: HistogramSet) -> pd.DataFrame:
    records = []
    for dim, (edges, counts) in enumerate(zip(hist.edges, hist.counts)):
        for b in range(counts.shape[1]):
            records.append((dim, edges[b], edges[b + 1], int(counts[0, b]), int(counts[1, b])))
    return pd.DataFrame(records, columns=["dim", "bin_lo", "bin_hi", "count_g0", "count_g1"])


def projection_frame(projection: Projection, labels: AttributeTable, user_ids: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame({
        "user": list(user_ids),
        "x": projection.coords[:, 0],
        "y": projection.coords[:, 1] if projection.coords.shape[1] > 1 else 0.0,
        "label": labels.labels,
    })


def sweep_frame(rows: Sequence[SweepRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows], columns=list(SweepRow.model_fields))


def write_report(artifacts: Sequence[ReportArtifact], out_dir: str, manifest: Optional[RunManifest] = None) -> RunManifest:
    """
    Writes each artifact to `<out_dir>/reports/<name>.csv` and the manifest to
    `<out_dir>/manifest.json`. Files are overwritten; the manifest lists each once.
    """
    root = Path(out_dir)
    reports = root / "reports"
    manifest = manifest or RunManifest(config_hash="", seeds=[])
    files = list(manifest.files)
    try:
        reports.mkdir(parents=True, exist_ok=True)
        for artifact in artifacts:
            path = reports / f"{artifact.name}.csv"
            artifact.frame.to_csv(path, index=False, lineterminator="\n")
            relative = path.relative_to(root).as_posix()
            if relative not in files:
                files.append(relative)
        manifest = manifest.model_copy(update={"files": files})
        manifest_path = root / "manifest.json"
        manifest_path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise OSError(f"could not write report under '{root}': {e}") from e
    logger.info("✅ Wrote %d report tables to %s", len(artifacts), reports)
    return manifest


def aggregate_tables(rows: pd.DataFrame, group_cols: Sequence[str], value_cols: Sequence[str]) -> pd.DataFrame:
    """
    Mean and (population) std of `value_cols` over seeds, one row per group in
    first-seen order. Columns come out as `<col>_mean`, `<col>_std`.
    """
    group_cols, value_cols = list(group_cols), list(value_cols)
    if rows.empty:
        columns = group_cols + [f"{c}_{stat}" for c in value_cols for stat in ("mean", "std")] + ["n_seeds"]
        return pd.DataFrame(columns=columns)
    grouped = rows.groupby(group_cols, sort=False)
    means = grouped[value_cols].mean().add_suffix("_mean")
    stds = grouped[value_cols].std(ddof=0).add_suffix("_std")
    table = pd.concat([means, stds], axis=1)[[f"{c}_{stat}" for c in value_cols for stat in ("mean", "std")]]
    table["n_seeds"] = grouped.size()
    return table.reset_index()
