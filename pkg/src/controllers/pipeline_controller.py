# In src/controllers/pipeline_controller.py
"""
Orchestrates the experiment grid. Every (stage, seed, method) cell is recorded
in the run registry; a rerun skips cells whose outputs are still on disk
unless `force` is set. Reports are always rebuilt from the per-cell files.
"""
import logging
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple


from ..config import num_threads
from ..crud import crud_runs
from ..crud.crud_checkpoint import load_checkpoint, save_checkpoint
from ..crud.crud_dataset import load_attributes, load_dataset, save_attributes, save_dataset
from ..crud.crud_results import (
    ATTACK_COLUMNS, REC_COLUMNS, STATS_COLUMNS, TIMING_COLUMNS, read_rows, save_unlearn_result, write_rows,
)
from ..database import get_session_factory
from ..events import StageCompletedEvent, StageSkippedEvent, dispatch, register_all_listeners
from ..exceptions import MissingArtifactError, StageError
from ..schemas.analysis_schemas import ReportArtifact
from ..schemas.attack_schemas import AttackReport
from ..schemas.dataset_schemas import AttributeTable, InteractionDataset
from ..schemas.experiment_schemas import ExperimentConfig, RunManifest
from ..schemas.model_schemas import EmbeddingModel, RecReport
from ..services import analysis_service
from ..services.attack_service import run_attacks, shadow_split
from ..services.data_loader import build_attribute_table, build_dataset, parse_attributes, parse_ratings
from ..services.recsys_service import eval_ranking, replace_user_embedding, train_model, user_embedding
from ..services.unlearn_service import retrain_with_d2d, unlearn
from .utils import config_hash

logger = logging.getLogger(__name__)

ORIGINAL = "original"
RETRAIN = "Retrain"


class RunLayout:
    """Where every artifact of one output directory lives."""

    def __init__(self, out_dir: str):
        self.root = Path(out_dir)

    @property
    def dataset(self) -> Path:
        return self.root / "data" / "dataset.tsv"

    @property
    def attributes(self) -> Path:
        return self.root / "data" / "attributes.tsv"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def sweep(self) -> Path:
        return self.reports / "alpha_sweep.csv"

    def seed_dir(self, seed: int) -> Path:
        return self.root / f"seed_{seed}"

    def checkpoint(self, seed: int) -> Path:
        return self.seed_dir(seed) / "model.ckpt"

    def retrain_checkpoint(self, seed: int) -> Path:
        return self.seed_dir(seed) / "retrain" / "model.ckpt"

    def unlearn_dir(self, seed: int, method: str) -> Path:
        return self.seed_dir(seed) / "unlearn" / method

    def method_checkpoint(self, seed: int, method: str) -> Path:
        if method == ORIGINAL:
            return self.checkpoint(seed)
        if method == RETRAIN:
            return self.retrain_checkpoint(seed)
        return self.unlearn_dir(seed, method) / "model.ckpt"

    def results(self, seed: int, kind: str, method: str) -> Path:
        return self.seed_dir(seed) / "results" / f"{kind}_{method}.csv"

    def relative(self, path) -> str:
        return Path(path).resolve().relative_to(self.root.resolve()).as_posix()


def experiment_hash(config: ExperimentConfig) -> str:
    """Seeds are part of each cell's key, so neither the base seed nor the repeat count enters the hash."""
    return config_hash(config.model_dump(exclude={"output_dir", "repeat", "seed"}))


class RunContext:
    def __init__(self, config: ExperimentConfig, force: bool = False):
        self.config = config
        self.force = force
        self.layout = RunLayout(config.output_dir)
        self.config_hash = experiment_hash(config)
        self.db = get_session_factory(str(self.layout.root))()
        self.executed: List[str] = []
        self.skipped: List[str] = []
        self._prepared: Optional[Tuple[InteractionDataset, AttributeTable]] = None
        register_all_listeners()

    def close(self):
        self.db.close()

    @property
    def methods(self) -> List[str]:
        methods = [ORIGINAL, *self.config.unlearn.methods]
        if self.config.retrain.enabled:
            methods.append(RETRAIN)
        return methods

    def row_base(self, method: str, seed: int) -> dict:
        return {"dataset": self.config.dataset.name, "model": self.config.model.kind, "method": method, "seed": seed}


def _cell_label(stage: str, method: str, seed: int) -> str:
    return ":".join(part for part in (stage, method, str(seed) if seed >= 0 else "") if part)


def run_cell(ctx: RunContext, stage: str, seed: int, method: str, work: Callable[[], Tuple[List[str], float]]) -> List[str]:
    """
    Runs one grid cell unless the registry says it is done and its outputs exist.
    `work` returns (output paths, wall time to record).
    """
    label = _cell_label(stage, method, seed)
    if not ctx.force:
        run = crud_runs.get_stage_run(ctx.db, ctx.config_hash, stage, seed, method)
        if run is not None and all((ctx.layout.root / p).is_file() for p in run.outputs):
            dispatch(StageSkippedEvent(
                db_session=ctx.db, config_hash=ctx.config_hash, stage=stage, seed=seed, method=method,
            ))
            ctx.skipped.append(label)
            return [str(ctx.layout.root / p) for p in run.outputs]

    try:
        outputs, wall_time = work()
    except StageError:
        raise
    except Exception as e:
        logger.error("❌ %s failed: %s", label, e)
        raise StageError(stage, e) from e

    dispatch(StageCompletedEvent(
        db_session=ctx.db, config_hash=ctx.config_hash, stage=stage, seed=seed, method=method,
        wall_time=wall_time, outputs=[ctx.layout.relative(p) for p in outputs],
    ))
    ctx.executed.append(label)
    return outputs


# --- Artifact loading ---

def load_prepared(ctx: RunContext) -> Tuple[InteractionDataset, AttributeTable]:
    if ctx._prepared is None:
        for path in (ctx.layout.dataset, ctx.layout.attributes):
            if not path.is_file():
                raise MissingArtifactError(str(path), "prepare")
        dataset = load_dataset(str(ctx.layout.dataset))
        ctx._prepared = (dataset, load_attributes(str(ctx.layout.attributes), dataset))
    return ctx._prepared


def load_method_model(ctx: RunContext, seed: int, method: str) -> EmbeddingModel:
    path = ctx.layout.method_checkpoint(seed, method)
    if not path.is_file():
        raise MissingArtifactError(str(path), "unlearn" if method not in (ORIGINAL, RETRAIN) else "train")
    dataset, _ = load_prepared(ctx)
    return load_checkpoint(str(path), dataset)


def _timing_rows(ctx: RunContext, seed: int, method: str, wall_time: float) -> str:
    return write_rows(
        str(ctx.layout.results(seed, "timing", method)),
        [{**ctx.row_base(method, seed), "wall_time": wall_time}], TIMING_COLUMNS,
    )


# --- Commands ---

def cmd_prepare(ctx: RunContext) -> List[str]:
    spec = ctx.config.dataset

    def work():
        started = time.perf_counter()
        logger.info("📂 Preparing dataset '%s' from %s", spec.name, spec.ratings_path)
        raw = parse_ratings(spec.ratings_path, spec.format, spec.generic)
        raw_labels = parse_attributes(spec.users_path, spec.attribute_format or spec.format, spec.generic)
        dataset = build_dataset(raw, spec.min_count, spec.split_ratios, spec.seed, spec.iterate_filter)
        table = build_attribute_table(dataset, raw_labels)
        table.require_both_groups()
        outputs = [
            save_dataset(dataset, str(ctx.layout.dataset)),
            save_attributes(table, dataset, str(ctx.layout.attributes)),
        ]
        ctx._prepared = (dataset, table)
        return outputs, time.perf_counter() - started

    return run_cell(ctx, "prepare", -1, "", work)


def _train_cell(ctx: RunContext, seed: int) -> List[str]:
    def work():
        dataset, _ = load_prepared(ctx)
        started = time.perf_counter()
        model = train_model(dataset, ctx.config.model.train_config(seed), ctx.config.model.kind)
        wall_time = time.perf_counter() - started
        return [
            save_checkpoint(model, str(ctx.layout.checkpoint(seed))),
            _timing_rows(ctx, seed, ORIGINAL, wall_time),
        ], wall_time

    return run_cell(ctx, "train", seed, ORIGINAL, work)


def _retrain_cell(ctx: RunContext, seed: int) -> List[str]:
    spec = ctx.config.retrain

    def work():
        dataset, table = load_prepared(ctx)
        started = time.perf_counter()
        model = retrain_with_d2d(
            dataset, table, ctx.config.model.train_config(seed), spec.d2d_weight,
            ctx.config.model.kind, spec.mmd_bandwidth,
        )
        wall_time = time.perf_counter() - started
        return [
            save_checkpoint(model, str(ctx.layout.retrain_checkpoint(seed))),
            _timing_rows(ctx, seed, RETRAIN, wall_time),
        ], wall_time

    return run_cell(ctx, "retrain", seed, RETRAIN, work)


def cmd_train(ctx: RunContext) -> List[str]:
    """Trains the original model, and the Retrain baseline when enabled, for every seed."""
    load_prepared(ctx)
    outputs = []
    for seed in ctx.config.seeds():
        outputs += _train_cell(ctx, seed)
        if ctx.config.retrain.enabled:
            outputs += _retrain_cell(ctx, seed)
    return outputs


def _unlearn_and_save(ctx: RunContext, model: EmbeddingModel, method: str, seed: int, out_dir: Path):
    _, table = load_prepared(ctx)
    result = unlearn(user_embedding(model), table, ctx.config.unlearn.config_for(method, seed))
    files = save_unlearn_result(result, replace_user_embedding(model, result.theta, method), str(out_dir))
    return files, result.wall_time


def _unlearn_cell(ctx: RunContext, seed: int, method: str) -> List[str]:
    def work():
        model = load_method_model(ctx, seed, ORIGINAL)
        files, wall_time = _unlearn_and_save(ctx, model, method, seed, ctx.layout.unlearn_dir(seed, method))
        return files + [_timing_rows(ctx, seed, method, wall_time)], wall_time

    return run_cell(ctx, "unlearn", seed, method, work)


def cmd_unlearn(ctx: RunContext, checkpoint: Optional[str] = None) -> List[str]:
    """
    Unlearns every configured method for every seed. With an explicit
    checkpoint, unlearns just that model into `unlearn_<name>/<method>/`.
    """
    outputs = []
    if checkpoint is not None:
        dataset, _ = load_prepared(ctx)
        if not Path(checkpoint).is_file():
            raise MissingArtifactError(checkpoint, "train")
        model = load_checkpoint(checkpoint, dataset)
        for method in ctx.config.unlearn.methods:
            out_dir = ctx.layout.root / f"unlearn_{Path(checkpoint).stem}" / method
            try:
                files, _ = _unlearn_and_save(ctx, model, method, model.seed, out_dir)
            except Exception as e:
                raise StageError("unlearn", e) from e
            outputs += files
        return outputs

    for seed in ctx.config.seeds():
        for method in ctx.config.unlearn.methods:
            outputs += _unlearn_cell(ctx, seed, method)
    return outputs


def _attack_records(ctx: RunContext, model: EmbeddingModel, method: str, seed: int) -> List[dict]:
    dataset, table = load_prepared(ctx)
    spec = ctx.config.attack
    split = shadow_split(dataset.n_users, table, spec.fraction, seed)
    reports: List[AttackReport] = run_attacks(
        user_embedding(model), table, split, spec.attacker_config(seed, num_threads() or 1), spec.attackers,
    )
    return [
        {**ctx.row_base(method, seed), "attacker": r.attacker, "acc": r.accuracy,
         "precision": r.precision, "recall": r.recall, "auc": r.auc}
        for r in reports
    ]


def _attack_cell(ctx: RunContext, seed: int, method: str) -> List[str]:
    def work():
        model = load_method_model(ctx, seed, method)
        started = time.perf_counter()
        logger.info("🕵️ Attacking %s embeddings (seed %d)", method, seed)
        records = _attack_records(ctx, model, method, seed)
        path = write_rows(str(ctx.layout.results(seed, "attack", method)), records, ATTACK_COLUMNS)
        return [path], time.perf_counter() - started

    return run_cell(ctx, "attack", seed, method, work)


def cmd_attack(ctx: RunContext, checkpoint: Optional[str] = None) -> List[str]:
    if checkpoint is not None:
        return [_direct_rows(ctx, checkpoint, "attack", _attack_records, ATTACK_COLUMNS)]
    outputs = []
    for seed in ctx.config.seeds():
        for method in ctx.methods:
            outputs += _attack_cell(ctx, seed, method)
    build_reports(ctx)
    return outputs


def _eval_records(ctx: RunContext, model: EmbeddingModel, method: str, seed: int) -> List[dict]:
    dataset, _ = load_prepared(ctx)
    report: RecReport = eval_ranking(model, dataset)
    return [{**ctx.row_base(method, seed), **report.flat()}]


def _eval_cell(ctx: RunContext, seed: int, method: str) -> List[str]:
    def work():
        model = load_method_model(ctx, seed, method)
        _, table = load_prepared(ctx)
        started = time.perf_counter()
        rec_path = write_rows(
            str(ctx.layout.results(seed, "rec", method)), _eval_records(ctx, model, method, seed), REC_COLUMNS,
        )
        analysis = ctx.config.analysis
        stats = analysis_service.embedding_stats(
            user_embedding(model), table, analysis.bins, analysis.downsample, seed,
        )
        stats_path = write_rows(
            str(ctx.layout.results(seed, "stats", method)), [{**ctx.row_base(method, seed), **stats}], STATS_COLUMNS,
        )
        return [rec_path, stats_path], time.perf_counter() - started

    return run_cell(ctx, "eval", seed, method, work)


def cmd_eval(ctx: RunContext, checkpoint: Optional[str] = None) -> List[str]:
    if checkpoint is not None:
        return [_direct_rows(ctx, checkpoint, "rec", _eval_records, REC_COLUMNS)]
    outputs = []
    for seed in ctx.config.seeds():
        for method in ctx.methods:
            outputs += _eval_cell(ctx, seed, method)
    build_reports(ctx)
    return outputs


def _direct_rows(ctx: RunContext, checkpoint: str, kind: str, make_records, columns: Sequence[str]) -> str:
    """Attack/eval rows for an explicitly given checkpoint, outside the registry."""
    dataset, _ = load_prepared(ctx)
    if not Path(checkpoint).is_file():
        raise MissingArtifactError(checkpoint, "train")
    try:
        model = load_checkpoint(checkpoint, dataset)
        records = make_records(ctx, model, model.method, model.seed)
    except Exception as e:
        raise StageError("attack" if kind == "attack" else "eval", e) from e
    return write_rows(str(ctx.layout.root / "results" / f"{kind}_{Path(checkpoint).stem}.csv"), records, columns)


def cmd_sweep(ctx: RunContext, alpha_grid: Optional[Sequence[float]] = None) -> List[str]:
    """Alpha sweep of the configured method on the base seed's original model."""
    analysis = ctx.config.analysis
    grid = [float(a) for a in (alpha_grid or analysis.alpha_grid)]
    seed = ctx.config.seed
    method = analysis.sweep_method

    def work():
        dataset, table = load_prepared(ctx)
        model = load_method_model(ctx, seed, ORIGINAL)
        started = time.perf_counter()
        spec = ctx.config.attack
        rows = analysis_service.alpha_sweep(
            user_embedding(model), table, dataset, model, grid,
            ctx.config.unlearn.config_for(method, seed),
            spec.attacker_config(seed, num_threads() or 1),
            shadow_split(dataset.n_users, table, spec.fraction, seed),
        )
        ctx.layout.reports.mkdir(parents=True, exist_ok=True)
        analysis_service.sweep_frame(rows).to_csv(ctx.layout.sweep, index=False, lineterminator="\n")
        return [str(ctx.layout.sweep)], time.perf_counter() - started

    outputs = run_cell(ctx, "sweep", seed, f"{method}@{','.join(repr(a) for a in grid)}", work)
    write_manifest(ctx, [])
    return outputs


def cmd_pipeline(ctx: RunContext) -> RunManifest:
    """prepare -> train (+Retrain) -> unlearn -> attack -> eval -> reports."""
    cmd_prepare(ctx)
    seeds = ctx.config.seeds()
    for seed in seeds:
        _train_cell(ctx, seed)
        if ctx.config.retrain.enabled:
            _retrain_cell(ctx, seed)
        for method in ctx.config.unlearn.methods:
            _unlearn_cell(ctx, seed, method)
        for method in ctx.methods:
            _attack_cell(ctx, seed, method)
            _eval_cell(ctx, seed, method)
    return build_reports(ctx)


# --- Reports ---

def _analysis_artifacts(ctx: RunContext) -> List[ReportArtifact]:
    """Histogram and projection tables for the base seed's available embeddings."""
    dataset, table = load_prepared(ctx)
    analysis = ctx.config.analysis
    seed = ctx.config.seed
    artifacts = []
    for method in ctx.methods:
        path = ctx.layout.method_checkpoint(seed, method)
        if not path.is_file():
            continue
        theta = user_embedding(load_checkpoint(str(path)))
        hist = analysis_service.embedding_histograms(theta, table, analysis.bins, analysis.downsample, seed)
        projection = analysis_service.pca_project(theta)
        artifacts.append(ReportArtifact(name=f"histograms_{method}", frame=analysis_service.histogram_frame(hist)))
        artifacts.append(ReportArtifact(
            name=f"projection_{method}",
            frame=analysis_service.projection_frame(projection, table, dataset.user_ids),
        ))
    return artifacts


def build_reports(ctx: RunContext) -> RunManifest:
    """Single-writer aggregation of every per-cell result file into the averaged tables."""
    seeds, methods = ctx.config.seeds(), ctx.methods
    layout = ctx.layout

    def gather(kind: str, columns: Sequence[str]):
        return read_rows([str(layout.results(s, kind, m)) for s in seeds for m in methods], columns)

    tables = {
        "attack": analysis_service.aggregate_tables(
            gather("attack", ATTACK_COLUMNS), ["dataset", "model", "method", "attacker"],
            ["acc", "precision", "recall", "auc"],
        ),
        "recommendation": analysis_service.aggregate_tables(
            gather("rec", REC_COLUMNS), ["dataset", "model", "method"], ["ndcg@5", "hr@5", "ndcg@10", "hr@10"],
        ),
        "timing": analysis_service.aggregate_tables(
            gather("timing", TIMING_COLUMNS), ["dataset", "model", "method"], ["wall_time"],
        ),
        "embedding_stats": analysis_service.aggregate_tables(
            gather("stats", STATS_COLUMNS), ["dataset", "model", "method"], ["mean_variance", "mean_overlap"],
        ),
    }
    artifacts = [ReportArtifact(name=name, frame=frame) for name, frame in tables.items()]
    artifacts += _analysis_artifacts(ctx)
    return write_manifest(ctx, artifacts)


def write_manifest(ctx: RunContext, artifacts: List[ReportArtifact]) -> RunManifest:
    runs = crud_runs.list_stage_runs(ctx.db, ctx.config_hash)
    files = []
    for run in runs:
        for path in run.outputs:
            if path not in files:
                files.append(path)
    manifest = RunManifest(
        config_hash=ctx.config_hash,
        seeds=ctx.config.seeds(),
        stage_times={_cell_label(r.stage, r.method, r.seed): float(r.wall_time) for r in runs},
        files=files,
        executed_stages=list(ctx.executed),
        skipped_stages=list(ctx.skipped),
    )
    return analysis_service.write_report(artifacts, str(ctx.layout.root), manifest)
