# tests/test_pipeline.py
import json

import pandas as pd
import pytest
from click.testing import CliRunner

from conftest import write_experiment_config
from src.config import load_experiment_config
from src.controllers import pipeline_controller
from src.controllers.pipeline_controller import RunContext, experiment_hash
from src.crud.crud_results import load_loss_trace, load_unlearn_meta
from src.events import event_bus
from src.events.event_types import StageSkippedEvent
from src.exceptions import MissingArtifactError
from src.main import cli


def _run_pipeline(config_path, force=False):
    ctx = RunContext(load_experiment_config(str(config_path)), force=force)
    try:
        return ctx, pipeline_controller.cmd_pipeline(ctx)
    finally:
        ctx.close()


@pytest.fixture
def finished_run(experiment_config):
    ctx, manifest = _run_pipeline(experiment_config)
    return ctx.layout.root, manifest


def test_pipeline_writes_reports(finished_run):
    root, manifest = finished_run
    for name in ("attack", "recommendation", "timing", "embedding_stats",
                 "histograms_original", "histograms_D2D-R", "projection_U2U-R", "projection_Retrain"):
        assert (root / "reports" / f"{name}.csv").is_file(), name

    attack = pd.read_csv(root / "reports" / "attack.csv")
    # original, U2U-R, D2D-R and Retrain, each attacked by MLP and GBT
    assert len(attack) == 8
    assert set(attack["method"]) == {"original", "U2U-R", "D2D-R", "Retrain"}
    assert attack["auc_mean"].between(0, 1).all()
    assert (attack["n_seeds"] == 1).all()

    on_disk = json.loads((root / "manifest.json").read_text())
    assert on_disk["config_hash"] == manifest.config_hash
    assert len(on_disk["files"]) == len(set(on_disk["files"]))
    assert "seed_7/model.ckpt" in on_disk["files"]
    assert "reports/attack.csv" in on_disk["files"]
    assert "train:original:7" in on_disk["stage_times"]


def test_unlearn_cell_outputs(finished_run):
    root, _ = finished_run
    out_dir = root / "seed_7" / "unlearn" / "D2D-R"
    trace = load_loss_trace(str(out_dir))
    assert list(trace.columns) == ["epoch", "total", "lu", "lr"]
    assert len(trace) == 21
    meta = load_unlearn_meta(str(out_dir))
    assert meta["loss_kind"] == "D2D-R" and meta["epochs_run"] == "20"


def test_rerun_skips_finished_cells(experiment_config, finished_run):
    _, first = finished_run
    _, second = _run_pipeline(experiment_config)
    assert second.executed_stages == []
    assert "attack:D2D-R:7" in second.skipped_stages
    assert second.config_hash == first.config_hash


def test_deleted_output_is_recomputed(experiment_config, finished_run):
    root, _ = finished_run
    (root / "seed_7" / "results" / "attack_D2D-R.csv").unlink()
    _, manifest = _run_pipeline(experiment_config)
    assert manifest.executed_stages == ["attack:D2D-R:7"]


def test_force_recomputes_everything(experiment_config, finished_run):
    _, manifest = _run_pipeline(experiment_config, force=True)
    assert manifest.skipped_stages == []
    assert "prepare" in manifest.executed_stages


def test_attack_table_is_reproducible_across_directories(tmp_path, movielens_files, finished_run):
    root, _ = finished_run
    ratings, users = movielens_files
    other = write_experiment_config(tmp_path / "other.env", ratings, users, tmp_path / "elsewhere")
    _run_pipeline(other)
    first = (root / "reports" / "attack.csv").read_bytes()
    assert (tmp_path / "elsewhere" / "reports" / "attack.csv").read_bytes() == first
    assert (tmp_path / "elsewhere" / "reports" / "recommendation.csv").read_bytes() == \
        (root / "reports" / "recommendation.csv").read_bytes()


def test_stage_by_stage_matches_pipeline(tmp_path, movielens_files, finished_run):
    root, _ = finished_run
    ratings, users = movielens_files
    path = write_experiment_config(tmp_path / "staged.env", ratings, users, tmp_path / "staged")
    ctx = RunContext(load_experiment_config(str(path)))
    try:
        pipeline_controller.cmd_prepare(ctx)
        pipeline_controller.cmd_train(ctx)
        pipeline_controller.cmd_unlearn(ctx)
        pipeline_controller.cmd_attack(ctx)
        pipeline_controller.cmd_eval(ctx)
    finally:
        ctx.close()
    assert (tmp_path / "staged" / "reports" / "attack.csv").read_bytes() == \
        (root / "reports" / "attack.csv").read_bytes()


def test_train_before_prepare_names_the_missing_stage(experiment_config):
    ctx = RunContext(load_experiment_config(str(experiment_config)))
    try:
        with pytest.raises(MissingArtifactError, match="prepare"):
            pipeline_controller.cmd_train(ctx)
    finally:
        ctx.close()


def test_sweep_writes_one_row_per_alpha(experiment_config, finished_run):
    root, _ = finished_run
    ctx = RunContext(load_experiment_config(str(experiment_config)))
    try:
        pipeline_controller.cmd_sweep(ctx, [0.0, 1.0])
    finally:
        ctx.close()
    sweep = pd.read_csv(root / "reports" / "alpha_sweep.csv")
    assert sweep["alpha"].tolist() == [0.0, 1.0]
    assert list(sweep.columns) == ["alpha", "auc_mlp", "auc_gbt", "ndcg10", "hr10", "frob_dist"]
    assert "reports/alpha_sweep.csv" in json.loads((root / "manifest.json").read_text())["files"]


def test_unlearn_explicit_checkpoint(experiment_config, finished_run):
    root, _ = finished_run
    ctx = RunContext(load_experiment_config(str(experiment_config)))
    try:
        outputs = pipeline_controller.cmd_unlearn(ctx, str(root / "seed_7" / "model.ckpt"))
    finally:
        ctx.close()
    assert (root / "unlearn_model" / "D2D-R" / "model.ckpt").is_file()
    assert len(outputs) == 6


def test_experiment_hash_ignores_location_and_seeds(experiment_config, tmp_path):
    config = load_experiment_config(str(experiment_config))
    moved = config.model_copy(update={"output_dir": str(tmp_path / "x"), "seed": 1, "repeat": 3})
    assert experiment_hash(moved) == experiment_hash(config)
    changed = config.model_copy(update={"model": config.model.model_copy(update={"epochs": 4})})
    assert experiment_hash(changed) != experiment_hash(config)


# --- command line ---

def test_cli_pipeline(experiment_config):
    result = CliRunner().invoke(cli, ["--config", str(experiment_config), "pipeline"])
    assert result.exit_code == 0, result.output
    assert "pipeline done" in result.output


def test_cli_bad_config_exits_2(tmp_path):
    bad = tmp_path / "bad.env"
    bad.write_text("dataset__ratings_path=a\nmodel__kind=SVD\n", encoding="utf-8")
    result = CliRunner().invoke(cli, ["--config", str(bad), "prepare"])
    assert result.exit_code == 2
    assert "config" in result.output


def test_cli_failed_stage_exits_1(experiment_config):
    result = CliRunner().invoke(cli, ["--config", str(experiment_config), "train"])
    assert result.exit_code == 1
    assert "train" in result.output and "prepare" in result.output


def test_dispatch_runs_every_listener_in_order(monkeypatch):
    calls = []
    monkeypatch.setitem(event_bus.EVENT_LISTENERS, StageSkippedEvent, [
        lambda event: calls.append(("first", event.label)),
        lambda event: calls.append(("second", event.label)),
    ])
    event_bus.dispatch(StageSkippedEvent(db_session=None, config_hash="h", stage="attack", seed=7, method="D2D-R"))
    assert calls == [("first", "attack / D2D-R / seed 7"), ("second", "attack / D2D-R / seed 7")]
