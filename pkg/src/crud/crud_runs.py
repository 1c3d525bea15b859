# src/crud/crud_runs.py
from typing import List, Optional

from sqlalchemy.orm import Session

from .. import models


def get_stage_run(db: Session, config_hash: str, stage: str, seed: int = -1, method: str = "") -> Optional[models.StageRun]:
    return db.query(models.StageRun).filter(
        models.StageRun.config_hash == config_hash,
        models.StageRun.stage == stage,
        models.StageRun.seed == seed,
        models.StageRun.method == method,
    ).first()


def record_stage_run(
    db: Session, config_hash: str, stage: str, seed: int, method: str, wall_time: float, outputs: List[str]
) -> models.StageRun:
    """Inserts or replaces the registry row for one stage cell."""
    run = get_stage_run(db, config_hash, stage, seed, method)
    if run is None:
        run = models.StageRun(config_hash=config_hash, stage=stage, seed=seed, method=method)
        db.add(run)
    run.status = "done"
    run.wall_time = wall_time
    run.outputs = list(outputs)
    db.commit()
    db.refresh(run)
    return run


def list_stage_runs(db: Session, config_hash: str) -> List[models.StageRun]:
    return (
        db.query(models.StageRun)
        .filter(models.StageRun.config_hash == config_hash)
        .order_by(models.StageRun.stage, models.StageRun.seed, models.StageRun.method)
        .all()
    )
