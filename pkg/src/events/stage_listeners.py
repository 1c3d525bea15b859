# In src/events/stage_listeners.py

import logging

from ..crud import crud_runs
from .event_types import StageCompletedEvent, StageSkippedEvent

logger = logging.getLogger(__name__)


def record_completed_stage(event: StageCompletedEvent):
    """LISTENER: Upserts the registry row so later runs can skip this cell."""
    crud_runs.record_stage_run(
        db=event.db_session, config_hash=event.config_hash, stage=event.stage,
        seed=event.seed, method=event.method, wall_time=event.wall_time, outputs=event.outputs,
    )


def log_completed_stage(event: StageCompletedEvent):
    logger.info("✅ %s finished in %.2fs", event.label, event.wall_time)


def log_skipped_stage(event: StageSkippedEvent):
    logger.info("⏭️  %s already done, skipping", event.label)
