# In src/events/__init__.py

from .event_bus import dispatch, register_listener
from .event_types import BaseEvent, StageCompletedEvent, StageSkippedEvent
from .stage_listeners import log_completed_stage, log_skipped_stage, record_completed_stage


def register_all_listeners():
    """A single function to set up all event pipelines."""

    # --- Pipeline for finished stage cells ---
    register_listener(StageCompletedEvent, record_completed_stage)
    register_listener(StageCompletedEvent, log_completed_stage)

    # --- Pipeline for cells found in the registry ---
    register_listener(StageSkippedEvent, log_skipped_stage)
