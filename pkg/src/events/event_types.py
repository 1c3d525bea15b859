# In src/events/event_types.py

from typing import Any, List

from pydantic import BaseModel, ConfigDict, Field


class BaseEvent(BaseModel):
    """The base structure for all pipeline bookkeeping events."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    db_session: Any
    config_hash: str
    stage: str
    seed: int = -1
    method: str = ""

    @property
    def label(self) -> str:
        parts = [self.stage]
        if self.method:
            parts.append(self.method)
        if self.seed >= 0:
            parts.append(f"seed {self.seed}")
        return " / ".join(parts)


# --- Specific Event Types ---

class StageCompletedEvent(BaseEvent):
    """A stage cell ran and wrote its outputs."""
    wall_time: float
    outputs: List[str] = Field(default_factory=list)


class StageSkippedEvent(BaseEvent):
    """A stage cell was found in the registry with its outputs present."""
    pass
