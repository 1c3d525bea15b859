# In src/events/event_bus.py

import logging
from typing import Callable, Dict, List, Type

from .event_types import BaseEvent

logger = logging.getLogger(__name__)

# The registry mapping event types to their listener pipelines
EVENT_LISTENERS: Dict[Type[BaseEvent], List[Callable]] = {}


def register_listener(event_type: Type[BaseEvent], listener_func: Callable):
    """Adds a listener function to an event's pipeline."""
    pipeline = EVENT_LISTENERS.setdefault(event_type, [])
    if listener_func in pipeline:
        return
    pipeline.append(listener_func)
    logger.debug("Registered listener '%s' for event '%s'", listener_func.__name__, event_type.__name__)


def dispatch(event: BaseEvent):
    """Runs every listener registered for the event type, in registration order."""
    pipeline = EVENT_LISTENERS.get(type(event), [])
    logger.debug("Dispatching '%s' through %d listeners", type(event).__name__, len(pipeline))
    for listener in pipeline:
        listener(event)
