# src/exceptions.py
from typing import Optional

import numpy as np


class ParseError(ValueError):
    """A ratings or attribute file line could not be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, line_number: Optional[int] = None):
        self.path = path
        self.line_number = line_number
        where = ""
        if path is not None:
            where += f"{path}"
        if line_number is not None:
            where += f" (line {line_number})"
        super().__init__(f"{where}: {message}" if where else message)


class DatasetError(ValueError):
    """Filtering/splitting/attribute joining produced an unusable dataset."""

    def __init__(self, message: str, user: Optional[str] = None):
        self.user = user
        super().__init__(message)


class GroupError(ValueError):
    """An operation needs both attribute groups and did not get them."""


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    """Experiment config failed validation; `key_path` is the dotted key."""

    def __init__(self, message: str, key_path: Optional[str] = None):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"Training loss became non-finite ({loss}) at epoch {epoch}.")


class UnlearnDivergedError(RuntimeError):
    """Carries the last finite embedding so callers can inspect or keep it."""

    def __init__(self, epoch: int, last_finite_theta: np.ndarray):
        self.epoch = epoch
        self.last_finite_theta = last_finite_theta
        super().__init__(
            f"Unlearning loss became non-finite at epoch {epoch}; "
            f"lower the learning rate or switch the optimizer to 'adam'."
        )


class MissingArtifactError(FileNotFoundError):
    def __init__(self, path: str, command: str):
        self.path = path
        self.command = command
        super().__init__(f"Missing upstream artifact '{path}'. Run `{command}` first.")


class StageError(RuntimeError):
    """Wraps any failure with the CLI stage it happened in."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class BandwidthError(ValueError):
    """The median-heuristic MMD bandwidth came out as zero (all points identical)."""
