from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from app.training.checkpoint import CheckpointBundle


class KitsuneDriveError(Exception):
    """Base class for every error raised on purpose by this package."""


class ConfigError(KitsuneDriveError, ValueError):
    pass


class SceneGenerationError(KitsuneDriveError):
    pass


class DatasetIOError(KitsuneDriveError):
    pass


class UnknownWordError(KitsuneDriveError, KeyError):
    def __init__(self, word: str) -> None:
        super().__init__(f"Word {word!r} is not in the vocabulary")
        self.word = word

    def __str__(self) -> str:
        return self.args[0]


class CaptionOverflowError(KitsuneDriveError):
    pass


class ContractViolation(KitsuneDriveError):
    pass


class MatchingError(KitsuneDriveError):
    pass


class TrainingDivergedError(KitsuneDriveError):
    def __init__(self, step: int, checkpoint: CheckpointBundle | None = None) -> None:
        super().__init__(f"Loss became non-finite at step {step}")
        self.step = step
        self.checkpoint = checkpoint


class CheckpointError(KitsuneDriveError):
    pass


class ReportError(KitsuneDriveError):
    pass
