"""Exception types shared across the package."""


class LeafnetError(Exception):
    """Base class for all leafnet errors."""


class ShapeError(LeafnetError):
    """Array shapes incompatible with an operation."""


class NumericError(LeafnetError):
    """Non-finite values where finite ones are required."""


class ConfigError(LeafnetError):
    """Invalid model or training configuration."""


class DatasetError(LeafnetError):
    """Dataset directory structure or content problems."""


class DecodeError(LeafnetError):
    """Image file could not be decoded."""


class ModelFormatError(LeafnetError):
    """Model file is corrupt or has an unsupported format."""


class ModelStateError(LeafnetError):
    """Model is missing state required for the requested operation."""


class TrainingDiverged(NumericError):
    """Training hit a non-finite loss; carries the epoch and batch index."""

    def __init__(self, epoch: int, batch: int, detail: str = "non-finite loss"):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{detail} at epoch {epoch}, batch {batch}")
