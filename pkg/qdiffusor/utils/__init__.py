from .errors import (
    QdiffusorError,
    ConfigError,
    DomainError,
    NullPointError,
    ShapeMismatchError,
    ContainerError,
    MagicMismatchError,
    TruncatedPayloadError,
    HeaderDecodeError,
    TrainingDivergedError,
)
from .rng import derive_rng, derive_seed
