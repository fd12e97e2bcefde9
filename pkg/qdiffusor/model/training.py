from dataclasses import asdict, dataclass

from qdiffusor.utils.errors import DomainError


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    epochs: int = 100
    learning_rate: float = 1e-4
    timesteps: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise DomainError("batch size must be >= 1")
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise DomainError("learning rate must be > 0")
        if self.timesteps < 2:
            raise DomainError("diffusion needs at least 2 timesteps")

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(data: dict):
        return TrainConfig(**data)


@dataclass(frozen=True)
class RegressionConfig:
    blocks: int = 6
    channels: int = 64
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.blocks < 1 or self.channels < 1:
            raise DomainError("regression network needs blocks >= 1 and channels >= 1")
        if self.batch_size < 1 or self.epochs < 1:
            raise DomainError("batch size and epochs must be >= 1")
        if not self.learning_rate > 0:
            raise DomainError("learning rate must be > 0")

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(data: dict):
        return RegressionConfig(**data)
