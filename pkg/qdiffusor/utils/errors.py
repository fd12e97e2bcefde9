class QdiffusorError(Exception):
    """Base class for errors raised by qdiffusor."""

    key: str | None = None


class ConfigError(QdiffusorError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class DomainError(QdiffusorError, ValueError):
    pass


class NullPointError(DomainError):
    pass


class ShapeMismatchError(QdiffusorError, ValueError):
    pass


class ContainerError(QdiffusorError, ValueError):
    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")
        self.key = str(path)


class MagicMismatchError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class HeaderDecodeError(ContainerError):
    pass


class TrainingDivergedError(QdiffusorError, RuntimeError):
    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path
        self.key = dump_path
