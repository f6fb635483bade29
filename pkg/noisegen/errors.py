from typing import Any, Dict, Optional


class NoisegenError(Exception):
    """Erreur de base; `exit_code` est le code de sortie utilisé par le CLI"""
    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ArgumentError(NoisegenError, ValueError):
    exit_code = 2


class DimensionError(ArgumentError):
    pass


class ConfigurationError(NoisegenError):
    exit_code = 2


class DatasetValidationError(NoisegenError, ValueError):
    exit_code = 2


class CapabilityError(NoisegenError, RuntimeError):
    exit_code = 1


class NonFiniteLossError(NoisegenError, FloatingPointError):
    """Perte NaN/inf pendant l'entraînement; `snapshot` contient l'état des pertes au moment de l'arrêt"""
    exit_code = 1

    def __init__(self, detail: str, snapshot: Optional[Dict[str, Any]] = None):
        super().__init__(detail)
        self.snapshot = snapshot or {}


class DatasetIOError(NoisegenError, OSError):
    exit_code = 3

    def __init__(self, detail: str, path: Optional[str] = None):
        super().__init__(detail if path is None else f"{detail}: {path}")
        self.path = path


class MissingFileError(DatasetIOError):
    pass


class ShapeMismatchError(DatasetIOError):
    pass


class ChecksumError(DatasetIOError):
    pass


class VersionMismatchError(DatasetIOError):
    pass


class DataError(DatasetIOError):
    pass
