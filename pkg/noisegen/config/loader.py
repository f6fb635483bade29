import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Type, TypeVar

from pydantic import BaseModel

from ..errors import ArgumentError, ConfigurationError

ModelT = TypeVar("ModelT", bound=BaseModel)


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Applique des `cle.sous_cle=valeur` (valeur JSON, sinon chaîne brute)"""
    for item in overrides:
        if "=" not in item:
            raise ArgumentError(f"--set expects key=value, got '{item}'")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        target = data
        for part in parts[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise ArgumentError(f"--set {key}: '{part}' is not a nested section")
            target = node
        target[parts[-1]] = _parse_value(raw)
    return data


def load_config(model_cls: Type[ModelT], path: Optional[str] = None, overrides: Iterable[str] = ()) -> ModelT:
    """Fichier JSON puis surcharges CLI, validés ensemble (pydantic.ValidationError sinon)"""
    data: Dict[str, Any] = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ArgumentError(f"config file not found: {config_path}")
        try:
            data = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid JSON in {config_path}: {e}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"{config_path} must contain a JSON object")
    return model_cls.model_validate(apply_overrides(data, overrides))
