import hashlib
from typing import Union

import torch

SeedPart = Union[int, str, float]


def stable_seed(*parts: SeedPart) -> int:
    """Graine 63 bits stable d'un processus à l'autre (contrairement à hash())"""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def make_generator(*parts: SeedPart) -> torch.Generator:
    return torch.Generator().manual_seed(stable_seed(*parts))
