"""Tirage des lots d'entraînement (i, j, k, l).

Pour un ancrage i de la caméra s: j ≠ i et k viennent de la même caméra,
l d'une caméra t ≠ s. Le bruit réel n_i = I_N - I_C est calculé ici.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional

import torch

from ..errors import ConfigurationError, DataError
from .dataset_store import PairTable
from .init_noise import NLFBatch


@dataclass
class TrainingBatch:
    clean: torch.Tensor  # clean_i
    noisy: torch.Tensor  # noisy_i
    real_noise: torch.Tensor
    anchor: torch.Tensor  # noisy_j
    positive: torch.Tensor  # noisy_k
    negative: Optional[torch.Tensor]  # noisy_l, None sans triplet et avec une seule caméra
    nlf: NLFBatch
    camera: torch.Tensor  # s
    negative_camera: Optional[torch.Tensor]  # t
    indices: Dict[str, torch.Tensor]

    def __len__(self) -> int:
        return self.clean.shape[0]

    def to(self, device) -> "TrainingBatch":
        def move(t):
            return None if t is None else t.to(device)
        return TrainingBatch(
            clean=move(self.clean), noisy=move(self.noisy), real_noise=move(self.real_noise),
            anchor=move(self.anchor), positive=move(self.positive), negative=move(self.negative),
            nlf=NLFBatch(move(self.nlf.delta_shot), move(self.nlf.delta_read)),
            camera=self.camera, negative_camera=self.negative_camera, indices=self.indices,
        )


def _camera_pools(table: PairTable) -> List[torch.Tensor]:
    return [torch.nonzero(table.camera_index == c).flatten() for c in range(len(table.camera_ids))]


def pick_index(pool: torch.Tensor, generator: torch.Generator, exclude: Optional[int] = None) -> int:
    """Élément uniforme de `pool`, différent de `exclude` quand c'est possible"""
    if exclude is None or len(pool) < 2:
        return int(pool[torch.randint(0, len(pool), (1,), generator=generator)])
    r = int(torch.randint(0, len(pool) - 1, (1,), generator=generator))
    position = int(torch.nonzero(pool == exclude).flatten()[0])
    return int(pool[r if r < position else r + 1])


def sample_batch(
    table: PairTable,
    batch_size: int,
    generator: torch.Generator,
    require_negatives: bool = True,
) -> TrainingBatch:
    pools = _camera_pools(table)
    populated = [c for c, pool in enumerate(pools) if len(pool) > 0]
    if len(populated) < 2 and require_negatives:
        raise ConfigurationError("triplet training needs at least 2 cameras in the training split")
    for c in populated:
        if len(pools[c]) < 2:
            raise DataError(f"camera {table.camera_ids[c]} has a single training pair; j != i is impossible")

    # Ancrage uniforme sur les paires: fréquence des caméras ∝ nombre de patches
    i = torch.randint(0, len(table), (batch_size,), generator=generator)
    j, k, l, t = [], [], [], []
    for idx in i.tolist():
        s = int(table.camera_index[idx])
        j_idx = pick_index(pools[s], generator, exclude=idx)
        j.append(j_idx)
        k.append(pick_index(pools[s], generator, exclude=j_idx))
        if len(populated) >= 2:
            others = [c for c in populated if c != s]
            t_cam = others[int(torch.randint(0, len(others), (1,), generator=generator))]
            t.append(t_cam)
            l.append(pick_index(pools[t_cam], generator))

    j, k = torch.tensor(j), torch.tensor(k)
    indices = {"i": i, "j": j, "k": k}
    negative = negative_camera = None
    if l:
        l_idx = torch.tensor(l)
        indices["l"] = l_idx
        negative = table.noisy[l_idx]
        negative_camera = torch.tensor(t)

    clean = table.clean[i]
    noisy = table.noisy[i]
    return TrainingBatch(
        clean=clean,
        noisy=noisy,
        real_noise=noisy - clean,
        anchor=table.noisy[j],
        positive=table.noisy[k],
        negative=negative,
        nlf=NLFBatch(table.delta_shot[i], table.delta_read[i]),
        camera=table.camera_index[i],
        negative_camera=negative_camera,
        indices=indices,
    )
