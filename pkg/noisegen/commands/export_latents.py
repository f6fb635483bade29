import json
import logging

import torch

from ..config import settings
from ..errors import ArgumentError
from ..services.evaluation import encode_table, export_latents_csv, latent_separation
from ..services.noise_model import NoiseModel
from ..services.rng import make_generator
from .common import open_dataset, prepare_out_dir, require_file

logger = logging.getLogger(__name__)

LATENTS_CSV = "latents.csv"
SEPARATION_JSON = "separation.json"


def register(subparsers) -> None:
    parser = subparsers.add_parser("export-latents", help="encode noisy patches and measure camera separation")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--data", required=True)
    parser.add_argument("--split", choices=["train", "test"], default="test")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument("--force", action="store_true")
    parser.set_defaults(handler=run)


def run(args) -> int:
    dataset = open_dataset(args.data)
    model = NoiseModel.from_checkpoint(require_file(args.checkpoint, "--checkpoint"), settings.device)
    if not model.uses_encoder:
        raise ArgumentError("checkpoint was trained without a camera encoder (use_encoder=false)")
    table = dataset.load_split(args.split)

    latents = encode_table(model, table)
    labels = [record.camera_id for record in table.records]
    ratio = latent_separation(latents, labels)
    # Référence: mêmes latents, étiquettes permutées
    order = torch.randperm(len(labels), generator=make_generator("shuffle-labels", args.seed)).tolist()
    shuffled = latent_separation(latents, [labels[n] for n in order])

    out = prepare_out_dir(args.out, args.force)
    export_latents_csv(out / LATENTS_CSV, latents, labels)
    summary = {"separation": ratio, "shuffled_separation": shuffled, "n_latents": len(labels),
               "latent_dim": int(latents.shape[1]), "split": args.split}
    (out / SEPARATION_JSON).write_text(json.dumps(summary, indent=2), encoding="utf-8")
    print(f"✓ {len(labels)} latents exportés, séparation {ratio:.3f} (étiquettes permutées {shuffled:.3f})")
    return 0
