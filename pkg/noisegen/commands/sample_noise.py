import json
import logging

import torch

from ..config import settings
from ..errors import ArgumentError
from ..models.evaluation import LatentSource
from ..services.dataset_store import write_payload
from ..services.evaluation import latent_partners
from ..services.init_noise import NLFBatch
from ..services.noise_model import NoiseModel
from ..services.previews import image_preview, noise_preview, save_png
from ..services.rng import make_generator
from .common import open_dataset, prepare_out_dir, require_file

logger = logging.getLogger(__name__)

QUADRUPLE = ("clean", "init_noise", "final_noise", "real_noise")


def register(subparsers) -> None:
    parser = subparsers.add_parser("sample-noise", help="generate noise samples and previews for one camera")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--data", required=True)
    parser.add_argument("--camera", required=True)
    parser.add_argument("--count", type=int, required=True)
    parser.add_argument("--split", choices=["train", "test"], default="test")
    parser.add_argument("--gain-ratio", type=float, default=1.0, help="scale the NLF before sampling")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument("--force", action="store_true")
    parser.set_defaults(handler=run)


def run(args) -> int:
    if args.count <= 0:
        raise ArgumentError("--count must be positive")
    if not args.gain_ratio > 0:
        raise ArgumentError("--gain-ratio must be positive")
    checkpoint = require_file(args.checkpoint, "--checkpoint")
    dataset = open_dataset(args.data)
    if args.camera not in dataset.camera_ids:
        raise ArgumentError(f"unknown camera id '{args.camera}' (known: {', '.join(dataset.camera_ids)})")
    model = NoiseModel.from_checkpoint(checkpoint, settings.device)

    table = dataset.load_split(args.split)
    table = table.subset(table.indices_of_camera(args.camera))
    if len(table) < args.count:
        raise ArgumentError(f"camera {args.camera} has only {len(table)} {args.split} pairs")
    chosen = torch.randperm(len(table), generator=make_generator("sample-noise", args.seed))[:args.count]
    table = table.subset(chosen)
    partners = latent_partners(table, LatentSource.MATCHED, make_generator("sample-partners", args.seed))

    synthesis = model.synthesize(
        table.clean,
        NLFBatch(table.delta_shot, table.delta_read),
        noisy_ref=table.noisy[partners],
        generator=make_generator("sample-draw", args.seed),
        gain_ratio=args.gain_ratio,
    )

    out = prepare_out_dir(args.out, args.force)
    scale = settings.preview_scale
    entries = []
    for n, record in enumerate(table.records):
        tensors = {
            "clean": table.clean[n],
            "init_noise": synthesis.init[n],
            "final_noise": synthesis.final[n],
            "real_noise": table.real_noise[n],
        }
        files = {}
        for name in QUADRUPLE:
            stem = f"sample_{n:03d}_{name}"
            write_payload(out / f"{stem}.f32", tensors[name])
            files[name] = f"{stem}.f32"
        save_png(out / f"sample_{n:03d}_clean.png", image_preview(tensors["clean"]))
        for name in QUADRUPLE[1:]:
            save_png(out / f"sample_{n:03d}_{name}_x{scale:g}.png", noise_preview(tensors[name], scale))
        entries.append({
            "scene_id": record.scene_id,
            "index": record.index,
            "files": files,
            "max_abs_residual": float(synthesis.residual[n].abs().max()),
        })

    meta = {
        "camera_id": args.camera,
        "checkpoint": str(checkpoint),
        "gain_ratio": args.gain_ratio,
        "preview_scale": scale,
        "patch_shape": list(table.clean.shape[1:]),
        "residual": "final_noise - init_noise",
        "samples": entries,
    }
    (out / "samples.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    print(f"✓ {args.count} échantillons écrits dans {out} (aperçus x{scale:g})")
    return 0
