import logging
from pathlib import Path

from ..config.loader import load_config
from ..errors import ArgumentError
from ..models.training import TrainConfig
from ..services.checkpoint import latest_checkpoint
from ..services.trainer import train
from .common import open_dataset, require_file

logger = logging.getLogger(__name__)

RESUME_LATEST = "latest"


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train the noise generator, critic and camera encoder")
    parser.add_argument("--config", help="JSON file with TrainConfig fields")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field (dotted keys for nested fields)")
    parser.add_argument("--data", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--resume", help=f"checkpoint to resume from, or '{RESUME_LATEST}' for the newest in --out")
    parser.set_defaults(handler=run)


def resolve_resume(resume, out: Path):
    if resume is None:
        return None
    if resume == RESUME_LATEST:
        found = latest_checkpoint(out)
        if found is None:
            raise ArgumentError(f"--resume {RESUME_LATEST}: no checkpoint under {out}")
        logger.info("Dernier point de contrôle trouvé: %s", found)
        return found
    return require_file(resume, "--resume")


def run(args) -> int:
    config = load_config(TrainConfig, args.config, args.overrides)
    dataset = open_dataset(args.data)
    out = Path(args.out)
    resume = resolve_resume(args.resume, out)

    result = train(config, dataset, out, resume_from=resume)
    print(f"✓ {result.state.epoch} époques, métriques dans {result.metrics_path}")
    for path in result.checkpoints[-1:]:
        print(f"✓ dernier point de contrôle: {path}")
    return 0
