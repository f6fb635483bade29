import csv
import logging

from ..config import settings
from ..config.loader import load_config
from ..errors import ConfigurationError
from ..models.denoiser import DenoiserConfig, DenoiseSource, DenoiseTrainRegime
from ..services.denoiser import save_denoiser, train_denoiser
from ..services.noise_model import NoiseModel
from .common import open_dataset, prepare_out_dir, require_file

logger = logging.getLogger(__name__)

DENOISER_FILE = "denoiser.pt"
LOG_CSV = "train_log.csv"


def register(subparsers) -> None:
    parser = subparsers.add_parser("train-denoiser", help="train a DnCNN denoiser under one data regime")
    parser.add_argument("--regime", choices=[s.value for s in DenoiseSource], required=True)
    parser.add_argument("--checkpoint", help="noise model checkpoint (learned regimes)")
    parser.add_argument("--data", required=True)
    parser.add_argument("--config", help="JSON file with DenoiserConfig fields")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--out", required=True)
    parser.add_argument("--force", action="store_true")
    parser.set_defaults(handler=run)


def run(args) -> int:
    config = load_config(DenoiserConfig, args.config, args.overrides)
    regime = DenoiseTrainRegime(source=DenoiseSource(args.regime))
    if regime.needs_noise_model and not args.checkpoint:
        raise ConfigurationError(f"regime '{regime.source.value}' needs --checkpoint")
    dataset = open_dataset(args.data)
    noise_model = None
    if args.checkpoint:
        noise_model = NoiseModel.from_checkpoint(require_file(args.checkpoint, "--checkpoint"), settings.device)

    out = prepare_out_dir(args.out, args.force)
    result = train_denoiser(regime, dataset, config, noise_model)
    save_denoiser(out / DENOISER_FILE, result)
    with open(out / LOG_CSV, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["step", "loss"])
        writer.writeheader()
        writer.writerows(result.log)
    print(f"✓ débruiteur {regime.source.value} entraîné ({config.steps} pas): {out / DENOISER_FILE}")
    return 0
