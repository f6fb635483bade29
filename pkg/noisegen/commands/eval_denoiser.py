import logging

from ..errors import ArgumentError
from ..services.denoiser import IdentityDenoiser, eval_denoiser, load_denoiser, write_eval_csv
from .common import open_dataset, prepare_out_dir, require_file

logger = logging.getLogger(__name__)

EVAL_CSV = "denoiser_eval.csv"
NOISY_INPUT = "noisy_input"


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval-denoiser", help="PSNR/SSIM of trained denoisers on the test split")
    parser.add_argument("--denoiser", nargs="+", required=True, help="one or more denoiser checkpoints")
    parser.add_argument("--labels", nargs="+", help="row labels (default: regime[/camera])")
    parser.add_argument("--include-noisy", action="store_true",
                        help=f"add a '{NOISY_INPUT}' row scoring the undenoised input")
    parser.add_argument("--data", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--force", action="store_true")
    parser.set_defaults(handler=run)


def run(args) -> int:
    if args.labels and len(args.labels) != len(args.denoiser):
        raise ArgumentError("--labels must match --denoiser one to one")
    paths = [require_file(p, "--denoiser") for p in args.denoiser]
    dataset = open_dataset(args.data)
    table = dataset.load_split("test")

    results = {}
    if args.include_noisy:
        results[NOISY_INPUT] = eval_denoiser(IdentityDenoiser(), table)
    for n, path in enumerate(paths):
        model, regime, config = load_denoiser(path)
        label = args.labels[n] if args.labels else regime.source.value + (f"/{config.camera}" if config.camera else "")
        if label in results:
            raise ArgumentError(f"duplicate denoiser label '{label}' (use --labels)")
        results[label] = eval_denoiser(model, table)
    for label, metrics in results.items():
        logger.info("%s: PSNR %.3f dB, SSIM %.4f", label, metrics["overall"].psnr, metrics["overall"].ssim)

    out = prepare_out_dir(args.out, args.force)
    write_eval_csv(out / EVAL_CSV, results)
    print(f"✓ {len(paths)} débruiteur(s) évalué(s): {out / EVAL_CSV}")
    return 0
