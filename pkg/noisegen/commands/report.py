from ..errors import ArgumentError
from ..services.reporting import build_report, check_inputs
from .common import prepare_out_dir


def register(subparsers) -> None:
    parser = subparsers.add_parser("report", help="render comparison tables from result CSVs")
    parser.add_argument("--kld", nargs="*", default=[], help="CSV files written by eval-kld")
    parser.add_argument("--denoiser", nargs="*", default=[], help="CSV files written by eval-denoiser")
    parser.add_argument("--html", action="store_true", help="also write a static HTML table")
    parser.add_argument("--out", required=True)
    parser.add_argument("--force", action="store_true")
    parser.set_defaults(handler=run)


def run(args) -> int:
    if not args.kld and not args.denoiser:
        raise ArgumentError("report needs at least one --kld or --denoiser CSV")
    # Fichiers manquants listés avant toute écriture
    check_inputs(list(args.kld) + list(args.denoiser))
    out = prepare_out_dir(args.out, args.force)
    for path in build_report(args.kld, args.denoiser, out, with_html=args.html):
        print(f"✓ {path}")
    return 0
