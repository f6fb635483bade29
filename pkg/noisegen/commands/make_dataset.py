import logging

from ..errors import ArgumentError, ConfigurationError
from ..models.dataset import SceneSplit
from ..services.dataset_store import write_dataset
from ..services.simulator import make_virtual_cameras, synthesize_pairs
from .common import prepare_out_dir

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("make-dataset", help="synthesize a virtual-camera dataset")
    parser.add_argument("--cameras", type=int, required=True)
    parser.add_argument("--scenes-train", nargs="+", required=True)
    parser.add_argument("--scenes-test", nargs="+", required=True)
    parser.add_argument("--patches-per-scene", type=int, required=True)
    parser.add_argument("--gains", nargs="+", type=float, default=[1.0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--patch-size", type=int, default=64, help="Bayer patch side (packed side is half)")
    parser.add_argument("--scene-size", type=int, default=256)
    parser.add_argument("--out", required=True)
    parser.add_argument("--force", action="store_true")
    parser.set_defaults(handler=run)


def run(args) -> int:
    # Validation complète avant toute écriture
    if args.cameras < 1:
        raise ArgumentError("--cameras must be at least 1")
    if args.cameras < 2:
        logger.warning("Une seule caméra: l'entraînement avec triplet sera impossible")
    # côté packé = patch/2, le générateur divise par 32
    if args.patch_size <= 0 or args.patch_size % 64:
        raise ConfigurationError(f"--patch-size must be a positive multiple of 64, got {args.patch_size}")
    scenes = SceneSplit(train=args.scenes_train, test=args.scenes_test)
    cameras = make_virtual_cameras(args.cameras, args.seed)
    manifest, pairs = synthesize_pairs(
        cameras, scenes, args.patches_per_scene, args.gains, args.seed,
        patch_size=args.patch_size, scene_size=args.scene_size,
    )

    out = prepare_out_dir(args.out, args.force)
    final = write_dataset(out, manifest, pairs)
    print(f"✓ {len(final.pairs)} paires écrites dans {out}")
    return 0
