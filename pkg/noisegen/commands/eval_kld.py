import csv
import json
import logging

import numpy as np

from ..config import settings
from ..config.loader import load_config
from ..errors import ConfigurationError
from ..models.evaluation import KLConfig, KLReport, LatentSource, NoiseModelKind
from ..services.evaluation import anchor_stability, cross_camera_kl, model_kl_eval, summarize_reports
from ..services.noise_model import NoiseModel
from .common import open_dataset, prepare_out_dir, require_file

logger = logging.getLogger(__name__)

KLD_CSV = "kld.csv"  # une ligne par modèle
KLD_DETAIL_CSV = "kld_per_camera.csv"
KLD_SUMMARY = "kld_summary.json"
KLD_COLUMNS = ["model", "camera", "scene", "kl_mean", "kl_std", "n_patches"]


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval-kld", help="histogram KL between real and synthetic noise")
    parser.add_argument("--data", required=True)
    parser.add_argument("--checkpoint", help="generator checkpoint (needed for the learned model)")
    parser.add_argument("--models", nargs="+", choices=[k.value for k in NoiseModelKind],
                        default=[k.value for k in NoiseModelKind])
    parser.add_argument("--split", choices=["train", "test"], default="test")
    parser.add_argument("--latent-source", choices=[s.value for s in LatentSource], default=LatentSource.MATCHED.value)
    parser.add_argument("--kl-config", help="JSON file with KLConfig fields")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--cross-camera", type=int, metavar="N", help="also compare matched and mismatched latents on N patches")
    parser.add_argument("--anchor-stability", metavar="CAMERA", help="also measure KL spread over 5 anchors")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument("--force", action="store_true")
    parser.set_defaults(handler=run)


def _rows(report: KLReport):
    groups = {("all", "all"): [p.kl for p in report.patches]}
    for p in report.patches:
        groups.setdefault((p.camera_id, "all"), []).append(p.kl)
        groups.setdefault((p.camera_id, p.scene_id), []).append(p.kl)
    for (camera, scene), values in groups.items():
        yield {
            "model": report.model, "camera": camera, "scene": scene,
            "kl_mean": repr(float(np.mean(values))), "kl_std": repr(float(np.std(values))),
            "n_patches": len(values),
        }


def run(args) -> int:
    kl_cfg = load_config(KLConfig, args.kl_config, args.overrides)
    kinds = [NoiseModelKind(m) for m in args.models]
    needs_learned = NoiseModelKind.LEARNED in kinds or args.cross_camera or args.anchor_stability
    if needs_learned and not args.checkpoint:
        raise ConfigurationError("the learned model and its latent comparisons need --checkpoint")
    dataset = open_dataset(args.data)
    learned = NoiseModel.from_checkpoint(require_file(args.checkpoint, "--checkpoint"), settings.device) \
        if needs_learned else None
    table = dataset.load_split(args.split)

    reports = {}
    for kind in kinds:
        model = learned if kind == NoiseModelKind.LEARNED else NoiseModel.baseline(kind)
        reports[kind.value] = model_kl_eval(model, table, kl_cfg, LatentSource(args.latent_source), args.seed)
        logger.info("KL %s: %.6g", kind.value, reports[kind.value].mean)

    summary = summarize_reports(reports)
    summary["split"] = args.split
    summary["kl_config"] = kl_cfg.model_dump(mode="json")
    if args.cross_camera:
        matched, mismatched = cross_camera_kl(learned, table, kl_cfg, args.cross_camera, args.seed)
        summary["cross_camera"] = {"matched": matched.mean, "mismatched": mismatched.mean,
                                   "matched_better": matched.mean < mismatched.mean}
    if args.anchor_stability:
        stability = anchor_stability(learned, table, args.anchor_stability, kl_cfg, seed=args.seed)
        summary["anchor_stability"] = {"camera_id": stability.camera_id, "anchors": stability.anchors,
                                       "per_anchor": stability.per_anchor,
                                       "relative_spread": stability.relative_spread}

    out = prepare_out_dir(args.out, args.force)
    rows = [row for report in reports.values() for row in _rows(report)]
    overall = [row for row in rows if row["camera"] == "all"]
    for name, selected in ((KLD_CSV, overall), (KLD_DETAIL_CSV, rows)):
        with open(out / name, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=KLD_COLUMNS)
            writer.writeheader()
            writer.writerows(selected)
    (out / KLD_SUMMARY).write_text(json.dumps(summary, indent=2), encoding="utf-8")
    flag = "✓" if summary["ascending_kl"] else "⨯"
    print(f"{flag} ordre KL {' < '.join(summary['ordering'])}: {summary['ascending_kl']}")
    return 0
