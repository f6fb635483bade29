"""Protocole d'acceptation à l'échelle d'un poste: 3 caméras virtuelles, 30 époques.

Usage: python -m scripts.run_desk_acceptance --out runs/desk [--epochs 30]
"""
import argparse
import json
from pathlib import Path

import torch

from noisegen.config import settings
from noisegen.config.logging import configure_logging
from noisegen.models import DenoiseSource, DenoiseTrainRegime, DenoiserConfig, NoiseModelKind, SceneSplit, TrainConfig
from noisegen.services.dataset_store import read_dataset, write_dataset
from noisegen.services.denoiser import eval_denoiser, train_denoiser
from noisegen.services.evaluation import (
    cross_camera_kl,
    encode_table,
    latent_separation,
    model_kl_eval,
    select_patches,
)
from noisegen.services.noise_model import NoiseModel
from noisegen.services.rng import make_generator
from noisegen.services.simulator import make_virtual_cameras, synthesize_pairs
from noisegen.services.trainer import train

TEST_PATCHES = 384


def check(label: str, ok: bool, detail: str) -> bool:
    print(f"{'✓' if ok else '⨯'} {label}: {detail}")
    return ok


def separation_pair(model: NoiseModel, table, seed: int):
    latents = encode_table(model, table)
    labels = [r.camera_id for r in table.records]
    order = torch.randperm(len(labels), generator=make_generator("shuffle-labels", seed)).tolist()
    return latent_separation(latents, labels), latent_separation(latents, [labels[n] for n in order])


def run_acceptance(out: Path, epochs: int, seed: int) -> bool:
    data_dir = out / "data"
    print("Création du jeu de données virtuel...")
    cameras = make_virtual_cameras(3, seed)
    manifest, pairs = synthesize_pairs(cameras, SceneSplit(train=["s00", "s01"], test=["s02"]), 500, [1.0, 2.0], seed)
    write_dataset(data_dir, manifest, pairs)
    dataset = read_dataset(data_dir)
    test = select_patches(dataset.load_split("test"), TEST_PATCHES, seed)
    print(f"✓ {len(manifest.pairs)} paires, {len(test)} patches de test")

    variants = {
        "full": TrainConfig(epochs=epochs, seed=seed),
        "no_triplet": TrainConfig(epochs=epochs, seed=seed, use_triplet=False),
    }
    models = {}
    for name, config in variants.items():
        print(f"Entraînement {name}...")
        result = train(config, dataset, out / name)
        models[name] = NoiseModel.from_checkpoint(result.checkpoints[-1], settings.device)
        print(f"✓ {name}: {result.state.step} pas")

    results = []
    kl = {kind.value: model_kl_eval(NoiseModel.baseline(kind), test, seed=seed).mean
          for kind in (NoiseModelKind.GAUSSIAN, NoiseModelKind.POISSON_GAUSSIAN)}
    kl["learned"] = model_kl_eval(models["full"], test, seed=seed).mean
    kl["no_triplet"] = model_kl_eval(models["no_triplet"], test, seed=seed).mean
    results.append(check("ordre KL", kl["learned"] < kl["poisson_gaussian"] < kl["gaussian"],
                         f"appris {kl['learned']:.5f} < PG {kl['poisson_gaussian']:.5f} < G {kl['gaussian']:.5f}"))
    results.append(check("ablation triplet", kl["learned"] <= kl["no_triplet"],
                         f"complet {kl['learned']:.5f} <= sans triplet {kl['no_triplet']:.5f}"))

    matched, mismatched = cross_camera_kl(models["full"], test, n_patches=100, seed=seed)
    results.append(check("latent de la même caméra", matched.mean < mismatched.mean,
                         f"{matched.mean:.5f} < {mismatched.mean:.5f}"))

    ratio, _ = separation_pair(models["full"], test, seed)
    plain, shuffled = separation_pair(models["no_triplet"], test, seed)
    results.append(check("séparation avec triplet", ratio > 2.0, f"{ratio:.3f} > 2"))
    results.append(check("séparation sans triplet", 0.5 * shuffled <= plain <= 1.5 * shuffled,
                         f"{plain:.3f} vs permuté {shuffled:.3f}"))

    denoiser_cfg = DenoiserConfig(seed=seed)
    psnr = {}
    for source, model in ((DenoiseSource.GAUSSIAN, None), (DenoiseSource.LEARNED_MODEL, models["full"])):
        trained = train_denoiser(DenoiseTrainRegime(source=source), dataset, denoiser_cfg, model)
        psnr[source.value] = eval_denoiser(trained.model, test)["overall"].psnr
    results.append(check("débruiteur appris vs gaussien", psnr["learned_model"] >= psnr["gaussian"] + 0.5,
                         f"{psnr['learned_model']:.2f} dB vs {psnr['gaussian']:.2f} dB"))

    summary = {"kl": kl, "cross_camera": [matched.mean, mismatched.mean], "separation": [ratio, plain, shuffled],
               "psnr": psnr, "passed": all(results)}
    (out / "acceptance.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    return all(results)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    configure_logging(settings.log_level)
    passed = run_acceptance(Path(args.out), args.epochs, args.seed)
    print("\nAcceptation: " + ("✓ réussie" if passed else "⨯ échec"))
    raise SystemExit(0 if passed else 1)
