from . import (
    eval_denoiser,
    eval_kld,
    export_latents,
    make_dataset,
    report,
    sample_noise,
    train,
    train_denoiser,
)

# Ordre d'affichage dans l'aide du CLI
COMMANDS = [make_dataset, train, sample_noise, eval_kld, export_latents, train_denoiser, eval_denoiser, report]
