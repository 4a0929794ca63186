import csv
import io
import logging
from pathlib import Path
from typing import Optional

import click
import numpy as np

from prosoref.common.utils import format_float, write_text
from prosoref.core.dependencies import existing_file, output_file
from prosoref.modules.prosody.service import ProsodyService
from prosoref.schemas.vae import TrainConfig

from .service import VaeService

logger = logging.getLogger("prosoref.vae")

# flag name -> TrainConfig field
OVERRIDES = {
    "iterations": "iterations",
    "lr": "learning_rate",
    "seed": "seed",
    "hidden": "hidden",
    "latent": "latent",
    "batch_size": "batch_size",
    "kl_start": "kl_start_iter",
    "kl_end": "kl_end_iter",
    "kl_period": "kl_period",
    "log_every": "log_every",
}


@click.group()
def vae():
    """Variational reference encoder"""


@vae.command("vae-train")
@click.option("--vectors", type=existing_file, required=True, help="Prosody vector CSV")
@click.option("--config", type=existing_file, default=None, help="TrainConfig JSON")
@click.option("--out-params", type=output_file, required=True)
@click.option("--out-history", type=output_file, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--hidden", type=int, default=None)
@click.option("--latent", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--kl-start", type=int, default=None)
@click.option("--kl-end", type=int, default=None)
@click.option("--kl-period", type=int, default=None)
@click.option("--log-every", type=int, default=None)
def vae_train(
    vectors: Path,
    config: Optional[Path],
    out_params: Path,
    out_history: Optional[Path],
    **flags,
):
    """Train on prosody vectors; flags override the config file"""
    cfg = VaeService.read_config(config) if config else TrainConfig()
    updates = {OVERRIDES[k]: v for k, v in flags.items() if v is not None}
    try:
        cfg = TrainConfig.model_validate({**cfg.model_dump(), **updates})
    except ValueError as e:
        raise click.BadParameter(str(e).splitlines()[-1])

    dataset = [v for u in ProsodyService.read_vectors(vectors) for v in u.vectors]
    result = VaeService.train(dataset, cfg)

    VaeService.write_params(result.params, out_params)
    if out_history is not None:
        VaeService.write_history(result.history, out_history)
    logger.info(
        "trained %d iterations on %d vectors; reconstruction MSE %.6f",
        cfg.iterations,
        len(dataset),
        VaeService.reconstruction_mse(result.params, dataset),
    )


@vae.command("vae-encode")
@click.option("--params", type=existing_file, required=True)
@click.option("--vectors", type=existing_file, required=True)
@click.option("--out", type=output_file, required=True)
@click.option("--seed", type=int, default=None, help="Sample embeddings instead of using the mean")
def vae_encode(params: Path, vectors: Path, out: Path, seed: Optional[int]):
    """Prosody embedding per phone"""
    encoder = VaeService.read_params(params)
    rng = np.random.default_rng(seed) if seed is not None else None

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["utterance", "phone", *(f"z_{k}" for k in range(1, encoder.latent + 1))])

    count = 0
    for utterance in ProsodyService.read_vectors(vectors):
        if not utterance.vectors:
            continue
        embeddings = VaeService.encode_sequence(encoder, utterance.vectors, rng)
        for vector, z in zip(utterance.vectors, embeddings):
            writer.writerow([utterance.utterance, vector.phone, *(format_float(v) for v in z)])
            count += 1

    write_text(out, buffer.getvalue())
    logger.info("%d embeddings written to %s", count, out)
