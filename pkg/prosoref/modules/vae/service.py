import csv
import io
import logging
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from prosoref.common.constants import GRAD_CHECK_FLOOR, INPUT_DIM, LOG_SIGMA_CLAMP
from prosoref.common.utils import build_model, format_float, read_json, write_json, write_text
from prosoref.core.exceptions import (
    DataError,
    DimMismatch,
    DivergedLoss,
    EmptyDataset,
    LengthMismatch,
    NonFiniteInput,
)
from prosoref.schemas.prosody import ProsodyVector
from prosoref.schemas.vae import (
    PARAM_NAMES,
    EncoderParams,
    GaussianPosterior,
    LossRecord,
    TrainConfig,
    TrainResult,
    param_shapes,
)

logger = logging.getLogger("prosoref.vae")

Arrays = dict[str, np.ndarray]

HISTORY_HEADER = ("iteration", "recon", "kl", "scale", "active")


def as_matrix(dataset: np.ndarray | Sequence[ProsodyVector]) -> np.ndarray:
    """Stack prosody vectors (or pass through an N x 7 array) as float64."""
    if isinstance(dataset, np.ndarray):
        matrix = np.asarray(dataset, dtype=np.float64)
    else:
        matrix = np.array([vector.values for vector in dataset], dtype=np.float64)

    if matrix.size == 0:
        raise EmptyDataset("no vectors to train on")
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.ndim != 2 or matrix.shape[1] != INPUT_DIM:
        raise DimMismatch(f"expected vectors of {INPUT_DIM} dims, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteInput("input vectors contain non-finite values")
    return matrix


def kl_per_vector(mu: np.ndarray, log_sigma: np.ndarray) -> np.ndarray:
    # 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma), expm1 keeps it exact near the prior
    kl = 0.5 * np.sum(mu**2 + np.expm1(2.0 * log_sigma) - 2.0 * log_sigma, axis=-1)
    return np.maximum(kl, 0.0)


def _encode(p: Arrays, x: np.ndarray, latent: int):
    h1 = np.tanh(x @ p["enc_w1"] + p["enc_b1"])
    h2 = np.tanh(h1 @ p["enc_w2"] + p["enc_b2"])
    out = h2 @ p["enc_w3"] + p["enc_b3"]
    mu, raw = out[:, :latent], out[:, latent:]
    log_sigma = np.clip(raw, -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
    return h1, h2, mu, raw, log_sigma


def _decode(p: Arrays, z: np.ndarray):
    g1 = np.tanh(z @ p["dec_w1"] + p["dec_b1"])
    return g1, g1 @ p["dec_w2"] + p["dec_b2"]


def _losses(p: Arrays, x: np.ndarray, noise: np.ndarray, latent: int) -> tuple[float, float]:
    _, _, mu, _, log_sigma = _encode(p, x, latent)
    _, x_hat = _decode(p, mu + np.exp(log_sigma) * noise)
    return float(np.mean((x_hat - x) ** 2)), float(np.mean(kl_per_vector(mu, log_sigma)))


def loss_and_grads(
    p: Arrays, x: np.ndarray, noise: np.ndarray, weight: float, latent: int
) -> tuple[float, float, Arrays]:
    """Reconstruction MSE, batch-mean KL and gradients of recon + weight * KL."""
    batch = x.shape[0]
    h1, h2, mu, raw, log_sigma = _encode(p, x, latent)
    sigma = np.exp(log_sigma)
    z = mu + sigma * noise
    g1, x_hat = _decode(p, z)

    recon = float(np.mean((x_hat - x) ** 2))
    kl = float(np.mean(kl_per_vector(mu, log_sigma)))

    grads: Arrays = {}
    d_out = 2.0 * (x_hat - x) / x_hat.size
    grads["dec_w2"] = g1.T @ d_out
    grads["dec_b2"] = d_out.sum(axis=0)
    d_a = (d_out @ p["dec_w2"].T) * (1.0 - g1**2)
    grads["dec_w1"] = z.T @ d_a
    grads["dec_b1"] = d_a.sum(axis=0)
    d_z = d_a @ p["dec_w1"].T

    d_mu = d_z + weight * mu / batch
    d_log_sigma = d_z * noise * sigma + weight * np.expm1(2.0 * log_sigma) / batch
    d_log_sigma = np.where(np.abs(raw) < LOG_SIGMA_CLAMP, d_log_sigma, 0.0)

    d_enc = np.concatenate([d_mu, d_log_sigma], axis=1)
    grads["enc_w3"] = h2.T @ d_enc
    grads["enc_b3"] = d_enc.sum(axis=0)
    d_a2 = (d_enc @ p["enc_w3"].T) * (1.0 - h2**2)
    grads["enc_w2"] = h1.T @ d_a2
    grads["enc_b2"] = d_a2.sum(axis=0)
    d_a1 = (d_a2 @ p["enc_w2"].T) * (1.0 - h1**2)
    grads["enc_w1"] = x.T @ d_a1
    grads["enc_b1"] = d_a1.sum(axis=0)

    return recon, kl, grads


def numeric_gradient(
    f: Callable[[np.ndarray], float], array: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central differences of ``f`` with respect to every element of ``array``."""
    grad = np.zeros_like(array, dtype=np.float64)
    for index in np.ndindex(array.shape):
        plus, minus = array.copy(), array.copy()
        plus[index] += eps
        minus[index] -= eps
        grad[index] = (f(plus) - f(minus)) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(
        np.abs(analytic) + np.abs(numeric), GRAD_CHECK_FLOOR
    )


class VaeService:
    @staticmethod
    def init_params(
        hidden: int, latent: int, rng: np.random.Generator
    ) -> EncoderParams:
        arrays = {}
        for name, shape in param_shapes(hidden, latent).items():
            if len(shape) == 1:
                arrays[name] = np.zeros(shape)
            else:
                arrays[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
        return EncoderParams(hidden=hidden, latent=latent, arrays=arrays)

    @staticmethod
    def zero_params(hidden: int, latent: int) -> EncoderParams:
        return EncoderParams(
            hidden=hidden,
            latent=latent,
            arrays={name: np.zeros(shape) for name, shape in param_shapes(hidden, latent).items()},
        )

    @staticmethod
    def encode_batch(params: EncoderParams, x: np.ndarray) -> GaussianPosterior:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != INPUT_DIM:
            raise DimMismatch(f"expected vectors of {INPUT_DIM} dims, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NonFiniteInput("input vector contains non-finite values")
        _, _, mu, _, log_sigma = _encode(params.arrays, x, params.latent)
        return GaussianPosterior(mu=mu, log_sigma=log_sigma)

    @staticmethod
    def encode(params: EncoderParams, x: np.ndarray | ProsodyVector) -> GaussianPosterior:
        values = x.values if isinstance(x, ProsodyVector) else np.asarray(x, dtype=np.float64)
        if values.shape != (INPUT_DIM,):
            raise DimMismatch(f"expected {INPUT_DIM} dims, got shape {values.shape}")
        posterior = VaeService.encode_batch(params, values[None, :])
        return GaussianPosterior(mu=posterior.mu[0], log_sigma=posterior.log_sigma[0])

    @staticmethod
    def reparam_sample(posterior: GaussianPosterior, rng: np.random.Generator) -> np.ndarray:
        log_sigma = np.clip(posterior.log_sigma, -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
        return posterior.mu + np.exp(log_sigma) * rng.standard_normal(posterior.mu.shape)

    @staticmethod
    def kl_divergence(posterior: GaussianPosterior) -> float:
        return float(np.sum(kl_per_vector(posterior.mu, posterior.log_sigma)))

    @staticmethod
    def kl_scale(iteration: int, cfg: TrainConfig) -> float:
        ramp = (iteration - cfg.kl_start_iter) / (cfg.kl_end_iter - cfg.kl_start_iter)
        return float(min(max(ramp, 0.0), 1.0))

    @staticmethod
    def kl_active(iteration: int, cfg: TrainConfig) -> bool:
        return iteration % cfg.kl_period == 0

    @staticmethod
    def kl_weight(iteration: int, cfg: TrainConfig) -> tuple[float, bool]:
        scale = (
            cfg.kl_fixed_scale
            if cfg.kl_fixed_scale is not None
            else VaeService.kl_scale(iteration, cfg)
        )
        return scale, VaeService.kl_active(iteration, cfg)

    @staticmethod
    def reconstruction_mse(
        params: EncoderParams, dataset: np.ndarray | Sequence[ProsodyVector]
    ) -> float:
        """Posterior-mean decoding error over the whole dataset."""
        x = as_matrix(dataset)
        _, _, mu, _, _ = _encode(params.arrays, x, params.latent)
        _, x_hat = _decode(params.arrays, mu)
        return float(np.mean((x_hat - x) ** 2))

    @staticmethod
    def train(dataset: np.ndarray | Sequence[ProsodyVector], cfg: TrainConfig) -> TrainResult:
        x = as_matrix(dataset)
        rng = np.random.default_rng(cfg.seed)
        arrays = VaeService.init_params(cfg.hidden, cfg.latent, rng).copy_arrays()
        n_vectors = x.shape[0]
        batch_size = min(cfg.batch_size, n_vectors)

        logger.info(
            "training on %d vectors: %d iterations, batch %d, lr %g",
            n_vectors,
            cfg.iterations,
            batch_size,
            cfg.learning_rate,
        )

        history = []
        for iteration in range(cfg.iterations):
            if batch_size < n_vectors:
                batch = x[rng.choice(n_vectors, size=batch_size, replace=False)]
            else:
                batch = x
            noise = rng.standard_normal((batch_size, cfg.latent))

            scale, active = VaeService.kl_weight(iteration, cfg)
            weight = scale if active else 0.0
            recon, kl, grads = loss_and_grads(arrays, batch, noise, weight, cfg.latent)

            if not np.isfinite(recon + weight * kl) or not all(
                np.all(np.isfinite(g)) for g in grads.values()
            ):
                raise DivergedLoss(
                    f"loss became non-finite at iteration {iteration} (recon={recon}, kl={kl})"
                )

            for name in PARAM_NAMES:
                arrays[name] -= cfg.learning_rate * grads[name]

            history.append(
                LossRecord(iteration=iteration, recon=recon, kl=kl, scale=scale, active=active)
            )
            if iteration % cfg.log_every == 0:
                logger.info(
                    "iteration %d: recon %.6f kl %.6f scale %.4f%s",
                    iteration,
                    recon,
                    kl,
                    scale,
                    "" if active else " (kl off)",
                )

        params = EncoderParams(hidden=cfg.hidden, latent=cfg.latent, arrays=arrays).freeze()
        return TrainResult(params=params, history=tuple(history))

    @staticmethod
    def grad_check(
        params: EncoderParams,
        batch: np.ndarray,
        eps: float = 1e-5,
        weight: float = 1.0,
        seed: int = 0,
    ) -> float:
        """Largest relative error between backprop and central differences."""
        x = as_matrix(batch)
        noise = np.random.default_rng(seed).standard_normal((x.shape[0], params.latent))
        arrays = params.copy_arrays()
        _, _, analytic = loss_and_grads(arrays, x, noise, weight, params.latent)

        worst = 0.0
        for name in PARAM_NAMES:

            def total_loss(value: np.ndarray, name: str = name) -> float:
                recon, kl = _losses({**arrays, name: value}, x, noise, params.latent)
                return recon + weight * kl

            numeric = numeric_gradient(total_loss, arrays[name], eps)
            error = float(np.max(relative_error(analytic[name], numeric), initial=0.0))
            worst = max(worst, error)
        return worst

    @staticmethod
    def encode_sequence(
        params: EncoderParams,
        vectors: Sequence[ProsodyVector] | np.ndarray,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """One embedding per vector: posterior mean, or a sample when a generator is given."""
        posterior = VaeService.encode_batch(params, as_matrix(vectors))
        if rng is None:
            return posterior.mu
        return VaeService.reparam_sample(posterior, rng)

    @staticmethod
    def concat_embeddings(linguistic: np.ndarray, prosody: np.ndarray) -> np.ndarray:
        linguistic = np.asarray(linguistic, dtype=np.float64)
        prosody = np.asarray(prosody, dtype=np.float64)
        if prosody.ndim == 1 and prosody.size == 0:
            prosody = prosody.reshape(linguistic.shape[0], 0)
        if linguistic.ndim != 2 or prosody.ndim != 2:
            raise DimMismatch("embeddings must be 2-d arrays")
        if linguistic.shape[0] != prosody.shape[0]:
            raise LengthMismatch(
                f"{linguistic.shape[0]} linguistic rows vs {prosody.shape[0]} prosody rows"
            )
        return np.concatenate([linguistic, prosody], axis=1)

    @staticmethod
    def broadcast_concat(linguistic: np.ndarray, embedding: np.ndarray) -> np.ndarray:
        """Attach one utterance-level embedding to every linguistic row."""
        linguistic = np.asarray(linguistic, dtype=np.float64)
        embedding = np.asarray(embedding, dtype=np.float64).reshape(-1)
        return VaeService.concat_embeddings(
            linguistic, np.broadcast_to(embedding, (linguistic.shape[0], embedding.size))
        )

    @staticmethod
    def params_to_dict(params: EncoderParams) -> dict:
        return {
            "hidden": params.hidden,
            "latent": params.latent,
            "shapes": {name: list(params[name].shape) for name in PARAM_NAMES},
            "weights": {name: [float(v) for v in params[name].ravel()] for name in PARAM_NAMES},
        }

    @staticmethod
    def params_from_dict(data: dict, path: Optional[str | Path] = None) -> EncoderParams:
        if not isinstance(data, dict) or not {"shapes", "weights"} <= set(data):
            raise DataError("parameter JSON needs 'shapes' and 'weights'", path=path)
        arrays = {}
        for name, shape in data["shapes"].items():
            values = np.asarray(data["weights"].get(name, []), dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise DataError(
                    f"{name}: {values.size} weights for shape {tuple(shape)}", path=path
                )
            arrays[name] = values.reshape(shape)
        return build_model(
            EncoderParams,
            {"hidden": data.get("hidden"), "latent": data.get("latent"), "arrays": arrays},
            path=path,
        ).freeze()

    @staticmethod
    def write_params(params: EncoderParams, path: str | Path) -> Path:
        return write_json(path, VaeService.params_to_dict(params))

    @staticmethod
    def read_params(path: str | Path) -> EncoderParams:
        return VaeService.params_from_dict(read_json(path), path=path)

    @staticmethod
    def read_config(path: str | Path) -> TrainConfig:
        return build_model(TrainConfig, read_json(path), path=path)

    @staticmethod
    def write_config(cfg: TrainConfig, path: str | Path) -> Path:
        return write_json(path, cfg.model_dump(mode="json"))

    @staticmethod
    def format_history(history: Iterable[LossRecord]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for record in history:
            writer.writerow(
                [
                    record.iteration,
                    format_float(record.recon),
                    format_float(record.kl),
                    format_float(record.scale),
                    int(record.active),
                ]
            )
        return buffer.getvalue()

    @staticmethod
    def write_history(history: Iterable[LossRecord], path: str | Path) -> Path:
        return write_text(path, VaeService.format_history(history))
