import math

import numpy as np
import pytest
from pydantic import ValidationError

from prosoref.core.exceptions import (
    DimMismatch,
    DivergedLoss,
    EmptyDataset,
    LengthMismatch,
    NonFiniteInput,
)
from prosoref.modules.vae.service import VaeService, loss_and_grads, numeric_gradient
from prosoref.schemas.prosody import ProsodyVector
from prosoref.schemas.vae import PARAM_NAMES, GaussianPosterior, TrainConfig

OFFSET = 3.0 * np.array([1.0, -2.0, 0.5, 3.0, -1.0, 2.0, 0.0])


def synthetic_vectors(n=1000, seed=0):
    """Seven dims driven by three latent factors around a fixed offset."""
    rng = np.random.default_rng(seed)
    mixing = rng.normal(size=(3, 7))
    factors = rng.normal(size=(n, 3))
    return OFFSET + factors @ mixing + 0.1 * rng.normal(size=(n, 7))


def random_params(seed, hidden=16, latent=4):
    rng = np.random.default_rng(seed)
    params = VaeService.init_params(hidden, latent, rng)
    arrays = params.copy_arrays()
    for name in ("enc_b1", "enc_b2", "enc_b3", "dec_b1", "dec_b2"):
        arrays[name] = rng.normal(0.0, 0.5, arrays[name].shape)
    return params.model_copy(update={"arrays": arrays}), rng


def test_zero_params_give_standard_posterior():
    posterior = VaeService.encode(VaeService.zero_params(32, 8), np.arange(7.0))
    assert np.array_equal(posterior.mu, np.zeros(8))
    assert np.array_equal(posterior.log_sigma, np.zeros(8))


def test_encode_is_deterministic():
    params, rng = random_params(1)
    x = rng.normal(size=7)
    first, second = VaeService.encode(params, x), VaeService.encode(params, x)
    assert np.array_equal(first.mu, second.mu)
    assert np.array_equal(first.log_sigma, second.log_sigma)


def test_zero_input_propagates_biases():
    params, _ = random_params(2)
    h1 = np.tanh(params["enc_b1"])
    h2 = np.tanh(h1 @ params["enc_w2"] + params["enc_b2"])
    out = h2 @ params["enc_w3"] + params["enc_b3"]

    posterior = VaeService.encode(params, np.zeros(7))
    assert np.allclose(posterior.mu, out[:4], rtol=0, atol=1e-12)
    assert np.allclose(posterior.log_sigma, out[4:], rtol=0, atol=1e-12)


def test_encode_accepts_prosody_vectors():
    params, _ = random_params(3)
    vector = ProsodyVector(
        phone="AH", f0_state=(0.1, 0.2, 0.3), mgc0_state=(-0.1, 0.0, 0.1), duration=0.5
    )
    from_vector = VaeService.encode(params, vector)
    assert np.array_equal(from_vector.mu, VaeService.encode(params, vector.values).mu)


def test_encode_rejects_bad_input():
    params, _ = random_params(4)
    with pytest.raises(DimMismatch):
        VaeService.encode(params, np.zeros(6))
    with pytest.raises(NonFiniteInput):
        VaeService.encode(params, np.array([0.0, 1.0, np.nan, 0.0, 0.0, 0.0, 0.0]))


def test_sampling():
    posterior = GaussianPosterior(mu=np.ones((10_000, 1)), log_sigma=np.zeros((10_000, 1)))
    z = VaeService.reparam_sample(posterior, np.random.default_rng(0))
    assert abs(z.mean() - 1.0) < 0.06
    assert abs(z.var() - 1.0) < 0.1

    again = VaeService.reparam_sample(posterior, np.random.default_rng(0))
    assert np.array_equal(z, again)

    tight = GaussianPosterior(mu=np.full(8, 2.0), log_sigma=np.full(8, -10.0))
    assert np.allclose(VaeService.reparam_sample(tight, np.random.default_rng(1)), 2.0, atol=1e-3)


@pytest.mark.parametrize(
    "mu, log_sigma, expected",
    [
        (0.0, 0.0, 0.0),
        (1.0, 0.0, 0.5),
        (0.0, math.log(2.0), 1.5 - math.log(2.0)),
    ],
)
def test_kl_closed_form(mu, log_sigma, expected):
    posterior = GaussianPosterior(mu=[mu], log_sigma=[log_sigma])
    assert VaeService.kl_divergence(posterior) == pytest.approx(expected, abs=1e-12)


def test_kl_positive_away_from_prior(rng):
    for _ in range(20):
        posterior = GaussianPosterior(mu=rng.normal(size=8), log_sigma=rng.normal(size=8))
        assert VaeService.kl_divergence(posterior) > 0.0


def test_kl_schedule():
    cfg = TrainConfig()
    assert VaeService.kl_scale(0, cfg) == 0.0
    assert VaeService.kl_scale(25_000, cfg) == 0.0
    assert VaeService.kl_scale(87_500, cfg) == 0.5
    assert VaeService.kl_scale(150_000, cfg) == 1.0
    assert VaeService.kl_scale(400_000, cfg) == 1.0

    scales = [VaeService.kl_scale(i, cfg) for i in range(0, 200_000, 1000)]
    assert scales == sorted(scales)

    assert [VaeService.kl_active(i, cfg) for i in (0, 199, 200, 401, 600)] == [
        True,
        False,
        True,
        False,
        True,
    ]
    fixed = cfg.model_copy(update={"kl_fixed_scale": 1.0})
    assert VaeService.kl_weight(30_000, fixed) == (1.0, True)


def test_schedule_must_ramp_upwards():
    with pytest.raises(ValidationError):
        TrainConfig(kl_start_iter=100, kl_end_iter=100)


def test_numeric_gradient_of_linear_layer(rng):
    x, y = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    w = rng.normal(size=(3, 2))

    def loss(weights):
        return 0.5 * float(np.sum((x @ weights - y) ** 2))

    analytic = x.T @ (x @ w - y)
    assert np.allclose(numeric_gradient(loss, w), analytic, rtol=0, atol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_backprop_matches_finite_differences(seed):
    params, rng = random_params(100 + seed)
    batch = rng.normal(size=(8, 7))
    assert VaeService.grad_check(params, batch, seed=seed) < 1e-4


def test_backprop_matches_finite_differences_at_default_size():
    rng = np.random.default_rng(7)
    params = VaeService.init_params(32, 8, rng)
    assert VaeService.grad_check(params, rng.normal(size=(4, 7)), weight=0.3) < 1e-4


def test_gradients_vanish_at_a_perfect_fit():
    x = np.tile(np.arange(7.0), (4, 1))
    arrays = VaeService.zero_params(16, 4).copy_arrays()
    arrays["dec_b2"] = np.arange(7.0)
    noise = np.random.default_rng(0).standard_normal((4, 4))

    recon, _, grads = loss_and_grads(arrays, x, noise, 0.0, 4)
    assert recon == 0.0
    for name in PARAM_NAMES:
        assert not np.any(grads[name])


def desk_config(**overrides):
    values = dict(
        iterations=5000,
        learning_rate=0.01,
        batch_size=64,
        kl_start_iter=1000,
        kl_end_iter=4000,
        seed=3,
        log_every=1000,
    )
    values.update(overrides)
    return TrainConfig(**values)


def test_desk_scale_training():
    x = synthetic_vectors()
    result = VaeService.train(x, desk_config())

    assert len(result.history) == 5000
    assert all(math.isfinite(r.recon) and math.isfinite(r.kl) for r in result.history)
    assert VaeService.reconstruction_mse(result.params, x) <= 0.5 * result.history[0].recon

    rerun = VaeService.train(x, desk_config())
    assert rerun.history == result.history
    for name in PARAM_NAMES:
        assert np.array_equal(rerun.params[name], result.params[name])


def test_trained_params_are_read_only():
    result = VaeService.train(synthetic_vectors(n=50), desk_config(iterations=3))
    with pytest.raises(ValueError):
        result.params["enc_w1"][0, 0] = 1.0


def test_ramp_keeps_reconstruction_ahead_of_fixed_scale():
    x = synthetic_vectors()
    start = 1000
    ramped = VaeService.train(x, desk_config(iterations=start, kl_period=1))
    fixed = VaeService.train(x, desk_config(iterations=start, kl_period=1, kl_fixed_scale=1.0))

    for result in (ramped, fixed):
        assert all(math.isfinite(r.recon + r.kl) for r in result.history)
    assert VaeService.reconstruction_mse(ramped.params, x) <= VaeService.reconstruction_mse(
        fixed.params, x
    )


def test_training_errors():
    with pytest.raises(EmptyDataset):
        VaeService.train(np.zeros((0, 7)), desk_config())
    with pytest.raises(DimMismatch):
        VaeService.train(np.zeros((10, 5)), desk_config())

    huge = np.full((16, 7), 1e3)
    with np.errstate(all="ignore"), pytest.raises(DivergedLoss):
        VaeService.train(huge, desk_config(learning_rate=1e6, iterations=500))


def test_embedding_sequence():
    params, rng = random_params(5)
    x = rng.normal(size=(6, 7))
    means = VaeService.encode_sequence(params, x)
    assert means.shape == (6, 4)
    assert np.allclose(means[2], VaeService.encode(params, x[2]).mu, rtol=0, atol=1e-12)

    sampled = VaeService.encode_sequence(params, x, np.random.default_rng(9))
    assert np.array_equal(sampled, VaeService.encode_sequence(params, x, np.random.default_rng(9)))


def test_concat_embeddings():
    linguistic = np.arange(20.0).reshape(5, 4)
    joined = VaeService.concat_embeddings(linguistic, np.ones((5, 8)))
    assert joined.shape == (5, 12)
    assert np.array_equal(joined[:, :4], linguistic)

    assert np.array_equal(VaeService.concat_embeddings(linguistic, np.zeros((5, 0))), linguistic)
    with pytest.raises(LengthMismatch):
        VaeService.concat_embeddings(linguistic, np.ones((4, 8)))

    broadcast = VaeService.broadcast_concat(linguistic, np.array([7.0, 8.0, 9.0]))
    assert broadcast.shape == (5, 7)
    assert np.all(broadcast[:, 4:] == [7.0, 8.0, 9.0])


def test_params_file_is_byte_stable(tmp_path):
    params, _ = random_params(6)
    VaeService.write_params(params, tmp_path / "a.json")
    loaded = VaeService.read_params(tmp_path / "a.json")
    VaeService.write_params(loaded, tmp_path / "b.json")

    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    for name in PARAM_NAMES:
        assert np.array_equal(loaded[name], params[name])


def test_history_csv():
    result = VaeService.train(synthetic_vectors(n=50), desk_config(iterations=2, kl_period=1))
    lines = VaeService.format_history(result.history).splitlines()
    assert lines[0] == "iteration,recon,kl,scale,active"
    assert lines[1].startswith("0,") and lines[1].endswith(",0.0,1")


def test_config_file(tmp_path):
    cfg = desk_config(kl_fixed_scale=0.5)
    VaeService.write_config(cfg, tmp_path / "config.json")
    assert VaeService.read_config(tmp_path / "config.json") == cfg
