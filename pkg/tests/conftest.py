import numpy as np
import pytest

from scae.data import make_synthetic
from scae.model import CodecConfig, SlimAutoencoder, desk_config, pad_to_factor
from scae.train import Adam, sgd_train


def noise_off_cell_edges(model, x, rng, margin=5e-3):
    """Quantization-proxy noise adjusted so every noisy latent sits away
    from the likelihood model's cell edges.

    Central finite differences are only valid where the piecewise-linear
    CDF is smooth; a probe landing within eps of a half-integer edge is a
    degenerate instance, so gradient tests keep a safety margin.
    """
    assert model.config.bins_per_unit == 1
    x = np.asarray(x, dtype=np.float64)
    xp, _, _ = pad_to_factor(x, model.config.downsample_factor)
    noise = model.make_noise(x.shape[0], xp.shape[2], xp.shape[3], rng)
    for _ in range(50):
        moved = False
        for k in range(1, model.config.K + 1):
            w_k = model.config.widths[k - 1]
            zt = model.encode_latent(xp, k).value + noise[:, :w_k]
            frac = np.mod(zt - 0.5, 1.0)
            dist = np.minimum(frac, 1.0 - frac)
            bad = dist < margin
            if bad.any():
                moved = True
                shift = np.where(noise[:, :w_k] > 0.45, -2 * margin, 2 * margin)
                noise[:, :w_k][bad] += shift[bad]
        if not moved:
            return noise
    raise AssertionError("could not find a kink-free probe point")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def tiny_config():
    return CodecConfig(widths=(2, 3), enc_kernels=(3, 2), enc_strides=(2, 2),
                       support=8)


@pytest.fixture(scope="session")
def desk_model():
    """Untrained desk-scale model shared by structural tests."""
    return SlimAutoencoder(desk_config(), seed=11)


@pytest.fixture(scope="session")
def trained_tiny():
    """A briefly trained small model whose entropy tables are non-flat.

    Enough training that rates/latents are meaningful; nowhere near the
    budgets of the acceptance runs.
    """
    cfg = desk_config(widths=(4, 8))
    model = SlimAutoencoder(cfg, seed=5)
    ds = make_synthetic("gaussian_blobs", 60, 24, seed=50)
    opt = Adam(model.params(), 1e-3, 1e-2)
    sgd_train(model, ds, [0.01, 0.005], 400, opt, seed=5)
    model.lambdas = [0.01, 0.005]
    return model


@pytest.fixture(scope="session")
def val_images():
    return make_synthetic("gaussian_blobs", 4, 24, seed=51).full_images()
