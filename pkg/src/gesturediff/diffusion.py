"""Forward diffusion, the noise-prediction objective and the reverse sampler.

A *denoiser* is any callable ``denoiser(xn, h, n)`` where ``xn`` is a
``(B, D)`` array, ``h`` the matching conditioning rows and ``n`` an integer
array of 1-based diffusion steps; it returns the predicted noise with the
shape of ``xn`` (a numpy array, or a :class:`~gesturediff.autodiff.Tensor`
when gradients are wanted).
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .schedule import VarianceSchedule

__all__ = [
    "DiffusionConfig", "forward_diffuse", "posterior_mean", "training_loss_term",
    "diffusion_loss", "noise_scale", "sample_step", "sample_frame",
]

# Reverse-process noise readings: the noise term is sigma * z with
# sigma = sqrt(beta_tilde) ("variance") or sigma = beta_tilde ("std").
SIGMA_MODES = ("variance", "std")


@dataclass(frozen=True)
class DiffusionConfig:
    schedule: VarianceSchedule
    dim: int
    sigma_mode: str = "variance"

    def __post_init__(self):
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}")


def _rows(c):
    # per-row coefficients broadcast against (..., D)
    return c[..., None] if np.ndim(c) else c


def forward_diffuse(x0, n, eps, schedule):
    """Closed-form draw from q(x^n | x^0): sqrt(abar) x0 + sqrt(1 - abar) eps.

    ``n`` is a scalar step or an integer array matching ``x0.shape[:-1]``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 {x0.shape} and eps {eps.shape} differ in shape")
    abar = schedule.alpha_bar[schedule.check_step(n)]
    return _rows(np.sqrt(abar)) * x0 + _rows(np.sqrt(1.0 - abar)) * eps


def posterior_mean(x0, xn, n, schedule):
    """Mean of q(x^{n-1} | x^n, x^0)."""
    i = schedule.check_step(n)
    beta = schedule.beta[i]
    abar = schedule.alpha_bar[i]
    abar_prev = schedule.alpha_bar_prev[i]
    c0 = np.sqrt(abar_prev) * beta / (1.0 - abar)
    cn = np.sqrt(schedule.alpha[i]) * (1.0 - abar_prev) / (1.0 - abar)
    x0 = np.asarray(x0, dtype=np.float64)
    xn = np.asarray(xn, dtype=np.float64)
    return _rows(c0) * x0 + _rows(cn) * xn


def training_loss_term(x0, h, n, eps, denoiser, schedule):
    """Squared error between ``eps`` and the denoiser's prediction at the
    diffused point, summed over channels and averaged over leading axes.

    Differentiable when ``denoiser`` returns a Tensor built from parameters.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 {x0.shape} and eps {eps.shape} differ in shape")
    xn = forward_diffuse(x0, n, eps, schedule)
    eps_hat = denoiser(xn, h, n)
    if tuple(np.shape(ad.as_tensor(eps_hat).data)) != eps.shape:
        raise ValueError(f"denoiser returned shape {np.shape(eps_hat)}, expected {eps.shape}")
    per_row = ad.square_norm(ad.as_tensor(eps) - eps_hat, axis=-1)
    return per_row.mean() if per_row.ndim else per_row


def diffusion_loss(x0, h, n, eps, denoiser, schedule):
    """Per-element mean squared noise-prediction error (the reported loss)."""
    return training_loss_term(x0, h, n, eps, denoiser, schedule) * (1.0 / np.shape(x0)[-1])


def noise_scale(schedule, n, sigma_mode="variance"):
    bt = schedule.beta_tilde[schedule.check_step(n)]
    return np.sqrt(bt) if sigma_mode == "variance" else bt


def sample_step(xn, h, n, z, denoiser, schedule, sigma_mode="variance"):
    """One reverse update from step ``n`` to ``n - 1``.

    ``n`` is a Python int shared by the whole batch.  The caller supplies
    ``z``; it must be zero at ``n == 1``.
    """
    i = int(schedule.check_step(n))
    xn = np.asarray(xn, dtype=np.float64)
    steps = np.full(xn.shape[:-1], n, dtype=np.intp) if xn.ndim > 1 else n
    eps_hat = denoiser(xn, h, steps)
    if isinstance(eps_hat, ad.Tensor):
        eps_hat = eps_hat.data
    beta, alpha, abar = schedule.beta[i], schedule.alpha[i], schedule.alpha_bar[i]
    mean = (xn - beta / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)
    return mean + noise_scale(schedule, n, sigma_mode) * np.asarray(z, dtype=np.float64)


def sample_frame(h, denoiser, schedule, rng, dim, batch=None, sigma_mode="variance"):
    """Run the full reverse chain from x^N ~ N(0, I) down to x^0.

    ``batch`` rows are sampled in parallel (``None`` means a single
    unbatched ``(dim,)`` sample).  Noise is drawn from ``rng`` in a fixed
    order so results are reproducible per seed.
    """
    shape = (dim,) if batch is None else (batch, dim)
    x = rng.standard_normal(shape)
    with ad.no_grad():
        for n in range(schedule.n_steps, 0, -1):
            z = rng.standard_normal(shape) if n > 1 else np.zeros(shape)
            x = sample_step(x, h, n, z, denoiser, schedule, sigma_mode)
    return x
