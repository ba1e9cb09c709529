"""The diffusion process: schedule, closed-form noising and the reverse sampler."""
# %% Quartic schedule from 1e-4 to 0.1
import numpy as np

from gesturediff import build_schedule, forward_diffuse, sample_frame

s = build_schedule(100)
print("beta:", s.beta[[0, 49, 99]].round(5), " alpha_bar at N:", s.alpha_bar[-1].round(4))

# %% Noising a point: the mean shrinks and the variance grows toward 1
x0 = np.full((20000, 2), 2.0)
rng = np.random.default_rng(0)
for n in (1, 25, 50, 100):
    xn = forward_diffuse(x0, n, rng.standard_normal(x0.shape), s)
    print(f"n={n:3d} mean {xn.mean():.3f} var {xn.var():.3f}")

# %% With the ideal denoiser for unit-Gaussian data, sampling returns unit Gaussians
def oracle(xn, h, n):
    return np.sqrt(1.0 - s.alpha_bar[np.asarray(n) - 1])[..., None] * xn

x = sample_frame(None, oracle, s, np.random.default_rng(1), dim=3, batch=5000)
print("sampled mean", x.mean(0).round(3), "var", x.var(0).round(3))
