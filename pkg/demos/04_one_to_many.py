"""Why a generative model: one input, two equally likely answers.

The target is +1 or -1 with equal probability whatever the covariate.  A
regression fit predicts the average (0, a pose no one makes); the
diffusion model samples both answers.
"""
# %%
import numpy as np

from gesturediff import build_schedule, diffusion_loss, sample_frame
from gesturediff.model import Adam, Denoiser

rng = np.random.default_rng(0)
s = build_schedule(100)
den = Denoiser(1, 1, width=64, blocks=2, emb_dim=16, rng=np.random.default_rng(1))
opt = Adam(den.params, lr=3e-3)

for step in range(1500):
    c = rng.uniform(-1, 1, (256, 1))
    y = rng.choice([-1.0, 1.0], (256, 1)) + 0.05 * rng.standard_normal((256, 1))
    for p in den.params.values():
        p.grad = None
    loss = diffusion_loss(y, c, rng.integers(1, 101, 256), rng.standard_normal((256, 1)), den, s)
    loss.backward()
    opt.step()
    if step % 500 == 0:
        print(f"step {step}: loss {float(loss.data):.3f}")

# %% Sample 400 answers for one covariate value
h = np.full((400, 1), 0.3)
f = den.conditioned(h)
x = sample_frame(h, lambda xn, _h, n: f(xn, n).data, s, np.random.default_rng(2), 1, batch=400)
print(f"share near +1: {np.mean(x > 0):.2f}; means {x[x > 0].mean():+.2f} / {x[x <= 0].mean():+.2f}")

# %% The regression answer
c = rng.uniform(-1, 1, (5000, 1))
y = rng.choice([-1.0, 1.0], (5000, 1))
w = np.linalg.lstsq(np.hstack([np.ones_like(c), c]), y, rcond=None)[0]
print(f"least-squares prediction at c=0.3: {float(w[0, 0] + 0.3 * w[1, 0]):+.3f}")
