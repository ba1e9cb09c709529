"""Diffusion variance schedules.

Tables are stored 0-based internally; every public accessor takes the
1-based diffusion step ``n`` in ``1..N``.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["ScheduleError", "VarianceSchedule", "build_schedule", "lookup"]

SHAPES = ("linear", "quartic")


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VarianceSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    # alpha_bar_prev[n-1] is alpha_bar at step n-1, with alpha_bar at step 0 = 1
    alpha_bar_prev: np.ndarray
    beta_tilde: np.ndarray
    shape: str = "quartic"

    @property
    def n_steps(self):
        return len(self.beta)

    @classmethod
    def from_betas(cls, beta, shape="custom"):
        beta = np.asarray(beta, dtype=np.float64).copy()
        if beta.ndim != 1 or len(beta) == 0:
            raise ScheduleError("beta must be a non-empty 1-d array")
        if not np.all((beta > 0) & (beta < 1)):
            raise ScheduleError("every beta must lie in (0, 1)")
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
        beta_tilde = beta.copy()
        beta_tilde[1:] = (1.0 - alpha_bar_prev[1:]) / (1.0 - alpha_bar[1:]) * beta[1:]
        for arr in (beta, alpha, alpha_bar, alpha_bar_prev, beta_tilde):
            arr.setflags(write=False)
        return cls(beta, alpha, alpha_bar, alpha_bar_prev, beta_tilde, shape)

    def check_step(self, n):
        n_arr = np.asarray(n)
        if n_arr.size and (n_arr.min() < 1 or n_arr.max() > self.n_steps):
            raise ScheduleError(f"diffusion step {n} outside 1..{self.n_steps}")
        return n_arr.astype(np.intp) - 1

    def to_dict(self):
        return {"n_steps": self.n_steps, "beta_start": float(self.beta[0]),
                "beta_end": float(self.beta[-1]), "shape": self.shape}


def build_schedule(n_steps, beta_start=1e-4, beta_end=0.1, shape="quartic"):
    """Build an increasing beta schedule of ``n_steps`` entries.

    ``quartic`` interpolates linearly in beta**(1/4) and raises the result
    to the fourth power; ``linear`` interpolates beta directly.
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise ScheduleError(f"n_steps must be a positive integer, got {n_steps}")
    n_steps = int(n_steps)
    if not 0 < beta_start <= beta_end < 1:
        raise ScheduleError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if shape not in SHAPES:
        raise ScheduleError(f"unknown schedule shape {shape!r}; expected one of {SHAPES}")
    if n_steps == 1:
        return VarianceSchedule.from_betas([beta_start], shape)
    s = np.arange(n_steps) / (n_steps - 1)
    if shape == "quartic":
        lo, hi = beta_start ** 0.25, beta_end ** 0.25
        beta = (lo + s * (hi - lo)) ** 4
    else:
        beta = beta_start + s * (beta_end - beta_start)
    # round-off in the power can break monotonicity by an ulp near flat schedules
    beta = np.maximum.accumulate(np.clip(beta, beta_start, beta_end))
    beta[0], beta[-1] = beta_start, beta_end
    return VarianceSchedule.from_betas(beta, shape)


def lookup(schedule, n):
    """Return ``(beta, alpha, alpha_bar, beta_tilde)`` at 1-based step ``n``."""
    i = schedule.check_step(n)
    return (schedule.beta[i], schedule.alpha[i], schedule.alpha_bar[i],
            schedule.beta_tilde[i])
