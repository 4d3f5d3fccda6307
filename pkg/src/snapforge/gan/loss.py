"""Adversarial value/loss reporting.

The empirical two-player value on a batch is

    V = mean(log d_real) + mean(log(1 - d_fake))

with d_real = D(x) on real samples and d_fake = D(G(z)) on generated ones.
The discriminator minimizes -V. The generator is trained with the
non-saturating form -mean(log d_fake) rather than the literal
min log(1 - d_fake), whose gradient vanishes while the discriminator is
winning; V itself is still computed and reported every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class GanLossReport:
    v_value: float
    d_loss: float
    g_loss: float
    d_real_mean: float
    d_fake_mean: float
    clamped: bool = False


def gan_value(d_real: np.ndarray, d_fake: np.ndarray) -> GanLossReport:
    """Evaluate the batch value; probabilities at 0 or 1 are clamped to
    [eps, 1-eps] with eps=1e-7 and the report flagged."""
    d_real = np.asarray(d_real, dtype=np.float64).reshape(-1)
    d_fake = np.asarray(d_fake, dtype=np.float64).reshape(-1)
    if d_real.size == 0 or d_fake.size == 0:
        raise ValueError("gan_value needs non-empty real and fake batches")
    lo, hi = CLAMP_EPS, 1.0 - CLAMP_EPS
    clamped = bool((d_real <= 0).any() or (d_real >= 1).any()
                   or (d_fake <= 0).any() or (d_fake >= 1).any())
    r = np.clip(d_real, lo, hi)
    f = np.clip(d_fake, lo, hi)
    v = float(np.mean(np.log(r)) + np.mean(np.log(1.0 - f)))
    g = float(-np.mean(np.log(f)))
    return GanLossReport(
        v_value=v,
        d_loss=-v,
        g_loss=g,
        d_real_mean=float(r.mean()),
        d_fake_mean=float(f.mean()),
        clamped=clamped,
    )
