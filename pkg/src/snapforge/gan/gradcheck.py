"""Finite-difference verification of the adversarial training gradients.

Checks the gradients actually used by a training step: the discriminator
loss wrt discriminator parameters (fake batch held constant) and the
non-saturating generator loss wrt generator parameters through a frozen
discriminator. Both losses are evaluated with batch-norm in training mode,
exactly as during optimization. Central differences; intended for a
down-scaled 64-bit network where float roundoff stays far below the
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from snapforge.gan import layers as L
from snapforge.gan.network import (
    DcganParams,
    discriminator_backward,
    discriminator_forward,
    generator_backward,
    generator_forward,
)


@dataclass(frozen=True)
class GradCheckResult:
    loss: str  # "d_loss" | "g_loss"
    tensor: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


def d_loss_value(params: DcganParams, real: np.ndarray, fake: np.ndarray) -> float:
    s_r, _, _ = discriminator_forward(params, real, train=True)
    s_f, _, _ = discriminator_forward(params, fake, train=True)
    return float(np.mean(L.softplus(-s_r)) + np.mean(L.softplus(s_f)))


def g_loss_value(params: DcganParams, z: np.ndarray) -> float:
    fake = generator_forward(params, z, train=True)
    s_f, _, _ = discriminator_forward(params, fake, train=True)
    return float(np.mean(L.softplus(-s_f)))


def d_loss_grads(params: DcganParams, real: np.ndarray, fake: np.ndarray) -> dict:
    n = real.shape[0]
    s_r, _, _, cache_r = discriminator_forward(params, real, train=True, want_cache=True)
    s_f, _, _, cache_f = discriminator_forward(params, fake, train=True, want_cache=True)
    g_r, _ = discriminator_backward(params, (L.sigmoid(s_r) - 1.0) / n, cache_r)
    g_f, _ = discriminator_backward(params, L.sigmoid(s_f) / fake.shape[0], cache_f)
    return {k: g_r[k] + g_f[k] for k in g_r}


def g_loss_grads(params: DcganParams, z: np.ndarray) -> dict:
    n = z.shape[0]
    fake, g_cache = generator_forward(params, z, train=True, want_cache=True)
    s_f, _, _, cache_f = discriminator_forward(params, fake, train=True, want_cache=True)
    _, dfake = discriminator_backward(params, (L.sigmoid(s_f) - 1.0) / n, cache_f)
    grads, _ = generator_backward(params, dfake, g_cache)
    return grads


def run_gradient_check(
    params: DcganParams,
    real: np.ndarray,
    z: np.ndarray,
    n_samples: int = 200,
    h: float = 1e-5,
    rng_seed: int = 0,
) -> tuple[list[GradCheckResult], int]:
    """Sample parameters across every trainable tensor of both nets and
    compare analytic gradients against central differences.

    Central differences are only meaningful where the loss is smooth across
    the whole [-h, +h] window; a LeakyReLU/ReLU kink inside it (a bias shift
    moves an entire channel past zero) corrupts the estimate regardless of
    the backward pass being right. Such windows are detected by comparing
    the h and h/2 estimates, which agree to O(h^2) on smooth stretches and
    diverge near a kink; flagged samples are redrawn. Returns (results,
    number of redraws). Relative error is scaled by
    max(|analytic|, |numeric|, 1e-6).
    """
    if params.config.np_dtype != np.float64:
        raise ValueError("gradient checks require a float64 configuration")
    rng = np.random.default_rng(rng_seed)
    fake_const = generator_forward(params, z, train=True)
    analytic_d = d_loss_grads(params, real, fake_const)
    analytic_g = g_loss_grads(params, z)
    d_names = sorted(n for n in analytic_d if "running_" not in n)
    g_names = sorted(n for n in analytic_g if "running_" not in n)

    def loss_at(loss_name: str, tensor: str, index: tuple, value: float) -> float:
        arr = params.tensors[tensor]
        orig = arr[index]
        arr[index] = value
        try:
            if loss_name == "d_loss":
                return d_loss_value(params, real, fake_const)
            return g_loss_value(params, z)
        finally:
            arr[index] = orig

    def draw(loss_name: str, names: list[str], forced: str | None) -> tuple[str, tuple]:
        tensor = forced if forced is not None else names[rng.integers(len(names))]
        arr = params.tensors[tensor]
        return tensor, np.unravel_index(int(rng.integers(arr.size)), arr.shape)

    results: list[GradCheckResult] = []
    redraws = 0
    half = n_samples // 2
    plan = [("d_loss", d_names, half), ("g_loss", g_names, n_samples - half)]
    for loss_name, names, count in plan:
        forced = list(names)  # cover every tensor at least once
        done = 0
        attempts = 0
        while done < count:
            attempts += 1
            if attempts > 6 * count:
                raise RuntimeError("too many non-smooth samples; check the setup")
            tensor, index = draw(loss_name, names, forced.pop() if forced else None)
            theta = float(params.tensors[tensor][index])
            fd_h = (loss_at(loss_name, tensor, index, theta + h)
                    - loss_at(loss_name, tensor, index, theta - h)) / (2 * h)
            fd_h2 = (loss_at(loss_name, tensor, index, theta + h / 2)
                     - loss_at(loss_name, tensor, index, theta - h / 2)) / h
            if abs(fd_h - fd_h2) / max(abs(fd_h), abs(fd_h2), 1e-6) > 1e-5:
                redraws += 1  # kink inside the window: the FD itself is invalid
                if tensor in names:
                    forced.append(tensor)  # keep per-tensor coverage
                continue
            analytic = float(
                (analytic_d if loss_name == "d_loss" else analytic_g)[tensor][index]
            )
            rel = abs(analytic - fd_h) / max(abs(analytic), abs(fd_h), 1e-6)
            results.append(GradCheckResult(loss_name, tensor, index, analytic, fd_h, rel))
            done += 1
    return results, redraws
