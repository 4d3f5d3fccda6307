"""Adversarial training loop: Adam optimizer, alternating D/G steps.

Each step runs one discriminator update (real batch + fake batch, fakes
treated as constants) followed by one generator update through the frozen
discriminator, both with Adam at lr 0.0002, beta1 0.5, beta2 0.999. Losses
are computed on logits through softplus for numerical stability; the
reported values are identical to the probability-space definitions in
loss.py. Any non-finite gradient or update aborts with a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from snapforge.gan import layers as L
from snapforge.gan.loss import GanLossReport, gan_value
from snapforge.gan.network import (
    DcganParams,
    discriminator_backward,
    discriminator_forward,
    generator_backward,
    generator_forward,
)

ADAM_BETA1 = 0.5
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_LR = 2e-4


class TrainingDiverged(RuntimeError):
    """NaN/Inf appeared in a gradient or parameter update."""


class Adam:
    """Per-tensor Adam with bias correction."""

    def __init__(self, lr: float = DEFAULT_LR, beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, g in grads.items():
            if not np.isfinite(g).all():
                raise TrainingDiverged(f"non-finite gradient in {name!r}")
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            update = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            if not np.isfinite(update).all():
                raise TrainingDiverged(f"non-finite update for {name!r}")
            tensors[name] -= update.astype(tensors[name].dtype, copy=False)


@dataclass
class StepRecord:
    step: int
    report: GanLossReport


class Trainer:
    """Owns the parameters, both optimizers, and the latent-batch RNG."""

    def __init__(self, params: DcganParams, lr: float = DEFAULT_LR, rng_seed: int = 0) -> None:
        self.params = params
        self.opt_d = Adam(lr)
        self.opt_g = Adam(lr)
        self.rng = np.random.default_rng(rng_seed)
        self.history: list[StepRecord] = []
        self.steps = 0

    def sample_latents(self, n: int) -> np.ndarray:
        return self.rng.standard_normal((n, self.params.config.nz)).astype(
            self.params.config.np_dtype
        )

    def train_step(self, real_batch: np.ndarray) -> GanLossReport:
        """One discriminator update then one generator update."""
        p = self.params
        n = real_batch.shape[0]
        z = self.sample_latents(n)
        # one generator forward serves both phases: the discriminator update
        # treats the fakes as constants and never touches generator weights,
        # so the cached activations stay valid for the generator's backward
        fake, g_cache = generator_forward(p, z, train=True, want_cache=True)

        # discriminator: push real logits up, fake logits down
        logits_r, probs_r, _, cache_r = discriminator_forward(
            p, real_batch, train=True, want_cache=True
        )
        logits_f, probs_f, _, cache_f = discriminator_forward(
            p, fake, train=True, want_cache=True
        )
        d_grads_r, _ = discriminator_backward(p, (L.sigmoid(logits_r) - 1.0) / n, cache_r)
        d_grads_f, _ = discriminator_backward(p, L.sigmoid(logits_f) / n, cache_f)
        d_grads = {k: d_grads_r[k] + d_grads_f[k] for k in d_grads_r}
        self.opt_d.step(p.tensors, d_grads)

        # generator: non-saturating loss through the updated discriminator
        logits_f2, _, _, cache_f2 = discriminator_forward(p, fake, train=True, want_cache=True)
        _, dfake = discriminator_backward(p, (L.sigmoid(logits_f2) - 1.0) / n, cache_f2)
        g_grads, _ = generator_backward(p, dfake, g_cache)
        self.opt_g.step(p.tensors, g_grads)

        report = gan_value(probs_r, probs_f)
        self.steps += 1
        self.history.append(StepRecord(self.steps, report))
        return report


def load_image_dir(corpus_dir: str, config) -> tuple[np.ndarray, list[str]]:
    """Preprocess every corpus image into one (N, C, S, S) array."""
    from snapforge.gan.corpus import list_corpus
    from snapforge.gan.embed import preprocess

    items = list_corpus(corpus_dir)
    if not items:
        raise ValueError(f"no images found under {corpus_dir}")
    batch = np.stack(
        [preprocess(open(it.path, "rb").read(), config.image_size) for it in items]
    ).astype(config.np_dtype)
    return batch, [it.class_label for it in items]


def train_model(
    params: DcganParams,
    images: np.ndarray,
    epochs: int,
    batch_size: int = 128,
    lr: float = DEFAULT_LR,
    rng_seed: int = 0,
    log_every: int = 0,
) -> Trainer:
    """Train in place over shuffled full batches (a trailing partial batch
    each epoch is dropped: batch norm needs more than a sliver)."""
    trainer = Trainer(params, lr=lr, rng_seed=rng_seed)
    shuffle_rng = np.random.default_rng(rng_seed + 1)
    n = images.shape[0]
    steps_per_epoch = n // batch_size
    if steps_per_epoch == 0:
        raise ValueError(f"corpus of {n} images smaller than one batch of {batch_size}")
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        for s in range(steps_per_epoch):
            batch = images[order[s * batch_size : (s + 1) * batch_size]]
            report = trainer.train_step(batch)
            if log_every and trainer.steps % log_every == 0:
                print(
                    f"epoch {epoch + 1}/{epochs} step {trainer.steps}: "
                    f"V={report.v_value:+.4f} D(x)={report.d_real_mean:.3f} "
                    f"D(G(z))={report.d_fake_mean:.3f}"
                )
    return trainer
