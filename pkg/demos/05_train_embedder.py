"""Train a small DCGAN on glyphs and watch the adversarial value move.

Uses a reduced 16x16 geometry so the demo finishes in well under a minute;
the real embedder uses the default 64x64 architecture (see the CLI's
train-embedder command). The printed V is the empirical two-player value;
D(x) and D(G(z)) are the discriminator's mean verdicts on real and
generated batches.
"""

import tempfile

import numpy as np

from snapforge.gan import GanConfig, generate_corpus, init_params
from snapforge.gan.train import Trainer, load_image_dir


def main():
    config = GanConfig(
        nz=32, image_size=16, image_channels=3,
        gen_channels=(64, 32), disc_channels=(32, 64), dtype="float32",
    )
    with tempfile.TemporaryDirectory() as corpus_dir:
        generate_corpus(corpus_dir, classes=4, per_class=40, rng_seed=0, size=16)
        images, labels = load_image_dir(corpus_dir, config)
    print(f"corpus: {images.shape[0]} images of {len(set(labels))} classes")

    params = init_params(0, config)
    trainer = Trainer(params, lr=2e-4, rng_seed=0)
    shuffle = np.random.default_rng(1)
    for epoch in range(6):
        order = shuffle.permutation(images.shape[0])
        for s in range(images.shape[0] // 32):
            report = trainer.train_step(images[order[s * 32 : (s + 1) * 32]])
        print(f"epoch {epoch + 1}: V={report.v_value:+.3f}  "
              f"D(x)={report.d_real_mean:.3f}  D(G(z))={report.d_fake_mean:.3f}")
    print(f"{trainer.steps} steps, all updates finite")


if __name__ == "__main__":
    main()
