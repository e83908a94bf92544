"""
Two discriminators on a toy task
================================

Real patches are flat bright squares; the untrained generator produces
something else.  Each GAN step updates the image discriminator, then the
feature discriminator (on frozen random features), then the generator.
"""

import numpy as np

from gdca.losses import LossWeights
from gdca.models import Discriminator, FeatureExtractor, Generator, GeneratorConfig
from gdca.optim import AdamState
from gdca.tensor import Tensor
from gdca.train import GANOptimizers, format_log_line, gan_train_step

rng = np.random.default_rng(0)


def bright_batch(n=4, size=8):
    level = rng.uniform(0.8, 1.0, size=(n, 1, 1, 1))
    lr = np.broadcast_to(level, (n, 3, size, size)).astype(np.float32)
    hr = np.broadcast_to(level, (n, 3, 4 * size, 4 * size)).astype(np.float32)
    return Tensor(lr.copy()), Tensor(hr.copy())


fe = FeatureExtractor(seed=0)
g = Generator(GeneratorConfig(8, 1, 1, 4), seed=0)
d_img = Discriminator(3, seed=1)
d_feat = Discriminator(fe.out_channels, seed=2)
opts = GANOptimizers(AdamState(lr=1e-4), AdamState(lr=1e-4), AdamState(lr=1e-4))

probe_lr, probe_hr = bright_batch(16)
for step in range(1, 41):
    losses = gan_train_step(g, d_img, d_feat, fe, bright_batch(), opts, LossWeights())
    if step % 10 == 0:
        print(format_log_line(step, "gan", *losses))
        fake = g(probe_lr)
        acc = (np.sum(d_img(probe_hr).data > 0) + np.sum(d_img(fake).data < 0)) / 32
        print(f"    image discriminator accuracy {acc:.2f}")
