"""
Pretraining a small generator on one patch
==========================================

The generator is first trained with a pixel MAE loss.  A tiny
configuration memorises a single 24 -> 96 pair in a few hundred steps; the
RMSE is reported in 8-bit units next to plain bicubic upsampling.
"""

import tempfile
from pathlib import Path

from gdca.data import Image, bicubic_resize, save_ppm, synthetic_image
from gdca.metrics import psnr_from_rmse, rmse
from gdca.models import Generator, GeneratorConfig
from gdca.optim import AdamState
from gdca.tensor import SINGLE
from gdca.train import pretrain_step

hr_img = synthetic_image(96, 96, seed=7)
lr_img = bicubic_resize(hr_img, 24, 24)
lr, hr = lr_img.to_tensor(SINGLE), hr_img.to_tensor(SINGLE)

baseline = rmse(bicubic_resize(lr_img, 96, 96), hr_img, border_crop=0)
print(f"bicubic x4       rmse {baseline:.2f}  psnr {psnr_from_rmse(baseline):.2f} dB")

g = Generator(GeneratorConfig(base_channels=8, n_ca_blocks=1, n_le_blocks=1), seed=0)
print("parameters:", g.num_parameters())
opt = AdamState(lr=1e-2)
for step in range(1, 501):
    loss = pretrain_step(g, (lr, hr), opt)
    if step % 100 == 0:
        sr = Image.from_tensor(g.super_resolve(lr))
        e = rmse(sr, hr_img, border_crop=0)
        print(f"step {step:3d}  mae {loss:.4f}  rmse {e:.2f}")

# memorising one patch says nothing about generalisation; it shows the
# forward/backward/update loop is wired end to end
out = Path(tempfile.mkdtemp()) / "sr.ppm"
save_ppm(out, sr)
print("wrote", out)
