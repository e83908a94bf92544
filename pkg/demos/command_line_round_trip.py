"""
Train, upscale and score from the command line
==============================================

The same entry point as the ``gdca`` console script, driven in-process:
a tiny config trains for a handful of steps, ``infer`` upscales one
image, and ``eval`` scores it against the original.
"""

import tempfile
from pathlib import Path

from gdca.cli import main
from gdca.data import bicubic_resize, save_ppm, synthetic_image

root = Path(tempfile.mkdtemp())
(root / "data").mkdir()
for i in range(3):
    save_ppm(root / "data" / f"img{i}.ppm", synthetic_image(64, 64, seed=i))

(root / "train.cfg").write_text("""\
# tiny run; paths are relative to this file
base_channels = 8
n_ca_blocks = 1
n_le_blocks = 1
patch_size = 8
batch_size = 2
pretrain_steps = 200
gan_steps = 5
lr_pretrain = 3e-3
dataset_dir = data
checkpoint_path = run.ckpt
""")
main(["train", "--config", str(root / "train.cfg")])

hr = synthetic_image(64, 64, seed=9)
(root / "hr").mkdir()
(root / "sr").mkdir()
save_ppm(root / "hr" / "test.ppm", hr)
save_ppm(root / "lr.ppm", bicubic_resize(hr, 16, 16))
main(["infer", "--checkpoint", str(root / "run.ckpt"), "--in", str(root / "lr.ppm"),
      "--out", str(root / "sr" / "test.ppm")])
code = main(["eval", "--sr", str(root / "sr"), "--hr", str(root / "hr"), "--csv", str(root / "scores.csv")])
print("eval exit code", code)
print((root / "scores.csv").read_text())
