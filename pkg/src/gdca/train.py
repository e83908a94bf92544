"""Two-phase training: MAE pretraining of the generator, then dual-discriminator GAN updates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .losses import LossWeights, gan_d_loss, mae_loss, total_generator_loss
from .models import Discriminator, FeatureExtractor, Generator, GeneratorConfig
from .optim import AdamState, adam_step
from .tensor import SINGLE, Tape, Tensor, zero_grad

MAX_STEP = 2 ** 24  # step counters are stored as float32 in checkpoints


@dataclass(frozen=True)
class TrainSchedule:
    pretrain_steps: int = 1000
    gan_steps: int = 1000
    batch_size: int = 4
    lr_pretrain: float = 1e-4
    lr_gan: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.pretrain_steps < 0 or self.gan_steps < 0:
            raise ValueError("step counts must be non-negative")
        if self.pretrain_steps + self.gan_steps >= MAX_STEP:
            raise ValueError(f"total steps must stay below {MAX_STEP}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    @property
    def total_steps(self):
        return self.pretrain_steps + self.gan_steps


def _update(module, opt: AdamState, loss_fn: Callable[[], Tensor], precision) -> float:
    params = module.named_parameters()
    zero_grad(params.values())
    with Tape(precision) as tape:
        loss = loss_fn()
    tape.backward(loss)
    adam_step(opt, params)
    return loss.item()


def pretrain_step(g: Generator, batch: tuple[Tensor, Tensor], opt: AdamState) -> float:
    """One MAE update of the generator on ``(lr, hr)``; returns the pre-update loss."""
    lr, hr = batch
    return _update(g, opt, lambda: mae_loss(g(lr), hr), g.precision)


def discriminator_step(d: Discriminator, real: Tensor, fake: Tensor, opt: AdamState, precision) -> float:
    """Update ``d`` to separate ``real`` from ``fake``; both inputs are treated as constants."""
    real, fake = real.detach(), fake.detach()
    return _update(d, opt, lambda: gan_d_loss(d(real), d(fake)), precision)


def generator_gan_step(g: Generator, d_img: Discriminator, d_feat: Discriminator, fe: FeatureExtractor,
                       batch, opt: AdamState, w: LossWeights) -> float:
    lr, hr = batch

    def loss_fn():
        sr = g(lr)
        feats = fe(sr) if (w.w_percep or w.w_feat_gan) else None
        img_logit = d_img(sr) if w.w_img_gan else None
        feat_logit = d_feat(feats) if w.w_feat_gan else None
        return total_generator_loss(w, fe, sr, hr, img_logit, feat_logit, sr_features=feats)

    # discriminators act as fixed functions here; skip their weight gradients
    d_img.set_trainable(False)
    d_feat.set_trainable(False)
    try:
        return _update(g, opt, loss_fn, g.precision)
    finally:
        d_img.set_trainable(True)
        d_feat.set_trainable(True)


@dataclass
class GANOptimizers:
    g: AdamState
    d_img: AdamState
    d_feat: AdamState


def gan_train_step(g: Generator, d_img: Discriminator, d_feat: Discriminator, fe: FeatureExtractor,
                   batch, opts: GANOptimizers, w: LossWeights) -> tuple[float, float, float]:
    """Image-discriminator update, feature-discriminator update, then generator update.

    Returns ``(g_loss, d_img_loss, d_feat_loss)``.
    """
    lr, hr = batch
    sr = g(lr)  # evaluated outside any tape: detached from the generator
    if sr._tape is not None:
        raise RuntimeError("gan_train_step must not run inside an active tape")
    d_img_loss = discriminator_step(d_img, hr, sr, opts.d_img, g.precision)
    d_feat_loss = discriminator_step(d_feat, fe(hr), fe(sr), opts.d_feat, g.precision)
    g_loss = generator_gan_step(g, d_img, d_feat, fe, batch, opts.g, w)
    return g_loss, d_img_loss, d_feat_loss


def format_log_line(step: int, phase: str, g_loss=None, d_img_loss=None, d_feat_loss=None) -> str:
    def f(v):
        return "-" if v is None else f"{v:.6g}"

    return f"step {step} phase {phase} g_loss {f(g_loss)} d_img_loss {f(d_img_loss)} d_feat_loss {f(d_feat_loss)}"


@dataclass
class TrainState:
    """Everything needed to continue training bit-exactly from a given step."""

    g: Generator
    d_img: Discriminator
    d_feat: Discriminator
    fe: FeatureExtractor
    opt_pre: AdamState
    opts: GANOptimizers
    step: int = 0

    @classmethod
    def fresh(cls, gen_config: GeneratorConfig, schedule: TrainSchedule, extractor_seed: int,
              precision=SINGLE) -> "TrainState":
        seed = schedule.seed
        fe = FeatureExtractor(extractor_seed, precision)
        return cls(
            g=Generator(gen_config, seed=seed, precision=precision),
            d_img=Discriminator(3, seed=seed + 1, precision=precision),
            d_feat=Discriminator(fe.out_channels, seed=seed + 2, precision=precision),
            fe=fe,
            opt_pre=AdamState(lr=schedule.lr_pretrain),
            opts=GANOptimizers(AdamState(lr=schedule.lr_gan), AdamState(lr=schedule.lr_gan),
                               AdamState(lr=schedule.lr_gan)),
        )

    def _optimizers(self):
        return {"opt.gpre.": self.opt_pre, "opt.g.": self.opts.g,
                "opt.dimg.": self.opts.d_img, "opt.dfeat.": self.opts.d_feat}

    def tensors(self) -> dict[str, Tensor]:
        """Named float32 tensors for the checkpoint file."""
        out = {}
        for prefix, module in (("g.", self.g), ("d_img.", self.d_img), ("d_feat.", self.d_feat)):
            for name, t in module.named_parameters().items():
                out[prefix + name] = t.astype(SINGLE)
        opts = self._optimizers()
        out["meta.step"] = Tensor(np.array([self.step], dtype=np.float32))
        out["meta.opt_t"] = Tensor(np.array([o.t for o in opts.values()], dtype=np.float32))
        for prefix, o in opts.items():
            for k, t in o.state_tensors(prefix).items():
                out[k] = t.astype(SINGLE)
        return out

    def load(self, tensors: dict[str, Tensor]):
        self.g.load_state(tensors, "g.")
        self.d_img.load_state(tensors, "d_img.")
        self.d_feat.load_state(tensors, "d_feat.")
        self.step = int(tensors["meta.step"].item())
        ts = tensors["meta.opt_t"].data
        for t, (prefix, o) in zip(ts, self._optimizers().items()):
            o.load_state_tensors(tensors, prefix, int(t))


def run_training(state: TrainState, schedule: TrainSchedule, weights: LossWeights,
                 next_batch: Callable[[int], tuple[Tensor, Tensor]],
                 log: Callable[[str], None] = print,
                 on_checkpoint: Callable[[TrainState], None] | None = None,
                 checkpoint_interval: int = 0) -> TrainState:
    """Advance ``state`` to ``schedule.total_steps``.

    ``next_batch(step)`` must be a pure function of the zero-based step index
    so that resumed runs see the same data as uninterrupted ones.
    """
    while state.step < schedule.total_steps:
        batch = next_batch(state.step)
        if state.step < schedule.pretrain_steps:
            loss = pretrain_step(state.g, batch, state.opt_pre)
            state.step += 1
            log(format_log_line(state.step, "pretrain", loss))
        else:
            gl, dl, fl = gan_train_step(state.g, state.d_img, state.d_feat, state.fe, batch,
                                        state.opts, weights)
            state.step += 1
            log(format_log_line(state.step, "gan", gl, dl, fl))
        if on_checkpoint and checkpoint_interval and state.step % checkpoint_interval == 0:
            on_checkpoint(state)
    return state
