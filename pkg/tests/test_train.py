import numpy as np
import pytest

from gdca.data import bicubic_resize, synthetic_image
from gdca.losses import LossWeights, gan_g_loss, mae_loss, perceptual_loss, total_generator_loss
from gdca.models import Discriminator, FeatureExtractor, Generator, GeneratorConfig
from gdca.optim import AdamState, adam_step
from gdca.tensor import DOUBLE, SINGLE, Tape, Tensor, zero_grad
from gdca.train import (GANOptimizers, TrainSchedule, TrainState, discriminator_step, format_log_line,
                        gan_train_step, generator_gan_step, pretrain_step, run_training)

TINY = GeneratorConfig(8, 1, 1, 4)


def fixed_pair(size=8, seed=3):
    hr = synthetic_image(4 * size, 4 * size, seed=seed)
    return bicubic_resize(hr, size, size).to_tensor(SINGLE), hr.to_tensor(SINGLE)


def bright_batch(rng, n=4, size=8):
    level = rng.uniform(0.8, 1.0, size=(n, 1, 1, 1))
    lr = np.broadcast_to(level, (n, 3, size, size)).astype(np.float32)
    hr = np.broadcast_to(level, (n, 3, 4 * size, 4 * size)).astype(np.float32)
    return Tensor(lr.copy()), Tensor(hr.copy())


def snapshot(module):
    return {k: v.data.copy() for k, v in module.named_parameters().items()}


def same(a, b):
    return a.keys() == b.keys() and all(a[k].tobytes() == b[k].tobytes() for k in a)


def tiny_gan(seed=0):
    fe = FeatureExtractor(seed)
    return (Generator(TINY, seed=seed), Discriminator(3, seed=seed + 1), Discriminator(fe.out_channels, seed=seed + 2),
            fe, GANOptimizers(AdamState(lr=1e-4), AdamState(lr=1e-4), AdamState(lr=1e-4)))


class TestPretrain:
    def test_deterministic_trace(self):
        batch = fixed_pair()
        traces = []
        for _ in range(2):
            g, opt = Generator(TINY, seed=5), AdamState(lr=1e-3)
            traces.append([pretrain_step(g, batch, opt) for _ in range(5)])
        assert traces[0] == traces[1]

    def test_zero_tail_first_loss(self):
        lr, hr = fixed_pair()
        g = Generator(TINY, seed=1)
        g.tail.weight.data = np.zeros_like(g.tail.weight.data)
        g.tail.bias.data = np.full_like(g.tail.bias.data, 0.25)
        loss = pretrain_step(g, (lr, hr), AdamState())
        expected = np.mean(np.abs(np.float32(0.25) - hr.data.astype(np.float64)))
        assert abs(loss - expected) < 1e-6

    def test_only_generator_changes_and_loss_returned(self):
        lr, hr = fixed_pair()
        g = Generator(TINY, seed=2)
        before = g(lr).data.copy()
        loss = pretrain_step(g, (lr, hr), AdamState())
        direct = mae_loss(Tensor(before), hr).item()
        assert loss == direct
        assert not same(snapshot(g), {k: v for k, v in snapshot(Generator(TINY, seed=2)).items()})

    @pytest.mark.parametrize("seed", range(10))
    def test_non_increasing_over_50_step_windows(self, seed):
        batch = fixed_pair()
        g, opt = Generator(TINY, seed=seed), AdamState(lr=1e-4)
        losses = np.array([pretrain_step(g, batch, opt) for _ in range(120)])
        assert np.all(losses[50:] <= losses[:-50])


class TestGANStep:
    def test_discriminator_step_leaves_generator_untouched(self):
        g, d_img, _, _, opts = tiny_gan()
        lr, hr = bright_batch(np.random.default_rng(0))
        before = snapshot(g)
        d_before = snapshot(d_img)
        with Tape(SINGLE):
            fake = g(lr)  # still attached to the generator graph
        discriminator_step(d_img, hr, fake, opts.d_img, SINGLE)
        assert same(before, snapshot(g))
        assert not same(d_before, snapshot(d_img))
        assert all(p.grad is None or not np.any(p.grad) for p in g.parameters())

    def test_generator_step_leaves_discriminators_untouched(self):
        g, d_img, d_feat, fe, opts = tiny_gan()
        batch = bright_batch(np.random.default_rng(1))
        frozen = [snapshot(d_img), snapshot(d_feat), snapshot(fe)]
        g_before = snapshot(g)
        generator_gan_step(g, d_img, d_feat, fe, batch, opts.g, LossWeights())
        assert all(same(a, snapshot(m)) for a, m in zip(frozen, (d_img, d_feat, fe)))
        assert not same(g_before, snapshot(g))
        assert all(p.requires_grad for p in d_img.parameters() + d_feat.parameters())

    def test_full_step_order_and_isolation(self):
        g, d_img, d_feat, fe, opts = tiny_gan()
        batch = bright_batch(np.random.default_rng(2))
        fe_before = snapshot(fe)
        g_loss, d_loss, f_loss = gan_train_step(g, d_img, d_feat, fe, batch, opts, LossWeights())
        assert all(np.isfinite([g_loss, d_loss, f_loss]))
        assert d_loss >= 0 and f_loss >= 0 and g_loss >= 0
        assert opts.d_img.t == opts.d_feat.t == opts.g.t == 1
        assert same(fe_before, snapshot(fe))

    def test_zero_gan_weights_match_perceptual_only(self):
        batch = bright_batch(np.random.default_rng(3))
        g1, d_img, d_feat, fe, opts = tiny_gan(7)
        generator_gan_step(g1, d_img, d_feat, fe, batch, opts.g, LossWeights(1.0, 0.0, 0.0))

        g2 = Generator(TINY, seed=7)
        opt = AdamState(lr=1e-4)
        lr, hr = batch
        with Tape(SINGLE) as tape:
            loss = perceptual_loss(fe, g2(lr), hr)
        tape.backward(loss)
        adam_step(opt, g2.named_parameters())
        assert same(snapshot(g1), snapshot(g2))

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            g, d_img, d_feat, fe, opts = tiny_gan(4)
            rng = np.random.default_rng(9)
            losses = [gan_train_step(g, d_img, d_feat, fe, bright_batch(rng), opts, LossWeights()) for _ in range(3)]
            runs.append((losses, snapshot(g), snapshot(d_img), snapshot(d_feat)))
        assert runs[0][0] == runs[1][0]
        assert all(same(a, b) for a, b in zip(runs[0][1:], runs[1][1:]))


def test_total_generator_loss_gradient_double():
    cfg = GeneratorConfig(4, 1, 1, 2)
    g = Generator(cfg, seed=0, precision=DOUBLE)
    fe = FeatureExtractor(0, precision=DOUBLE)
    d_img, d_feat = Discriminator(3, seed=1, precision=DOUBLE), Discriminator(128, seed=2, precision=DOUBLE)
    d_img.set_trainable(False)
    d_feat.set_trainable(False)
    rng = np.random.default_rng(0)
    lr = Tensor(rng.uniform(0, 1, (3, 4, 4)), precision=DOUBLE)
    hr = Tensor(rng.uniform(0, 1, (3, 16, 16)), precision=DOUBLE)
    w = LossWeights(1.0, 0.5, 0.5)

    def loss_fn():
        sr = g(lr)
        feats = fe(sr)
        return total_generator_loss(w, fe, sr, hr, d_img(sr), d_feat(feats), sr_features=feats)

    params = g.named_parameters()
    zero_grad(params.values())
    with Tape(DOUBLE) as tape:
        loss = loss_fn()
    tape.backward(loss)
    h = 1e-6
    for name, p in params.items():
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(3, flat.size), replace=False)
        for i in picks:
            orig = p.data
            vals = []
            for sgn in (1, -1):
                bumped = flat.copy()
                bumped[i] += sgn * h
                p.data = bumped.reshape(p.shape)
                vals.append(loss_fn().item())
            p.data = orig
            fd = (vals[0] - vals[1]) / (2 * h)
            an = p.grad.reshape(-1)[i]
            assert abs(an - fd) <= 1e-4 * max(abs(fd), 1e-3), (name, i, an, fd)


def test_log_line_format():
    assert format_log_line(3, "pretrain", 0.5) == "step 3 phase pretrain g_loss 0.5 d_img_loss - d_feat_loss -"
    assert format_log_line(10, "gan", 1.23456789, 2.0, 1e-7) == \
        "step 10 phase gan g_loss 1.23457 d_img_loss 2 d_feat_loss 1e-07"


def test_run_training_logs_phases_and_checkpoints():
    sched = TrainSchedule(pretrain_steps=2, gan_steps=2, batch_size=2, seed=0)
    state = TrainState.fresh(TINY, sched, 0)
    rng = np.random.default_rng(0)
    batches = {s: bright_batch(np.random.default_rng(s), n=2) for s in range(4)}
    lines, saved = [], []
    run_training(state, sched, LossWeights(), batches.__getitem__, lines.append,
                 on_checkpoint=lambda s: saved.append(s.step), checkpoint_interval=2)
    assert [l.split()[3] for l in lines] == ["pretrain", "pretrain", "gan", "gan"]
    assert [int(l.split()[1]) for l in lines] == [1, 2, 3, 4]
    assert saved == [2, 4]
    assert state.step == 4 and state.opt_pre.t == 2 and state.opts.g.t == 2
    del rng


def test_state_round_trip_through_tensors():
    sched = TrainSchedule(1, 1, 2)
    a = TrainState.fresh(TINY, sched, 0)
    run_training(a, sched, LossWeights(), lambda s: bright_batch(np.random.default_rng(s), n=2), lambda _: None)
    b = TrainState.fresh(TINY, TrainSchedule(1, 1, 2, seed=99), 0)
    b.load(a.tensors())
    ta, tb = a.tensors(), b.tensors()
    assert ta.keys() == tb.keys()
    assert all(ta[k].data.tobytes() == tb[k].data.tobytes() for k in ta)
    assert b.step == 2
