import dataclasses
import math

import numpy as np
import pytest

from ivegan.autodiff import Tape, backward
from ivegan.data import RingSource, RingSpec
from ivegan.errors import NonFiniteError, ShapeError
from ivegan.metrics import coverage
from ivegan.model import (
    FREEZE_DISCRIMINATORS,
    FREEZE_GENERATOR,
    GeneratorLoss,
    OptimizerSettings,
    StepReport,
    TrainConfig,
    TrainState,
    assemble_losses,
    create_model,
    encode,
    generate,
    generator_objective,
    interpolate,
    ivegan_losses,
    mnist_lite_architecture,
    new_state,
    reconstruct,
    sample_grid,
    sample_novel,
    snapshot_schedule,
    train,
    train_step,
    train_vanilla,
    value_from_logits,
    vanilla_value_from_logits,
)
from ivegan.transforms import GaussianShift

SPEC = RingSpec()


def _config(**kwargs):
    base = dict(
        iterations=4,
        batch_size=16,
        seed=3,
        transform=GaussianShift(SPEC.covariance),
        snapshot_every=2,
        snapshot_samples=50,
        log_every=0,
    )
    base.update(kwargs)
    return TrainConfig(**base)


def _same_params(a, b):
    return all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


def test_value_at_half_probability():
    zeros = np.zeros(5)
    assert value_from_logits(zeros, zeros, zeros, zeros) == pytest.approx(4 * math.log(0.5), abs=1e-15)
    assert vanilla_value_from_logits(zeros, zeros) == pytest.approx(2 * math.log(0.5), abs=1e-15)


def test_confident_discriminator_on_real_pairs():
    big = np.full(3, 800.0)
    zeros = np.zeros(3)
    v = value_from_logits(big, zeros, zeros, zeros)
    assert v == pytest.approx(3 * math.log(0.5), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_discriminator_losses_sum_to_minus_value(seed):
    gen = np.random.default_rng(seed)
    logits = [gen.standard_normal((6, 1)) * 3 for _ in range(4)]
    tape = Tape()
    vs = [tape.constant(l) for l in logits]
    loss_d, loss_dp, loss_ge = assemble_losses(*vs, generator_loss=GeneratorLoss.minimax)
    value = value_from_logits(*logits)
    assert loss_d.value.item() + loss_dp.value.item() == pytest.approx(-value, abs=1e-12)
    # the minimax generator loss is the part of the value G and E can move
    nlD = np.logaddexp(0.0, -logits[0]).mean() + np.logaddexp(0.0, -logits[1]).mean()
    assert -nlD + loss_ge.value.item() == pytest.approx(value, abs=1e-12)


def test_generator_losses_push_the_same_way():
    gen = np.random.default_rng(0)
    logits = gen.standard_normal((20, 1)) * 4
    signs = []
    for mode in GeneratorLoss:
        tape = Tape()
        l = tape.param(logits)
        g = backward(tape, generator_objective([l], mode))[l].data
        signs.append(np.sign(g))
    assert np.array_equal(signs[0], signs[1])
    assert np.all(signs[0] < 0)


def test_encode_and_generate_shapes(tiny_model, rng):
    x = rng.standard_normal((9, 2))
    z = encode(tiny_model, x)
    assert z.shape == (9, 2)
    assert np.all(np.abs(z) < 1.0)
    out = generate(tiny_model, rng.standard_normal((9, 4)), z)
    assert out.shape == (9, 2)
    assert np.all(np.abs(out) < 1.0)
    assert reconstruct(tiny_model, x, rng).shape == x.shape


def test_zprime_varies_the_output_for_a_fixed_z(tiny_arch):
    model = train(_config(), RingSource(SPEC), tiny_arch).model
    gen = np.random.default_rng(8)
    z = np.tile(gen.uniform(-1.0, 1.0, size=(1, 2)), (5, 1))
    a = generate(model, gen.standard_normal((5, 4)), z)
    b = generate(model, gen.standard_normal((5, 4)), z)
    assert np.all(np.abs(a - b).sum(axis=1) > 0.0)


def test_identical_rows_encode_identically(tiny_model):
    x = np.tile([[0.3, -0.7]], (4, 1))
    z = encode(tiny_model, x)
    np.testing.assert_allclose(z, np.tile(z[:1], (4, 1)), rtol=0, atol=1e-15)


def test_width_mismatches_are_rejected(tiny_model, rng):
    with pytest.raises(ShapeError):
        encode(tiny_model, np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        generate(tiny_model, np.zeros((3, 4)), np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        generate(tiny_model, np.zeros((2, 4)), np.zeros((3, 2)))


def test_sample_novel_is_seeded(tiny_model):
    a = sample_novel(tiny_model, 30, np.random.default_rng(2))
    b = sample_novel(tiny_model, 30, np.random.default_rng(2))
    np.testing.assert_array_equal(a, b)
    assert sample_novel(tiny_model, 0, np.random.default_rng(2)).shape == (0, 2)


def test_sample_grid_shape(tiny_model, rng):
    assert sample_grid(tiny_model, 3, 5, rng).shape == (3, 5, 2)


def test_interpolation_endpoints(tiny_model, rng):
    x_a, x_b = np.array([0.9, 0.0]), np.array([0.0, -0.9])
    zprime = rng.standard_normal((1, 4))
    path = interpolate(tiny_model, x_a, x_b, 5, rng, zprime=zprime)
    assert path.points.shape == (5, 2)
    np.testing.assert_allclose(path.points[0], reconstruct(tiny_model, x_a[None], rng, zprime)[0], atol=1e-12)
    np.testing.assert_allclose(path.points[-1], reconstruct(tiny_model, x_b[None], rng, zprime)[0], atol=1e-12)
    mid = 0.5 * (path.latents[0] + path.latents[-1])
    np.testing.assert_allclose(path.latents[2], mid, atol=1e-12)
    assert len(interpolate(tiny_model, x_a, x_b, 2, rng).points) == 2
    with pytest.raises(ValueError):
        interpolate(tiny_model, x_a, x_b, 1, rng)


def test_encoder_gets_gradient_through_reconstruction(tiny_model, rng):
    x = RingSource(SPEC).sample(32, rng)
    losses = ivegan_losses(tiny_model, x, rng, GaussianShift(SPEC.covariance))
    grads = losses.nets["E"].grads(backward(losses.tape, losses.loss_GE))
    assert any(np.abs(g).max() > 0 for g in grads)
    assert losses.report.loss_D > 0 and losses.report.loss_Dprime > 0


def test_pair_discriminator_takes_the_candidate_first(tiny_model, rng):
    # blind D to its first input slot: it then only sees the conditioning x
    params = [np.array(p) for p in tiny_model.D.parameters()]
    params[0][:, :2] = 0.0
    model = dataclasses.replace(tiny_model, D=tiny_model.D.with_parameters(params))
    x = RingSource(SPEC).sample(32, rng)
    report = ivegan_losses(model, x, rng, GaussianShift(SPEC.covariance)).report
    assert report.logit_transformed == report.logit_reconstruction


def test_step_reports_refuse_non_finite_values():
    with pytest.raises(NonFiniteError):
        StepReport(1, float("nan"), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def test_train_step_is_deterministic(tiny_model):
    cfg = _config()
    x = RingSource(SPEC).sample(16, np.random.default_rng(0))
    m1, r1 = train_step(tiny_model, x, cfg, np.random.default_rng(11))
    m2, r2 = train_step(tiny_model, x, cfg, np.random.default_rng(11))
    assert r1 == r2
    for name, net in m1.networks().items():
        assert _same_params(net, m2.networks()[name])


def test_frozen_players_keep_their_parameters(tiny_model):
    cfg = _config()
    x = RingSource(SPEC).sample(16, np.random.default_rng(0))

    m, _ = train_step(tiny_model, x, cfg, np.random.default_rng(1), frozen=(FREEZE_DISCRIMINATORS,))
    assert _same_params(m.D, tiny_model.D) and _same_params(m.Dprime, tiny_model.Dprime)
    assert not _same_params(m.G, tiny_model.G) and not _same_params(m.E, tiny_model.E)

    m, _ = train_step(tiny_model, x, cfg, np.random.default_rng(1), frozen=(FREEZE_GENERATOR,))
    assert _same_params(m.E, tiny_model.E) and _same_params(m.G, tiny_model.G)
    assert not _same_params(m.D, tiny_model.D) and not _same_params(m.Dprime, tiny_model.Dprime)


def test_discriminators_learn_against_a_frozen_generator(tiny_arch):
    model = create_model(
        tiny_arch, np.random.default_rng(0), opt_d=OptimizerSettings(1e-3), opt_dprime=OptimizerSettings(1e-3)
    )
    cfg = _config(batch_size=64)
    source = RingSource(SPEC)
    probe = source.sample(256, np.random.default_rng(99))

    def disc_loss(m):
        r = ivegan_losses(m, probe, np.random.default_rng(5), cfg.transform).report
        return r.loss_D + r.loss_Dprime

    before = disc_loss(model)
    rng = np.random.default_rng(1)
    for t in range(100):
        model, _ = train_step(model, source.sample(64, rng), cfg, rng, iteration=t + 1, frozen=(FREEZE_GENERATOR,))
    assert disc_loss(model) < before


def test_train_config_validation():
    with pytest.raises(ValueError):
        _config(iterations=0)
    with pytest.raises(ValueError):
        _config(snapshot_every=3)
    with pytest.raises(ValueError):
        _config(batch_size=1)


def test_snapshot_schedule_matches_iterations():
    cfg = TrainConfig(iterations=50_000, snapshot_every=10_000)
    assert snapshot_schedule(cfg) == [0, 10_000, 20_000, 30_000, 40_000, 50_000]


def test_train_records_history_and_snapshots(tiny_arch):
    cfg = _config()
    seen = []
    result = train(cfg, RingSource(SPEC), tiny_arch, on_snapshot=seen.append)
    assert len(result.history) == 4
    assert [r.iteration for r in result.history] == [1, 2, 3, 4]
    assert [s.iteration for s in result.snapshots] == snapshot_schedule(cfg)
    assert all(s.samples.shape == (50, 2) for s in result.snapshots)
    assert [s.iteration for s in seen] == [0, 2, 4]


def test_split_run_matches_continuous_run(tiny_arch):
    full = train(_config(), RingSource(SPEC), tiny_arch)

    state = new_state(_config(), tiny_arch)
    train(_config(iterations=2), RingSource(SPEC), tiny_arch, state=state)
    assert isinstance(state, TrainState) and state.iteration == 2
    resumed = train(_config(), RingSource(SPEC), tiny_arch, state=state)

    assert [r.to_dict() for r in resumed.history] == [r.to_dict() for r in full.history]
    for a, b in zip(resumed.snapshots, full.snapshots):
        np.testing.assert_array_equal(a.samples, b.samples)


class _InterruptedSource:
    """Draws its batch, then raises KeyboardInterrupt on the given call."""

    def __init__(self, spec, interrupt_on):
        self.inner = RingSource(spec)
        self.data_dim = self.inner.data_dim
        self.calls = 0
        self.interrupt_on = interrupt_on

    def sample(self, n, rng):
        self.calls += 1
        x = self.inner.sample(n, rng)
        if self.calls == self.interrupt_on:
            raise KeyboardInterrupt
        return x


def test_interrupt_mid_step_rolls_back_to_the_last_full_step(tiny_arch):
    full = train(_config(), RingSource(SPEC), tiny_arch)

    saved = []
    with pytest.raises(KeyboardInterrupt):
        train(_config(), _InterruptedSource(SPEC, 3), tiny_arch, on_checkpoint=saved.append)
    state = saved[-1]
    assert state.iteration == 2 and len(state.history) == 2

    resumed = train(_config(), RingSource(SPEC), tiny_arch, state=state)
    assert [r.to_dict() for r in resumed.history] == [r.to_dict() for r in full.history]
    np.testing.assert_array_equal(resumed.snapshots[-1].samples, full.snapshots[-1].samples)


def test_train_reports_checkpoints_on_schedule(tiny_arch):
    seen = []
    train(_config(checkpoint_every=2), RingSource(SPEC), tiny_arch, on_checkpoint=lambda s: seen.append(s.iteration))
    assert seen == [2, 4]


def test_vanilla_training_is_deterministic(tiny_arch):
    a = train_vanilla(_config(), RingSource(SPEC), tiny_arch)
    b = train_vanilla(_config(), RingSource(SPEC), tiny_arch)
    assert len(a.history) == 4
    assert [r.to_dict() for r in a.history] == [r.to_dict() for r in b.history]
    assert a.snapshots[-1].samples.shape == (50, 2)


def test_train_rejects_the_wrong_state_kind(tiny_arch):
    state = new_state(_config(), tiny_arch, vanilla=True)
    with pytest.raises(TypeError):
        train(_config(), RingSource(SPEC), tiny_arch, state=state)


def test_true_ring_samples_cover_every_mode():
    samples = RingSource(SPEC).sample(4000, np.random.default_rng(0))
    report = coverage(samples, SPEC, rng=np.random.default_rng(1))
    assert report.covered_modes == 8


def test_mnist_lite_architecture_dimensions():
    arch = mnist_lite_architecture()
    model = create_model(arch, np.random.default_rng(0))
    assert model.data_dim == 196
    assert model.E.layers[0].activation == "lrelu"
    assert model.G.layers[-1].activation == "sigmoid"
    out = sample_novel(model, 3, np.random.default_rng(1))
    assert out.shape == (3, 196)
    assert out.min() > 0.0 and out.max() < 1.0


@pytest.mark.slow
def test_losses_stay_finite_for_a_thousand_steps(tiny_arch):
    cfg = _config(iterations=1000, batch_size=64, snapshot_every=1000)
    result = train(cfg, RingSource(SPEC), tiny_arch)
    assert len(result.history) == 1000
    assert all(np.isfinite(list(r.to_dict().values())).all() for r in result.history)
