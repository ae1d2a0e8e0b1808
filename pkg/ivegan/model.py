"""Invariant-encoding GAN: encoder E, generator G, pair discriminator D and
novel-sample discriminator D', plus the classical two-player GAN baseline.

The discriminators see real pairs (T(x), x) against reconstruction pairs
(G(z', E(x)), x), and real points x against novel samples G(z', z). E only
receives gradient through G's reconstruction path.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .autodiff import Tape, Tensor, Var, backward, concat, mean_all, neg, softplus
from .errors import NonFiniteError, ShapeError
from .nn import AdamState, BoundNetwork, LayerSpec, Network, adam_step, adam_update, apply, bind, init_network
from .transforms import TransformSpec, sample_transform

log = logging.getLogger(__name__)


class GeneratorLoss(enum.Enum):
    non_saturating = "non_saturating"
    minimax = "minimax"


class NovelTerm(enum.Enum):
    # D' judges G(z', z) with z from the prior, or G(z', E(x)) as printed in
    # the objective; the prior form is what novel sampling actually uses.
    prior = "prior"
    encoded = "encoded"


FREEZE_DISCRIMINATORS = "discriminators"
FREEZE_GENERATOR = "generator"


# ---------------------------------------------------------------------------
# architectures

@dataclass(frozen=True)
class Architecture:
    encoder: Tuple[LayerSpec, ...]
    generator: Tuple[LayerSpec, ...]
    discriminator: Tuple[LayerSpec, ...]
    novel_discriminator: Tuple[LayerSpec, ...]
    data_dim: int
    z_dim: int
    zprime_dim: int


def ring_architecture(z_dim: int = 2, zprime_dim: int = 4, hidden: int = 128, data_dim: int = 2) -> Architecture:
    """Two-layer tanh MLPs for the synthetic task; D/D' emit raw logits."""
    return Architecture(
        encoder=(LayerSpec(data_dim, hidden, "tanh"), LayerSpec(hidden, z_dim, "tanh")),
        generator=(LayerSpec(zprime_dim + z_dim, hidden, "tanh"), LayerSpec(hidden, data_dim, "tanh")),
        discriminator=(LayerSpec(2 * data_dim, hidden, "tanh"), LayerSpec(hidden, 1, "linear")),
        novel_discriminator=(LayerSpec(data_dim, hidden, "tanh"), LayerSpec(hidden, 1, "linear")),
        data_dim=data_dim,
        z_dim=z_dim,
        zprime_dim=zprime_dim,
    )


def mnist_lite_architecture(
    z_dim: int = 3,
    zprime_dim: int = 4,
    hidden: Sequence[int] = (512, 512),
    disc_hidden: Sequence[int] = (256, 64),
    data_dim: int = 196,
    slope: float = 0.2,
) -> Architecture:
    def stack(dims: Sequence[int], last: str) -> Tuple[LayerSpec, ...]:
        layers = [LayerSpec(a, b, "lrelu", slope) for a, b in zip(dims[:-2], dims[1:-1])]
        layers.append(LayerSpec(dims[-2], dims[-1], last))
        return tuple(layers)

    return Architecture(
        encoder=stack([data_dim, *hidden, z_dim], "tanh"),
        generator=stack([zprime_dim + z_dim, *reversed(hidden), data_dim], "sigmoid"),
        discriminator=stack([2 * data_dim, *disc_hidden, 1], "linear"),
        novel_discriminator=stack([data_dim, *disc_hidden, 1], "linear"),
        data_dim=data_dim,
        z_dim=z_dim,
        zprime_dim=zprime_dim,
    )


@dataclass(frozen=True)
class OptimizerSettings:
    lr: float
    beta1: float = 0.7
    beta2: float = 0.999
    eps: float = 1e-8

    def create(self, params: Sequence[np.ndarray]) -> AdamState:
        return AdamState.create(params, self.lr, self.beta1, self.beta2, self.eps)


# ---------------------------------------------------------------------------
# models

@dataclass(frozen=True, eq=False)
class IveGanModel:
    E: Network
    G: Network
    D: Network
    Dprime: Network
    z_dim: int
    zprime_dim: int
    adam_GE: AdamState
    adam_D: AdamState
    adam_Dprime: AdamState

    def __post_init__(self):
        d = self.data_dim
        checks = [
            (self.E.out_dim == self.z_dim, f"E outputs {self.E.out_dim}, z_dim is {self.z_dim}"),
            (self.G.in_dim == self.z_dim + self.zprime_dim,
             f"G takes {self.G.in_dim}, z_dim + zprime_dim is {self.z_dim + self.zprime_dim}"),
            (self.G.out_dim == d, f"G outputs {self.G.out_dim}, data dim is {d}"),
            (self.D.in_dim == 2 * d, f"D takes {self.D.in_dim}, expected {2 * d}"),
            (self.Dprime.in_dim == d, f"D' takes {self.Dprime.in_dim}, expected {d}"),
            (self.D.out_dim == 1 and self.Dprime.out_dim == 1, "discriminators must emit one logit"),
            (self.E.layers[-1].activation == "tanh", "E must end in tanh"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ShapeError(msg)

    @property
    def data_dim(self) -> int:
        return self.E.in_dim

    def networks(self) -> Dict[str, Network]:
        return {"E": self.E, "G": self.G, "D": self.D, "Dprime": self.Dprime}

    def optimizers(self) -> Dict[str, AdamState]:
        return {"GE": self.adam_GE, "D": self.adam_D, "Dprime": self.adam_Dprime}

    def reconstruct(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return reconstruct(self, x, rng)

    def sample_novel(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_novel(self, n, rng)


@dataclass(frozen=True, eq=False)
class VanillaGan:
    G: Network
    D: Network
    latent_dim: int
    adam_G: AdamState
    adam_D: AdamState

    def __post_init__(self):
        if self.G.in_dim != self.latent_dim:
            raise ShapeError(f"G takes {self.G.in_dim}, latent_dim is {self.latent_dim}")
        if self.D.in_dim != self.G.out_dim or self.D.out_dim != 1:
            raise ShapeError(f"D must map {self.G.out_dim} -> 1, got {self.D.in_dim} -> {self.D.out_dim}")

    @property
    def data_dim(self) -> int:
        return self.G.out_dim

    def networks(self) -> Dict[str, Network]:
        return {"G": self.G, "D": self.D}

    def optimizers(self) -> Dict[str, AdamState]:
        return {"G": self.adam_G, "D": self.adam_D}

    def sample_novel(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_vanilla(self, n, rng)


Model = Union[IveGanModel, VanillaGan]


def create_model(
    arch: Architecture,
    rng: np.random.Generator,
    opt_ge: OptimizerSettings = OptimizerSettings(2e-4),
    opt_d: OptimizerSettings = OptimizerSettings(1e-4),
    opt_dprime: OptimizerSettings = OptimizerSettings(1e-4),
) -> IveGanModel:
    E = init_network(arch.encoder, rng)
    G = init_network(arch.generator, rng)
    D = init_network(arch.discriminator, rng)
    Dp = init_network(arch.novel_discriminator, rng)
    return IveGanModel(
        E, G, D, Dp, arch.z_dim, arch.zprime_dim,
        adam_GE=opt_ge.create(E.parameters() + G.parameters()),
        adam_D=opt_d.create(D.parameters()),
        adam_Dprime=opt_dprime.create(Dp.parameters()),
    )


def create_vanilla(
    arch: Architecture,
    rng: np.random.Generator,
    opt_g: OptimizerSettings = OptimizerSettings(2e-4),
    opt_d: OptimizerSettings = OptimizerSettings(1e-4),
) -> VanillaGan:
    """Same G as the IVE-GAN (fed one prior vector of the same width) and D'
    as the single discriminator."""
    G = init_network(arch.generator, rng)
    D = init_network(arch.novel_discriminator, rng)
    return VanillaGan(G, D, arch.z_dim + arch.zprime_dim, opt_g.create(G.parameters()), opt_d.create(D.parameters()))


# ---------------------------------------------------------------------------
# priors and inference

def sample_z(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, dim))


def sample_zprime(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, dim))


def _check_width(name: str, x: np.ndarray, width: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{name}: expected (batch, {width}), got {x.shape}")
    return x


def encode(model: IveGanModel, x: np.ndarray) -> np.ndarray:
    return apply(model.E, _check_width("encode", x, model.data_dim))


def generate(model: IveGanModel, zprime: np.ndarray, z: np.ndarray) -> np.ndarray:
    zprime = _check_width("generate z'", zprime, model.zprime_dim)
    z = _check_width("generate z", z, model.z_dim)
    if len(zprime) != len(z):
        raise ShapeError(f"generate: {len(zprime)} z' rows but {len(z)} z rows")
    return apply(model.G, np.concatenate([zprime, z], axis=1))


def reconstruct(
    model: IveGanModel, x: np.ndarray, rng: np.random.Generator, zprime: Optional[np.ndarray] = None
) -> np.ndarray:
    """G(z', E(x)) with z' ~ N(0, I) unless given."""
    z = encode(model, x)
    if zprime is None:
        zprime = sample_zprime(len(z), model.zprime_dim, rng)
    return generate(model, zprime, z)


def sample_novel(model: IveGanModel, n: int, rng: np.random.Generator) -> np.ndarray:
    z = sample_z(n, model.z_dim, rng)
    zprime = sample_zprime(n, model.zprime_dim, rng)
    return generate(model, zprime, z)


def sample_vanilla(model: VanillaGan, n: int, rng: np.random.Generator) -> np.ndarray:
    return apply(model.G, rng.standard_normal((n, model.latent_dim)))


class Interpolation(NamedTuple):
    weights: np.ndarray  # (steps,)
    latents: np.ndarray  # (steps, z_dim)
    points: np.ndarray  # (steps, data_dim)


def interpolate(
    model: IveGanModel,
    x_a: np.ndarray,
    x_b: np.ndarray,
    steps: int,
    rng: np.random.Generator,
    zprime: Optional[np.ndarray] = None,
) -> Interpolation:
    """Decode evenly spaced points on the segment E(x_a) -> E(x_b) with one fixed z'."""
    if steps < 2:
        raise ValueError(f"interpolation needs at least 2 steps, got {steps}")
    ends = encode(model, np.stack([np.ravel(x_a), np.ravel(x_b)]))
    w = np.linspace(0.0, 1.0, steps)
    latents = (1.0 - w)[:, None] * ends[0] + w[:, None] * ends[1]
    if zprime is None:
        zprime = sample_zprime(1, model.zprime_dim, rng)
    zprime = np.broadcast_to(np.reshape(zprime, (1, model.zprime_dim)), (steps, model.zprime_dim))
    return Interpolation(w, latents, generate(model, zprime, latents))


def sample_grid(model: IveGanModel, n_z: int, n_zprime: int, rng: np.random.Generator) -> np.ndarray:
    """(n_z, n_zprime, data_dim) samples: z fixed along a row, z' fixed along a column."""
    z = sample_z(n_z, model.z_dim, rng)
    zprime = sample_zprime(n_zprime, model.zprime_dim, rng)
    zz = np.repeat(z, n_zprime, axis=0)
    zp = np.tile(zprime, (n_z, 1))
    return generate(model, zp, zz).reshape(n_z, n_zprime, model.data_dim)


# ---------------------------------------------------------------------------
# objectives

def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def value_from_logits(
    logit_transformed: np.ndarray, logit_real: np.ndarray, logit_rec: np.ndarray, logit_novel: np.ndarray
) -> float:
    """The four-term IVE-GAN value on raw discriminator logits.

    log D = -softplus(-l) and log(1 - D) = -softplus(l).
    """
    return float(
        -_softplus(-np.asarray(logit_transformed)).mean()
        - _softplus(-np.asarray(logit_real)).mean()
        - _softplus(np.asarray(logit_rec)).mean()
        - _softplus(np.asarray(logit_novel)).mean()
    )


def vanilla_value_from_logits(logit_real: np.ndarray, logit_fake: np.ndarray) -> float:
    return float(-_softplus(-np.asarray(logit_real)).mean() - _softplus(np.asarray(logit_fake)).mean())


def neg_log_d(logits: Var) -> Var:
    """-mean log D, i.e. mean softplus(-l)."""
    return mean_all(softplus(neg(logits)))


def neg_log_one_minus_d(logits: Var) -> Var:
    """-mean log(1 - D), i.e. mean softplus(l)."""
    return mean_all(softplus(logits))


def generator_objective(fake_logits: Sequence[Var], mode: GeneratorLoss) -> Var:
    terms = [neg_log_d(l) if mode is GeneratorLoss.non_saturating else -neg_log_one_minus_d(l) for l in fake_logits]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def assemble_losses(
    logit_transformed: Var,
    logit_real: Var,
    logit_rec: Var,
    logit_novel: Var,
    generator_loss: GeneratorLoss = GeneratorLoss.non_saturating,
) -> Tuple[Var, Var, Var]:
    """(loss_D, loss_Dprime, loss_GE). loss_D + loss_Dprime is minus the value."""
    loss_d = neg_log_d(logit_transformed) + neg_log_one_minus_d(logit_rec)
    loss_dprime = neg_log_d(logit_real) + neg_log_one_minus_d(logit_novel)
    loss_ge = generator_objective([logit_rec, logit_novel], generator_loss)
    return loss_d, loss_dprime, loss_ge


def _finite_report(obj) -> None:
    bad = {f.name: getattr(obj, f.name) for f in fields(obj) if not np.isfinite(getattr(obj, f.name))}
    if bad:
        raise NonFiniteError(f"non-finite step values: {sorted(bad)}", bad)


@dataclass(frozen=True)
class StepReport:
    iteration: int
    loss_D: float
    loss_Dprime: float
    loss_GE: float
    logit_transformed: float
    logit_real: float
    logit_reconstruction: float
    logit_novel: float

    def __post_init__(self):
        _finite_report(self)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class VanillaStepReport:
    iteration: int
    loss_D: float
    loss_G: float
    logit_real: float
    logit_fake: float

    def __post_init__(self):
        _finite_report(self)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


Report = Union[StepReport, VanillaStepReport]


class IveGanLosses(NamedTuple):
    tape: Tape
    loss_D: Var
    loss_Dprime: Var
    loss_GE: Var
    report: StepReport
    nets: Dict[str, BoundNetwork]


def _mean(v: Var) -> float:
    return float(v.value.data.mean())


def ivegan_losses(
    model: IveGanModel,
    x: np.ndarray,
    rng: np.random.Generator,
    transform: TransformSpec,
    generator_loss: GeneratorLoss = GeneratorLoss.non_saturating,
    novel_term: NovelTerm = NovelTerm.prior,
    iteration: int = 0,
) -> IveGanLosses:
    """All four objective terms on one tape, from fresh T, z and z' draws."""
    x = _check_width("ivegan_losses", x, model.data_dim)
    n = len(x)
    if n == 0:
        raise ShapeError("ivegan_losses: empty batch")

    tape = Tape()
    nets = {name: bind(net, tape) for name, net in model.networks().items()}
    E, G, D, Dp = nets["E"], nets["G"], nets["D"], nets["Dprime"]

    xv = tape.constant(Tensor(x))
    tx = tape.constant(Tensor(sample_transform(transform, x, rng)))
    z_enc = E(xv)
    x_rec = G(concat(tape.constant(sample_zprime(n, model.zprime_dim, rng)), z_enc))
    if novel_term is NovelTerm.prior:
        z_novel = tape.constant(sample_z(n, model.z_dim, rng))
    else:
        z_novel = z_enc
    x_novel = G(concat(tape.constant(sample_zprime(n, model.zprime_dim, rng)), z_novel))

    l_t = D(concat(tx, xv))
    l_rec = D(concat(x_rec, xv))
    l_real = Dp(xv)
    l_novel = Dp(x_novel)
    loss_d, loss_dp, loss_ge = assemble_losses(l_t, l_real, l_rec, l_novel, generator_loss)

    report = StepReport(
        iteration=iteration,
        loss_D=loss_d.value.item(),
        loss_Dprime=loss_dp.value.item(),
        loss_GE=loss_ge.value.item(),
        logit_transformed=_mean(l_t),
        logit_real=_mean(l_real),
        logit_reconstruction=_mean(l_rec),
        logit_novel=_mean(l_novel),
    )
    return IveGanLosses(tape, loss_d, loss_dp, loss_ge, report, nets)


class VanillaLosses(NamedTuple):
    tape: Tape
    loss_D: Var
    loss_G: Var
    report: VanillaStepReport
    nets: Dict[str, BoundNetwork]


def vanilla_losses(
    model: VanillaGan,
    x: np.ndarray,
    rng: np.random.Generator,
    generator_loss: GeneratorLoss = GeneratorLoss.non_saturating,
    iteration: int = 0,
) -> VanillaLosses:
    x = _check_width("vanilla_losses", x, model.data_dim)
    if len(x) == 0:
        raise ShapeError("vanilla_losses: empty batch")
    tape = Tape()
    nets = {name: bind(net, tape) for name, net in model.networks().items()}
    l_real = nets["D"](tape.constant(Tensor(x)))
    fake = nets["G"](tape.constant(rng.standard_normal((len(x), model.latent_dim))))
    l_fake = nets["D"](fake)
    loss_d = neg_log_d(l_real) + neg_log_one_minus_d(l_fake)
    loss_g = generator_objective([l_fake], generator_loss)
    report = VanillaStepReport(
        iteration=iteration,
        loss_D=loss_d.value.item(),
        loss_G=loss_g.value.item(),
        logit_real=_mean(l_real),
        logit_fake=_mean(l_fake),
    )
    return VanillaLosses(tape, loss_d, loss_g, report, nets)


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 50_000
    batch_size: int = 1024
    seed: int = 0
    transform: Optional[TransformSpec] = None
    generator_loss: GeneratorLoss = GeneratorLoss.non_saturating
    novel_term: NovelTerm = NovelTerm.prior
    snapshot_every: int = 10_000
    snapshot_samples: int = 10_000
    checkpoint_every: int = 10_000
    log_every: int = 1_000
    opt_ge: OptimizerSettings = OptimizerSettings(2e-4)
    opt_d: OptimizerSettings = OptimizerSettings(1e-4)
    opt_dprime: OptimizerSettings = OptimizerSettings(1e-4)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.snapshot_every < 1 or self.iterations % self.snapshot_every:
            raise ValueError(f"snapshot_every {self.snapshot_every} must divide iterations {self.iterations}")


def train_step(
    model: IveGanModel,
    x: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    iteration: int = 0,
    frozen: Sequence[str] = (),
) -> Tuple[IveGanModel, StepReport]:
    """One D/D' update followed by one joint E+G update on fresh draws.

    The returned report holds the values measured before either update.
    """
    if config.transform is None:
        raise ValueError("train_step needs a transform spec")
    first = ivegan_losses(model, x, rng, config.transform, config.generator_loss, config.novel_term, iteration)

    if FREEZE_DISCRIMINATORS not in frozen:
        g_d = backward(first.tape, first.loss_D)
        g_dp = backward(first.tape, first.loss_Dprime)
        D, adam_d = adam_update(model.D, first.nets["D"].grads(g_d), model.adam_D)
        Dp, adam_dp = adam_update(model.Dprime, first.nets["Dprime"].grads(g_dp), model.adam_Dprime)
        model = replace(model, D=D, Dprime=Dp, adam_D=adam_d, adam_Dprime=adam_dp)

    if FREEZE_GENERATOR not in frozen:
        second = ivegan_losses(model, x, rng, config.transform, config.generator_loss, config.novel_term, iteration)
        g = backward(second.tape, second.loss_GE)
        grads = second.nets["E"].grads(g) + second.nets["G"].grads(g)
        n_e = len(model.E.parameters())
        params, adam_ge = adam_step(model.E.parameters() + model.G.parameters(), grads, model.adam_GE)
        model = replace(
            model,
            E=model.E.with_parameters(params[:n_e]),
            G=model.G.with_parameters(params[n_e:]),
            adam_GE=adam_ge,
        )
    return model, first.report


def vanilla_train_step(
    model: VanillaGan,
    x: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    iteration: int = 0,
    frozen: Sequence[str] = (),
) -> Tuple[VanillaGan, VanillaStepReport]:
    first = vanilla_losses(model, x, rng, config.generator_loss, iteration)
    if FREEZE_DISCRIMINATORS not in frozen:
        g = backward(first.tape, first.loss_D)
        D, adam_d = adam_update(model.D, first.nets["D"].grads(g), model.adam_D)
        model = replace(model, D=D, adam_D=adam_d)
    if FREEZE_GENERATOR not in frozen:
        second = vanilla_losses(model, x, rng, config.generator_loss, iteration)
        g = backward(second.tape, second.loss_G)
        G, adam_g = adam_update(model.G, second.nets["G"].grads(g), model.adam_G)
        model = replace(model, G=G, adam_G=adam_g)
    return model, first.report


class DataSource(Protocol):
    @property
    def data_dim(self) -> int: ...

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class Snapshot:
    iteration: int
    samples: np.ndarray


@dataclass(eq=False)
class TrainState:
    model: Model
    iteration: int
    rng: np.random.Generator
    history: List[Report] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)


class TrainResult(NamedTuple):
    model: Model
    history: List[Report]
    snapshots: List[Snapshot]


def snapshot_rng(seed: int, iteration: int) -> np.random.Generator:
    """Snapshot sampling stream, independent of the training stream."""
    return np.random.default_rng([seed, iteration])


def snapshot_schedule(config: TrainConfig) -> List[int]:
    return list(range(0, config.iterations + 1, config.snapshot_every))


def new_state(config: TrainConfig, arch: Architecture, vanilla: bool = False) -> TrainState:
    rng = np.random.default_rng(config.seed)
    if vanilla:
        model = create_vanilla(arch, rng, config.opt_ge, config.opt_d)
    else:
        model = create_model(arch, rng, config.opt_ge, config.opt_d, config.opt_dprime)
    return TrainState(model, 0, rng)


StepFn = Callable[..., Tuple[Model, Report]]
StateHook = Callable[[TrainState], None]
SnapshotHook = Callable[[Snapshot], None]


def _run(
    config: TrainConfig,
    source: DataSource,
    state: TrainState,
    step: StepFn,
    on_checkpoint: Optional[StateHook],
    on_snapshot: Optional[SnapshotHook],
) -> TrainResult:
    def snapshot() -> None:
        rng = snapshot_rng(config.seed, state.iteration)
        snap = Snapshot(state.iteration, state.model.sample_novel(config.snapshot_samples, rng))
        state.snapshots.append(snap)
        log.info("snapshot at iteration %d (%d samples)", snap.iteration, len(snap.samples))
        if on_snapshot is not None:
            on_snapshot(snap)

    if state.iteration == 0:
        snapshot()
    # generator state at the start of an uncommitted step
    pending = None
    try:
        while state.iteration < config.iterations:
            t = state.iteration + 1
            pending = (state.rng.bit_generator.state, len(state.history))
            x = source.sample(config.batch_size, state.rng)
            try:
                model, report = step(state.model, x, config, state.rng, iteration=t)
            except NonFiniteError as e:
                e.diagnostics.setdefault("iteration", t)
                raise
            state.history.append(report)
            state.model, state.iteration = model, t
            pending = None

            if config.log_every and t % config.log_every == 0:
                log.info("iteration %d: %s", t, _format_report(report))
            if t % config.snapshot_every == 0:
                snapshot()
            if on_checkpoint is not None and config.checkpoint_every and t % config.checkpoint_every == 0:
                on_checkpoint(state)
    except KeyboardInterrupt:
        if pending is not None:
            state.rng.bit_generator.state, committed = pending
            del state.history[committed:]
        log.warning("interrupted at iteration %d", state.iteration)
        if on_checkpoint is not None:
            on_checkpoint(state)
        raise
    return TrainResult(state.model, state.history, state.snapshots)


def _format_report(report: Report) -> str:
    return " ".join(f"{k}={v:.4f}" for k, v in report.to_dict().items() if k != "iteration")


def train(
    config: TrainConfig,
    source: DataSource,
    arch: Architecture,
    state: Optional[TrainState] = None,
    on_checkpoint: Optional[StateHook] = None,
    on_snapshot: Optional[SnapshotHook] = None,
) -> TrainResult:
    """Run IVE-GAN training to ``config.iterations``, resuming from ``state`` if given."""
    if state is None:
        state = new_state(config, arch)
    if not isinstance(state.model, IveGanModel):
        raise TypeError("train() needs an IveGanModel state; use train_vanilla() for the baseline")
    return _run(config, source, state, train_step, on_checkpoint, on_snapshot)


def train_vanilla(
    config: TrainConfig,
    source: DataSource,
    arch: Architecture,
    state: Optional[TrainState] = None,
    on_checkpoint: Optional[StateHook] = None,
    on_snapshot: Optional[SnapshotHook] = None,
) -> TrainResult:
    """Classical GAN on the same data and networks, same snapshot protocol."""
    if state is None:
        state = new_state(config, arch, vanilla=True)
    if not isinstance(state.model, VanillaGan):
        raise TypeError("train_vanilla() needs a VanillaGan state")
    return _run(config, source, state, vanilla_train_step, on_checkpoint, on_snapshot)
