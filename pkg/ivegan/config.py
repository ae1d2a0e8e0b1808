"""Run configuration: an omegaconf structured schema loaded from YAML.

Unknown keys and wrongly typed values are rejected by omegaconf when the
file is merged onto the schema; ``validate`` then checks the cross-field
rules. Nothing here touches the output directory.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import yaml
from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from .data import RingSpec
from .errors import ConfigError
from .metrics import MIN_COVERAGE_SAMPLES
from .model import (
    Architecture,
    GeneratorLoss,
    NovelTerm,
    OptimizerSettings,
    TrainConfig,
    mnist_lite_architecture,
    ring_architecture,
)
from .transforms import GaussianShift, ImageAffine, TransformSpec

# keys that may change between a checkpoint and the run resuming from it
RESUMABLE_KEYS = ("output_dir", "train.iterations", "train.checkpoint_every", "train.log_every")


class Experiment(enum.Enum):
    ring = "ring"
    mnist_lite = "mnist_lite"


class Method(enum.Enum):
    ivegan = "ivegan"
    vanilla = "vanilla"


@dataclass
class OptimizerConfig:
    lr: float = 2e-4
    beta1: float = 0.7
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ModelConfig:
    z_dim: int = 2
    zprime_dim: int = 4
    hidden: List[int] = field(default_factory=lambda: [128])
    disc_hidden: List[int] = field(default_factory=lambda: [256, 64])
    lrelu_slope: float = 0.2


@dataclass
class TrainSettings:
    iterations: int = 50_000
    batch_size: int = 1024
    seed: int = 0
    generator_loss: GeneratorLoss = GeneratorLoss.non_saturating
    novel_term: NovelTerm = NovelTerm.prior
    snapshot_every: int = 10_000
    snapshot_samples: int = 10_000
    checkpoint_every: int = 10_000
    log_every: int = 1_000
    opt_ge: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(lr=2e-4))
    opt_d: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(lr=1e-4))
    opt_dprime: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(lr=1e-4))


@dataclass
class RingConfig:
    n_modes: int = 8
    radius: float = 0.9
    sigma: float = 0.01
    seed: int = 0


@dataclass
class MnistConfig:
    images: str = "data/train-images-idx3-ubyte"
    labels: str = "data/train-labels-idx1-ubyte"
    limit: int = 10_000
    downscale: int = 2
    max_shift_px: int = 2
    max_rot_deg: float = 20.0
    eval_samples: int = 2_000
    knn_k: int = 5


@dataclass
class RunConfig:
    experiment: Experiment = Experiment.ring
    method: Method = Method.ivegan
    output_dir: str = "runs/ring"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    ring: RingConfig = field(default_factory=RingConfig)
    mnist: MnistConfig = field(default_factory=MnistConfig)


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        merged = OmegaConf.merge(OmegaConf.structured(RunConfig), OmegaConf.load(path))
        cfg = OmegaConf.to_object(merged)
    except (OmegaConfBaseException, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: {e}") from None
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    errors = []
    m, t = cfg.model, cfg.train
    if m.z_dim < 1 or m.zprime_dim < 1:
        errors.append(f"latent dims must be >= 1, got z_dim={m.z_dim} zprime_dim={m.zprime_dim}")
    if not m.hidden or any(h < 1 for h in m.hidden) or any(h < 1 for h in m.disc_hidden):
        errors.append("hidden layer widths must be >= 1")
    if cfg.experiment is Experiment.ring and len(m.hidden) != 1:
        errors.append(f"ring networks take exactly one hidden width, got {list(m.hidden)}")
    if cfg.experiment is Experiment.mnist_lite and not m.disc_hidden:
        errors.append("mnist_lite discriminators need at least one hidden width")
    if not 0.0 < m.lrelu_slope < 1.0:
        errors.append(f"lrelu_slope must lie in (0, 1), got {m.lrelu_slope}")
    if t.iterations < 1:
        errors.append(f"train.iterations must be >= 1, got {t.iterations}")
    if t.batch_size < 2:
        errors.append(f"train.batch_size must be >= 2, got {t.batch_size}")
    if t.snapshot_every < 1 or (t.iterations >= 1 and t.iterations % t.snapshot_every):
        errors.append(f"train.snapshot_every ({t.snapshot_every}) must divide train.iterations ({t.iterations})")
    if t.snapshot_samples < 0 or t.checkpoint_every < 0 or t.log_every < 0:
        errors.append("snapshot_samples, checkpoint_every and log_every must be >= 0")
    for name in ("opt_ge", "opt_d", "opt_dprime"):
        o = getattr(t, name)
        if not o.lr > 0 or not 0.0 <= o.beta1 < 1.0 or not 0.0 <= o.beta2 < 1.0 or not o.eps > 0:
            errors.append(f"train.{name}: need lr > 0, betas in [0, 1), eps > 0")
    if cfg.ring.n_modes < 1 or not cfg.ring.radius > 0 or not cfg.ring.sigma > 0:
        errors.append("ring: n_modes >= 1, radius > 0 and sigma > 0 are required")
    if cfg.experiment is Experiment.ring and t.snapshot_samples < MIN_COVERAGE_SAMPLES:
        errors.append(
            f"ring runs score coverage on snapshots; snapshot_samples must be >= {MIN_COVERAGE_SAMPLES}, "
            f"got {t.snapshot_samples}"
        )
    if cfg.method is Method.vanilla and cfg.experiment is not Experiment.ring:
        errors.append("the vanilla baseline has no encoder and only runs the ring experiment")
    if cfg.experiment is Experiment.mnist_lite:
        mn = cfg.mnist
        if mn.limit < 1 or mn.downscale < 1 or mn.max_shift_px < 0 or not 0 <= mn.max_rot_deg <= 45:
            errors.append("mnist: limit >= 1, downscale >= 1, max_shift_px >= 0, max_rot_deg in [0, 45]")
        if mn.knn_k < 1 or mn.eval_samples <= mn.knn_k:
            errors.append("mnist: need 1 <= knn_k < eval_samples")
    if errors:
        raise ConfigError("; ".join(errors))


def ring_spec(cfg: RunConfig) -> RingSpec:
    r = cfg.ring
    return RingSpec(r.n_modes, r.radius, r.sigma, r.seed)


def _opt(o: OptimizerConfig) -> OptimizerSettings:
    return OptimizerSettings(o.lr, o.beta1, o.beta2, o.eps)


def transform_for(cfg: RunConfig, image_shape: Optional[Tuple[int, int]] = None) -> TransformSpec:
    if cfg.experiment is Experiment.ring:
        return GaussianShift(ring_spec(cfg).covariance)
    if image_shape is None:
        raise ConfigError("image transforms need the dataset's image shape")
    h, w = image_shape
    try:
        return ImageAffine(cfg.mnist.max_shift_px, cfg.mnist.max_rot_deg, h, w)
    except ValueError as e:
        raise ConfigError(f"mnist transform: {e}") from None


def train_config(cfg: RunConfig, image_shape: Optional[Tuple[int, int]] = None) -> TrainConfig:
    t = cfg.train
    try:
        return TrainConfig(
            iterations=t.iterations,
            batch_size=t.batch_size,
            seed=t.seed,
            transform=transform_for(cfg, image_shape),
            generator_loss=t.generator_loss,
            novel_term=t.novel_term,
            snapshot_every=t.snapshot_every,
            snapshot_samples=t.snapshot_samples,
            checkpoint_every=t.checkpoint_every,
            log_every=t.log_every,
            opt_ge=_opt(t.opt_ge),
            opt_d=_opt(t.opt_d),
            opt_dprime=_opt(t.opt_dprime),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None


def architecture(cfg: RunConfig, data_dim: int) -> Architecture:
    m = cfg.model
    if cfg.experiment is Experiment.ring:
        return ring_architecture(m.z_dim, m.zprime_dim, m.hidden[0], data_dim)
    return mnist_lite_architecture(m.z_dim, m.zprime_dim, m.hidden, m.disc_hidden, data_dim, m.lrelu_slope)


def to_yaml(cfg: RunConfig) -> str:
    return OmegaConf.to_yaml(OmegaConf.structured(cfg))


def config_hash(cfg: RunConfig) -> str:
    """sha256 over everything that must match for a run to be resumed."""
    data = OmegaConf.to_container(OmegaConf.structured(cfg), enum_to_str=True)
    for key in RESUMABLE_KEYS:
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node[p]
        node.pop(leaf, None)
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
