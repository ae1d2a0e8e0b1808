"""ivegan command line: train, sample, encode, reconstruct, eval, plot,
sheet, grid.

Usage:
    ivegan train --config configs/ring.yaml [--resume runs/ring/checkpoints/latest.json]
    ivegan sample --ckpt CKPT --n 10000 --seed 0 --out samples.csv
    ivegan plot --in samples.csv --out density.pgm --bins 64
    ivegan eval --ckpt CKPT --config configs/ring.yaml --out report.json

Exit codes: 0 ok, 2 bad config / input / checkpoint, 3 I/O failure,
4 non-finite values during training, 130 interrupted (checkpoint saved).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .artifacts import (
    check_width,
    density_to_pixels,
    read_samples,
    tile_images,
    write_history,
    write_json,
    write_pgm,
    write_samples,
)
from .checkpoint import KIND_IVEGAN, KIND_VANILLA, Checkpoint, check_resumable, load_checkpoint, save_checkpoint
from .config import (
    Experiment,
    Method,
    RunConfig,
    architecture,
    config_hash,
    load_config,
    ring_spec,
    to_yaml,
    train_config,
    transform_for,
)
from .data import ImageSource, RingSource, mnist_lite
from .errors import CheckpointError, ConfigError, IdxFormatError, NonFiniteError, SampleFormatError, ShapeError
from .log import setup_logging
from .metrics import CoverageReport, RepresentationReport, coverage, density_grid, representation_report
from .model import (
    IveGanModel,
    Model,
    Snapshot,
    TrainState,
    encode,
    new_state,
    reconstruct,
    sample_grid,
    snapshot_rng,
    train,
    train_vanilla,
)
from .transforms import sample_transform

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_NON_FINITE = 4
EXIT_INTERRUPTED = 130

Report = Union[CoverageReport, RepresentationReport]


def _iter_name(iteration: int, suffix: str) -> str:
    return f"iter_{iteration:07d}.{suffix}"


def _load_images(cfg: RunConfig) -> ImageSource:
    mn = cfg.mnist
    return ImageSource.from_labeled(mnist_lite(mn.images, mn.labels, limit=mn.limit, factor=mn.downscale))


def _build_source(cfg: RunConfig) -> Tuple[Union[RingSource, ImageSource], Optional[Tuple[int, int]]]:
    if cfg.experiment is Experiment.ring:
        return RingSource(ring_spec(cfg)), None
    source = _load_images(cfg)
    return source, source.shape


def _ivegan_only(ckpt: Checkpoint, what: str) -> IveGanModel:
    if not isinstance(ckpt.model, IveGanModel):
        raise CheckpointError(f"{what} needs an encoder; the checkpoint holds a {ckpt.kind} model")
    return ckpt.model


def evaluate(cfg: RunConfig, model: Model, rng: np.random.Generator, images: Optional[ImageSource] = None) -> Report:
    """Coverage of fresh novel samples (ring) or latent clustering and
    reconstruction fidelity on the first eval_samples images (mnist_lite)."""
    if cfg.experiment is Experiment.ring:
        samples = model.sample_novel(cfg.train.snapshot_samples, rng)
        return coverage(samples, ring_spec(cfg), rng=rng)
    if not isinstance(model, IveGanModel):
        raise ConfigError("representation reports need an IVE-GAN model")
    if images is None:
        images = _load_images(cfg)
    n = min(cfg.mnist.eval_samples, len(images.images))
    return representation_report(model, images.images[:n], images.labels[:n], rng, k=cfg.mnist.knn_k)


def _emit_report(report: Report, json_path: Path, text_path: Optional[Path] = None) -> None:
    write_json(json_path, report.to_dict())
    summary = report.summary()
    if text_path is not None:
        text_path.write_text(summary + "\n", encoding="utf-8")
    print(summary)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    resume = load_checkpoint(args.resume) if args.resume else None
    vanilla = cfg.method is Method.vanilla
    kind = KIND_VANILLA if vanilla else KIND_IVEGAN
    digest = config_hash(cfg)
    if resume is not None:
        check_resumable(resume, kind, cfg.experiment.value, digest)
        if resume.iteration > cfg.train.iterations:
            raise ConfigError(
                f"checkpoint is at iteration {resume.iteration}, past train.iterations={cfg.train.iterations}"
            )

    source, image_shape = _build_source(cfg)
    tcfg = train_config(cfg, image_shape)
    arch = architecture(cfg, source.data_dim)
    state = resume.state() if resume is not None else new_state(tcfg, arch, vanilla=vanilla)

    out = Path(cfg.output_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(to_yaml(cfg), encoding="utf-8")

    def on_snapshot(snap: Snapshot) -> None:
        write_samples(out / "snapshots" / _iter_name(snap.iteration, "csv"), snap.samples, width=source.data_dim)

    def on_checkpoint(st: TrainState) -> None:
        ckpt = Checkpoint(st.model, st.iteration, st.rng, cfg.experiment.value, digest, st.history, image_shape)
        save_checkpoint(ckpt, out / "checkpoints" / _iter_name(st.iteration, "json"))
        save_checkpoint(ckpt, out / "checkpoints" / "latest.json")
        write_history(out / "history.csv", st.history)
        log.info("checkpoint at iteration %d", st.iteration)

    log.info(
        "training %s on %s: %d iterations from %d, output in %s",
        kind, cfg.experiment.value, tcfg.iterations, state.iteration, out,
    )
    runner = train_vanilla if vanilla else train
    try:
        runner(tcfg, source, arch, state, on_checkpoint=on_checkpoint, on_snapshot=on_snapshot)
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED
    on_checkpoint(state)

    rng = snapshot_rng(tcfg.seed, state.iteration)
    images = source if isinstance(source, ImageSource) else None
    report = evaluate(cfg, state.model, rng, images)
    _emit_report(report, out / "report.json", out / "report.txt")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    if args.n < 0:
        raise ConfigError(f"--n must be >= 0, got {args.n}")
    ckpt = load_checkpoint(args.ckpt)
    samples = ckpt.model.sample_novel(args.n, np.random.default_rng(args.seed))
    write_samples(args.out, samples, width=ckpt.model.data_dim)
    return EXIT_OK


def cmd_encode(args: argparse.Namespace) -> int:
    model = _ivegan_only(load_checkpoint(args.ckpt), "encode")
    rows = check_width(args.input, read_samples(args.input), model.data_dim)
    write_samples(args.out, encode(model, rows), prefix="z", width=model.z_dim)
    return EXIT_OK


def cmd_reconstruct(args: argparse.Namespace) -> int:
    model = _ivegan_only(load_checkpoint(args.ckpt), "reconstruct")
    rows = check_width(args.input, read_samples(args.input), model.data_dim)
    write_samples(args.out, reconstruct(model, rows, np.random.default_rng(args.seed)), width=model.data_dim)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    ckpt = load_checkpoint(args.ckpt)
    if ckpt.experiment != cfg.experiment.value:
        raise ConfigError(f"checkpoint is from the {ckpt.experiment} experiment, config is {cfg.experiment.value}")
    seed = cfg.train.seed if args.seed is None else args.seed
    report = evaluate(cfg, ckpt.model, np.random.default_rng(seed))
    _emit_report(report, Path(args.out))
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    rows = read_samples(args.input)
    if rows.size and rows.shape[1] != 2:
        raise SampleFormatError(f"{args.input}: density plots need 2 columns, got {rows.shape[1]}")
    grid = density_grid(rows, bins=args.bins)
    if grid.dropped:
        log.info("%d of %d samples fall outside the plot range", grid.dropped, len(rows))
    write_pgm(args.out, density_to_pixels(grid.counts))
    return EXIT_OK


def cmd_sheet(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if cfg.experiment is not Experiment.mnist_lite:
        raise ConfigError("sheet renders image experiments only")
    model = _ivegan_only(load_checkpoint(args.ckpt), "sheet")
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    images = _load_images(cfg)
    if images.data_dim != model.data_dim:
        raise CheckpointError(f"checkpoint models {model.data_dim}-d data, dataset images are {images.data_dim}-d")
    h, w = images.shape
    x = images.images[: args.n]
    rng = np.random.default_rng(args.seed)
    tx = sample_transform(transform_for(cfg, images.shape), x, rng)
    rec = reconstruct(model, x, rng)
    rows = [a.reshape(-1, h, w) for a in (x, tx, rec)]
    write_pgm(args.out, tile_images(rows))
    return EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = _ivegan_only(ckpt, "grid")
    if args.nz < 1 or args.nzprime < 1:
        raise ConfigError(f"--nz and --nzprime must be >= 1, got {args.nz} and {args.nzprime}")
    grid = sample_grid(model, args.nz, args.nzprime, np.random.default_rng(args.seed))
    if ckpt.image_shape is None:
        write_samples(args.out, grid.reshape(-1, model.data_dim), width=model.data_dim)
    else:
        h, w = ckpt.image_shape
        write_pgm(args.out, tile_images([row.reshape(-1, h, w) for row in grid]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ivegan", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train per a YAML config")
    s.add_argument("--config", required=True)
    s.add_argument("--resume", help="checkpoint JSON to continue from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw novel samples to CSV")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--n", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("encode", help="map data rows to latent codes E(x)")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("reconstruct", help="G(z', E(x)) for each data row")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("eval", help="coverage or representation report for a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, help="defaults to train.seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("plot", help="2-D sample CSV to a density PGM")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--bins", type=int, default=64)
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("sheet", help="originals / T(x) / reconstructions as a PGM")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sheet)

    s = sub.add_parser("grid", help="samples with z fixed per row and z' fixed per column")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--nz", type=int, default=8)
    s.add_argument("--nzprime", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_grid)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        return args.func(args)
    except NonFiniteError as e:
        log.error("%s", e)
        for key, value in sorted(e.diagnostics.items()):
            log.error("  %s: %s", key, value)
        return EXIT_NON_FINITE
    except (IdxFormatError, OSError) as e:
        log.error("%s", e)
        return EXIT_IO
    except (ConfigError, SampleFormatError, CheckpointError, ShapeError) as e:
        log.error("%s", e)
        return EXIT_INVALID
    except KeyboardInterrupt:
        log.warning("interrupted")
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
