"""Command-line interface.

Subcommands: ``make-dataset``, ``train``, ``sample``, ``interp-z``,
``interp-text``, ``evaluate``, ``embed``. Every command is deterministic in
(flags, config file, filesystem inputs, seed): repeated invocations produce
byte-identical outputs. Configuration priority is flags > ``TACGAN_*``
environment variables > config file > defaults. Exit codes: 0 success, 2
usage/configuration/data problems, 3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import TrainingState, load_checkpoint, save_checkpoint
from .config import (
    RunConfig,
    build_run_config,
    env_overrides,
    read_config_file,
)
from .dataset import SyntheticSpec, generate_synthetic_dataset, load_dataset
from .errors import ConfigError, DataError, NumericalError, TacganError
from .grids import ImageGrid, save_grid
from .network import init_params
from .optim import init_optimizer
from .pipeline import evaluate_checkpoint, write_eval_outputs
from .sampling import (
    draw_noise,
    interp_grid,
    interpolate_noise,
    interpolate_text_row,
    noise_stream,
    sample_images,
)
from .text import make_encoder
from .training import run_training, steps_for_run

INIT_LANE = 9001  # rng lane for weight initialization


def _run_config_from_args(args, require_dataset: bool = True) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flag_values = {}
    for key in (
        "n_classes",
        "resolution",
        "text_dim",
        "text_latent_dim",
        "noise_dim",
        "gen_base_maps",
        "disc_base_maps",
        "aux_dim",
        "dataset_root",
        "encoder",
        "encoder_seed",
        "seed",
        "batch_size",
        "epochs",
        "steps",
        "checkpoint_every",
        "checkpoint_dir",
        "log_path",
    ):
        value = getattr(args, key, None)
        if value is not None:
            flag_values[key] = str(value)
    run = build_run_config(file_values, env_overrides(), flag_values)
    if require_dataset:
        if not run.dataset_root:
            raise ConfigError("no dataset_root configured (flag --dataset or config file)")
        if not os.path.isdir(run.dataset_root):
            raise ConfigError(f"dataset_root does not exist: {run.dataset_root}")
    return run


def _load_state_and_encoder(checkpoint_path: str):
    state = load_checkpoint(checkpoint_path)
    run = state.run
    encoder = make_encoder(run.encoder, run.model.text_dim, run.encoder_seed)
    return state, encoder


def _read_captions(path: str) -> list[str]:
    if not os.path.exists(path):
        raise DataError(f"captions file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        captions = [line.rstrip("\n") for line in fh]
    captions = [c for c in captions if c.strip()]
    if not captions:
        raise DataError(f"captions file has no captions: {path}")
    return captions


def cmd_make_dataset(args) -> int:
    spec = SyntheticSpec(
        shapes=tuple(args.shapes.split(",")),
        colors=tuple(args.colors.split(",")),
        per_class=args.per_class,
        resolution=args.resolution,
        seed=args.seed,
    )
    summary = generate_synthetic_dataset(spec, args.out)
    print(
        f"wrote {summary['n_images']} images across {summary['n_classes']} "
        f"classes at {summary['resolution']}x{summary['resolution']} to {summary['root']}"
    )
    return 0


def cmd_train(args) -> int:
    if args.resume:
        state = load_checkpoint(args.resume)
        run = state.run
        if args.steps is not None:
            from .config import with_overrides

            run = with_overrides(run, steps=args.steps)
            state = TrainingState(
                params=state.params, opt_d=state.opt_d, opt_g=state.opt_g,
                run=run, step=state.step,
            )
    else:
        run = _run_config_from_args(args)
        from .config import with_overrides

        if args.out:
            run = with_overrides(run, checkpoint_dir=args.out)
        if run.log_path == "loss_log.tsv":
            # Default log location follows the checkpoint directory.
            run = with_overrides(
                run, log_path=os.path.join(run.checkpoint_dir, "loss_log.tsv")
            )
        state = None

    if state is None:
        dataset = load_dataset(run.dataset_root, run.model.resolution)
        if dataset.n_classes != run.model.n_classes:
            raise ConfigError(
                f"config n_classes={run.model.n_classes} but dataset has "
                f"{dataset.n_classes} classes"
            )
        encoder = make_encoder(run.encoder, run.model.text_dim, run.encoder_seed)
        params = init_params(run.model, np.random.default_rng([run.seed, INIT_LANE]))
        opt = dict(
            learning_rate=args.learning_rate if args.learning_rate is not None else 0.0002
        )
        state = TrainingState(
            params=params,
            opt_d=init_optimizer(params.d, **opt),
            opt_g=init_optimizer(params.g, **opt),
            run=run,
            step=0,
        )
    else:
        dataset = load_dataset(state.run.dataset_root, state.run.model.resolution)
        encoder = make_encoder(
            state.run.encoder, state.run.model.text_dim, state.run.encoder_seed
        )

    run = state.run
    os.makedirs(run.checkpoint_dir, exist_ok=True)
    target = steps_for_run(run, len(dataset))

    def report(step, breakdown):
        if step % 100 == 0 or step == target:
            print(
                f"step {step}/{target}  L_DS={breakdown.d_source:.4f} "
                f"L_DC={breakdown.d_class:.4f} L_GS={breakdown.g_source:.4f} "
                f"L_GC={breakdown.g_class:.4f}",
                flush=True,
            )

    final = run_training(state, dataset, encoder, total_steps=target, on_step=report)
    final_path = os.path.join(run.checkpoint_dir, "final.ckpt")
    save_checkpoint(final_path, final)
    if run.log_path and os.path.exists(run.log_path):
        from .figures import maybe_render, render_loss_curves

        maybe_render(
            render_loss_curves,
            run.log_path,
            os.path.join(run.checkpoint_dir, "loss_curves.png"),
        )
    print(f"finished at step {final.step}; final checkpoint: {final_path}")
    return 0


def cmd_sample(args) -> int:
    state, encoder = _load_state_and_encoder(args.checkpoint)
    cfg = state.run.model
    captions = _read_captions(args.captions)
    real_lookup = {}
    if args.real_from:
        dataset = load_dataset(args.real_from, cfg.resolution)
        for inst in dataset.instances:
            for caption in inst.captions:
                real_lookup.setdefault(caption, inst.image)

    extra = 1 if real_lookup else 0
    grid = ImageGrid(rows=len(captions), cols=args.n + extra)
    for row, caption in enumerate(captions):
        emb = encoder.embed(caption)
        z = draw_noise(noise_stream(args.seed, row), args.n, cfg.noise_dim)
        images = sample_images(state.params, cfg, emb, z)
        col0 = 0
        if real_lookup:
            if caption in real_lookup:
                grid.add(row, 0, real_lookup[caption], kind="real", caption=caption)
            col0 = 1
        for j in range(args.n):
            grid.add(
                row,
                col0 + j,
                images[j],
                caption=caption,
                detail=f"z=stream({args.seed},{row})[{j}]",
            )
    sidecar = save_grid(args.out, grid)
    print(f"wrote {args.out} and {sidecar}")
    return 0


def cmd_interp_z(args) -> int:
    state, encoder = _load_state_and_encoder(args.checkpoint)
    cfg = state.run.model
    emb = encoder.embed(args.caption)
    z1 = draw_noise(noise_stream(args.z_seed_a, 0), 1, cfg.noise_dim)[0]
    z2 = draw_noise(noise_stream(args.z_seed_b, 0), 1, cfg.noise_dim)[0]
    alphas = interp_grid(args.steps)
    zs = interpolate_noise(z1, z2, alphas)
    images = sample_images(state.params, cfg, emb, zs)
    grid = ImageGrid(rows=1, cols=args.steps)
    for j, (alpha, img) in enumerate(zip(alphas, images)):
        grid.add(
            0, j, img, caption=args.caption,
            detail=f"alpha={alpha:.6f};z_seeds=({args.z_seed_a},{args.z_seed_b})",
        )
    sidecar = save_grid(args.out, grid)
    print(f"wrote {args.out} and {sidecar}")
    return 0


def cmd_interp_text(args) -> int:
    state, encoder = _load_state_and_encoder(args.checkpoint)
    cfg = state.run.model
    emb_a = encoder.embed(args.caption_a)
    emb_b = encoder.embed(args.caption_b)
    z = draw_noise(noise_stream(args.z_seed, 0), 1, cfg.noise_dim)[0]
    alphas = interp_grid(args.steps)
    images = interpolate_text_row(state.params, cfg, emb_a, emb_b, z, alphas)
    grid = ImageGrid(rows=1, cols=args.steps)
    for j, (alpha, img) in enumerate(zip(alphas, images)):
        grid.add(
            0, j, img,
            caption=f"{args.caption_a} -> {args.caption_b}",
            detail=f"alpha={alpha:.6f};z_seed={args.z_seed}",
        )
    sidecar = save_grid(args.out, grid)
    print(f"wrote {args.out} and {sidecar}")
    return 0


def cmd_evaluate(args) -> int:
    state, encoder = _load_state_and_encoder(args.checkpoint)
    root = args.dataset or state.run.dataset_root
    if not root or not os.path.isdir(root):
        raise ConfigError(f"dataset root not found: {root!r}")
    dataset = load_dataset(root, state.run.model.resolution)
    report, accuracy, probe = evaluate_checkpoint(
        state,
        dataset,
        encoder,
        n_per_class=args.n,
        seed=args.seed,
        probe_steps=args.probe_steps,
        pairs_per_class=args.pairs_per_class,
        n_splits=args.splits,
    )
    paths = write_eval_outputs(report, accuracy, probe, args.out)
    print(
        f"generated diversity {report.generated_diversity.overall_mean:.4f} "
        f"± {report.generated_diversity.overall_std:.4f}; "
        f"score {report.score_mean:.4f} ± {report.score_std:.4f}; "
        f"probe held-out accuracy {probe.held_out_accuracy:.3f}"
    )
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def cmd_embed(args) -> int:
    if args.checkpoint:
        _, encoder = _load_state_and_encoder(args.checkpoint)
    else:
        file_values = read_config_file(args.config) if args.config else {}
        flag_values = {}
        if args.text_dim is not None:
            flag_values["text_dim"] = str(args.text_dim)
        if args.encoder is not None:
            flag_values["encoder"] = args.encoder
        if args.encoder_seed is not None:
            flag_values["encoder_seed"] = str(args.encoder_seed)
        merged = {"n_classes": "2"}
        merged.update(file_values)
        run = build_run_config(merged, env_overrides(), flag_values)
        encoder = make_encoder(run.encoder, run.model.text_dim, run.encoder_seed)
    emb = encoder.embed(args.caption)
    line = ",".join(repr(float(v)) for v in emb.vector)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"{args.caption}\t{line}\n")
        print(f"wrote {args.out}")
    else:
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tacgan",
        description="Text-conditioned auxiliary-classifier GAN toolkit",
    )
    parser.add_argument("--version", action="version", version=f"tacgan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="emit a synthetic shape dataset")
    p.add_argument("--shapes", default="circle,square,triangle,cross")
    p.add_argument("--colors", default="red,green,blue,yellow")
    p.add_argument("--per-class", dest="per_class", type=int, default=16)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="train on a manifest dataset")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--dataset", dest="dataset_root")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--n-classes", dest="n_classes", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--text-dim", dest="text_dim", type=int)
    p.add_argument("--text-latent-dim", dest="text_latent_dim", type=int)
    p.add_argument("--noise-dim", dest="noise_dim", type=int)
    p.add_argument("--gen-base-maps", dest="gen_base_maps", type=int)
    p.add_argument("--disc-base-maps", dest="disc_base_maps", type=int)
    p.add_argument("--aux-dim", dest="aux_dim", type=int)
    p.add_argument("--encoder")
    p.add_argument("--encoder-seed", dest="encoder_seed", type=int)
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--log", dest="log_path")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", help="alias for --checkpoint-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="synthesize images for captions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--captions", required=True, help="text file, one caption per line")
    p.add_argument("-n", type=int, default=4, help="images per caption")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--real-from", dest="real_from", help="dataset root for ground-truth panels")
    p.add_argument("--out", default="samples.png")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("interp-z", help="interpolate between two noise draws")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--caption", required=True)
    p.add_argument("--z-seed-a", dest="z_seed_a", type=int, required=True)
    p.add_argument("--z-seed-b", dest="z_seed_b", type=int, required=True)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--out", default="interp_z.png")
    p.set_defaults(func=cmd_interp_z)

    p = sub.add_parser("interp-text", help="interpolate between two captions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--caption-a", dest="caption_a", required=True)
    p.add_argument("--caption-b", dest="caption_b", required=True)
    p.add_argument("--z-seed", dest="z_seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--out", default="interp_text.png")
    p.set_defaults(func=cmd_interp_text)

    p = sub.add_parser("evaluate", help="diversity + discriminability report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", help="dataset root (defaults to the checkpoint's)")
    p.add_argument("-n", type=int, default=16, help="generated images per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probe-steps", dest="probe_steps", type=int, default=800)
    p.add_argument("--pairs-per-class", dest="pairs_per_class", type=int, default=200)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--out", default="eval_report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed", help="dump the embedding vector of a caption")
    p.add_argument("--caption", required=True)
    p.add_argument("--checkpoint", help="derive encoder from a checkpoint")
    p.add_argument("--config")
    p.add_argument("--encoder")
    p.add_argument("--encoder-seed", dest="encoder_seed", type=int)
    p.add_argument("--text-dim", dest="text_dim", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (TacganError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
