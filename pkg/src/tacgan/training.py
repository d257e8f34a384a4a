"""Alternating adversarial training.

Each step performs one discriminator update (real/fake/wrong batches, source
plus class losses, gradients stopped at the generated image) followed by one
generator update with freshly drawn noise and a fresh forward pass. Batch
sampling and noise draws run on streams derived from (run seed, step index),
so an interrupted run resumed from a checkpoint replays the exact remaining
steps.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import losses as LS
from .checkpoint import TrainingState, save_checkpoint
from .config import RunConfig
from .dataset import Dataset, TrainingTriplet, sample_triplet
from .errors import NumericalError
from .losses import AuxiliaryTarget, LossBreakdown
from .network import (
    NetworkParams,
    _disc_apply,
    _disc_backward,
    _gen_apply,
    _gen_backward,
    apply_stat_updates,
    bn_stat_updates,
)
from .optim import OptimizerState, adam_update

LOG_HEADER = "step\tL_DS\tL_DC\tL_GS\tL_GC"


@dataclass(frozen=True)
class TripletBatch:
    """Stacked triplets plus the embeddings of their captions."""

    real_images: np.ndarray  # (B, R, R, 3)
    wrong_images: np.ndarray
    embeddings: np.ndarray  # (B, text_dim)
    real_classes: np.ndarray  # (B, n_classes) one-hot
    wrong_classes: np.ndarray
    captions: tuple[str, ...]

    def __len__(self) -> int:
        return self.real_images.shape[0]


def collate_triplets(
    triplets: Sequence[TrainingTriplet], encoder, dtype=np.float32
) -> TripletBatch:
    return TripletBatch(
        real_images=np.stack([t.real_image for t in triplets]).astype(dtype),
        wrong_images=np.stack([t.wrong_image for t in triplets]).astype(dtype),
        embeddings=np.stack(
            [encoder.embed(t.caption).vector for t in triplets]
        ).astype(dtype),
        real_classes=np.stack([t.real_class for t in triplets]).astype(dtype),
        wrong_classes=np.stack([t.wrong_class for t in triplets]).astype(dtype),
        captions=tuple(t.caption for t in triplets),
    )


def sample_batch(
    dataset: Dataset, batch_size: int, encoder, rng: np.random.Generator, dtype=np.float32
) -> TripletBatch:
    return collate_triplets(
        [sample_triplet(dataset, rng) for _ in range(batch_size)], encoder, dtype
    )


def _check_finite(**terms: float):
    for name, value in terms.items():
        if not math.isfinite(value):
            raise NumericalError(f"non-finite loss term {name}: {value}")


def d_step_grads(params: NetworkParams, cfg, batch: TripletBatch, z, aux=None):
    """Discriminator gradients and losses for one batch.

    The generated batch comes from a train-mode generator pass, but no
    gradient flows back into it and the generator statistics stay untouched.
    """
    b = len(batch)
    fake, _ = _gen_apply(params.g, params.g_stats, cfg, batch.embeddings, z, train=True)

    out_r, cache_r = _disc_apply(params.d, params.d_stats, cfg, batch.real_images, batch.embeddings, True)
    out_f, cache_f = _disc_apply(params.d, params.d_stats, cfg, fake, batch.embeddings, True)
    out_w, cache_w = _disc_apply(params.d, params.d_stats, cfg, batch.wrong_images, batch.embeddings, True)

    d_source = LS.loss_d_source(out_r, out_f, out_w)
    d_class = LS.loss_d_class(out_r, out_f, out_w, batch.real_classes, batch.wrong_classes)
    d_aux = None
    if aux is not None:
        d_aux, _ = LS.loss_aux(aux, out_r.aux_probs, out_f.aux_probs, out_w.aux_probs)

    grads_total: dict[str, np.ndarray] = {}
    stat_updates: dict[str, np.ndarray] = {}
    for out, cache, src_t, cls_t, q_t in (
        (out_r, cache_r, 1.0, batch.real_classes, None if aux is None else aux.q_real),
        (out_f, cache_f, 0.0, batch.real_classes, None if aux is None else aux.q_real),
        (out_w, cache_w, 0.0, batch.wrong_classes, None if aux is None else aux.q_wrong),
    ):
        dsrc = LS.bce_grad_elements(out.source_prob, src_t) / b
        dcls = LS.bce_grad_elements(out.class_probs, cls_t) / b
        daux = None
        if q_t is not None:
            daux = LS.bce_grad_elements(out.aux_probs, q_t) / b
        grads, _ = _disc_backward(params.d, cfg, cache, dsrc, dcls, daux)
        for key, g in grads.items():
            grads_total[key] = grads_total.get(key, 0) + g
        stat_updates.update(bn_stat_updates(cache))

    losses = {"d_source": d_source, "d_class": d_class}
    if d_aux is not None:
        losses["d_aux"] = d_aux
    return grads_total, losses, stat_updates


def g_step_grads(params: NetworkParams, cfg, batch: TripletBatch, z, aux=None):
    """Generator gradients and losses; the discriminator acts as a fixed
    function whose parameters and statistics are left untouched."""
    b = len(batch)
    fake, g_cache = _gen_apply(params.g, params.g_stats, cfg, batch.embeddings, z, train=True)
    out_f, d_cache = _disc_apply(params.d, params.d_stats, cfg, fake, batch.embeddings, True)

    g_source, g_class = LS.loss_g(out_f, batch.real_classes)
    g_aux = None
    if aux is not None:
        _, g_aux = LS.loss_aux(aux, out_f.aux_probs, out_f.aux_probs, out_f.aux_probs)

    dsrc = LS.bce_grad_elements(out_f.source_prob, 1.0) / b
    dcls = LS.bce_grad_elements(out_f.class_probs, batch.real_classes) / b
    daux = None
    if aux is not None:
        daux = LS.bce_grad_elements(out_f.aux_probs, aux.q_fake) / b
    _, dimg = _disc_backward(params.d, cfg, d_cache, dsrc, dcls, daux)
    grads = _gen_backward(params.g, cfg, g_cache, dimg)

    losses = {"g_source": g_source, "g_class": g_class}
    if g_aux is not None:
        losses["g_aux"] = g_aux
    return grads, losses, bn_stat_updates(g_cache)


def train_step(
    cfg,
    params: NetworkParams,
    opt_d: OptimizerState,
    opt_g: OptimizerState,
    batch: TripletBatch,
    z: np.ndarray,
    z_g: np.ndarray,
    aux: AuxiliaryTarget | None = None,
) -> tuple[NetworkParams, OptimizerState, OptimizerState, LossBreakdown]:
    """One discriminator update followed by one generator update.

    ``z`` feeds the generated batch the discriminator trains against; the
    generator then trains on its own fresh draw ``z_g``. Deterministic given
    inputs and states; raises on any non-finite loss term.
    """
    d_grads, d_losses, d_stat_updates = d_step_grads(params, cfg, batch, z, aux)
    _check_finite(**d_losses)
    opt_d2, d_params2 = adam_update(opt_d, params.d, d_grads)
    mid = NetworkParams(
        g=params.g,
        d=d_params2,
        g_stats=params.g_stats,
        d_stats=apply_stat_updates(params.d_stats, d_stat_updates),
    )

    g_grads, g_losses, g_stat_updates = g_step_grads(mid, cfg, batch, z_g, aux)
    _check_finite(**g_losses)
    opt_g2, g_params2 = adam_update(opt_g, mid.g, g_grads)
    final = NetworkParams(
        g=g_params2,
        d=mid.d,
        g_stats=apply_stat_updates(mid.g_stats, g_stat_updates),
        d_stats=mid.d_stats,
    )

    breakdown = LossBreakdown(
        d_source=d_losses["d_source"],
        d_class=d_losses["d_class"],
        g_source=g_losses["g_source"],
        g_class=g_losses["g_class"],
        d_aux=d_losses.get("d_aux"),
        g_aux=g_losses.get("g_aux"),
    )
    return final, opt_d2, opt_g2, breakdown


def noise_for_step(seed: int, step: int, lane: int, batch: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng([seed, step, lane])
    return rng.uniform(-1.0, 1.0, size=(batch, dim)).astype(np.float32)


def batch_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, 0])


def steps_for_run(run: RunConfig, dataset_size: int) -> int:
    if run.steps > 0:
        return run.steps
    return run.epochs * max(1, math.ceil(dataset_size / run.batch_size))


def append_loss_log(path: str, step: int, breakdown: LossBreakdown):
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as fh:
        if new:
            fh.write(LOG_HEADER + "\n")
        fh.write(
            f"{step}\t{breakdown.d_source:.10g}\t{breakdown.d_class:.10g}"
            f"\t{breakdown.g_source:.10g}\t{breakdown.g_class:.10g}\n"
        )


def run_training(
    state: TrainingState,
    dataset: Dataset,
    encoder,
    total_steps: int | None = None,
    on_step: Callable[[int, LossBreakdown], None] | None = None,
) -> TrainingState:
    """Drive training from ``state.step`` up to ``total_steps``.

    Checkpoints land in ``run.checkpoint_dir`` every ``checkpoint_every``
    steps plus a final one; per-step losses append to ``run.log_path``.
    """
    run = state.run
    cfg = run.model
    target = total_steps if total_steps is not None else steps_for_run(run, len(dataset))
    params, opt_d, opt_g = state.params, state.opt_d, state.opt_g

    step = state.step
    while step < target:
        step += 1
        rng = batch_rng(run.seed, step)
        batch = sample_batch(dataset, run.batch_size, encoder, rng)
        z = noise_for_step(run.seed, step, 1, len(batch), cfg.noise_dim)
        z_g = noise_for_step(run.seed, step, 2, len(batch), cfg.noise_dim)
        params, opt_d, opt_g, breakdown = train_step(
            cfg, params, opt_d, opt_g, batch, z, z_g
        )
        if run.log_path:
            append_loss_log(run.log_path, step, breakdown)
        if on_step is not None:
            on_step(step, breakdown)
        if run.checkpoint_dir and (step % run.checkpoint_every == 0 or step == target):
            current = TrainingState(params=params, opt_d=opt_d, opt_g=opt_g, run=run, step=step)
            save_checkpoint(
                os.path.join(run.checkpoint_dir, f"ckpt_{step:08d}.bin"), current
            )

    return TrainingState(params=params, opt_d=opt_d, opt_g=opt_g, run=run, step=step)
