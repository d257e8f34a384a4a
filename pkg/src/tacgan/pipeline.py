"""End-to-end evaluation pipeline over a trained checkpoint.

Generates class-conditioned images (captions drawn from each class's own
instances), measures within-class diversity of both the training data and
the generated data, scores discriminability through the probe classifier,
and reports how often the probe assigns each conditioning class.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import TrainingState
from .config import config_to_kv
from .dataset import Dataset
from .errors import DataError
from .evaluation import (
    DiversityReport,
    EvalReport,
    ProbeClassifier,
    discriminability_score,
    per_class_diversity,
    train_probe_classifier,
)
from .msssim import config_for_side
from .sampling import draw_noise, sample_images
from .text import TextEmbedding


@dataclass
class GenerationResult:
    """Generated images grouped by conditioning class."""

    images_by_class: dict[int, np.ndarray]
    captions_by_class: dict[int, list[str]] = field(default_factory=dict)

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        images, labels = [], []
        for class_id in sorted(self.images_by_class):
            imgs = self.images_by_class[class_id]
            images.append(imgs)
            labels.extend([class_id] * len(imgs))
        return np.concatenate(images), np.array(labels)


def generate_class_conditioned(
    state: TrainingState,
    dataset: Dataset,
    encoder,
    n_per_class: int,
    seed: int,
) -> GenerationResult:
    """Draw captions per class (seeded) and synthesize images for them."""
    cfg = state.run.model
    images_by_class: dict[int, np.ndarray] = {}
    captions_by_class: dict[int, list[str]] = {}
    for class_id in range(dataset.n_classes):
        pool = dataset.class_indices(class_id)
        if not pool:
            continue
        crng = np.random.default_rng([seed, 7, class_id])
        captions = []
        embs = []
        for _ in range(n_per_class):
            inst = dataset.instances[pool[int(crng.integers(len(pool)))]]
            caption = inst.captions[int(crng.integers(len(inst.captions)))]
            captions.append(caption)
            embs.append(encoder.embed(caption).vector)
        z = draw_noise(np.random.default_rng([seed, 8, class_id]), n_per_class, cfg.noise_dim)
        emb_batch = np.stack(embs).astype(np.float32)
        from .network import generator_forward

        images_by_class[class_id] = generator_forward(state.params, cfg, emb_batch, z)
        captions_by_class[class_id] = captions
    if not images_by_class:
        raise DataError("dataset has no populated classes to condition on")
    return GenerationResult(images_by_class=images_by_class, captions_by_class=captions_by_class)


def probe_class_accuracy(
    probe: ProbeClassifier, generated: GenerationResult
) -> dict[int, float]:
    """Fraction of generated images the probe assigns to their conditioning
    class, per class."""
    out = {}
    for class_id, imgs in generated.images_by_class.items():
        preds = probe.predict(imgs)
        out[class_id] = float((preds == class_id).mean())
    return out


def evaluate_checkpoint(
    state: TrainingState,
    dataset: Dataset,
    encoder,
    n_per_class: int,
    seed: int,
    probe: ProbeClassifier | None = None,
    probe_steps: int = 800,
    pairs_per_class: int = 200,
    n_splits: int = 10,
) -> tuple[EvalReport, dict[int, float], ProbeClassifier]:
    """Full evaluation; returns (report, per-class probe accuracy, probe)."""
    if probe is None:
        probe = train_probe_classifier(dataset, steps=probe_steps, seed=seed)

    generated = generate_class_conditioned(state, dataset, encoder, n_per_class, seed)
    mcfg = config_for_side(dataset.resolution)

    train_pairs = [(inst.image, inst.class_id) for inst in dataset.instances]
    train_div = per_class_diversity(
        train_pairs, mcfg, pairs_per_class, np.random.default_rng([seed, 9])
    )
    gen_pairs = [
        (img, class_id)
        for class_id, imgs in generated.images_by_class.items()
        for img in imgs
    ]
    gen_div = per_class_diversity(
        gen_pairs, mcfg, pairs_per_class, np.random.default_rng([seed, 10])
    )

    flat_images, _ = generated.flat()
    probs = probe.predict_proba(flat_images)
    score_mean, score_std = discriminability_score(probs, n_splits=n_splits)

    report = EvalReport(
        train_diversity=train_div,
        generated_diversity=gen_div,
        score_mean=score_mean,
        score_std=score_std,
        seed=seed,
        config=config_to_kv(state.run),
    )
    accuracy = probe_class_accuracy(probe, generated)
    return report, accuracy, probe


def write_diversity_tsv(report: DiversityReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class_id\tmean_msssim\tn_pairs\n")
        for class_id in sorted(report.per_class_mean_msssim):
            fh.write(
                f"{class_id}\t{report.per_class_mean_msssim[class_id]:.6f}"
                f"\t{report.per_class_pairs[class_id]}\n"
            )


def write_summary_json(
    report: EvalReport,
    accuracy: dict[int, float],
    probe_held_out: float,
    path: str,
) -> None:
    payload = {
        "overall_mean": report.generated_diversity.overall_mean,
        "overall_std": report.generated_diversity.overall_std,
        "train_overall_mean": report.train_diversity.overall_mean,
        "train_overall_std": report.train_diversity.overall_std,
        "score_mean": report.score_mean,
        "score_std": report.score_std,
        "seed": report.seed,
        "per_class_probe_accuracy": {str(k): v for k, v in sorted(accuracy.items())},
        "probe_held_out_accuracy": probe_held_out,
        "config": report.config,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_eval_outputs(
    report: EvalReport,
    accuracy: dict[int, float],
    probe: ProbeClassifier,
    out_dir: str,
    render_figure: bool = True,
) -> dict[str, str]:
    """Emit the delimited tables, the summary block and the scatter figure."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "train_tsv": os.path.join(out_dir, "train_msssim.tsv"),
        "generated_tsv": os.path.join(out_dir, "generated_msssim.tsv"),
        "summary": os.path.join(out_dir, "summary.json"),
    }
    write_diversity_tsv(report.train_diversity, paths["train_tsv"])
    write_diversity_tsv(report.generated_diversity, paths["generated_tsv"])
    write_summary_json(report, accuracy, probe.held_out_accuracy, paths["summary"])
    if render_figure:
        from .figures import maybe_render, render_diversity_scatter

        fig = maybe_render(
            render_diversity_scatter,
            report.train_diversity,
            report.generated_diversity,
            os.path.join(out_dir, "msssim_scatter.png"),
        )
        if fig:
            paths["figure"] = fig
    return paths
