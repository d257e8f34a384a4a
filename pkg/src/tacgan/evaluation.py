"""Evaluation metrics: within-class diversity and discriminability.

Diversity follows the usual reading of within-class multi-scale structural
similarity: sample image pairs inside each class and average their scores
(lower mean similarity means more diverse samples). Discriminability is the
inception-style score computed from a pluggable classifier: the exponential
of the mean KL divergence between per-image class posteriors and the split
marginal. A small convolutional probe classifier trained on the dataset
stands in for the large pretrained network the score normally uses.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .dataset import Dataset
from .errors import DataError
from .msssim import MsSsimConfig, config_for_side, ms_ssim
from .optim import adam_update, init_optimizer


@dataclass(frozen=True)
class DiversityReport:
    """Per-class mean similarity of sampled within-class pairs."""

    per_class_mean_msssim: dict[int, float]
    per_class_pairs: dict[int, int]
    overall_mean: float
    overall_std: float


@dataclass(frozen=True)
class EvalReport:
    """Diversity tables for training and generated images plus the
    discriminability score (mean and std over splits)."""

    train_diversity: DiversityReport
    generated_diversity: DiversityReport
    score_mean: float
    score_std: float
    seed: int
    config: dict = field(default_factory=dict)


def sample_pairs(n_items: int, n_pairs: int, rng: np.random.Generator):
    """Uniform distinct index pairs without replacement (all pairs if few)."""
    all_pairs = [(i, j) for i in range(n_items) for j in range(i + 1, n_items)]
    if len(all_pairs) <= n_pairs:
        return all_pairs
    picks = rng.choice(len(all_pairs), size=n_pairs, replace=False)
    return [all_pairs[int(p)] for p in picks]


def per_class_diversity(
    images: list[tuple[np.ndarray, int]],
    cfg: MsSsimConfig | None = None,
    pairs_per_class: int = 200,
    rng: np.random.Generator | None = None,
) -> DiversityReport:
    """Mean within-class similarity per class.

    Classes with fewer than two images are skipped with a warning. Pair
    sampling is seeded through ``rng`` for reproducible reports.
    """
    if not images:
        raise DataError("no images to evaluate")
    if rng is None:
        rng = np.random.default_rng(0)
    if cfg is None:
        cfg = config_for_side(min(np.asarray(images[0][0]).shape[:2]))

    by_class: dict[int, list[np.ndarray]] = {}
    for img, class_id in images:
        by_class.setdefault(int(class_id), []).append(img)

    per_class: dict[int, float] = {}
    n_pairs: dict[int, int] = {}
    for class_id in sorted(by_class):
        group = by_class[class_id]
        if len(group) < 2:
            warnings.warn(
                f"class {class_id} has {len(group)} image(s); skipping diversity"
            )
            continue
        pairs = sample_pairs(len(group), pairs_per_class, rng)
        scores = [ms_ssim(group[i], group[j], cfg) for i, j in pairs]
        per_class[class_id] = float(np.mean(scores))
        n_pairs[class_id] = len(pairs)

    if not per_class:
        raise DataError("no class had enough images for diversity analysis")
    values = np.array(list(per_class.values()))
    return DiversityReport(
        per_class_mean_msssim=per_class,
        per_class_pairs=n_pairs,
        overall_mean=float(values.mean()),
        overall_std=float(values.std()),
    )


def discriminability_score(
    class_probs: np.ndarray | list, n_splits: int = 10
) -> tuple[float, float]:
    """exp(mean KL(p(class | image) || split marginal)), averaged over splits.

    The image list is truncated to a multiple of ``n_splits``; each split
    uses its own marginal. Returns (mean, std) over splits.
    """
    probs = np.asarray(class_probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise DataError(f"expected a (n_images, n_classes) matrix, got {probs.shape}")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise DataError(f"probability vector {bad} sums to {sums[bad]}, not 1")
    if np.any(probs < 0):
        raise DataError("probability vectors must be non-negative")
    if n_splits < 1:
        raise DataError(f"n_splits must be >= 1, got {n_splits}")
    per_split = max(1, probs.shape[0] // n_splits)
    n_splits_eff = min(n_splits, probs.shape[0])
    scores = []
    for s in range(n_splits_eff):
        chunk = probs[s * per_split : (s + 1) * per_split]
        if chunk.shape[0] == 0:
            continue
        marginal = chunk.mean(axis=0)
        ratio = np.divide(
            chunk, marginal, out=np.ones_like(chunk), where=(chunk > 0)
        )
        kl = np.where(chunk > 0, chunk * np.log(ratio), 0.0).sum(axis=1)
        scores.append(float(np.exp(kl.mean())))
    return float(np.mean(scores)), float(np.std(scores))


@dataclass
class ProbeClassifier:
    """Small convolutional softmax classifier used as the score's backbone."""

    params: dict[str, np.ndarray]
    n_classes: int
    resolution: int
    held_out_accuracy: float = float("nan")

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float32)
        single = images.ndim == 3
        if single:
            images = images[None]
        logits, _ = _probe_forward(self.params, images)
        probs = L.softmax(logits.astype(np.float64))
        return probs[0] if single else probs

    def predict(self, images: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(images), axis=-1)


def _probe_init(n_classes: int, resolution: int, rng: np.random.Generator):
    def w(*shape, std=0.05):
        return rng.normal(0.0, std, size=shape).astype(np.float32)

    flat = (resolution // 4) * (resolution // 4) * 16
    return {
        "conv0/W": w(5, 5, 3, 8),
        "conv0/b": np.zeros(8, dtype=np.float32),
        "conv1/W": w(5, 5, 8, 16),
        "conv1/b": np.zeros(16, dtype=np.float32),
        "fc/W": w(flat, n_classes, std=0.02),
        "fc/b": np.zeros(n_classes, dtype=np.float32),
    }


def _probe_forward(params, images):
    h0 = L.conv2d_forward(images, params["conv0/W"], params["conv0/b"], 2)
    a0 = L.leaky_relu(h0)
    h1 = L.conv2d_forward(a0, params["conv1/W"], params["conv1/b"], 2)
    a1 = L.leaky_relu(h1)
    flat = a1.reshape(a1.shape[0], -1)
    logits = L.dense_forward(flat, params["fc/W"], params["fc/b"])
    return logits, (images, h0, a0, h1, a1, flat)


def _probe_backward(params, cache, dlogits):
    images, h0, a0, h1, a1, flat = cache
    grads = {}
    dflat, grads["fc/W"], grads["fc/b"] = L.dense_backward(dlogits, flat, params["fc/W"])
    da1 = dflat.reshape(a1.shape)
    dh1 = L.leaky_relu_backward(da1, h1)
    grads["conv1/W"], grads["conv1/b"] = L.conv2d_backward_params(dh1, a0, 5, 2)
    da0 = L.conv2d_backward_input(dh1, params["conv1/W"], a0.shape, 2)
    dh0 = L.leaky_relu_backward(da0, h0)
    grads["conv0/W"], grads["conv0/b"] = L.conv2d_backward_params(dh0, images, 5, 2)
    return grads


def train_probe_classifier(
    dataset: Dataset,
    steps: int = 500,
    seed: int = 0,
    batch_size: int = 32,
    learning_rate: float = 1e-3,
    holdout_fraction: float = 0.2,
) -> ProbeClassifier:
    """Train the probe with softmax cross entropy; deterministic per seed.

    A stratified holdout split measures generalization; the resulting
    accuracy is stored on the returned classifier.
    """
    if dataset.n_classes < 2:
        raise DataError("probe training needs at least 2 classes")
    rng = np.random.default_rng([seed, 101])

    train_idx, held_idx = [], []
    for class_id in range(dataset.n_classes):
        idx = np.array(dataset.class_indices(class_id))
        if idx.size == 0:
            continue
        idx = idx[rng.permutation(idx.size)]
        n_held = max(1, int(round(holdout_fraction * idx.size))) if idx.size > 1 else 0
        held_idx.extend(idx[:n_held])
        train_idx.extend(idx[n_held:])
    train_idx = np.array(train_idx)
    held_idx = np.array(held_idx)

    images = np.stack([inst.image for inst in dataset.instances])
    labels = np.array([inst.class_id for inst in dataset.instances])

    params = _probe_init(dataset.n_classes, dataset.resolution, rng)
    opt = init_optimizer(params, learning_rate=learning_rate, beta1=0.9)
    for step in range(steps):
        srng = np.random.default_rng([seed, 202, step])
        picks = train_idx[srng.integers(train_idx.size, size=batch_size)]
        x = images[picks]
        t = np.zeros((batch_size, dataset.n_classes), dtype=np.float32)
        t[np.arange(batch_size), labels[picks]] = 1.0
        logits, cache = _probe_forward(params, x)
        probs = L.softmax(logits)
        dlogits = (probs - t) / batch_size
        grads = _probe_backward(params, cache, dlogits)
        opt, params = adam_update(opt, params, grads)

    probe = ProbeClassifier(
        params=params, n_classes=dataset.n_classes, resolution=dataset.resolution
    )
    eval_idx = held_idx if held_idx.size else train_idx
    preds = probe.predict(images[eval_idx])
    probe.held_out_accuracy = float((preds == labels[eval_idx]).mean())
    return probe
