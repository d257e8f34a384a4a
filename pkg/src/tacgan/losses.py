"""Adversarial training objectives.

All four core terms (and the generic auxiliary extension) are sums of binary
cross entropies between sigmoid head outputs and their targets: the source
head is pushed toward 1 on real images and 0 on generated and wrong-class
images, the class head toward the conditioning class for both real and
generated images and toward the wrong image's own class. Probabilities are
clamped away from {0, 1} so every term stays finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ShapeError
from .network import DiscriminatorOutput

CLAMP_EPS = 1e-7


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.clip(p, CLAMP_EPS, 1.0 - CLAMP_EPS)


def bce_elements(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Elementwise binary cross entropy of clamped probabilities."""
    pc = _clamp(np.asarray(p, dtype=np.float64))
    t = np.asarray(t, dtype=np.float64)
    return -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))


def bce_grad_elements(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """d(bce)/dp; zero where the clamp is active."""
    p = np.asarray(p)
    pc = _clamp(p)
    grad = -t / pc + (1.0 - t) / (1.0 - pc)
    active = (p > CLAMP_EPS) & (p < 1.0 - CLAMP_EPS)
    return np.where(active, grad, 0.0).astype(p.dtype)


def _source(out) -> np.ndarray:
    p = out.source_prob if isinstance(out, DiscriminatorOutput) else out
    return np.atleast_1d(np.asarray(p))


def _classes(out) -> np.ndarray:
    p = out.class_probs if isinstance(out, DiscriminatorOutput) else out
    p = np.asarray(p)
    return p[None, :] if p.ndim == 1 else p


def loss_d_source(out_real, out_fake, out_wrong) -> float:
    """Source loss: real toward 1, generated and wrong-class toward 0."""
    pr, pf, pw = _source(out_real), _source(out_fake), _source(out_wrong)
    per_sample = (
        bce_elements(pr, 1.0) + bce_elements(pf, 0.0) + bce_elements(pw, 0.0)
    )
    return float(per_sample.mean())


def loss_d_class(out_real, out_fake, out_wrong, c_real, c_wrong) -> float:
    """Class loss: real and generated toward the conditioning class, the
    wrong image toward its own class."""
    cr, cw = _classes(c_real), _classes(c_wrong)
    pr, pf, pw = _classes(out_real), _classes(out_fake), _classes(out_wrong)
    for name, probs, targets in (
        ("real", pr, cr),
        ("fake", pf, cr),
        ("wrong", pw, cw),
    ):
        if probs.shape != targets.shape:
            raise ShapeError(
                f"class loss ({name}): probs {probs.shape} vs targets {targets.shape}"
            )
    per_sample = (
        bce_elements(pr, cr).sum(axis=1)
        + bce_elements(pf, cr).sum(axis=1)
        + bce_elements(pw, cw).sum(axis=1)
    )
    return float(per_sample.mean())


def loss_g(out_fake, c_real) -> tuple[float, float]:
    """Generator losses: source head of the generated image toward 1, class
    head toward the conditioning class."""
    pf = _source(out_fake)
    cf = _classes(out_fake)
    cr = _classes(c_real)
    g_source = float(bce_elements(pf, 1.0).mean())
    g_class = float(bce_elements(cf, cr).sum(axis=1).mean())
    return g_source, g_class


@dataclass(frozen=True)
class AuxiliaryTarget:
    """A pluggable extra supervision channel.

    ``probe`` maps (images, latent text) to a probability vector per image;
    the target vectors say what that probe should report for the real,
    wrong and generated members of a triplet.
    """

    probe: Callable[[np.ndarray, np.ndarray], np.ndarray] | None
    q_real: np.ndarray
    q_wrong: np.ndarray
    q_fake: np.ndarray

    def __post_init__(self):
        for name in ("q_real", "q_wrong", "q_fake"):
            q = np.asarray(getattr(self, name))
            if not np.all(np.isfinite(q)) or q.min() < 0.0 or q.max() > 1.0:
                raise ShapeError(f"{name} entries must be finite and in [0, 1]")
            object.__setattr__(self, name, q)


def loss_aux(target: AuxiliaryTarget, out_real, out_fake, out_wrong) -> tuple[float, float]:
    """The generic extension: one more cross-entropy factor per network."""
    pr, pf, pw = (_classes(x) for x in (out_real, out_fake, out_wrong))
    qr, qw, qf = (_classes(q) for q in (target.q_real, target.q_wrong, target.q_fake))
    for name, probs, targets in (("real", pr, qr), ("fake", pf, qr), ("wrong", pw, qw)):
        if probs.shape != targets.shape:
            raise ShapeError(
                f"aux loss ({name}): probe output {probs.shape} vs target {targets.shape}"
            )
    d_aux = float(
        (
            bce_elements(pr, qr).sum(axis=1)
            + bce_elements(pf, qr).sum(axis=1)
            + bce_elements(pw, qw).sum(axis=1)
        ).mean()
    )
    if pf.shape != qf.shape:
        raise ShapeError(f"aux loss (g): probe output {pf.shape} vs target {qf.shape}")
    g_aux = float(bce_elements(pf, qf).sum(axis=1).mean())
    return d_aux, g_aux


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term objective values of one training step (all finite, >= 0)."""

    d_source: float
    d_class: float
    g_source: float
    g_class: float
    d_aux: float | None = None
    g_aux: float | None = None

    def as_dict(self) -> dict[str, float]:
        out = {
            "d_source": self.d_source,
            "d_class": self.d_class,
            "g_source": self.g_source,
            "g_class": self.g_class,
        }
        if self.d_aux is not None:
            out["d_aux"] = self.d_aux
            out["g_aux"] = self.g_aux
        return out
