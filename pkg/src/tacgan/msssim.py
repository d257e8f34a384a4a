"""Multi-scale structural similarity.

Classic construction: at each scale the two images are compared through an
11x11 Gaussian window (valid positions only), producing a luminance term and
a contrast/structure term; the images are then 2x2 mean-pooled and the
comparison repeats. The final index is the weighted geometric product of the
contrast/structure terms at every scale with the luminance folded in at the
coarsest one. Inputs follow the package pixel convention (values in
[-1, 1], RGB or single channel); they are converted to grayscale luma and
remapped to [0, 1] internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError

STANDARD_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class MsSsimConfig:
    n_scales: int = 5
    scale_weights: tuple[float, ...] = STANDARD_WEIGHTS
    window: int = 11
    gaussian_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.n_scales < 1:
            raise DataError(f"n_scales must be >= 1, got {self.n_scales}")
        if len(self.scale_weights) != self.n_scales:
            raise DataError(
                f"need {self.n_scales} scale weights, got {len(self.scale_weights)}"
            )
        if any(w <= 0 for w in self.scale_weights):
            raise DataError("scale weights must be positive")
        if abs(sum(self.scale_weights) - 1.0) > 1e-6:
            raise DataError(f"scale weights must sum to 1, got {sum(self.scale_weights)}")
        if self.window % 2 != 1 or self.window < 3:
            raise DataError(f"window must be an odd integer >= 3, got {self.window}")
        if self.gaussian_sigma <= 0:
            raise DataError("gaussian_sigma must be positive")

    def min_side(self) -> int:
        return self.window * 2 ** (self.n_scales - 1)


def max_scales(side: int, window: int = 11) -> int:
    """Largest usable scale count for a given image side length."""
    if side < window:
        raise DataError(f"image side {side} smaller than window {window}")
    return int(np.floor(np.log2(side // window))) + 1


def config_for_side(side: int, window: int = 11) -> MsSsimConfig:
    """Standard config truncated (weights renormalized) to fit the image."""
    n = min(max_scales(side, window), len(STANDARD_WEIGHTS))
    weights = np.array(STANDARD_WEIGHTS[:n])
    weights = weights / weights.sum()
    return MsSsimConfig(n_scales=n, scale_weights=tuple(weights), window=window)


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    coords = np.arange(window, dtype=np.float64) - window // 2
    k = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a 1-D kernel on both axes."""
    w = kernel.shape[0]
    tmp = np.einsum("ijk,k->ij", sliding_window_view(img, w, axis=0), kernel)
    return np.einsum("ijk,k->ij", sliding_window_view(tmp, w, axis=1), kernel)


def to_gray_unit(img: np.ndarray) -> np.ndarray:
    """Luma conversion plus affine remap of [-1, 1] onto [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[2] != 3:
            raise DataError(f"expected 3 channels, got shape {img.shape}")
        img = img @ np.asarray(LUMA, dtype=np.float64)
    elif img.ndim != 2:
        raise DataError(f"expected HxW or HxWx3 image, got shape {img.shape}")
    return (img + 1.0) / 2.0


def downsample_2x2(img: np.ndarray) -> np.ndarray:
    """Dyadic reduction by 2x2 mean pooling (odd trailing row/col dropped)."""
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return img.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _scale_maps(a: np.ndarray, b: np.ndarray, cfg: MsSsimConfig):
    """Pointwise luminance and contrast/structure maps at one scale."""
    c1 = cfg.k1 ** 2
    c2 = cfg.k2 ** 2
    kernel = _gaussian_kernel(cfg.window, cfg.gaussian_sigma)
    mu_a = _filter_valid(a, kernel)
    mu_b = _filter_valid(b, kernel)
    var_a = _filter_valid(a * a, kernel) - mu_a ** 2
    var_b = _filter_valid(b * b, kernel) - mu_b ** 2
    cov = _filter_valid(a * b, kernel) - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def ms_ssim_factors(a: np.ndarray, b: np.ndarray, cfg: MsSsimConfig) -> list[float]:
    """Per-scale factors before weighting.

    Scales 1..n-1 contribute their contrast/structure means; the coarsest
    scale contributes the mean of the full (luminance times cs) map. All
    factors are clamped to [0, 1] so fractional powers stay real.
    """
    ga, gb = to_gray_unit(a), to_gray_unit(b)
    if ga.shape != gb.shape:
        raise DataError(f"image shapes differ: {ga.shape} vs {gb.shape}")
    side = min(ga.shape)
    if side < cfg.min_side():
        raise DataError(
            f"image side {side} too small for {cfg.n_scales} scales with "
            f"window {cfg.window}; at most {max_scales(side, cfg.window)} "
            "scales fit"
        )
    factors = []
    for scale in range(cfg.n_scales):
        lum, cs = _scale_maps(ga, gb, cfg)
        if scale == cfg.n_scales - 1:
            factors.append(float(np.clip((lum * cs).mean(), 0.0, 1.0)))
        else:
            factors.append(float(np.clip(cs.mean(), 0.0, 1.0)))
            ga, gb = downsample_2x2(ga), downsample_2x2(gb)
    return factors


def ms_ssim(a: np.ndarray, b: np.ndarray, cfg: MsSsimConfig | None = None) -> float:
    """Weighted multi-scale structural similarity in [0, 1]; 1 iff identical."""
    if cfg is None:
        cfg = config_for_side(min(np.asarray(a).shape[:2]))
    factors = ms_ssim_factors(a, b, cfg)
    value = 1.0
    for f, w in zip(factors, cfg.scale_weights):
        value *= f ** w
    return float(value)
