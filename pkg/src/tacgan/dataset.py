"""Captioned, class-labeled image collections and triplet sampling.

On-disk layout: ``root/manifest.tsv`` with one ``image_relpath<TAB>class_id
<TAB>caption`` line per caption (several lines may share an image), plus the
referenced images as lossless raster files. ``generate_synthetic_dataset``
emits the same layout from rendered geometric shapes so the whole pipeline
can be exercised without any external data.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DataError

MANIFEST_NAME = "manifest.tsv"

SHAPE_NAMES = ("circle", "square", "triangle", "cross", "diamond", "ring")
COLOR_VALUES = {
    "red": (220, 50, 47),
    "green": (64, 190, 70),
    "blue": (52, 101, 228),
    "yellow": (228, 212, 58),
    "magenta": (211, 54, 180),
    "cyan": (42, 181, 197),
    "orange": (229, 136, 34),
    "white": (235, 235, 235),
}


def bytes_to_unit(img_u8: np.ndarray) -> np.ndarray:
    """Affine map of pixel bytes onto [-1, 1]; 0 -> -1.0 and 255 -> 1.0."""
    return img_u8.astype(np.float32) / 127.5 - 1.0


def unit_to_bytes(img: np.ndarray) -> np.ndarray:
    """Inverse of :func:`bytes_to_unit`; round-trips every byte exactly."""
    return np.clip(np.rint((np.asarray(img, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class DatasetInstance:
    """One (image, caption set, class label) tuple."""

    image: np.ndarray  # H x W x 3, values in [-1, 1]
    captions: tuple[str, ...]
    class_id: int
    source: str = ""

    def __post_init__(self):
        if not self.captions:
            raise DataError(f"instance {self.source or '<memory>'} has no caption")
        if any(not c.strip() for c in self.captions):
            raise DataError(f"instance {self.source or '<memory>'} has an empty caption")
        if self.class_id < 0:
            raise DataError(
                f"instance {self.source or '<memory>'}: class_id must be >= 0, "
                f"got {self.class_id}"
            )
        img = np.asarray(self.image, dtype=np.float32)
        if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] != img.shape[1]:
            raise DataError(
                f"instance {self.source or '<memory>'}: image must be square "
                f"HxWx3, got shape {img.shape}"
            )
        if img.min() < -1.0 or img.max() > 1.0:
            raise DataError(
                f"instance {self.source or '<memory>'}: pixel values outside [-1, 1]"
            )
        object.__setattr__(self, "image", img)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of instances sharing one square resolution."""

    instances: tuple[DatasetInstance, ...]
    n_classes: int
    resolution: int
    _by_class: dict = field(default_factory=dict, repr=False, compare=False)
    _not_in_class: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n_classes < 2:
            raise DataError(f"need >= 2 classes, got {self.n_classes}")
        classes_seen = set()
        for inst in self.instances:
            if inst.class_id >= self.n_classes:
                raise DataError(
                    f"instance {inst.source or '<memory>'}: class_id "
                    f"{inst.class_id} out of range [0, {self.n_classes})"
                )
            if inst.image.shape[0] != self.resolution:
                raise DataError(
                    f"instance {inst.source or '<memory>'}: resolution "
                    f"{inst.image.shape[0]} != dataset resolution {self.resolution}"
                )
            classes_seen.add(inst.class_id)
        if len(classes_seen) < 2:
            raise DataError(f"need >= 2 classes, got {len(classes_seen)} distinct")
        by_class: dict[int, list[int]] = {}
        for i, inst in enumerate(self.instances):
            by_class.setdefault(inst.class_id, []).append(i)
        not_in_class = {
            c: np.array(
                [i for i in range(len(self.instances)) if self.instances[i].class_id != c],
                dtype=np.int64,
            )
            for c in by_class
        }
        object.__setattr__(self, "_by_class", by_class)
        object.__setattr__(self, "_not_in_class", not_in_class)

    def __len__(self) -> int:
        return len(self.instances)

    def class_indices(self, class_id: int) -> list[int]:
        return list(self._by_class.get(class_id, []))

    def one_hot(self, class_id: int) -> np.ndarray:
        v = np.zeros(self.n_classes, dtype=np.float32)
        v[class_id] = 1.0
        return v


@dataclass(frozen=True)
class TrainingTriplet:
    """A real image, a wrong-class image, and their shared conditioning text."""

    real_image: np.ndarray
    wrong_image: np.ndarray
    caption: str
    real_class: np.ndarray  # one-hot
    wrong_class: np.ndarray  # one-hot

    def __post_init__(self):
        r = int(np.argmax(self.real_class))
        w = int(np.argmax(self.wrong_class))
        if r == w:
            raise DataError("wrong image must come from a different class")
        for name, v in (("real_class", self.real_class), ("wrong_class", self.wrong_class)):
            if not np.isclose(float(np.sum(v)), 1.0):
                raise DataError(f"{name} must be one-hot (sum 1)")


def load_dataset(root_path: str, resolution: int) -> Dataset:
    """Load a manifest-based dataset, resizing every image to ``resolution``.

    Instance order follows first appearance in the manifest. Non-square
    images are square center-cropped before resizing; pixel bytes map
    affinely onto [-1, 1].
    """
    manifest = os.path.join(root_path, MANIFEST_NAME)
    if not os.path.exists(manifest):
        raise DataError(f"manifest not found: {manifest}")
    if resolution <= 0:
        raise DataError(f"resolution must be positive, got {resolution}")

    captions_by_image: dict[str, list[str]] = {}
    class_by_image: dict[str, int] = {}
    order: list[str] = []
    with open(manifest, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{manifest}:{line_no}: expected image<TAB>class_id<TAB>caption"
                )
            relpath, class_str, caption = parts
            try:
                class_id = int(class_str)
            except ValueError as exc:
                raise DataError(f"{manifest}:{line_no}: bad class_id {class_str!r}") from exc
            if class_id < 0:
                raise DataError(f"{manifest}:{line_no}: class_id must be >= 0")
            if not caption.strip():
                raise DataError(f"{manifest}:{line_no}: instance {relpath} has an empty caption")
            if relpath not in captions_by_image:
                captions_by_image[relpath] = []
                class_by_image[relpath] = class_id
                order.append(relpath)
            elif class_by_image[relpath] != class_id:
                raise DataError(
                    f"{manifest}:{line_no}: instance {relpath} listed with "
                    f"conflicting class ids {class_by_image[relpath]} and {class_id}"
                )
            captions_by_image[relpath].append(caption)

    if not order:
        raise DataError(f"{manifest}: no instances")

    instances = []
    for relpath in order:
        path = os.path.join(root_path, relpath)
        try:
            with Image.open(path) as im:
                im = im.convert("RGB")
                w, h = im.size
                if w != h:
                    side = min(w, h)
                    left = (w - side) // 2
                    top = (h - side) // 2
                    im = im.crop((left, top, left + side, top + side))
                if im.size != (resolution, resolution):
                    im = im.resize((resolution, resolution), Image.BILINEAR)
                arr = np.asarray(im, dtype=np.uint8)
        except DataError:
            raise
        except Exception as exc:
            raise DataError(f"cannot decode image {path}: {exc}") from exc
        instances.append(
            DatasetInstance(
                image=bytes_to_unit(arr),
                captions=tuple(captions_by_image[relpath]),
                class_id=class_by_image[relpath],
                source=relpath,
            )
        )

    n_classes = max(inst.class_id for inst in instances) + 1
    return Dataset(instances=tuple(instances), n_classes=n_classes, resolution=resolution)


def sample_triplet(dataset: Dataset, rng: np.random.Generator) -> TrainingTriplet:
    """Draw one training triplet.

    The real instance and its caption are uniform draws; the wrong image is
    a uniform draw over instances of any *other* class. Identical generator
    state yields identical triplets.
    """
    idx = int(rng.integers(len(dataset)))
    real = dataset.instances[idx]
    caption = real.captions[int(rng.integers(len(real.captions)))]
    pool = dataset._not_in_class[real.class_id]
    wrong = dataset.instances[int(pool[rng.integers(len(pool))])]
    return TrainingTriplet(
        real_image=real.image,
        wrong_image=wrong.image,
        caption=caption,
        real_class=dataset.one_hot(real.class_id),
        wrong_class=dataset.one_hot(wrong.class_id),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the bundled shape/color dataset emitter."""

    shapes: tuple[str, ...] = ("circle", "square", "triangle", "cross")
    colors: tuple[str, ...] = ("red", "green", "blue", "yellow")
    per_class: int = 16
    resolution: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.per_class <= 0:
            raise DataError(f"per_class must be positive, got {self.per_class}")
        if self.resolution <= 0 or self.resolution % 16 != 0:
            raise DataError(
                f"resolution must be a positive multiple of 16, got {self.resolution}"
            )
        unknown_shapes = set(self.shapes) - set(SHAPE_NAMES)
        if unknown_shapes:
            raise DataError(f"unknown shapes: {sorted(unknown_shapes)}")
        unknown_colors = set(self.colors) - set(COLOR_VALUES)
        if unknown_colors:
            raise DataError(f"unknown colors: {sorted(unknown_colors)}")
        if not self.shapes or not self.colors:
            raise DataError("need at least one shape and one color")


_SUPERSAMPLE = 4


def _shape_mask(shape: str, res: int, cx: float, cy: float, r: float) -> np.ndarray:
    """Render an anti-aliased occupancy mask in [0, 1] for one shape.

    Geometry is computed on a supersampled grid in unit coordinates and
    box-averaged down, which keeps the emitter byte-deterministic.
    """
    n = res * _SUPERSAMPLE
    ys, xs = np.meshgrid(
        (np.arange(n) + 0.5) / n, (np.arange(n) + 0.5) / n, indexing="ij"
    )
    dx, dy = xs - cx, ys - cy
    if shape == "circle":
        inside = dx ** 2 + dy ** 2 <= r ** 2
    elif shape == "square":
        inside = (np.abs(dx) <= r) & (np.abs(dy) <= r)
    elif shape == "triangle":
        # Upward triangle: apex (cx, cy - r), base y = cy + r.
        inside = (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2.0)
    elif shape == "cross":
        third = r / 3.0
        inside = ((np.abs(dx) <= third) & (np.abs(dy) <= r)) | (
            (np.abs(dy) <= third) & (np.abs(dx) <= r)
        )
    elif shape == "diamond":
        inside = np.abs(dx) + np.abs(dy) <= r
    elif shape == "ring":
        d2 = dx ** 2 + dy ** 2
        inside = (d2 <= r ** 2) & (d2 >= (0.55 * r) ** 2)
    else:  # pragma: no cover - guarded by SyntheticSpec validation
        raise DataError(f"unknown shape {shape!r}")
    mask = inside.astype(np.float32).reshape(res, _SUPERSAMPLE, res, _SUPERSAMPLE)
    return mask.mean(axis=(1, 3))


def render_instance(
    shape: str, color: str, res: int, rng: np.random.Generator
) -> np.ndarray:
    """Render one uint8 image: a colored shape at random position and size."""
    cx = float(rng.uniform(0.35, 0.65))
    cy = float(rng.uniform(0.35, 0.65))
    r = float(rng.uniform(0.16, 0.3))
    brightness = float(rng.uniform(0.85, 1.15))
    mask = _shape_mask(shape, res, cx, cy, r)[:, :, None]
    fg = np.clip(np.array(COLOR_VALUES[color], dtype=np.float32) * brightness, 0, 255)
    bg = np.full(3, 24.0, dtype=np.float32)
    img = mask * fg[None, None, :] + (1.0 - mask) * bg[None, None, :]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def caption_templates(color: str, shape: str) -> tuple[str, str]:
    return (f"a {color} {shape}", f"the {shape} is {color}")


def generate_synthetic_dataset(spec: SyntheticSpec, out_path: str) -> dict:
    """Write a synthetic dataset in the manifest layout; fully seed-determined.

    Returns a summary dict with the written counts and paths.
    """
    rng = np.random.default_rng(spec.seed)
    os.makedirs(out_path, exist_ok=True)
    img_dir = os.path.join(out_path, "images")
    os.makedirs(img_dir, exist_ok=True)

    lines = []
    n_images = 0
    for class_id, shape in enumerate(spec.shapes):
        for k in range(spec.per_class):
            color = spec.colors[int(rng.integers(len(spec.colors)))]
            img = render_instance(shape, color, spec.resolution, rng)
            relpath = os.path.join("images", f"{shape}_{k:04d}.png")
            Image.fromarray(img).save(os.path.join(out_path, relpath), format="PNG")
            for caption in caption_templates(color, shape):
                lines.append(f"{relpath}\t{class_id}\t{caption}")
            n_images += 1

    manifest = os.path.join(out_path, MANIFEST_NAME)
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return {
        "root": out_path,
        "manifest": manifest,
        "n_images": n_images,
        "n_classes": len(spec.shapes),
        "resolution": spec.resolution,
    }
