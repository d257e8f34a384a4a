"""Model and run configuration.

``ModelConfig`` pins the architecture hyperparameters (text embedding width,
latent sizes, filter-map bases, fused feature geometry). The stock defaults
are the published global parameters of the model; ``desk_config`` is a small
CPU-friendly preset and ``tiny_config`` a minimal one for gradient checking.

``RunConfig`` adds the orchestration fields the CLI needs (dataset root,
encoder choice, seed, batch size, ...). Run configs are read from flat
``key = value`` text files with ``#`` comments; ``TACGAN_``-prefixed
environment variables override file values, and CLI flags override both.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError

# Published defaults ("global parameters" of the reference model).
DEFAULT_TEXT_DIM = 4800
DEFAULT_TEXT_LATENT_DIM = 100
DEFAULT_NOISE_DIM = 100
DEFAULT_GEN_BASE_MAPS = 64
DEFAULT_DISC_BASE_MAPS = 64
DEFAULT_FUSED_SPATIAL = 8
DEFAULT_FUSED_MAPS = 384
DEFAULT_RESOLUTION = 128

DEFAULT_LEARNING_RATE = 0.0002
DEFAULT_BETA1 = 0.5
DEFAULT_BETA2 = 0.999
DEFAULT_ADAM_EPS = 1e-8

# The generator's fully connected projection always lands on an 8x8 grid.
GEN_START_SPATIAL = 8

ENV_PREFIX = "TACGAN_"


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for the generator/discriminator pair.

    Attributes:
        text_dim: width of the caption embedding fed to both networks.
        text_latent_dim: width of the learned text projections.
        noise_dim: width of the noise vector (entries in [-1, 1]).
        gen_base_maps: filter-map base of the generator stack; the projected
            input grid has ``8 * gen_base_maps`` channels.
        disc_base_maps: filter-map base of the discriminator stack.
        fused_spatial: side length of the discriminator feature map that the
            replicated text latent is fused into.
        fused_maps: channel count of that feature map (defaults to
            ``6 * disc_base_maps``).
        resolution: side length of generated/consumed square images.
        n_classes: width of the per-class discriminator head.
        aux_dim: width of the optional auxiliary head (0 disables it).
    """

    n_classes: int
    resolution: int = DEFAULT_RESOLUTION
    text_dim: int = DEFAULT_TEXT_DIM
    text_latent_dim: int = DEFAULT_TEXT_LATENT_DIM
    noise_dim: int = DEFAULT_NOISE_DIM
    gen_base_maps: int = DEFAULT_GEN_BASE_MAPS
    disc_base_maps: int = DEFAULT_DISC_BASE_MAPS
    fused_spatial: int = DEFAULT_FUSED_SPATIAL
    fused_maps: int = -1  # -1 means 6 * disc_base_maps
    aux_dim: int = 0

    def __post_init__(self):
        if self.fused_maps == -1:
            object.__setattr__(self, "fused_maps", 6 * self.disc_base_maps)
        for name in (
            "n_classes",
            "resolution",
            "text_dim",
            "text_latent_dim",
            "noise_dim",
            "gen_base_maps",
            "disc_base_maps",
            "fused_spatial",
            "fused_maps",
        ):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.aux_dim < 0:
            raise ConfigError(f"aux_dim must be >= 0, got {self.aux_dim}")
        if self.resolution % self.fused_spatial != 0 or not _is_pow2(
            self.resolution // self.fused_spatial
        ):
            raise ConfigError(
                f"resolution {self.resolution} must be fused_spatial "
                f"({self.fused_spatial}) times a power of two"
            )
        if self.resolution % GEN_START_SPATIAL != 0 or not _is_pow2(
            self.resolution // GEN_START_SPATIAL
        ):
            raise ConfigError(
                f"resolution {self.resolution} must be {GEN_START_SPATIAL} "
                "times a power of two"
            )
        if self.gen_doublings < 1:
            raise ConfigError(
                f"resolution {self.resolution} leaves no room for an upsampling "
                f"layer (must exceed {GEN_START_SPATIAL})"
            )
        if self.disc_layers < 1:
            raise ConfigError(
                f"resolution {self.resolution} leaves no room for a stride-2 "
                f"discriminator layer (must exceed {self.fused_spatial})"
            )

    @property
    def gen_doublings(self) -> int:
        """Number of spatial-doubling transposed convolutions in the generator."""
        return (self.resolution // GEN_START_SPATIAL).bit_length() - 1

    @property
    def disc_layers(self) -> int:
        """Number of stride-2 convolutions in the discriminator stack."""
        return (self.resolution // self.fused_spatial).bit_length() - 1

    @property
    def gen_start_maps(self) -> int:
        return 8 * self.gen_base_maps

    @property
    def fused_conv_maps(self) -> int:
        """Channels of the 1x1 convolution fusing image features with text
        (8 * disc_base_maps, which is 512 at the stock defaults)."""
        return 8 * self.disc_base_maps

    def gen_layer_maps(self) -> list[int]:
        """Output channels of each generator transposed convolution.

        The channel count halves at every doubling until the final layer
        emits 3 (RGB); at stock defaults this is [256, 128, 64, 3].
        """
        g = self.gen_doublings
        return [self.gen_start_maps // (2 ** i) for i in range(1, g)] + [3]

    def disc_layer_maps(self) -> list[int]:
        """Output channels of each stride-2 discriminator convolution.

        Doubles from the base until the final layer emits ``fused_maps``; at
        stock defaults this is [64, 128, 256, 384].
        """
        d = self.disc_layers
        return [self.disc_base_maps * (2 ** i) for i in range(d - 1)] + [
            self.fused_maps
        ]


def default_config(n_classes: int) -> ModelConfig:
    return ModelConfig(n_classes=n_classes)


def desk_config(n_classes: int, aux_dim: int = 0) -> ModelConfig:
    """Small CPU-scale preset: 32x32 images, 64-dim hashed text embeddings."""
    return ModelConfig(
        n_classes=n_classes,
        resolution=32,
        text_dim=64,
        text_latent_dim=32,
        noise_dim=32,
        gen_base_maps=8,
        disc_base_maps=8,
        aux_dim=aux_dim,
    )


def tiny_config(n_classes: int = 2, aux_dim: int = 0) -> ModelConfig:
    """Minimal preset used by the gradient-checking suite."""
    return ModelConfig(
        n_classes=n_classes,
        resolution=16,
        text_dim=16,
        text_latent_dim=8,
        noise_dim=8,
        gen_base_maps=4,
        disc_base_maps=4,
        aux_dim=aux_dim,
    )


@dataclass(frozen=True)
class RunConfig:
    """Everything a training/sampling run needs beyond the architecture."""

    model: ModelConfig
    dataset_root: str = ""
    encoder: str = "hashing"  # "hashing" or "table:<path>"
    encoder_seed: int = 0
    seed: int = 0
    batch_size: int = 64
    epochs: int = 100
    steps: int = 0  # 0 means derive from epochs
    checkpoint_every: int = 500
    checkpoint_dir: str = "checkpoints"
    log_path: str = "loss_log.tsv"

    def __post_init__(self):
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        for name in ("batch_size", "epochs", "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.encoder != "hashing" and not self.encoder.startswith("table:"):
            raise ConfigError(
                f"encoder must be 'hashing' or 'table:<path>', got {self.encoder!r}"
            )


# Keys accepted in config files / environment / CLI overrides, with parsers.
_MODEL_KEYS = {
    "n_classes": int,
    "resolution": int,
    "text_dim": int,
    "text_latent_dim": int,
    "noise_dim": int,
    "gen_base_maps": int,
    "disc_base_maps": int,
    "fused_spatial": int,
    "fused_maps": int,
    "aux_dim": int,
}
_RUN_KEYS = {
    "dataset_root": str,
    "encoder": str,
    "encoder_seed": int,
    "seed": int,
    "batch_size": int,
    "epochs": int,
    "steps": int,
    "checkpoint_every": int,
    "checkpoint_dir": str,
    "log_path": str,
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse flat ``key = value`` lines with ``#`` comments into a dict."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_config_file(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=path)


# Operational env vars that are not run-config overrides.
RESERVED_ENV = {"no_figures"}


def env_overrides(environ=None) -> dict[str, str]:
    """Collect ``TACGAN_<KEY>`` environment overrides (keys lower-cased)."""
    environ = os.environ if environ is None else environ
    out = {}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name not in RESERVED_ENV:
                out[name] = value
    return out


def build_run_config(
    file_values: dict[str, str] | None = None,
    env_values: dict[str, str] | None = None,
    flag_values: dict[str, str] | None = None,
) -> RunConfig:
    """Merge config sources (flags > env > file) into a validated RunConfig."""
    merged: dict[str, str] = {}
    for layer in (file_values or {}, env_values or {}, flag_values or {}):
        for k, v in layer.items():
            if v is not None:
                merged[str(k)] = str(v)

    model_kwargs = {}
    run_kwargs = {}
    for key, value in merged.items():
        if key in _MODEL_KEYS:
            parser = _MODEL_KEYS[key]
        elif key in _RUN_KEYS:
            parser = _RUN_KEYS[key]
        else:
            raise ConfigError(f"unknown config key: {key!r}")
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
        (model_kwargs if key in _MODEL_KEYS else run_kwargs)[key] = parsed

    if "n_classes" not in model_kwargs:
        raise ConfigError("config must define n_classes")
    model = ModelConfig(**model_kwargs)
    return RunConfig(model=model, **run_kwargs)


def config_to_kv(run: RunConfig) -> dict[str, str]:
    """Flatten a RunConfig back into the key/value form used by files and
    checkpoint headers."""
    out = {}
    for f in fields(ModelConfig):
        out[f.name] = str(getattr(run.model, f.name))
    for f in fields(RunConfig):
        if f.name == "model":
            continue
        out[f.name] = str(getattr(run, f.name))
    return out


def run_config_from_kv(kv: dict[str, str]) -> RunConfig:
    return build_run_config(file_values=kv)


def with_overrides(run: RunConfig, **kwargs) -> RunConfig:
    model_updates = {k: v for k, v in kwargs.items() if k in _MODEL_KEYS}
    run_updates = {k: v for k, v in kwargs.items() if k in _RUN_KEYS}
    unknown = set(kwargs) - set(model_updates) - set(run_updates)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    model = replace(run.model, **model_updates) if model_updates else run.model
    return replace(run, model=model, **run_updates)
