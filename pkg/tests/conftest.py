import os

import numpy as np
import pytest

from tacgan import SyntheticSpec, desk_config, generate_synthetic_dataset, load_dataset
from tacgan.checkpoint import TrainingState
from tacgan.config import RunConfig
from tacgan.network import init_params
from tacgan.optim import init_optimizer
from tacgan.text import HashingEncoder
from tacgan.training import run_training

# Keep CLI-invoked figure rendering out of the unit tests (the figure module
# has its own coverage); acceptance re-enables it where needed.
os.environ.setdefault("TACGAN_NO_FIGURES", "1")

ACCEPTANCE_SEED = 11


@pytest.fixture(scope="session")
def shapes_root(tmp_path_factory):
    """4-class synthetic shape dataset, 64 instances at 32x32."""
    root = tmp_path_factory.mktemp("shapes") / "ds"
    spec = SyntheticSpec(
        shapes=("circle", "square", "triangle", "cross"),
        colors=("red", "green", "blue", "yellow"),
        per_class=16,
        resolution=32,
        seed=ACCEPTANCE_SEED,
    )
    generate_synthetic_dataset(spec, str(root))
    return str(root)


@pytest.fixture(scope="session")
def shapes_dataset(shapes_root):
    return load_dataset(shapes_root, 32)


@pytest.fixture(scope="session")
def desk_encoder():
    return HashingEncoder(dim=64, seed=0)


def make_desk_state(shapes_root, seed=3, steps=30, batch_size=16, tmpdir=None):
    cfg = desk_config(n_classes=4)
    run = RunConfig(
        model=cfg,
        dataset_root=shapes_root,
        encoder="hashing",
        encoder_seed=0,
        seed=seed,
        batch_size=batch_size,
        steps=steps,
        checkpoint_every=10 ** 9,
        checkpoint_dir=str(tmpdir) if tmpdir else "",
        log_path="",
    )
    params = init_params(cfg, np.random.default_rng([seed, 9001]))
    return TrainingState(
        params=params,
        opt_d=init_optimizer(params.d),
        opt_g=init_optimizer(params.g),
        run=run,
        step=0,
    )


@pytest.fixture(scope="session")
def short_checkpoint(shapes_root, shapes_dataset, desk_encoder, tmp_path_factory):
    """A briefly trained state: enough for pipeline tests, not for quality."""
    state = make_desk_state(shapes_root, seed=3, steps=30, batch_size=16)
    final = run_training(state, shapes_dataset, desk_encoder, total_steps=30)
    ckpt_dir = tmp_path_factory.mktemp("short_ckpt")
    path = str(ckpt_dir / "short.ckpt")
    from tacgan.checkpoint import save_checkpoint

    save_checkpoint(path, final)
    return path
