import numpy as np
import pytest

from tacgan import (
    Dataset,
    DatasetInstance,
    SyntheticSpec,
    generate_synthetic_dataset,
    load_dataset,
    sample_triplet,
)
from tacgan.dataset import bytes_to_unit, unit_to_bytes
from tacgan.errors import DataError


def make_instance(class_id, captions=("a thing",), res=16, fill=0.0):
    img = np.full((res, res, 3), fill, dtype=np.float32)
    return DatasetInstance(image=img, captions=tuple(captions), class_id=class_id)


def small_dataset(n_per_class=2, n_classes=3, res=16):
    instances = []
    for c in range(n_classes):
        for k in range(n_per_class):
            instances.append(
                make_instance(c, captions=(f"class {c} item {k}",), res=res, fill=c / 10)
            )
    return Dataset(instances=tuple(instances), n_classes=n_classes, resolution=res)


class TestPixelMapping:
    def test_byte_endpoints(self):
        arr = np.array([[[0, 128, 255]]], dtype=np.uint8)
        mapped = bytes_to_unit(arr)
        assert mapped[0, 0, 0] == -1.0
        assert mapped[0, 0, 2] == 1.0

    def test_roundtrip_all_bytes(self):
        arr = np.arange(256, dtype=np.uint8).reshape(16, 16, 1).repeat(3, axis=2)
        assert np.array_equal(unit_to_bytes(bytes_to_unit(arr)), arr)


class TestLoadDataset:
    def test_synthetic_roundtrip_counts(self, shapes_root, shapes_dataset):
        assert shapes_dataset.n_classes == 4
        assert len(shapes_dataset) == 64
        assert shapes_dataset.resolution == 32
        for inst in shapes_dataset.instances:
            assert inst.image.shape == (32, 32, 3)
            assert -1.0 <= inst.image.min() and inst.image.max() <= 1.0
            assert len(inst.captions) == 2

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError, match="manifest"):
            load_dataset(str(tmp_path / "nope"), 32)

    def test_single_class_rejected(self, tmp_path):
        spec = SyntheticSpec(shapes=("circle",), colors=("red",), per_class=1,
                             resolution=16, seed=0)
        generate_synthetic_dataset(spec, str(tmp_path / "one"))
        with pytest.raises(DataError, match="2 classes"):
            load_dataset(str(tmp_path / "one"), 16)

    def test_empty_caption_rejected(self, tmp_path, shapes_root):
        import shutil

        root = tmp_path / "bad"
        shutil.copytree(shapes_root, root)
        manifest = root / "manifest.tsv"
        lines = manifest.read_text().splitlines()
        lines[0] = lines[0].rsplit("\t", 1)[0] + "\t"
        manifest.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="empty caption"):
            load_dataset(str(root), 32)

    def test_manifest_order_preserved(self, shapes_root, shapes_dataset):
        import os

        with open(os.path.join(shapes_root, "manifest.tsv")) as fh:
            first_seen = []
            for line in fh:
                rel = line.split("\t")[0]
                if rel not in first_seen:
                    first_seen.append(rel)
        assert [inst.source for inst in shapes_dataset.instances] == first_seen

    def test_center_crop_non_square(self, tmp_path):
        from PIL import Image

        root = tmp_path / "rect"
        (root / "images").mkdir(parents=True)
        arr = np.zeros((16, 32, 3), dtype=np.uint8)
        arr[:, 8:24] = 200  # center band survives the crop
        Image.fromarray(arr).save(root / "images" / "a.png")
        Image.fromarray(arr[:, :16] * 0).save(root / "images" / "b.png")
        (root / "manifest.tsv").write_text(
            "images/a.png\t0\twide thing\nimages/b.png\t1\tdark thing\n"
        )
        ds = load_dataset(str(root), 16)
        assert ds.instances[0].image.shape == (16, 16, 3)
        assert ds.instances[0].image.min() > 0.5  # cropped to the bright band


class TestSampleTriplet:
    def test_deterministic(self, shapes_dataset):
        t1 = sample_triplet(shapes_dataset, np.random.default_rng(42))
        t2 = sample_triplet(shapes_dataset, np.random.default_rng(42))
        assert np.array_equal(t1.real_image, t2.real_image)
        assert np.array_equal(t1.wrong_image, t2.wrong_image)
        assert t1.caption == t2.caption
        assert np.array_equal(t1.real_class, t2.real_class)

    def test_wrong_class_always_differs(self, shapes_dataset):
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            t = sample_triplet(shapes_dataset, rng)
            assert int(np.argmax(t.real_class)) != int(np.argmax(t.wrong_class))

    def test_caption_choice_uniform(self):
        # One instance with 5 captions; chi-square-style bound on frequencies.
        five = make_instance(0, captions=tuple(f"cap {i}" for i in range(5)))
        other = make_instance(1, captions=("other",))
        ds = Dataset(instances=(five, other), n_classes=2, resolution=16)
        rng = np.random.default_rng(123)
        counts = np.zeros(5)
        hits = 0
        for _ in range(10_000):
            t = sample_triplet(ds, rng)
            if int(np.argmax(t.real_class)) == 0:
                counts[int(t.caption.split()[-1])] += 1
                hits += 1
        freqs = counts / hits
        assert np.all(np.abs(freqs - 0.2) <= 0.02), freqs
        chi2 = float(((counts - hits / 5) ** 2 / (hits / 5)).sum())
        assert chi2 < 9.488  # 95% quantile, 4 degrees of freedom


class TestSyntheticGenerator:
    def test_counts_from_spec(self, tmp_path):
        spec = SyntheticSpec(shapes=("circle", "square"), colors=("red", "blue"),
                             per_class=8, resolution=32, seed=7)
        summary = generate_synthetic_dataset(spec, str(tmp_path / "d"))
        assert summary["n_images"] == 16
        assert summary["n_classes"] == 2

    def test_byte_identical_outputs(self, tmp_path):
        spec = SyntheticSpec(shapes=("circle", "square"), colors=("red", "blue"),
                             per_class=4, resolution=32, seed=9)
        generate_synthetic_dataset(spec, str(tmp_path / "x"))
        generate_synthetic_dataset(spec, str(tmp_path / "y"))
        import filecmp

        cmp = filecmp.dircmp(tmp_path / "x", tmp_path / "y")
        assert not cmp.diff_files
        match, mismatch, errors = filecmp.cmpfiles(
            tmp_path / "x" / "images", tmp_path / "y" / "images",
            common=[p.name for p in (tmp_path / "x" / "images").iterdir()],
            shallow=False,
        )
        assert not mismatch and not errors

    def test_zero_per_class_rejected(self):
        with pytest.raises(DataError, match="per_class"):
            SyntheticSpec(per_class=0)

    def test_resolution_multiple_of_16(self):
        with pytest.raises(DataError, match="multiple of 16"):
            SyntheticSpec(resolution=24)

    def test_roundtrip_property_random_specs(self, tmp_path):
        # load(generate(spec)) succeeds with matching counts for random specs.
        rng = np.random.default_rng(2024)
        shapes_all = ("circle", "square", "triangle", "cross", "diamond", "ring")
        colors_all = ("red", "green", "blue", "yellow", "magenta", "cyan")
        for trial in range(8):
            n_shapes = int(rng.integers(2, 5))
            shapes = tuple(rng.choice(shapes_all, size=n_shapes, replace=False))
            colors = tuple(rng.choice(colors_all, size=int(rng.integers(1, 4)), replace=False))
            per_class = int(rng.integers(1, 5))
            res = int(rng.choice([16, 32, 48]))
            spec = SyntheticSpec(shapes=shapes, colors=colors, per_class=per_class,
                                 resolution=res, seed=int(rng.integers(10_000)))
            out = tmp_path / f"t{trial}"
            summary = generate_synthetic_dataset(spec, str(out))
            ds = load_dataset(str(out), res)
            assert len(ds) == summary["n_images"] == n_shapes * per_class
            assert ds.n_classes == n_shapes
