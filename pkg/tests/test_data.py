import numpy as np
import pytest
from pydantic import ValidationError

from wbprune.classes.dataset import AugmentConfig, LabeledImageSet, class_counts, subset
from wbprune.datasets.augment import (
    augment, augment_parallel, channel_stats, minibatches, normalize, pad_crop_flip,
)
from wbprune.datasets.cifar import (
    cifar10_bytes, export_cifar10_dir, load_cifar10_binary, load_cifar10_dir, parse_cifar10_bytes,
    save_cifar10_binary,
)
from wbprune.datasets.synthetic import synth_blobs, synth_train_test
from wbprune.errors import ConfigError, DataFormatError
from wbprune.interface.config.constants import CIFAR_RECORD_BYTES, CIFAR_TEST_FILES, CIFAR_TRAIN_FILES


def _records(labels, rng):
    rows = [bytes([label]) + rng.integers(0, 256, size=CIFAR_RECORD_BYTES - 1, dtype=np.uint8).tobytes()
            for label in labels]
    return b"".join(rows)


class TestCifarBinary:
    def test_single_white_record(self):
        dataset = parse_cifar10_bytes(bytes([7]) + bytes([255]) * (CIFAR_RECORD_BYTES - 1))
        assert len(dataset) == 1
        assert dataset.labels.tolist() == [7]
        assert dataset.images.shape == (1, 3, 32, 32)
        assert np.all(dataset.images == 1.0)

    def test_channel_planar_layout(self):
        pixels = np.zeros((3, 32, 32), dtype=np.uint8)
        pixels[1] = 255
        dataset = parse_cifar10_bytes(bytes([0]) + pixels.tobytes())
        assert np.all(dataset.images[0, 0] == 0.0)
        assert np.all(dataset.images[0, 1] == 1.0)

    def test_empty_buffer_is_empty_set(self):
        dataset = parse_cifar10_bytes(b"", split="test")
        assert len(dataset) == 0
        assert dataset.split == "test"

    def test_reserialize_gives_identical_bytes(self, rng):
        buffer = _records([3, 0, 9, 5], rng)
        assert cifar10_bytes(parse_cifar10_bytes(buffer)) == buffer

    def test_truncated_record_reports_offset(self, rng):
        buffer = _records([1, 2], rng)[:-10]
        with pytest.raises(DataFormatError) as info:
            parse_cifar10_bytes(buffer)
        assert info.value.offset == CIFAR_RECORD_BYTES

    def test_bad_label_reports_offset(self, rng):
        buffer = _records([1, 2, 10], rng)
        with pytest.raises(DataFormatError) as info:
            parse_cifar10_bytes(buffer)
        assert info.value.offset == 2 * CIFAR_RECORD_BYTES
        assert "byte offset" in str(info.value)

    def test_file_round_trip(self, tmp_path, rng):
        buffer = _records([4, 4, 1], rng)
        path = tmp_path / "batch.bin"
        path.write_bytes(buffer)
        dataset = load_cifar10_binary(str(path))
        save_cifar10_binary(dataset, str(tmp_path / "copy" / "batch.bin"))
        assert (tmp_path / "copy" / "batch.bin").read_bytes() == buffer

    def test_load_directory(self, tmp_path, rng):
        for name in CIFAR_TRAIN_FILES:
            (tmp_path / name).write_bytes(_records([0, 1], rng))
        (tmp_path / CIFAR_TEST_FILES[0]).write_bytes(_records([9], rng))
        train, test = load_cifar10_dir(str(tmp_path))
        assert len(train) == 10 and len(test) == 1
        assert train.split == "train" and test.split == "test"

    def test_missing_directory_files(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_cifar10_dir(str(tmp_path))

    def test_loader_keeps_offset_and_names_file(self, tmp_path, rng):
        path = tmp_path / "batch.bin"
        path.write_bytes(_records([1, 12], rng))
        with pytest.raises(DataFormatError) as info:
            load_cifar10_binary(str(path))
        assert info.value.offset == CIFAR_RECORD_BYTES
        assert str(path) in str(info.value)
        assert str(info.value).count("byte offset") == 1
        assert isinstance(info.value.__cause__, DataFormatError)

    def test_export_directory_reads_back(self, tmp_path):
        train, test = synth_train_test(3, 4, 2, height=32, width=32, seed=1)
        paths = export_cifar10_dir(train, test, str(tmp_path))
        assert len(paths) == len(CIFAR_TRAIN_FILES) + 1
        loaded_train, loaded_test = load_cifar10_dir(str(tmp_path))
        np.testing.assert_array_equal(loaded_train.labels, train.labels)
        np.testing.assert_array_equal(loaded_test.labels, test.labels)
        np.testing.assert_allclose(loaded_train.images, train.images, atol=0.5 / 255 + 1e-6)

    def test_export_needs_cifar_shape(self, tmp_path):
        train, test = synth_train_test(3, 4, 2, height=8, width=8)
        with pytest.raises(DataFormatError):
            export_cifar10_dir(train, test, str(tmp_path))


class TestSyntheticBlobs:
    def test_same_seed_same_data(self):
        first = synth_blobs(3, 10, height=8, width=8, seed=4)
        second = synth_blobs(3, 10, height=8, width=8, seed=4)
        np.testing.assert_array_equal(first.images, second.images)
        np.testing.assert_array_equal(first.labels, second.labels)

    def test_different_seed_differs(self):
        assert not np.array_equal(synth_blobs(3, 10, seed=1).images, synth_blobs(3, 10, seed=2).images)

    def test_balanced_and_in_range(self):
        dataset = synth_blobs(4, 25, height=16, width=16)
        assert class_counts(dataset).tolist() == [25] * 4
        assert dataset.images.min() >= 0.0 and dataset.images.max() <= 1.0
        assert dataset.images.dtype == np.float32

    def test_splits_share_class_patterns(self):
        train, test = synth_train_test(3, 50, 50, height=16, width=16, seed=0)
        assert not np.array_equal(train.images[:5], test.images[:5])
        for label in range(3):
            train_mean = train.images[train.labels == label].mean(axis=0)
            test_mean = test.images[test.labels == label].mean(axis=0)
            assert np.abs(train_mean - test_mean).mean() < 0.05

    def test_classes_are_distinguishable(self):
        dataset = synth_blobs(2, 50, height=16, width=16)
        means = [dataset.images[dataset.labels == label].mean(axis=0) for label in (0, 1)]
        assert np.abs(means[0] - means[1]).max() > 0.1

    def test_needs_two_classes(self):
        with pytest.raises(ConfigError):
            synth_blobs(1, 10)


class TestAugmentation:
    def test_no_crop_no_flip_is_identity(self, rng):
        images = rng.uniform(size=(4, 3, 6, 6)).astype(np.float32)
        np.testing.assert_array_equal(pad_crop_flip(images, 0, 0.0, rng), images)
        config = AugmentConfig(pad_crop=0, hflip_prob=0.0, mean=[0.5] * 3, std=[0.25] * 3)
        np.testing.assert_allclose(augment(images, config, rng), (images - 0.5) / 0.25, rtol=1e-6)

    def test_certain_flip_reverses_columns(self, rng):
        images = np.arange(2 * 1 * 3 * 4, dtype=np.float32).reshape(2, 1, 3, 4)
        np.testing.assert_array_equal(pad_crop_flip(images, 0, 1.0, rng), images[..., ::-1])

    def test_crop_keeps_shape_and_mass_bound(self, rng):
        images = rng.uniform(size=(8, 3, 8, 8))
        out = pad_crop_flip(images, 2, 0.5, rng)
        assert out.shape == images.shape
        assert np.all(out.sum(axis=(1, 2, 3)) <= images.sum(axis=(1, 2, 3)) + 1e-9)

    def test_flip_conserves_mass(self, rng):
        images = rng.uniform(size=(6, 3, 5, 5))
        out = pad_crop_flip(images, 0, 0.5, rng)
        np.testing.assert_allclose(out.sum(axis=(1, 2, 3)), images.sum(axis=(1, 2, 3)))

    def test_thread_count_does_not_change_result(self):
        images = np.random.default_rng(0).uniform(size=(10, 3, 8, 8))
        config = AugmentConfig(pad_crop=2, hflip_prob=0.5)
        single = augment_parallel(images, config, np.random.default_rng(5), threads=1)
        pooled = augment_parallel(images, config, np.random.default_rng(5), threads=3)
        np.testing.assert_array_equal(single, pooled)

    def test_normalize_without_statistics(self, rng):
        images = rng.uniform(size=(2, 3, 4, 4))
        assert normalize(images, None, None) is images

    def test_statistics_per_channel(self):
        images = np.zeros((2, 2, 2, 2), dtype=np.float32)
        images[:, 1] = 0.5
        mean, std = channel_stats(LabeledImageSet(images=images, labels=np.array([0, 1]), num_classes=2))
        assert mean == [0.0, 0.5]
        assert std == [1.0, 1.0]

    def test_mean_without_std_rejected(self):
        with pytest.raises(ValidationError):
            AugmentConfig(mean=[0.5])


class TestBatching:
    def test_covers_every_index_once(self, rng):
        batches = list(minibatches(10, 3, rng))
        assert [len(b) for b in batches] == [3, 3, 3, 1]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))

    def test_unshuffled_order(self):
        assert np.concatenate(list(minibatches(5, 2, shuffle=False))).tolist() == [0, 1, 2, 3, 4]

    def test_bad_batch_size(self):
        with pytest.raises(ConfigError):
            list(minibatches(5, 0))


class TestLabeledImageSet:
    def test_rejects_out_of_range_pixels(self):
        with pytest.raises(ValidationError):
            LabeledImageSet(images=np.full((1, 1, 2, 2), 1.5), labels=np.array([0]), num_classes=2)

    def test_rejects_bad_labels(self):
        with pytest.raises(ValidationError):
            LabeledImageSet(images=np.zeros((1, 1, 2, 2)), labels=np.array([3]), num_classes=2)

    def test_subset(self):
        dataset = synth_blobs(2, 5, height=8, width=8)
        part = subset(dataset, np.array([0, 3]))
        assert len(part) == 2
        assert part.image_shape == (3, 8, 8)
