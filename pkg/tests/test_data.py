"""Tests für synthetische Daten, EVF1-Dateien, Tabellen und Aufteilung."""

import struct

import numpy as np
import pytest

from snnd.config import SynthConfig
from snnd.data import (
    EVF_MAGIC,
    Dataset,
    generate_synthetic,
    load_event_frames,
    load_table,
    rate_profiles,
    read_event_frames,
    split,
    write_event_frames,
)
from snnd.errors import ConfigError, DataError, FormatError


class TestSynthetic:
    def test_deterministic(self):
        cfg = SynthConfig(num_classes=3, features=8, timesteps=4, samples_per_class=5, seed=9)
        a, b = generate_synthetic(cfg), generate_synthetic(cfg)
        assert a.inputs.tobytes() == b.inputs.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_shape_and_binary(self, tiny_dataset):
        assert tiny_dataset.inputs.shape == (12, 3, 4)
        assert set(np.unique(tiny_dataset.inputs)) <= {0.0, 1.0}
        np.testing.assert_array_equal(np.bincount(tiny_dataset.labels), [4, 4, 4])

    def test_deterministic_rates_are_separable(self):
        cfg = SynthConfig(
            num_classes=4, features=10, timesteps=4, samples_per_class=6, rate_lo=0.0, rate_hi=1.0
        )
        ds = generate_synthetic(cfg)
        templates = rate_profiles(cfg).reshape(4, -1)
        flat = ds.inputs.reshape(len(ds), -1)
        distances = ((flat[:, None, :] - templates[None]) ** 2).sum(axis=-1)
        np.testing.assert_array_equal(distances.argmin(axis=1), ds.labels)

    def test_early_frames_share_features(self):
        cfg = SynthConfig(num_classes=3, features=40, timesteps=5, early_share=0.75, seed=2)
        profiles = rate_profiles(cfg)
        agree_first = (profiles[0, 0] == profiles[1, 0]).mean()
        agree_last = (profiles[0, -1] == profiles[1, -1]).mean()
        assert agree_first >= 0.75
        assert agree_first > agree_last

    def test_equal_rates_rejected(self):
        with pytest.raises(ConfigError):
            SynthConfig(rate_lo=0.3, rate_hi=0.3)


def _log_likelihoods(inputs: np.ndarray, profiles: np.ndarray) -> np.ndarray:
    """Bernoulli-Log-Likelihood je Beispiel, Klasse und Zeitschritt, [N, C, T]."""
    x = inputs.astype(np.float64)[:, None]
    rates = profiles.astype(np.float64)[None]
    return (x * np.log(rates) + (1.0 - x) * np.log(1.0 - rates)).sum(axis=-1)


class TestSyntheticOracle:
    """Analytischer Klassifikator mit bekannten Klassenprofilen."""

    @pytest.fixture(scope="class")
    def task(self):
        cfg = SynthConfig(
            num_classes=4, features=32, timesteps=5, samples_per_class=500, rate_lo=0.1, rate_hi=0.6
        )
        return generate_synthetic(cfg), rate_profiles(cfg)

    def test_single_frames_lose_to_full_sequence(self, task):
        ds, profiles = task
        ll = _log_likelihoods(ds.inputs, profiles)
        full = (ll.sum(axis=-1).argmax(axis=1) == ds.labels).mean()
        per_frame = [(ll[:, :, t].argmax(axis=1) == ds.labels).mean() for t in range(5)]
        assert max(per_frame) < full

    def test_shuffled_timesteps_lose_information(self, task):
        ds, profiles = task
        rng = np.random.default_rng(0)
        shuffled = np.stack([frames[rng.permutation(5)] for frames in ds.inputs])

        def accuracy(inputs):
            predicted = _log_likelihoods(inputs, profiles).sum(axis=-1).argmax(axis=1)
            return (predicted == ds.labels).mean()

        assert accuracy(shuffled) < accuracy(ds.inputs)


class TestEventFrames:
    def test_layout(self, tmp_path):
        frames = np.arange(2 * 3 * 1 * 2 * 2, dtype=np.float32).reshape(2, 3, 1, 2, 2)
        path = write_event_frames(tmp_path / "a.evf", frames, np.array([1, 0]))
        ds = load_event_frames(path)
        assert ds.inputs.shape == (2, 3, 4)
        np.testing.assert_array_equal(ds.labels, [1, 0])
        assert ds.num_classes == 2
        assert ds.inputs.max() == 1.0
        np.testing.assert_allclose(ds.inputs[1, 2], frames[1, 2].ravel() / frames.max(), rtol=1e-6)

    def test_round_trip_bitwise(self, tmp_path, rng):
        frames = rng.uniform(0, 5, size=(3, 2, 2, 3, 1)).astype(np.float32)
        labels = np.array([4, 0, 65535])
        path = write_event_frames(tmp_path / "b.evf", frames, labels)
        read_frames, read_labels = read_event_frames(path)
        assert read_frames.tobytes() == frames.tobytes()
        np.testing.assert_array_equal(read_labels, labels)
        assert not (tmp_path / "b.evf.tmp").exists()

    def test_truncated_payload(self, tmp_path):
        frames = np.zeros((2, 3, 1, 2, 2), dtype=np.float32)
        path = write_event_frames(tmp_path / "c.evf", frames, np.array([0, 1]))
        payload = path.read_bytes()
        path.write_bytes(payload[:-4])
        with pytest.raises(FormatError) as exc:
            read_event_frames(path)
        message = str(exc.value)
        assert str(len(payload)) in message
        assert str(len(payload) - 4) in message

    def test_bad_magic(self, tmp_path):
        header = struct.pack("<4sB5I", b"EVF2", 1, 0, 1, 1, 1, 1)
        path = tmp_path / "d.evf"
        path.write_bytes(header)
        with pytest.raises(FormatError) as exc:
            read_event_frames(path)
        assert exc.value.offset == 0

    def test_short_header(self, tmp_path):
        path = tmp_path / "e.evf"
        path.write_bytes(EVF_MAGIC)
        with pytest.raises(FormatError):
            read_event_frames(path)

    def test_negative_values_rejected(self, tmp_path):
        frames = -np.ones((1, 2, 1, 1, 1), dtype=np.float32)
        path = write_event_frames(tmp_path / "f.evf", frames, np.array([0]))
        with pytest.raises(DataError):
            load_event_frames(path)


class TestTable:
    def test_tiles_over_time(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("# label,x,y,z\n1,0.5,-1.0,2.0\n", encoding="utf-8")
        ds = load_table(path, timesteps=4, num_classes=2)
        assert ds.inputs.shape == (1, 4, 3)
        for t in range(4):
            np.testing.assert_array_equal(ds.inputs[0, t], [0.5, -1.0, 2.0])
        assert ds.input_bounds == (-1.0, 2.0)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("0,1.0,2.0\n1,abc,3.0\n", encoding="utf-8")
        with pytest.raises(FormatError) as exc:
            load_table(path, timesteps=2)
        assert exc.value.line == 2
        assert exc.value.column == 2
        assert "Zeile 2" in str(exc.value)
        assert "Spalte 2" in str(exc.value)

    def test_ragged_rows(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("0,1.0,2.0\n1,3.0\n", encoding="utf-8")
        with pytest.raises(FormatError) as exc:
            load_table(path, timesteps=2)
        assert exc.value.line == 2

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("0,1.0\n3,2.0\n", encoding="utf-8")
        with pytest.raises(DataError):
            load_table(path, timesteps=2, num_classes=3)

    def test_empty(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("# nur Kommentar\n\n", encoding="utf-8")
        with pytest.raises(DataError):
            load_table(path, timesteps=2)


class TestSplit:
    def _dataset(self, n: int) -> Dataset:
        return Dataset(np.zeros((n, 2, 1)), np.arange(n) % 2, 2, (0.0, 1.0))

    def test_sizes_and_disjoint(self):
        ds = self._dataset(100)
        ds.inputs[:, 0, 0] = np.arange(100) / 100
        train, test = split(ds, 0.9, seed=3)
        assert (len(train), len(test)) == (90, 10)
        ids = np.concatenate([train.inputs[:, 0, 0], test.inputs[:, 0, 0]])
        assert len(np.unique(ids)) == 100

    def test_deterministic(self):
        ds = self._dataset(20)
        ds.inputs[:, 0, 0] = np.arange(20) / 20
        a, _ = split(ds, 0.5, seed=1)
        b, _ = split(ds, 0.5, seed=1)
        np.testing.assert_array_equal(a.inputs, b.inputs)

    def test_empty_side(self):
        with pytest.raises(ConfigError):
            split(self._dataset(3), 0.9, seed=0)


class TestBatches:
    def test_partial_last_batch(self, tiny_dataset):
        sizes = [labels.shape[0] for _, labels in tiny_dataset.batches(5)]
        assert sizes == [5, 5, 2]
        inputs, _ = next(tiny_dataset.batches(5))
        assert inputs.shape == (3, 5, 4)

    def test_labels_checked(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 2, 1)), np.array([0, 2]), 2, (0.0, 1.0))
