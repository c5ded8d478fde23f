import struct

import numpy as np
import pytest
import torch

from core.dataio import (
    FORMAT_VERSION,
    ArtifactStore,
    ArtifactStoreConfig,
    DatasetMeta,
    DatasetSink,
    LabelBudget,
    LabelSet,
    ObservationDataset,
    ParameterSet,
    collect,
    label_random_subset,
    load_artifact,
    producer_of,
    quantize_observation,
    read_container,
    save_artifact,
    write_container,
)
from core.dataio.cache_strategy import LRUCacheStrategy
from core.envs import ObservationKind, make_env
from core.errors import (
    ContainerChecksumError,
    ContainerFormatError,
    ContainerTruncatedError,
    ContainerVersionError,
    LabelBudgetError,
    MissingArtifactError,
)


@pytest.fixture
def container(tmp_path):
    path = tmp_path / "sample.mgik"
    sections = {
        "floats": np.arange(12, dtype=np.float32).reshape(3, 4),
        "labels": np.array([1, 2, 3, 4], dtype=np.int8),
        "pixels": np.full((2, 2, 3), 255, dtype=np.uint8),
    }
    write_container(path, sections, {"env_id": "gridpick", "n": 3})
    return path, sections


class TestContainer:
    def test_round_trip(self, container):
        path, sections = container
        loaded, meta, version = read_container(path)
        assert version == FORMAT_VERSION
        assert meta == {"env_id": "gridpick", "n": 3}
        assert set(loaded) == set(sections)
        for name, array in sections.items():
            assert loaded[name].dtype == array.dtype
            assert np.array_equal(loaded[name], array)

    def test_bad_magic(self, container):
        path, _ = container
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(ContainerFormatError):
            read_container(path)

    def test_truncated_payload(self, container):
        path, _ = container
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(ContainerTruncatedError):
            read_container(path)

    def test_truncated_header(self, container):
        path, _ = container
        path.write_bytes(path.read_bytes()[:6])
        with pytest.raises(ContainerTruncatedError):
            read_container(path)

    def test_flipped_byte_fails_checksum(self, container):
        path, _ = container
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ContainerChecksumError) as info:
            read_container(path)
        assert info.value.exit_code == 7

    def test_major_version_rejected(self, tmp_path):
        path = write_container(tmp_path / "v2.mgik", {"x": np.zeros(2, dtype=np.float32)}, {}, version=(2, 0))
        with pytest.raises(ContainerVersionError) as info:
            read_container(path)
        assert info.value.found == (2, 0)

    def test_minor_version_is_read(self, tmp_path):
        path = write_container(tmp_path / "v10.mgik", {"x": np.ones(2, dtype=np.float64)}, {"a": 1}, version=(1, 0))
        sections, meta, version = read_container(path)
        assert version == (1, 0)
        assert np.array_equal(sections["x"], np.ones(2))

    def test_version_field_layout(self, container):
        path, _ = container
        magic, packed, _ = struct.unpack_from("<4sHI", path.read_bytes(), 0)
        assert magic == b"MGIK"
        assert packed == (FORMAT_VERSION[0] << 8) | FORMAT_VERSION[1]

    def test_unsupported_dtype(self, tmp_path):
        with pytest.raises(ContainerFormatError):
            write_container(tmp_path / "c.mgik", {"c": np.zeros(2, dtype=np.complex64)}, {})

    # first table entry: name length at byte 10, "floats" at 12, code and ndim at 18, shape at 20
    def test_non_utf8_section_name(self, container):
        path, _ = container
        raw = bytearray(path.read_bytes())
        assert raw[12:18] == b"floats"
        raw[12] = 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ContainerFormatError) as info:
            read_container(path)
        assert info.value.exit_code == 5

    def test_shape_disagreeing_with_payload(self, container):
        path, _ = container
        raw = bytearray(path.read_bytes())
        assert struct.unpack_from("<BB2Q", raw, 18) == (1, 2, 3, 4)
        struct.pack_into("<Q", raw, 20, 5)
        path.write_bytes(bytes(raw))
        with pytest.raises(ContainerFormatError) as info:
            read_container(path)
        assert "floats" in str(info.value)


class TestDatasets:
    def test_pixel_observations_are_stored_as_uint8(self, gridpick_dataset):
        assert gridpick_dataset.observations.dtype == np.uint8
        assert gridpick_dataset.obs_shape == (40, 40, 3)
        batch = gridpick_dataset.get([0, 1])
        assert batch.dtype == np.float32 and batch.max() <= 1.0

    def test_feature_observations_stay_float(self, reacher_dataset):
        assert reacher_dataset.observations.dtype == np.float32
        assert reacher_dataset.obs_shape == (17,)

    def test_quantize_falls_back_for_off_palette_values(self):
        obs = np.full((2, 2, 3), 0.1234, dtype=np.float32)
        assert quantize_observation(obs, ObservationKind.PIXEL).dtype == np.float32

    def test_oracle_labels_match_environment(self, gridpick_dataset):
        assert set(np.unique(gridpick_dataset.oracle_labels)) <= {1, 2, 3, 4}
        assert len(gridpick_dataset) == 160
        assert gridpick_dataset.source_meta.policy_tag == "random"

    def test_collect_is_deterministic(self):
        a = collect(None, make_env("reacher"), n_steps=50, seed=2)
        b = collect(None, make_env("reacher"), n_steps=50, seed=2)
        assert np.array_equal(a.observations, b.observations)
        assert np.array_equal(a.episode_ids, b.episode_ids)

    def test_collect_rejects_empty_runs(self):
        with pytest.raises(ValueError):
            collect(None, make_env("gridpick"), n_steps=0, seed=0)

    def test_random_gridpick_data_covers_every_class(self):
        dataset = collect(None, make_env("gridpick"), n_steps=4000, seed=0)
        assert set(dataset.class_counts()) == {1, 2, 3, 4}

    def test_reservoir_caps_records(self):
        sink = DatasetSink(ObservationKind.FEATURE, max_records=10, seed=0)
        for i in range(100):
            sink.append(np.full(3, i, dtype=np.float32), 1, i // 10)
        dataset = sink.build("reacher", "reach_blue", "random", 0)
        assert len(dataset) == 10
        assert dataset.source_meta.n_collected == 100
        order = dataset.observations[:, 0]
        assert np.all(np.diff(order) > 0)

    def test_artifact_round_trip(self, tmp_path, reacher_dataset):
        path = save_artifact(reacher_dataset, tmp_path / "d.mgik")
        loaded = load_artifact(path, expected_kind="dataset")
        assert isinstance(loaded, ObservationDataset)
        assert np.array_equal(loaded.observations, reacher_dataset.observations)
        assert loaded.source_meta == reacher_dataset.source_meta

    def test_wrong_artifact_kind(self, tmp_path, reacher_dataset):
        path = save_artifact(reacher_dataset, tmp_path / "d.mgik")
        with pytest.raises(ContainerFormatError):
            load_artifact(path, expected_kind="labels")

    def test_summary_csv(self, tmp_path, gridpick_dataset):
        path = gridpick_dataset.write_summary_csv(tmp_path / "summary.csv")
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == "index,class,episode_id"


class TestLabels:
    def test_budget_is_enforced(self):
        budget = LabelBudget(max_labels=2)
        assert budget.reveal(5)
        assert not budget.reveal(5)
        assert budget.reveal(7)
        with pytest.raises(LabelBudgetError):
            budget.reveal(9)
        assert budget.spent == 2 and budget.remaining == 0

    def test_random_subset(self, gridpick_dataset):
        budget = LabelBudget(max_labels=30)
        samples = label_random_subset(gridpick_dataset, budget, seed=1)
        indices = [s.index for s in samples]
        assert len(samples) == 30 == len(set(indices))
        assert indices == sorted(indices)
        for sample in samples:
            assert sample.label == gridpick_dataset.oracle_labels[sample.index]

    def test_random_subset_is_seeded(self, gridpick_dataset):
        a = label_random_subset(gridpick_dataset, LabelBudget(20), seed=4)
        b = label_random_subset(gridpick_dataset, LabelBudget(20), seed=4)
        assert a == b

    def test_budget_larger_than_dataset(self, gridpick_dataset):
        with pytest.raises(LabelBudgetError):
            label_random_subset(gridpick_dataset, LabelBudget(len(gridpick_dataset) + 1), seed=0)

    def test_label_set_round_trip(self, tmp_path, gridpick_dataset):
        samples = label_random_subset(gridpick_dataset, LabelBudget(10), seed=0)
        path = save_artifact(LabelSet(samples, len(gridpick_dataset), 10), tmp_path / "l.mgik")
        loaded = load_artifact(path)
        assert loaded.samples == samples
        assert loaded.dataset_size == len(gridpick_dataset)
        assert loaded.n_collected == len(gridpick_dataset)

    def test_label_fraction_counts_every_collected_observation(self, tmp_path):
        dataset = collect(None, make_env("reacher"), n_steps=500, seed=1, max_records=100)
        assert len(dataset) == 100
        assert dataset.source_meta.n_collected == 500
        samples = label_random_subset(dataset, LabelBudget(20), seed=0)
        labels = LabelSet.for_dataset(samples, dataset, 20)
        assert labels.dataset_size == 100
        assert labels.label_fraction == pytest.approx(20 / 500)
        loaded = load_artifact(save_artifact(labels, tmp_path / "l.mgik"))
        assert loaded.n_collected == 500


class TestStore:
    def test_missing_artifact_names_the_producer(self, store):
        with pytest.raises(MissingArtifactError) as info:
            store.get("gridpick_dataset")
        assert str(info.value) == "Missing artifact 'gridpick_dataset', run collect first"
        assert info.value.exit_code == 3

    def test_put_get_and_checksum(self, store, reacher_dataset):
        checksum = store.put("reacher_dataset", reacher_dataset)
        assert store.exists("reacher_dataset")
        assert store.checksum("reacher_dataset") == checksum
        fresh = ArtifactStore(ArtifactStoreConfig(store.root))
        assert len(fresh.get("reacher_dataset")) == len(reacher_dataset)
        assert fresh.checksum("reacher_dataset") == checksum
        assert fresh.keys() == ["reacher_dataset"]

    def test_parameter_sets(self, store):
        params = ParameterSet({"net": {"w": torch.ones(2, 3), "b": torch.zeros(3, dtype=torch.float64)}}, {"tag": "x"})
        store.put("reacher_vae_params", params)
        store.cache.clear()
        loaded = store.get("reacher_vae_params")
        assert torch.equal(loaded.networks["net"]["w"], params.networks["net"]["w"])
        assert loaded.checksum() == params.checksum()
        assert loaded.meta == {"tag": "x"}

    def test_lru_eviction(self):
        cache = LRUCacheStrategy(2)
        cache.set("a", 1)
        cache.set("b", 2)
        assert cache.get("a") == 1
        cache.set("c", 3)
        assert cache.keys() == ["a", "c"]
        assert cache.get("b") is None
        assert cache.get_stats() == {"hits": 1, "misses": 1, "evictions": 1, "size": 2, "capacity": 2}
        disabled = LRUCacheStrategy(0)
        disabled.set("a", 1)
        assert disabled.get("a") is None

    @pytest.mark.parametrize("key, producer", [
        ("gridpick_source_policy", "train-sac"),
        ("reacher_labels", "label"),
        ("reacher_vae", "train-vae"),
        ("gridpick_finetune_target3", "finetune"),
        ("gridpick_unknown", None),
    ])
    def test_producer_of(self, key, producer):
        assert producer_of(key) == producer


def test_dataset_meta_rejects_extra_fields():
    with pytest.raises(Exception):
        DatasetMeta(env_id="gridpick", task_id="source", policy_tag="r", seed=0, obs_kind="pixel", colour="red")
