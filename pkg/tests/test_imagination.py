import numpy as np
import pytest
import torch
from PIL import Image

import core.imagination.trainer as trainer_module
from core.dataio import LabelBudget, label_random_subset
from core.errors import DivergenceError, RuleError, ShapeMismatchError, TraversalError
from core.imagination import (
    VaeModel,
    VaeTrainConfig,
    diagnose,
    encode,
    imagine,
    pick_references,
    save_grid_png,
    train_vae,
    traverse,
    traverse_table,
)
from core.imagination.trainer import CURVE_COLUMNS

QUICK = VaeTrainConfig(epochs=2, steps_per_epoch=3, batch_size=16, early_stop_patience=None, label_budget=40)


def _labels(dataset, n=40, seed=0):
    return label_random_subset(dataset, LabelBudget(n), seed=seed)


@pytest.fixture
def reacher_vae(reacher_dataset, tiny_nets):
    return train_vae(reacher_dataset, _labels(reacher_dataset), QUICK, seed=0, net_settings=tiny_nets)


@pytest.fixture
def gridpick_vae(gridpick_dataset, tiny_nets):
    config = QUICK.model_copy(update={"epochs": 1, "steps_per_epoch": 2})
    return train_vae(gridpick_dataset, _labels(gridpick_dataset, 30), config, seed=0, net_settings=tiny_nets)


class TestTraining:
    def test_loss_curve_and_meta(self, reacher_vae, reacher_dataset):
        curve = reacher_vae.loss_curve
        assert list(curve.columns) == list(CURVE_COLUMNS)
        assert curve["epoch"].tolist() == [1, 2]
        assert np.isfinite(curve[["total", "val_total"]].to_numpy()).all()
        meta = reacher_vae.training_meta
        assert meta["steps"] == 6
        assert meta["n_labelled"] == 40
        assert meta["n_observations"] == len(reacher_dataset)
        assert set(meta["validation_indices"]).isdisjoint(s.index for s in _labels(reacher_dataset))

    def test_same_seed_same_weights(self, reacher_dataset, tiny_nets, reacher_vae):
        again = train_vae(reacher_dataset, _labels(reacher_dataset), QUICK, seed=0, net_settings=tiny_nets)
        assert again.checksum() == reacher_vae.checksum()

    def test_temperature_is_annealed(self, reacher_vae):
        temperatures = reacher_vae.loss_curve["temperature"].tolist()
        assert temperatures[0] > temperatures[-1]
        assert reacher_vae.training_meta["temperature_end"] == pytest.approx(0.5)

    def test_needs_labels(self, reacher_dataset, tiny_nets):
        with pytest.raises(ShapeMismatchError):
            train_vae(reacher_dataset, [], QUICK, net_settings=tiny_nets)

    def test_tiny_dataset_cannot_be_split(self, reacher_dataset, tiny_nets):
        small = reacher_dataset.subset(np.arange(3))
        with pytest.raises(ShapeMismatchError):
            train_vae(small, _labels(small, 1), QUICK, net_settings=tiny_nets)

    def test_non_finite_loss_reports_the_batch(self, reacher_dataset, tiny_nets, monkeypatch):
        monkeypatch.setattr(
            trainer_module, "reconstruction_log_likelihood", lambda recon, target, kind: torch.tensor(float("nan"))
        )
        with pytest.raises(DivergenceError) as info:
            train_vae(reacher_dataset, _labels(reacher_dataset), QUICK, net_settings=tiny_nets)
        assert info.value.step == 0
        assert len(info.value.batch_indices) == QUICK.batch_size


class TestInference:
    def test_mean_encoding_is_deterministic(self, reacher_vae, reacher_dataset):
        x = reacher_dataset.get([0])[0]
        z1, p1 = encode(reacher_vae, x)
        z2, p2 = encode(reacher_vae, x)
        assert torch.equal(z1, z2) and torch.equal(p1, p2)
        assert z1.shape == (4,)
        assert float(p1.sum()) == pytest.approx(1.0, abs=1e-6)

    def test_sampled_encoding_follows_the_generator(self, reacher_vae, reacher_dataset):
        x = reacher_dataset.get([1, 2])
        a, _ = reacher_vae.encode(x, mode="sample", generator=torch.Generator().manual_seed(3))
        b, _ = reacher_vae.encode(x, mode="sample", generator=torch.Generator().manual_seed(3))
        assert torch.equal(a, b)
        with pytest.raises(ValueError):
            reacher_vae.encode(x, mode="mode")

    def test_batch_and_single_agree(self, reacher_vae, reacher_dataset):
        batch = reacher_dataset.get([0, 1, 2])
        z_batch, _ = reacher_vae.encode(batch)
        z_single, _ = reacher_vae.encode(batch[1])
        assert torch.allclose(z_batch[1], z_single, atol=1e-6)

    def test_imagine_shapes(self, reacher_vae, reacher_dataset):
        x = reacher_dataset.get([0])[0]
        assert imagine(reacher_vae, x, [1]).shape == (17,)
        assert reacher_vae.imagine(reacher_dataset.get([0, 1]), [2, 3]).shape == (2, 17)

    def test_imagine_validates_classes(self, reacher_vae, reacher_dataset):
        x = reacher_dataset.get([0])[0]
        with pytest.raises(RuleError):
            reacher_vae.imagine(x, [])
        with pytest.raises(RuleError):
            reacher_vae.imagine(x, [5])

    def test_wrong_observation_shape(self, reacher_vae):
        with pytest.raises(ShapeMismatchError):
            reacher_vae.encode(np.zeros(16, dtype=np.float32))

    def test_predicted_classes_are_one_based(self, reacher_vae, reacher_dataset):
        predicted = reacher_vae.predict_class(reacher_dataset.get(np.arange(20)))
        assert predicted.shape == (20,)
        assert set(predicted.tolist()) <= {1, 2, 3, 4}

    def test_store_round_trip(self, reacher_vae, reacher_dataset, store):
        store.put("reacher_vae", reacher_vae)
        store.cache.clear()
        loaded = store.get("reacher_vae")
        assert isinstance(loaded, VaeModel)
        assert loaded.checksum() == reacher_vae.checksum()
        assert list(loaded.loss_curve.columns) == list(reacher_vae.loss_curve.columns)
        assert np.allclose(loaded.loss_curve.to_numpy(dtype=float), reacher_vae.loss_curve.to_numpy(dtype=float))
        x = reacher_dataset.get([4])[0]
        assert np.allclose(loaded.imagine(x, [2]), reacher_vae.imagine(x, [2]))


class TestDiagnostics:
    def test_traversal_grid(self, gridpick_vae, gridpick_dataset, tmp_path):
        refs = gridpick_dataset.get([0, 1, 2])
        grid = traverse(gridpick_vae, refs, refs)
        assert grid.shape == (3, 3, 40, 40, 3)
        assert grid.min() >= 0.0 and grid.max() <= 1.0
        path = save_grid_png(grid, tmp_path / "grid.png", scale=1)
        with Image.open(path) as image:
            assert image.size == (3 * 42 + 2, 3 * 42 + 2)

    def test_feature_models_have_no_grid(self, reacher_vae, reacher_dataset):
        refs = reacher_dataset.get([0, 1])
        with pytest.raises(TraversalError):
            traverse(reacher_vae, refs, refs)
        table = traverse_table(reacher_vae, refs, reacher_dataset.get([0, 1, 2]))
        assert len(table) == 6
        assert {"row", "col", "col_class", "pred_class", "distance"} <= set(table.columns)

    def test_pick_references(self, reacher_vae, reacher_dataset):
        indices = np.arange(len(reacher_dataset))
        refs = pick_references(reacher_vae, reacher_dataset, indices)
        labels = reacher_dataset.oracle_labels[refs].tolist()
        assert labels == sorted(set(labels))

    def test_diagnose_reports_every_measure(self, gridpick_vae, gridpick_dataset):
        report = diagnose(gridpick_vae, gridpick_dataset, max_samples=16)
        assert set(report) == {
            "holdout_accuracy", "cycle_consistency", "z_stability", "hsic_init", "hsic_trained", "column_agreement",
        }
        assert 0.0 <= report["holdout_accuracy"] <= 1.0
        assert 0.0 <= report["cycle_consistency"] <= 1.0
        assert report["hsic_trained"] >= -1e-9
