"""
Tests for the MLP surrogates and the table backend
"""

import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.circuit_sim import ClippingRectifier, Dataset, ResponderMixin, generate_dataset, \
    reference_circuit
from core.error_handler import ConfigValidationError, DomainError, TrainingError
from core.surrogate import (
    MlpModel,
    SurrogateResponder,
    SurrogateTarget,
    TrainConfig,
    build_table_dataset,
    mape,
    predict,
    table_backend,
    train,
)


class BilinearResponder(ResponderMixin):
    """Responder whose outputs are reproduced exactly by bilinear interpolation."""

    def respond(self, v, r_e):
        v = np.asarray(v, dtype=np.float64)
        r_e = np.asarray(r_e, dtype=np.float64)
        return 0.5 * v + 2.0 * r_e, v * r_e + r_e


def clipping_dataset(n: int, seed: int = 0) -> Dataset:
    clip = ClippingRectifier.from_spec(reference_circuit())
    return generate_dataset(clip, n, 0.01, 1.2, seed=seed)


class TestMape:
    """Test the loss metric"""

    def test_percent(self):
        """Test MAPE in percent"""
        assert mape(np.array([1.1, 1.8]), np.array([1.0, 2.0])) == pytest.approx(10.0)

    def test_floor(self):
        """Test that zero targets use the floor as denominator"""
        assert mape(np.array([1e-9]), np.array([0.0]), floor=1e-9) == pytest.approx(100.0)


class TestTrainConfig:
    """Test hyperparameter validation"""

    def test_defaults(self):
        """Test the reference hyperparameters"""
        config = TrainConfig()
        assert config.hidden_layers == 5
        assert config.hidden_width == 15

    def test_invalid(self):
        """Test rejection of bad values"""
        with pytest.raises(DomainError):
            TrainConfig(epochs=0)
        with pytest.raises(DomainError):
            TrainConfig(learning_rate=-1.0)
        with pytest.raises(DomainError):
            TrainConfig(validation_fraction=1.0)


class TestTraining:
    """Test cases for surrogate training"""

    def setup_method(self):
        """Setup a small clipping-rectifier dataset"""
        self.temp_dir = tempfile.mkdtemp()
        data = clipping_dataset(600)
        self.train_set, self.val_set = data.split([480, 120])
        self.config = TrainConfig(epochs=15, batch_size=32, hidden_layers=2, hidden_width=10,
                                  seed=3)

    def teardown_method(self):
        """Cleanup after each test method"""
        if hasattr(self, 'temp_dir') and Path(self.temp_dir).exists():
            shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_validation_error_improves(self):
        """Test that the kept model beats the first epoch"""
        _, report = train(self.train_set, SurrogateTarget.FINAL_VOLTAGE, self.config,
                          self.val_set)
        assert len(report.validation_mape) == 15
        assert report.best_validation_mape <= report.validation_mape[0]
        accepted = [value for _, value in report.best_sequence]
        assert accepted == sorted(accepted, reverse=True)

    def test_returns_best_epoch_model(self):
        """Test that the returned model reproduces the best validation MAPE"""
        model, report = train(self.train_set, SurrogateTarget.AVERAGE_POWER, self.config,
                              self.val_set)
        value = mape(predict(model, self.val_set.v_init, self.val_set.r_e), self.val_set.power)
        assert value == pytest.approx(report.best_validation_mape, rel=1e-9)

    def test_deterministic(self):
        """Test that a fixed seed gives identical weights"""
        first, _ = train(self.train_set, SurrogateTarget.FINAL_VOLTAGE, self.config,
                         self.val_set)
        second, _ = train(self.train_set, SurrogateTarget.FINAL_VOLTAGE, self.config,
                          self.val_set)
        for a, b in zip(first.weights, second.weights):
            assert np.array_equal(a, b)

    def test_holdout_split_when_no_validation(self):
        """Test the automatic validation split"""
        _, report = train(self.train_set, SurrogateTarget.FINAL_VOLTAGE,
                          TrainConfig(epochs=2, hidden_layers=1, hidden_width=4))
        assert len(report.train_mape) == 2

    def test_output_range(self):
        """Test that predictions stay within [0, output_scale]"""
        model, _ = train(self.train_set, SurrogateTarget.FINAL_VOLTAGE, self.config,
                         self.val_set)
        out = predict(model, np.linspace(-5.0, 5.0, 40), np.linspace(-1.0, 1.0, 40))
        assert np.all(out >= 0.0)
        assert np.all(out <= model.output_scale)
        assert model.lipschitz_bound() > 0

    def test_diverging_loss_raises(self):
        """Test that non-finite losses stop training"""
        bad = Dataset(self.train_set.power.copy(), self.train_set.final_voltage.copy(),
                      self.train_set.v_init, self.train_set.r_e)
        bad.final_voltage[0] = np.nan
        with pytest.raises(TrainingError):
            train(bad, SurrogateTarget.FINAL_VOLTAGE,
                  TrainConfig(epochs=2, hidden_layers=1, hidden_width=4, output_scale=2.0),
                  self.val_set)

    def test_save_and_load(self):
        """Test model persistence"""
        model, _ = train(self.train_set, SurrogateTarget.FINAL_VOLTAGE, self.config,
                         self.val_set)
        path = Path(self.temp_dir) / "model.json"
        assert model.save(path)
        loaded = MlpModel.load(path)
        v, r = self.val_set.v_init, self.val_set.r_e
        assert np.allclose(loaded.predict(v, r), model.predict(v, r), rtol=1e-12)
        assert loaded.target == SurrogateTarget.FINAL_VOLTAGE

    def test_rejects_unknown_version(self):
        """Test the format version check"""
        model, _ = train(self.train_set, SurrogateTarget.FINAL_VOLTAGE,
                         TrainConfig(epochs=1, hidden_layers=1, hidden_width=4), self.val_set)
        data = model.to_dict()
        data["format_version"] = 99
        with pytest.raises(ConfigValidationError):
            MlpModel.from_dict(data)

    def test_surrogate_responder(self):
        """Test the responder pair interface"""
        v_model, _ = train(self.train_set, SurrogateTarget.FINAL_VOLTAGE,
                           TrainConfig(epochs=1, hidden_layers=1, hidden_width=4), self.val_set)
        p_model, _ = train(self.train_set, SurrogateTarget.AVERAGE_POWER,
                           TrainConfig(epochs=1, hidden_layers=1, hidden_width=4), self.val_set)
        responder = SurrogateResponder(v_model, p_model)
        final, power = responder.respond(np.array([0.1, 0.2]), np.array([0.001, 0.002]))
        assert final.shape == (2,) and power.shape == (2,)
        assert np.allclose(responder.average_power(np.array([0.1]), np.array([0.001])),
                           power[:1])

    @pytest.mark.slow
    def test_reaches_low_error(self):
        """Test that a full-size network fits the clipping rectifier closely"""
        data = clipping_dataset(3000, seed=1)
        train_set, val_set = data.split([2500, 500])
        model, report = train(train_set, SurrogateTarget.FINAL_VOLTAGE,
                              TrainConfig(epochs=300), val_set)
        assert report.best_validation_mape < 10.0


class TestTableBackend:
    """Test cases for the tabulated responder"""

    def test_exact_on_bilinear_function(self):
        """Test that bilinear data is reproduced between nodes"""
        grid = build_table_dataset(BilinearResponder(), 1.0, 0.01, 5, 4)
        table = table_backend(grid)
        v = np.array([0.13, 0.77])
        r = np.array([0.0041, 0.0093])
        final, power = table.respond(v, r)
        exp_final, exp_power = BilinearResponder().respond(v, r)
        assert np.allclose(final, exp_final)
        assert np.allclose(power, exp_power)
        assert table.diagnostics.clamped == 0

    def test_clamps_outside_queries(self):
        """Test clamping to the grid hull"""
        table = table_backend(build_table_dataset(BilinearResponder(), 1.0, 0.01, 3, 3))
        final, _ = table.respond(np.array([2.0]), np.array([0.005]))
        expected, _ = BilinearResponder().respond(np.array([1.0]), np.array([0.005]))
        assert final[0] == pytest.approx(expected[0])
        assert table.diagnostics.clamped == 1

    def test_counts_concurrent_queries(self):
        """Test that clamp counters stay exact under worker threads"""
        table = table_backend(build_table_dataset(BilinearResponder(), 1.0, 0.01, 3, 3))
        v = np.array([0.5, 2.0, -1.0, 0.2])
        r = np.full(4, 0.005)
        with ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(lambda _: table.respond(v, r), range(400)))
        assert table.diagnostics.total == 1600
        assert table.diagnostics.clamped == 800

    def test_requires_rectangular_grid(self):
        """Test rejection of scattered tuples"""
        with pytest.raises(DomainError):
            table_backend(clipping_dataset(10))
        with pytest.raises(DomainError):
            build_table_dataset(BilinearResponder(), 1.0, 0.01, 1, 3)


class TestNetworkSize:
    """Test how validation error responds to network width and depth"""

    @pytest.mark.slow
    def test_error_saturates_with_size(self):
        """Test that growing the network helps less once it is wide and deep enough"""
        data = clipping_dataset(1500, seed=2)
        train_set, val_set = data.split([1200, 300])
        errors = []
        for layers, width in ((1, 2), (2, 8), (3, 15)):
            _, report = train(train_set, SurrogateTarget.FINAL_VOLTAGE,
                              TrainConfig(epochs=80, hidden_layers=layers, hidden_width=width,
                                          seed=5), val_set)
            errors.append(report.best_validation_mape)
        small, medium, large = errors
        assert medium < small
        assert medium - large <= max(small - medium, 1.0)
