import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvforecast import ann
from pvforecast.ann import (
    MAX_CYCLES,
    TARGET_REACHED,
    VALIDATION_STOP,
    Topology,
    TrainConfig,
    backprop,
    forward,
    gradient_check,
    init_weights,
    load_model,
    parse_topology,
    predict_ann,
    save_model,
    train,
)
from pvforecast.core import DataMatrix
from pvforecast.errors import PipelineError
from pvforecast.stats import MinMaxScaler, fit_scaler, rmse, transform

XOR = DataMatrix([[0, 0], [0, 1], [1, 0], [1, 1]], [0, 1, 1, 0], ("a", "b"))


def random_model(spec, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    m = init_weights(parse_topology(spec), seed)
    m.weights = [rng.uniform(-scale, scale, w.shape) for w in m.weights]
    m.biases = [rng.uniform(-scale, scale, b.shape) for b in m.biases]
    return m


class TestTopology:
    @pytest.mark.parametrize("text, sizes", [("3:3:1", (3, 3, 1)), ("9:4:3:1", (9, 4, 3, 1))])
    def test_parse(self, text, sizes):
        t = parse_topology(text)
        assert t.sizes == sizes and str(t) == text

    @pytest.mark.parametrize("text", ["3::1", "0:3:1", "3", "", "a:1", "3:3:2", "-1:2:1"])
    def test_malformed(self, text):
        with pytest.raises(PipelineError) as e:
            parse_topology(text)
        assert e.value.code == "MALFORMED_TOPOLOGY"


class TestInitAndForward:
    def test_deterministic(self):
        a, b = init_weights(Topology((3, 3, 1)), 9), init_weights(Topology((3, 3, 1)), 9)
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    def test_shapes_and_range(self):
        m = init_weights(Topology((3, 3, 1)), 0)
        assert [w.shape for w in m.weights] == [(3, 3), (3, 1)]
        assert [b.shape for b in m.biases] == [(3,), (1,)]
        assert all(np.all(np.abs(w) <= 0.5) for w in m.weights)

    def test_zero_network_outputs_half(self):
        m = init_weights(Topology((2, 4, 1)), 0)
        m.weights = [np.zeros_like(w) for w in m.weights]
        np.testing.assert_array_equal(forward(m, np.random.default_rng(0).random((5, 2))), 0.5)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
    def test_single_neuron(self, w, b, x):
        m = init_weights(Topology((1, 1)), 0)
        m.weights, m.biases = [np.array([[w]])], [np.array([b])]
        assert forward(m, [x])[0] == pytest.approx(1 / (1 + math.exp(-(w * x + b))), rel=1e-14)

    def test_wrong_input_width(self):
        with pytest.raises(PipelineError) as e:
            forward(init_weights(Topology((3, 2, 1)), 0), [0.1, 0.2])
        assert e.value.code == "SHAPE_MISMATCH"


class TestGradients:
    @pytest.mark.parametrize("spec", ["3:3:1", "2:8:1", "9:4:3:1"])
    def test_random_model(self, spec):
        m = random_model(spec, 5)
        x = np.random.default_rng(6).random(m.topology.n_inputs)
        assert gradient_check(m, x, [0.3], 1e-5) < 1e-6

    def test_zero_weights(self):
        m = init_weights(Topology((3, 3, 1)), 0)
        m.weights = [np.zeros_like(w) for w in m.weights]
        assert gradient_check(m, [0.2, 0.5, 0.9], [0.7], 1e-5) < 1e-6

    def test_kernel_step_matches_backprop(self):
        """A single momentum-free SGD step in the compiled kernel equals theta - lr * grad."""
        m = random_model("3:4:2:1", 11)
        x = np.array([[0.1, 0.7, 0.4]])
        y = np.array([[0.6]])
        gw, gb = backprop(m, x[0], y[0])
        theta = ann._pack(m)
        expected = theta - 0.05 * np.concatenate(
            [p for w, b in zip(gw, gb) for p in (w.ravel(), b)]
        )
        sizes = np.array(m.topology.sizes, dtype=np.int64)
        ann._sgd_epoch(theta, np.zeros_like(theta), sizes, x, y, np.array([0]), 0.05, 0.0)
        np.testing.assert_allclose(theta, expected, rtol=1e-13, atol=1e-16)


class TestTrain:
    def test_xor(self):
        m = train(init_weights(Topology((2, 3, 1)), 0), XOR, None, TrainConfig(seed=0))
        assert m.history.train_error[-1] < 0.1
        assert m.cycles <= 5000

    def test_loose_target_stops_after_one_cycle(self):
        m = train(init_weights(Topology((2, 3, 1)), 0), XOR, None,
                  TrainConfig(target_error=1e9))
        assert m.cycles == 1 and m.stop_reason == TARGET_REACHED

    def test_loss_descends_on_identity(self):
        x = np.linspace(0.05, 0.95, 40)
        data = DataMatrix(x, x, ("x",))
        m = train(init_weights(Topology((1, 2, 1)), 3), data, None,
                  TrainConfig(max_cycles=10, target_error=1e-9, learning_rate=0.05, seed=3))
        err = np.array(m.history.train_error)
        assert m.stop_reason == MAX_CYCLES
        # Per-sample updates wobble; allow small rises but demand net progress.
        assert np.all(np.diff(err) < 1e-3)
        assert err[-1] < err[0]

    def test_input_model_untouched(self):
        m0 = init_weights(Topology((2, 3, 1)), 0)
        before = [w.copy() for w in m0.weights]
        train(m0, XOR, None, TrainConfig(max_cycles=5))
        assert all(np.array_equal(a, b) for a, b in zip(before, m0.weights))
        assert not m0.trained

    def test_deterministic(self):
        cfg = TrainConfig(max_cycles=50, seed=4)
        a = train(init_weights(Topology((2, 3, 1)), 1), XOR, None, cfg)
        b = train(init_weights(Topology((2, 3, 1)), 1), XOR, None, cfg)
        assert a.history.train_error == b.history.train_error

    def test_rejects_unnormalized(self):
        raw = DataMatrix([[0, 0], [0, 50]], [0, 1], ("a", "b"))
        with pytest.raises(PipelineError) as e:
            train(init_weights(Topology((2, 3, 1)), 0), raw, None, TrainConfig())
        assert e.value.code == "UNNORMALIZED_INPUT"

    def test_validation_patience(self):
        rng = np.random.default_rng(0)
        x = rng.random((60, 2))
        noise_train = DataMatrix(x, rng.random(60), ("a", "b"))
        val = DataMatrix(rng.random((30, 2)), rng.random(30), ("a", "b"))
        cfg = TrainConfig(max_cycles=5000, target_error=1e-6, validation_check_every=5,
                          validation_patience=3, seed=1)
        m = train(init_weights(Topology((2, 8, 1)), 0), noise_train, val, cfg)
        assert m.stop_reason == VALIDATION_STOP
        assert len(m.history.validation) >= 4
        best = min(v for _, v in m.history.validation)
        assert rmse(forward(m, val.features).reshape(-1), val.target) == pytest.approx(best)

    def test_max_residual_metric(self):
        cfg = TrainConfig(error_metric="max", target_error=0.2, seed=0)
        m = train(init_weights(Topology((2, 3, 1)), 0), XOR, None, cfg)
        out = forward(m, XOR.features).reshape(-1)
        assert np.max(np.abs(out - XOR.target)) <= 0.2

    @pytest.mark.parametrize("kwargs", [
        {"max_cycles": 0}, {"target_error": 0.0}, {"momentum": 1.0}, {"error_metric": "mae"},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(PipelineError) as e:
            TrainConfig(**kwargs)
        assert e.value.code == "INVALID_CONFIG"


class TestPredictAndPersist:
    def _fitted(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 100, (200, 2))
        raw = DataMatrix(x, 3 * x[:, 0] + x[:, 1] + 10, ("a", "b"))
        scaler = fit_scaler(raw)
        m = train(init_weights(Topology((2, 4, 1)), 0), transform(scaler, raw), None,
                  TrainConfig(max_cycles=300, target_error=0.02, seed=0))
        return m, scaler, raw

    def test_not_trained(self):
        with pytest.raises(PipelineError) as e:
            predict_ann(init_weights(Topology((1, 1)), 0), DataMatrix([1.0], [1.0], ("a",)),
                        MinMaxScaler(("a", "power"), [0, 0], [1, 1]))
        assert e.value.code == "NOT_TRAINED"

    def test_constant_output_model(self):
        m = init_weights(Topology((1, 2, 1)), 0)
        m.weights = [np.zeros_like(w) for w in m.weights]
        m.stop_reason = MAX_CYCLES
        scaler = MinMaxScaler(("a", "power"), [0.0, 10.0], [1.0, 30.0])
        out = predict_ann(m, DataMatrix([[0.2], [0.9]], [0, 0], ("a",)), scaler)
        assert out.tolist() == [20.0, 20.0]

    def test_training_rows_self_consistent(self):
        m, scaler, raw = self._fitted()
        pred = scaler.scale_column("power", predict_ann(m, raw, scaler))
        final = m.history.train_error[-1]
        assert rmse(pred, scaler.scale_column("power", raw.target)) == pytest.approx(final, rel=1e-9)

    def test_save_load_round_trip(self, tmp_path):
        m, scaler, raw = self._fitted()
        save_model(m, tmp_path / "m.txt", scaler)
        m2, s2 = load_model(tmp_path / "m.txt")
        assert m2.topology == m.topology and m2.stop_reason == m.stop_reason
        assert all(np.array_equal(a, b) for a, b in zip(m.weights, m2.weights))
        assert all(np.array_equal(a, b) for a, b in zip(m.biases, m2.biases))
        assert s2.columns == scaler.columns and np.array_equal(s2.maxs, scaler.maxs)
        np.testing.assert_array_equal(predict_ann(m2, raw, s2), predict_ann(m, raw, scaler))

    def test_load_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.txt").write_text("hello\n")
        with pytest.raises(PipelineError) as e:
            load_model(tmp_path / "x.txt")
        assert e.value.code == "PARSE_ERROR"

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.integers(0, 1000))
    def test_save_load_any_topology(self, tmp_path_factory, hidden, seed):
        m = random_model(":".join(map(str, hidden + [1])), seed, scale=3.0)
        m.stop_reason = MAX_CYCLES
        path = tmp_path_factory.mktemp("m") / "m.txt"
        save_model(m, path)
        m2, s2 = load_model(path)
        assert s2 is None
        assert all(np.array_equal(a, b) for a, b in zip(m.weights, m2.weights))
