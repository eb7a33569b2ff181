import numpy as np
import pytest

from qcds.circuit import BoundCircuit
from qcds.design import Design, QubitDecision, random_design
from qcds.errors import ConfigurationError, LabelError
from qcds.grad import loss_and_gradient, output_jacobian, param_shift_gradient, softmax_nll

from oracles import dense_forward, finite_difference


def dense_loss(design, theta, X, y, n_measure):
    total = 0.0
    for x, lab in zip(X, y):
        f = dense_forward(design, theta, x, n_measure)
        total += -(f[lab] - np.log(np.sum(np.exp(f))))
    return total / len(y)


class TestSoftmaxNLL:
    def test_uniform(self):
        lv = softmax_nll([0.0, 0.0, 0.0], 0)
        assert np.allclose(lv.per_class_probs, 1 / 3)
        assert lv.value == pytest.approx(np.log(3))

    def test_shift_invariance(self):
        a = softmax_nll([1.0, -1.0, -1.0], 1)
        b = softmax_nll([0.0, -2.0, -2.0], 1)
        assert np.allclose(a.per_class_probs, b.per_class_probs, atol=1e-15)
        assert a.value == pytest.approx(b.value, abs=1e-14)

    def test_two_class_value(self):
        assert softmax_nll([1.0, -1.0], 0).value == pytest.approx(np.log1p(np.exp(-2.0)), abs=1e-15)
        assert np.log1p(np.exp(-2.0)) == pytest.approx(0.1269, abs=1e-4)

    def test_probs_valid(self):
        lv = softmax_nll(np.random.default_rng(0).normal(size=5), 2)
        assert abs(lv.per_class_probs.sum() - 1) < 1e-12
        assert np.all((lv.per_class_probs > 0) & (lv.per_class_probs < 1))

    @pytest.mark.parametrize("label", [-1, 3])
    def test_label_range(self, label):
        with pytest.raises(LabelError):
            softmax_nll([0.0, 0.0, 0.0], label)


class TestParamShift:
    def test_cosine(self):
        # Z-gate single cell with x = 0 gives f = cos(theta)
        d = Design(1, 1, ((QubitDecision(False, "RY", "Z"),),))
        for theta, want in ((0.0, 0.0), (np.pi / 2, -1.0), (1.0, -np.sin(1.0))):
            f, jac = output_jacobian(BoundCircuit(d, [theta], 1), np.zeros((1, 1)))
            assert f[0, 0] == pytest.approx(np.cos(theta), abs=1e-14)
            assert jac[0, 0, 0] == pytest.approx(want, abs=1e-14)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(3):
            d = random_design(rng, 4, 3)
            X = rng.uniform(0, np.pi, (4, 4))
            y = rng.integers(0, 3, 4)
            theta = rng.uniform(-np.pi, np.pi, d.n_params)
            circ = BoundCircuit(d, theta, 3)
            _, g = loss_and_gradient(circ, X, y)
            fd = finite_difference(lambda t: dense_loss(d, t, X, y, 3), theta)
            err = np.abs(g.ravel() - fd)
            tol = np.maximum(1e-6 * np.abs(fd), 1e-8)
            assert np.all(err < tol)

    def test_loss_matches_dense(self):
        rng = np.random.default_rng(1)
        d = random_design(rng, 3, 2)
        X = rng.uniform(0, np.pi, (5, 3))
        y = rng.integers(0, 2, 5)
        theta = rng.uniform(-1, 1, d.n_params)
        loss, _ = loss_and_gradient(BoundCircuit(d, theta, 2), X, y)
        assert loss == pytest.approx(dense_loss(d, theta, X, y, 2), abs=1e-12)

    def test_lightcone_zero(self):
        # single-qubit gates only: parameters on unmeasured qubits cannot matter
        rng = np.random.default_rng(2)
        cells = tuple(tuple(QubitDecision(bool(rng.integers(2)), ("RX", "RY", "RZ")[rng.integers(3)],
                                          ("H", "X", "Y", "Z")[rng.integers(4)]) for _ in range(4))
                      for _ in range(3))
        d = Design(4, 3, cells)
        circ = BoundCircuit(d, rng.uniform(-np.pi, np.pi, 12), 2)
        g = param_shift_gradient(circ, [(rng.uniform(0, np.pi, 4), 1), (rng.uniform(0, np.pi, 4), 0)])
        assert g.shape == (3, 4)
        assert np.max(np.abs(g[:, 2:])) < 1e-15
        assert np.max(np.abs(g[:, :2])) > 1e-3

    def test_zero_at_separable_minimum(self):
        # one class, one qubit: logits have a single entry so the loss is constant
        d = Design(1, 1, ((QubitDecision(False, "RY", "H"),),))
        g = param_shift_gradient(BoundCircuit(d, [0.7], 1), [(np.array([0.3]), 0)])
        assert g[0, 0] == 0.0

    def test_two_class_minimum_of_toy_problem(self):
        # two uncoupled qubits; class-0 logit minus class-1 logit is maximised
        # at theta = (x, x + pi) for a Z-gate cell, where the gradient vanishes
        cell = QubitDecision(False, "RY", "Z")
        d = Design(2, 1, ((cell, cell),))
        x = np.array([0.8, 0.8])
        g = param_shift_gradient(BoundCircuit(d, [0.8, 0.8 + np.pi], 2), [(x, 0)])
        assert np.allclose(g, 0.0, atol=1e-15)

    def test_batch_average(self):
        rng = np.random.default_rng(3)
        d = random_design(rng, 3, 2)
        c = BoundCircuit(d, rng.uniform(-1, 1, d.n_params), 2)
        batch = [(rng.uniform(0, np.pi, 3), int(rng.integers(2))) for _ in range(4)]
        g = param_shift_gradient(c, batch)
        single = [param_shift_gradient(c, [b]) for b in batch]
        assert np.allclose(g, np.mean(single, axis=0), atol=1e-15)

    def test_empty_batch(self):
        d = Design(1, 1, ((QubitDecision(False, "RY", "H"),),))
        with pytest.raises(ConfigurationError):
            param_shift_gradient(BoundCircuit(d, [0.0], 1), [])
