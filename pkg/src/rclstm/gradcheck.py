"""Central finite-difference verification of the analytic network gradients."""

from dataclasses import dataclass

import numpy as np

from rclstm.neuralnet import RclstmNetworkParams, loss, network_backward, predict

ABS_THRESHOLD = 1e-8


@dataclass
class GradcheckReport:
    worst_relative_error: float
    worst_parameter: str
    num_parameters: int
    max_abs_gradient: float
    tolerance: float

    @property
    def passed(self):
        return self.worst_relative_error < self.tolerance


def numeric_gradient(net, contexts, targets, delta=1e-5):
    """Finite-difference gradient, one parameter at a time, using only the forward pass."""
    grads = []
    for array in net.arrays():
        g = np.zeros_like(array)
        flat, gflat = array.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + delta
            plus = loss(predict(net, contexts), targets)
            flat[j] = orig - delta
            minus = loss(predict(net, contexts), targets)
            flat[j] = orig
            gflat[j] = (plus - minus) / (2.0 * delta)
        grads.append(g)
    return grads


def relative_error(analytic, numeric, abs_threshold=ABS_THRESHOLD):
    """Elementwise relative error; pairs where both sides are below the threshold count as 0."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    return np.where(scale < abs_threshold, 0.0, err / np.maximum(scale, 1e-300))


def tiny_problem(seed=0, num_bins=4, layer1_units=2, layer2_units=4, context_len=3, batch=2,
                 zero_residual=False):
    """Random small network plus a batch whose targets lie inside (-1, 1)."""
    net = RclstmNetworkParams.initialize(num_bins, layer1_units, layer2_units, seed=seed)
    rng = np.random.default_rng(seed + 1)
    # Randomise biases too so every gradient entry is exercised.
    for a in net.arrays():
        a += rng.normal(0.0, 0.3, a.shape)
    contexts = rng.normal(size=(batch, context_len, num_bins)) + 1j * rng.normal(
        size=(batch, context_len, num_bins))
    if zero_residual:
        targets = predict(net, contexts)
    else:
        targets = rng.uniform(-0.9, 0.9, (batch, num_bins)) + 1j * rng.uniform(
            -0.9, 0.9, (batch, num_bins))
    return net, contexts, targets


def check_gradients(net, contexts, targets, delta=1e-5, tolerance=1e-4):
    _, analytic = network_backward(net, contexts, targets)
    numeric = numeric_gradient(net, contexts, targets, delta)
    worst, worst_name, max_abs = 0.0, "", 0.0
    for (name, a), n in zip(analytic.named_arrays(), numeric):
        rel = relative_error(a, n)
        max_abs = max(max_abs, float(np.max(np.abs(a))))
        if rel.size and rel.max() > worst:
            worst, worst_name = float(rel.max()), name
    return GradcheckReport(worst, worst_name, net.num_parameters, max_abs, tolerance)
