"""Realisation of a complex-valued LSTM (RCLSTM) network in numpy.

Each RCLSTM layer owns two real LSTMs ``f1`` and ``f2`` and combines their outputs
like a complex product::

    H_r = f1(Z_r) - f2(Z_i)
    H_i = f2(Z_r) + f1(Z_i)

The network stacks two such layers (the second returns only its last time step)
and a complex-coupled dense layer with a componentwise tanh, producing a bounded
complex mask for the centre frame of a context window. Gradients are computed by
hand through the fully unrolled graph; all arithmetic is float64.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from rclstm.errors import ConfigurationError, InputError, NumericalError

log = logging.getLogger(__name__)

FORGET_BIAS = 1.0


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass
class LstmCellParams:
    """Weights of one real LSTM; gate blocks are ordered input, forget, candidate, output."""

    input_weights: np.ndarray      # (4Q, P)
    recurrent_weights: np.ndarray  # (4Q, Q)
    bias: np.ndarray               # (4Q,)

    def __post_init__(self):
        q4, p = self.input_weights.shape
        q = q4 // 4
        if q4 % 4 or self.recurrent_weights.shape != (q4, q) or self.bias.shape != (q4,):
            raise ConfigurationError(
                "inconsistent LSTM shapes: "
                f"W={self.input_weights.shape} U={self.recurrent_weights.shape} b={self.bias.shape}"
            )

    @property
    def input_dim(self):
        return self.input_weights.shape[1]

    @property
    def hidden_dim(self):
        return self.recurrent_weights.shape[1]

    def arrays(self):
        return [self.input_weights, self.recurrent_weights, self.bias]

    @classmethod
    def zeros(cls, input_dim, hidden_dim):
        q4 = 4 * hidden_dim
        return cls(np.zeros((q4, input_dim)), np.zeros((q4, hidden_dim)), np.zeros(q4))

    @classmethod
    def initialize(cls, rng, input_dim, hidden_dim):
        q4 = 4 * hidden_dim
        w = rng.uniform(-1.0, 1.0, (q4, input_dim)) / np.sqrt(input_dim)
        u = rng.uniform(-1.0, 1.0, (q4, hidden_dim)) / np.sqrt(hidden_dim)
        b = np.zeros(q4)
        b[hidden_dim:2 * hidden_dim] = FORGET_BIAS
        return cls(w, u, b)


@dataclass
class RclstmLayerParams:
    f1: LstmCellParams
    f2: LstmCellParams
    return_full_sequence: bool = True

    def __post_init__(self):
        dims1 = (self.f1.input_dim, self.f1.hidden_dim)
        dims2 = (self.f2.input_dim, self.f2.hidden_dim)
        if dims1 != dims2:
            raise ConfigurationError(f"f1 and f2 disagree on (P, Q): {dims1} vs {dims2}")

    @property
    def input_dim(self):
        return self.f1.input_dim

    @property
    def hidden_dim(self):
        return self.f1.hidden_dim

    def arrays(self):
        return self.f1.arrays() + self.f2.arrays()


@dataclass
class ComplexDenseParams:
    """Two real affine maps ``g1`` and ``g2`` coupled by complex arithmetic."""

    w1: np.ndarray  # (Q_out, Q_in)
    b1: np.ndarray  # (Q_out,)
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        q_out, q_in = self.w1.shape
        if self.w2.shape != (q_out, q_in) or self.b1.shape != (q_out,) or self.b2.shape != (q_out,):
            raise ConfigurationError("inconsistent dense layer shapes")

    @property
    def input_dim(self):
        return self.w1.shape[1]

    @property
    def output_dim(self):
        return self.w1.shape[0]

    def arrays(self):
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class RclstmNetworkParams:
    layer1: RclstmLayerParams
    layer2: RclstmLayerParams
    dense: ComplexDenseParams

    def __post_init__(self):
        if self.layer2.input_dim != self.layer1.hidden_dim:
            raise ConfigurationError(
                f"layer2 input dim {self.layer2.input_dim} != layer1 units {self.layer1.hidden_dim}"
            )
        if self.dense.input_dim != self.layer2.hidden_dim:
            raise ConfigurationError(
                f"dense input dim {self.dense.input_dim} != layer2 units {self.layer2.hidden_dim}"
            )
        if self.dense.output_dim != self.layer1.input_dim:
            raise ConfigurationError(
                f"dense output dim {self.dense.output_dim} != number of bins {self.layer1.input_dim}"
            )

    @property
    def num_bins(self):
        return self.layer1.input_dim

    @property
    def layer1_units(self):
        return self.layer1.hidden_dim

    @property
    def layer2_units(self):
        return self.layer2.hidden_dim

    def arrays(self):
        """All parameter arrays in checkpoint order."""
        return self.layer1.arrays() + self.layer2.arrays() + self.dense.arrays()

    def named_arrays(self):
        names = []
        for layer in ("layer1", "layer2"):
            for cell in ("f1", "f2"):
                names += [f"{layer}.{cell}.{n}" for n in ("input_weights", "recurrent_weights", "bias")]
        names += ["dense.g1.weights", "dense.g1.bias", "dense.g2.weights", "dense.g2.bias"]
        return list(zip(names, self.arrays()))

    @property
    def num_parameters(self):
        return sum(a.size for a in self.arrays())

    def copy(self):
        return self.from_arrays(self.num_bins, self.layer1_units, self.layer2_units,
                                [a.copy() for a in self.arrays()])

    def zeros_like(self):
        return self.zeros(self.num_bins, self.layer1_units, self.layer2_units)

    @classmethod
    def from_arrays(cls, num_bins, layer1_units, layer2_units, arrays):
        a = list(arrays)
        if len(a) != 16:
            raise ConfigurationError(f"expected 16 parameter arrays, got {len(a)}")
        return cls(
            RclstmLayerParams(LstmCellParams(*a[0:3]), LstmCellParams(*a[3:6]), True),
            RclstmLayerParams(LstmCellParams(*a[6:9]), LstmCellParams(*a[9:12]), False),
            ComplexDenseParams(*a[12:16]),
        )

    @classmethod
    def zeros(cls, num_bins, layer1_units=64, layer2_units=None):
        q2 = num_bins if layer2_units is None else layer2_units
        return cls.from_arrays(num_bins, layer1_units, q2,
                               [np.zeros(s) for s in parameter_shapes(num_bins, layer1_units, q2)])

    @classmethod
    def initialize(cls, num_bins, layer1_units=64, layer2_units=None, seed=0):
        """Uniform(+-1/sqrt(fan_in)) weights, forget bias 1, other biases 0."""
        q2 = num_bins if layer2_units is None else layer2_units
        rng = np.random.default_rng(seed)
        l1 = RclstmLayerParams(LstmCellParams.initialize(rng, num_bins, layer1_units),
                               LstmCellParams.initialize(rng, num_bins, layer1_units), True)
        l2 = RclstmLayerParams(LstmCellParams.initialize(rng, layer1_units, q2),
                               LstmCellParams.initialize(rng, layer1_units, q2), False)
        scale = 1.0 / np.sqrt(q2)
        dense = ComplexDenseParams(
            rng.uniform(-scale, scale, (num_bins, q2)), np.zeros(num_bins),
            rng.uniform(-scale, scale, (num_bins, q2)), np.zeros(num_bins),
        )
        return cls(l1, l2, dense)


def parameter_shapes(num_bins, layer1_units, layer2_units):
    """Shapes of every parameter array, in checkpoint order."""
    shapes = []
    for p, q in ((num_bins, layer1_units), (layer1_units, layer2_units)):
        shapes += [(4 * q, p), (4 * q, q), (4 * q,)] * 2
    shapes += [(num_bins, layer2_units), (num_bins,)] * 2
    return shapes


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

def lstm_cell_step(params, x, h_prev, c_prev):
    """One step of a standard LSTM. Returns ``(h, c)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_dim or np.shape(h_prev)[-1] != params.hidden_dim:
        raise ConfigurationError(
            f"LSTM expects input {params.input_dim} / state {params.hidden_dim}, "
            f"got {x.shape[-1]} / {np.shape(h_prev)[-1]}"
        )
    q = params.hidden_dim
    a = params.input_weights @ x + params.recurrent_weights @ h_prev + params.bias
    i = sigmoid(a[:q])
    f = sigmoid(a[q:2 * q])
    g = np.tanh(a[2 * q:3 * q])
    o = sigmoid(a[3 * q:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


@dataclass
class _LstmCache:
    x: np.ndarray
    gates: np.ndarray   # activated gates (B, T, 4Q)
    cells: np.ndarray   # (B, T, Q)
    tanh_c: np.ndarray
    hidden: np.ndarray


def _lstm_forward(params, x):
    """Batched forward from zero state. ``x`` is (B, T, P); returns (B, T, Q) and a cache."""
    b, t_len, p = x.shape
    if p != params.input_dim:
        raise ConfigurationError(f"LSTM input dim {params.input_dim}, got {p}")
    q = params.hidden_dim
    pre = x @ params.input_weights.T + params.bias
    u_t = params.recurrent_weights.T
    gates = np.empty((b, t_len, 4 * q))
    cells = np.empty((b, t_len, q))
    tanh_c = np.empty((b, t_len, q))
    hidden = np.empty((b, t_len, q))
    h = np.zeros((b, q))
    c = np.zeros((b, q))
    for t in range(t_len):
        a = pre[:, t] + h @ u_t
        act = gates[:, t]
        act[:, :2 * q] = sigmoid(a[:, :2 * q])
        act[:, 2 * q:3 * q] = np.tanh(a[:, 2 * q:3 * q])
        act[:, 3 * q:] = sigmoid(a[:, 3 * q:])
        c = act[:, q:2 * q] * c + act[:, :q] * act[:, 2 * q:3 * q]
        tc = np.tanh(c)
        h = act[:, 3 * q:] * tc
        cells[:, t] = c
        tanh_c[:, t] = tc
        hidden[:, t] = h
    return hidden, _LstmCache(x, gates, cells, tanh_c, hidden)


def _lstm_backward(params, cache, d_hidden):
    """Backpropagation through time. Returns ``(grads, d_x)``."""
    b, t_len, q = d_hidden.shape
    gates, cells, tanh_c = cache.gates, cache.cells, cache.tanh_c
    u = params.recurrent_weights
    d_pre = np.empty((b, t_len, 4 * q))
    dh_next = np.zeros((b, q))
    dc_next = np.zeros((b, q))
    for t in reversed(range(t_len)):
        i = gates[:, t, :q]
        f = gates[:, t, q:2 * q]
        g = gates[:, t, 2 * q:3 * q]
        o = gates[:, t, 3 * q:]
        tc = tanh_c[:, t]
        dh = d_hidden[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        c_prev = cells[:, t - 1] if t > 0 else 0.0
        da = d_pre[:, t]
        da[:, :q] = dc * g * i * (1.0 - i)
        da[:, q:2 * q] = dc * c_prev * f * (1.0 - f)
        da[:, 2 * q:3 * q] = dc * i * (1.0 - g * g)
        da[:, 3 * q:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = da @ u
    flat = d_pre.reshape(-1, 4 * q)
    d_w = flat.T @ cache.x.reshape(-1, cache.x.shape[2])
    h_prev = np.concatenate([np.zeros((b, 1, q)), cache.hidden[:, :-1]], axis=1)
    d_u = flat.T @ h_prev.reshape(-1, q)
    d_b = flat.sum(axis=0)
    d_x = d_pre @ params.input_weights
    return LstmCellParams(d_w, d_u, d_b), d_x


def lstm_run(params, sequence):
    """Hidden states for every step of ``sequence`` ((T, P) or (B, T, P)), zero initial state."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim not in (2, 3) or seq.shape[-2] == 0:
        raise InputError(f"expected a non-empty (T, P) or (B, T, P) sequence, got shape {seq.shape}")
    if seq.ndim == 2:
        return _lstm_forward(params, seq[None])[0][0]
    return _lstm_forward(params, seq)[0]


# ---------------------------------------------------------------------------
# RCLSTM layer and complex dense layer
# ---------------------------------------------------------------------------

def _layer_forward(layer, zr, zi):
    b = zr.shape[0]
    stacked = np.concatenate([zr, zi], axis=0)
    out1, cache1 = _lstm_forward(layer.f1, stacked)
    out2, cache2 = _lstm_forward(layer.f2, stacked)
    hr = out1[:b] - out2[b:]
    hi = out2[:b] + out1[b:]
    if not layer.return_full_sequence:
        hr, hi = hr[:, -1], hi[:, -1]
    return hr, hi, (cache1, cache2)


def _layer_backward(layer, caches, d_hr, d_hi):
    cache1, cache2 = caches
    b, t_len = cache1.x.shape[0] // 2, cache1.x.shape[1]
    if not layer.return_full_sequence:
        full_r = np.zeros((b, t_len, d_hr.shape[-1]))
        full_i = np.zeros_like(full_r)
        full_r[:, -1] = d_hr
        full_i[:, -1] = d_hi
        d_hr, d_hi = full_r, full_i
    g1, dx1 = _lstm_backward(layer.f1, cache1, np.concatenate([d_hr, d_hi], axis=0))
    g2, dx2 = _lstm_backward(layer.f2, cache2, np.concatenate([d_hi, -d_hr], axis=0))
    dx = dx1 + dx2
    return RclstmLayerParams(g1, g2, layer.return_full_sequence), dx[:b], dx[b:]


def rclstm_forward(layer, z):
    """Complex sequence (T, P) or (B, T, P) through one RCLSTM layer.

    Returns (T, Q) / (B, T, Q) complex, or (Q,) / (B, Q) if the layer only
    returns its last step.
    """
    z = np.asarray(z, dtype=np.complex128)
    single = z.ndim == 2
    if single:
        z = z[None]
    if z.ndim != 3 or z.shape[-1] != layer.input_dim:
        raise ConfigurationError(f"layer expects (..., T, {layer.input_dim}) input, got {z.shape}")
    hr, hi, _ = _layer_forward(layer, z.real, z.imag)
    h = hr + 1j * hi
    return h[0] if single else h


def _dense_forward(dense, hr, hi):
    a1 = hr @ dense.w1.T + dense.b1 - (hi @ dense.w2.T + dense.b2)
    a2 = hr @ dense.w2.T + dense.b2 + hi @ dense.w1.T + dense.b1
    return np.tanh(a1), np.tanh(a2)


def _dense_backward(dense, hr, hi, yr, yi, d_yr, d_yi):
    da1 = d_yr * (1.0 - yr * yr)
    da2 = d_yi * (1.0 - yi * yi)
    s1, s2 = da1.sum(axis=0), da2.sum(axis=0)
    grads = ComplexDenseParams(
        da1.T @ hr + da2.T @ hi, s1 + s2,
        da2.T @ hr - da1.T @ hi, s2 - s1,
    )
    d_hr = da1 @ dense.w1 + da2 @ dense.w2
    d_hi = da2 @ dense.w1 - da1 @ dense.w2
    return grads, d_hr, d_hi


def complex_dense_forward(params, h):
    """``tanh(g1(h_r) - g2(h_i)) + j tanh(g2(h_r) + g1(h_i))`` for (Q_in,) or (B, Q_in) input."""
    h = np.asarray(h, dtype=np.complex128)
    if h.shape[-1] != params.input_dim:
        raise ConfigurationError(f"dense layer expects {params.input_dim} inputs, got {h.shape[-1]}")
    yr, yi = _dense_forward(params, h.real, h.imag)
    return yr + 1j * yi


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

def _check_contexts(net, contexts):
    contexts = np.asarray(contexts, dtype=np.complex128)
    if contexts.ndim != 3 or contexts.shape[0] == 0 or contexts.shape[2] != net.num_bins:
        raise ConfigurationError(
            f"expected contexts of shape (B, T, {net.num_bins}), got {contexts.shape}"
        )
    return contexts


def _network_forward(net, contexts):
    h1r, h1i, c1 = _layer_forward(net.layer1, contexts.real, contexts.imag)
    h2r, h2i, c2 = _layer_forward(net.layer2, h1r, h1i)
    yr, yi = _dense_forward(net.dense, h2r, h2i)
    return yr, yi, (c1, c2, h2r, h2i)


def predict(net, contexts, batch_size=256):
    """Bounded mask estimates (B, K) for a batch of (T, K) complex contexts."""
    contexts = _check_contexts(net, contexts)
    out = np.empty((contexts.shape[0], net.num_bins), dtype=np.complex128)
    for start in range(0, contexts.shape[0], batch_size):
        yr, yi, _ = _network_forward(net, contexts[start:start + batch_size])
        out[start:start + batch_size] = yr + 1j * yi
    return out


def network_forward(net, context):
    """Bounded mask estimate (K,) for the centre frame of one (T, K) context."""
    context = np.asarray(context, dtype=np.complex128)
    if context.ndim != 2:
        raise ConfigurationError(f"expected a (T, K) context, got shape {context.shape}")
    return predict(net, context[None])[0]


def loss(predicted, target):
    """Mean over the batch of the summed squared complex error across bins."""
    predicted = np.asarray(predicted, dtype=np.complex128)
    target = np.asarray(target, dtype=np.complex128)
    if predicted.shape != target.shape:
        raise InputError(f"shape mismatch: {predicted.shape} vs {target.shape}")
    if predicted.ndim == 1:
        predicted, target = predicted[None], target[None]
    if predicted.shape[0] == 0:
        raise InputError("loss of an empty batch is undefined")
    err = predicted - target
    return float(np.mean(np.sum(err.real**2 + err.imag**2, axis=1)))


def network_backward(net, contexts, targets):
    """Loss and its exact gradient w.r.t. every parameter (batch-averaged)."""
    contexts = _check_contexts(net, contexts)
    targets = np.asarray(targets, dtype=np.complex128)
    if targets.shape != (contexts.shape[0], net.num_bins):
        raise InputError(f"targets shape {targets.shape} does not match batch {contexts.shape[:1]}")
    b = contexts.shape[0]
    yr, yi, (c1, c2, h2r, h2i) = _network_forward(net, contexts)
    if not (np.all(np.isfinite(yr)) and np.all(np.isfinite(yi))):
        raise NumericalError("non-finite network output in forward pass")
    er, ei = yr - targets.real, yi - targets.imag
    value = float(np.mean(np.sum(er**2 + ei**2, axis=1)))
    g_dense, d_h2r, d_h2i = _dense_backward(net.dense, h2r, h2i, yr, yi, 2.0 * er / b, 2.0 * ei / b)
    g_l2, d_h1r, d_h1i = _layer_backward(net.layer2, c2, d_h2r, d_h2i)
    g_l1, _, _ = _layer_backward(net.layer1, c1, d_h1r, d_h1i)
    return value, RclstmNetworkParams(g_l1, g_l2, g_dense)


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper):
        arrays = params.arrays()
        return cls(first_moment=[np.zeros_like(a) for a in arrays],
                   second_moment=[np.zeros_like(a) for a in arrays], **hyper)


def adam_step(state, params, grads):
    """Bias-corrected Adam update applied in place. Returns ``(params, state)``."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
        raise InputError("gradient shapes do not match parameter shapes")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(a) for a in p_arrays]
        state.second_moment = [np.zeros_like(a) for a in p_arrays]
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise NumericalError("non-finite gradient passed to adam_step")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(p_arrays, g_arrays, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def clip_by_global_norm(grads, max_norm):
    """Scale all gradient arrays in place so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.arrays())))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.arrays():
            g *= scale
    return norm


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    context_radius: int = 10
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.context_radius < 0:
            raise ConfigurationError(
                f"invalid training config: epochs={self.epochs}, batch_size={self.batch_size}, "
                f"context_radius={self.context_radius}"
            )
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.learning_rate}")


def stack_examples(examples):
    """(contexts, targets) arrays from a list of examples or an existing pair of arrays."""
    if isinstance(examples, tuple) and len(examples) == 2:
        contexts, targets = examples
        return np.asarray(contexts, dtype=np.complex128), np.asarray(targets, dtype=np.complex128)
    examples = list(examples)
    if not examples:
        raise InputError("training set is empty")
    return (np.stack([e.context for e in examples]).astype(np.complex128),
            np.stack([e.target for e in examples]).astype(np.complex128))


def train(net, examples, config=None):
    """Minibatch Adam on the mask regression loss.

    Examples are reshuffled every epoch from a generator seeded with
    ``config.seed``. Returns ``(net, history)`` where ``history`` holds the mean
    per-example loss of each epoch (measured before each batch's update).
    """
    config = config or TrainConfig()
    contexts, targets = stack_examples(examples)
    n = contexts.shape[0]
    if n == 0:
        raise InputError("training set is empty")
    _check_contexts(net, contexts[:1])
    state = AdamState.for_params(net, learning_rate=config.learning_rate, beta1=config.beta1,
                                 beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            try:
                value, grads = network_backward(net, contexts[idx], targets[idx])
                clip_by_global_norm(grads, config.clip_norm)
                adam_step(state, net, grads)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch + 1}, batch {batch_no + 1}: {exc}") from exc
            total += value * len(idx)
        history.append(total / n)
        log.info("epoch %d/%d loss %.6f", epoch + 1, config.epochs, history[-1])
    return net, history
