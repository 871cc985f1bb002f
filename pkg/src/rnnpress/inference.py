"""Forward pass for dense and factored recurrent models.

Cell equations (gate order i, f, c, o; ``a`` is the stacked pre-activation
``incoming + W_h @ m_prev + b``)::

    vanilla:  h = tanh(a)
    lstm:     i = sigmoid(a_i + peep_i * c_prev)
              f = sigmoid(a_f + peep_f * c_prev)
              c = f * c_prev + i * tanh(a_c)
              o = sigmoid(a_o + peep_o * c)
              m = o * tanh(c)

For a factored layer the projected state ``P @ m`` is computed once per step
and reused for both the recurrence (``Z_h @ (P @ m)``) and the next layer's
input (``Z_x @ (P @ m)``), so the two products cost
``(N + G*N + rows_out) * r`` multiplies per step instead of
``(G*N + rows_out) * N``.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, NonFiniteError, TruncatedPayloadError
from .prng import Lcg64

_SEQ_HEADER = struct.Struct("<II")


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class LayerState:
    hidden: np.ndarray
    cell: np.ndarray = None

    @classmethod
    def zeros(cls, n, lstm):
        return cls(np.zeros(n), np.zeros(n) if lstm else None)


@dataclass(frozen=True)
class DivergenceMetrics:
    max_abs_diff: float
    mean_abs_diff: float
    relative_frobenius: float

    def to_dict(self):
        return {
            "max_abs_diff": self.max_abs_diff,
            "mean_abs_diff": self.mean_abs_diff,
            "relative_frobenius": self.relative_frobenius,
        }


def _recurrent_term(layer, hidden):
    if layer.factored:
        return layer.z_h @ (layer.p @ hidden)
    return layer.w_h @ hidden


def _incoming(layer, x, w_in):
    n_rows = layer.bias.shape[0]
    x = np.asarray(x, dtype=np.float64)
    if w_in is not None:
        w_in = np.asarray(w_in, dtype=np.float64)
        if w_in.ndim != 2 or w_in.shape[1] != x.shape[0]:
            raise ArgumentError(f"input of length {x.shape[0]} does not fit matrix {w_in.shape}")
        x = w_in @ x
    if x.shape != (n_rows,):
        raise ArgumentError(f"incoming activation has shape {x.shape}, expected ({n_rows},)")
    return x


def _check_state(layer, state, lstm):
    n = layer.hidden_size
    if state.hidden.shape != (n,) or (lstm and (state.cell is None or state.cell.shape != (n,))):
        raise ArgumentError(f"state does not match a layer of {n} cells")


def _rnn_cell(pre):
    return LayerState(np.tanh(pre))


def _lstm_cell(layer, pre, c_prev):
    a_i, a_f, a_c, a_o = np.split(pre, 4)
    i = sigmoid(a_i + layer.peep_i * c_prev)
    f = sigmoid(a_f + layer.peep_f * c_prev)
    c = f * c_prev + i * np.tanh(a_c)
    o = sigmoid(a_o + layer.peep_o * c)
    return LayerState(o * np.tanh(c), c)


def rnn_step(layer, x, state, w_in=None):
    """One vanilla-RNN step.

    ``x`` is the incoming activation already mapped to this layer's
    pre-activation space, unless ``w_in`` is given, in which case
    ``w_in @ x`` is used.
    """
    if layer.has_peepholes or layer.bias.shape[0] != layer.hidden_size:
        raise ArgumentError("rnn_step needs a vanilla RNN layer")
    _check_state(layer, state, lstm=False)
    pre = _incoming(layer, x, w_in) + _recurrent_term(layer, state.hidden) + layer.bias
    return _rnn_cell(pre)


def lstm_step(layer, x, state, w_in=None):
    """One peephole-LSTM step; ``x``/``w_in`` as in :func:`rnn_step`."""
    if not layer.has_peepholes:
        raise ArgumentError("lstm_step needs an LSTM layer")
    _check_state(layer, state, lstm=True)
    pre = _incoming(layer, x, w_in) + _recurrent_term(layer, state.hidden) + layer.bias
    return _lstm_cell(layer, pre, state.cell)


def forward(model, seq):
    """Logits (T x output_dim) for a sequence (T x input_dim), zero initial state."""
    seq = np.asarray(seq, dtype=np.float64)
    arch = model.arch
    if seq.ndim != 2 or seq.shape[0] < 1 or seq.shape[1] != arch.input_dim:
        raise ArgumentError(f"sequence shape {seq.shape} does not match input_dim {arch.input_dim}")
    lstm = arch.cell_type == "lstm"
    states = [LayerState.zeros(n, lstm) for n in arch.layer_sizes]
    # recurrent contribution carried into the next step, per layer
    carry = [np.zeros(layer.bias.shape[0]) for layer in model.layers]
    out = np.empty((seq.shape[0], arch.output_dim))
    for t, x in enumerate(seq):
        incoming = model.input_matrix @ x
        for l, layer in enumerate(model.layers):
            pre = incoming + carry[l] + layer.bias
            state = _lstm_cell(layer, pre, states[l].cell) if lstm else _rnn_cell(pre)
            states[l] = state
            if layer.factored:
                proj = layer.p @ state.hidden
                carry[l] = layer.z_h @ proj
                incoming = layer.z_x @ proj
            else:
                carry[l] = layer.w_h @ state.hidden
                incoming = layer.w_x @ state.hidden
        out[t] = incoming + model.output_bias
    return out


def compare(a, b, seqs):
    """Output divergence of model ``b`` from reference model ``a``."""
    if (a.arch.input_dim, a.arch.output_dim) != (b.arch.input_dim, b.arch.output_dim):
        raise ArgumentError("models differ in input or output dimension")
    if not seqs:
        raise ArgumentError("need at least one sequence")
    ya = np.vstack([forward(a, s) for s in seqs])
    yb = np.vstack([forward(b, s) for s in seqs])
    diff = np.abs(ya - yb)
    ref = float(np.sqrt(np.sum(ya * ya)))
    dist = float(np.sqrt(np.sum(diff * diff)))
    if ref > 0:
        rel = dist / ref
    else:
        rel = 0.0 if dist == 0 else float("inf")
    return DivergenceMetrics(float(diff.max()), float(diff.mean()), rel)


def random_sequences(count, length, dim, seed):
    """Sequences with entries uniform in [-1, 1] from the fixture PRNG."""
    rng = Lcg64(seed)
    return [rng.uniform(-1.0, 1.0, (length, dim)) for _ in range(count)]


def encode_sequence(seq):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ArgumentError("sequence must be 2-D")
    return _SEQ_HEADER.pack(*seq.shape) + np.ascontiguousarray(seq, dtype="<f4").tobytes()


def decode_sequence(blob):
    if len(blob) < _SEQ_HEADER.size:
        raise TruncatedPayloadError("sequence file shorter than its header")
    steps, dim = _SEQ_HEADER.unpack_from(blob)
    body = blob[_SEQ_HEADER.size:]
    if len(body) != 4 * steps * dim:
        raise TruncatedPayloadError(f"expected {steps * dim} values, found {len(body) / 4:g}")
    if steps < 1 or dim < 1:
        raise ArgumentError(f"empty sequence ({steps} x {dim})")
    seq = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(steps, dim)
    if not np.all(np.isfinite(seq)):
        raise NonFiniteError("sequence contains non-finite values")
    return seq


def read_sequence(path):
    with open(path, "rb") as fh:
        return decode_sequence(fh.read())


def write_sequence(seq, path):
    with open(path, "wb") as fh:
        fh.write(encode_sequence(seq))
