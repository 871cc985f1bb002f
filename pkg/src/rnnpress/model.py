"""Model representation, parameter counting, fixtures and the ``.rnnz`` container.

Layers are numbered from 1 in tensor names so that ``W_x.0`` is the input
matrix feeding layer 1 and ``W_x.<L>`` is the output (logit) matrix. Each
layer owns its *outgoing* inter-layer matrix, because that is the matrix that
shares the layer's projection once compressed.

Gate order for stacked LSTM matrices is always input, forget, cell, output.
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArgumentError,
    BadMagicError,
    HeaderError,
    NonFiniteError,
    ShapeMismatchError,
    TruncatedPayloadError,
    VersionError,
)
from .prng import Lcg64

MAGIC = b"RNNZ"
FORMAT_VERSION = 1
GATE_ORDER = ("i", "f", "c", "o")
CELL_TYPES = ("vanilla_rnn", "lstm")
_FILE_CELL = {"vanilla_rnn": "rnn", "lstm": "lstm"}
_PREFIX = struct.Struct("<4sIQ")

WEIGHT_RANGE = 0.2
PEEPHOLE_RANGE = 0.1


def parse_cell_type(name):
    name = {"rnn": "vanilla_rnn"}.get(name, name)
    if name not in CELL_TYPES:
        raise ArgumentError(f"unknown cell type {name!r}")
    return name


@dataclass(frozen=True)
class Architecture:
    cell_type: str
    input_dim: int
    layer_sizes: tuple
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "cell_type", parse_cell_type(self.cell_type))
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if not self.layer_sizes:
            raise ArgumentError("layer_sizes must be non-empty")
        dims = (self.input_dim, self.output_dim) + self.layer_sizes
        if any(int(d) != d or d < 1 for d in dims):
            raise ArgumentError(f"all dimensions must be positive integers: {dims}")

    @property
    def gates(self):
        return 4 if self.cell_type == "lstm" else 1

    @property
    def num_layers(self):
        return len(self.layer_sizes)

    def outgoing_rows(self, index):
        """Row count of the inter-layer matrix leaving 0-based layer ``index``."""
        if index == self.num_layers - 1:
            return self.output_dim
        return self.gates * self.layer_sizes[index + 1]

    def to_json(self):
        return {
            "cell_type": _FILE_CELL[self.cell_type],
            "input_dim": self.input_dim,
            "layer_sizes": list(self.layer_sizes),
            "output_dim": self.output_dim,
        }


@dataclass(frozen=True, eq=False)
class GateBundle:
    input_gate: np.ndarray
    forget_gate: np.ndarray
    cell: np.ndarray
    output_gate: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(m) for m in self.as_tuple()}
        if len(shapes) != 1:
            raise ArgumentError(f"gate matrices differ in shape: {sorted(shapes)}")

    def as_tuple(self):
        return (self.input_gate, self.forget_gate, self.cell, self.output_gate)


def stack_gates(bundle):
    """Stack the four gate matrices vertically in canonical i, f, c, o order."""
    mats = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in bundle.as_tuple()]
    if len({m.shape for m in mats}) != 1:
        raise ArgumentError("gate matrices differ in shape")
    return np.vstack(mats)


def unstack_gates(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] % 4:
        raise ArgumentError(f"cannot split shape {m.shape} into four gates")
    return GateBundle(*np.split(m, 4, axis=0))


def _frozen(a, ndim):
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ArgumentError(f"expected a {ndim}-D array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(eq=False)
class LayerWeights:
    """Parameters of one hidden layer.

    Either ``w_h``/``w_x`` (dense) or ``z_h``/``p``/``z_x`` (factored through
    the shared projection ``p``) are set, never a mix.
    """

    bias: np.ndarray
    w_h: np.ndarray = None
    w_x: np.ndarray = None
    z_h: np.ndarray = None
    p: np.ndarray = None
    z_x: np.ndarray = None
    peep_i: np.ndarray = None
    peep_f: np.ndarray = None
    peep_o: np.ndarray = None

    def __post_init__(self):
        self.bias = _frozen(self.bias, 1)
        for name in ("w_h", "w_x", "z_h", "p", "z_x"):
            if getattr(self, name) is not None:
                setattr(self, name, _frozen(getattr(self, name), 2))
        for name in ("peep_i", "peep_f", "peep_o"):
            if getattr(self, name) is not None:
                setattr(self, name, _frozen(getattr(self, name), 1))
        dense = self.w_h is not None or self.w_x is not None
        factored = any(getattr(self, n) is not None for n in ("z_h", "p", "z_x"))
        if dense == factored:
            raise ArgumentError("layer must be either fully dense or fully factored")
        if dense and (self.w_h is None or self.w_x is None):
            raise ArgumentError("dense layer needs both w_h and w_x")
        if factored and any(getattr(self, n) is None for n in ("z_h", "p", "z_x")):
            raise ArgumentError("factored layer needs z_h, p and z_x")
        peeps = [self.peep_i, self.peep_f, self.peep_o]
        if any(x is None for x in peeps) and any(x is not None for x in peeps):
            raise ArgumentError("peepholes must be all present or all absent")

    @property
    def factored(self):
        return self.p is not None

    @property
    def has_peepholes(self):
        return self.peep_i is not None

    @property
    def rank(self):
        return self.p.shape[0] if self.factored else None

    @property
    def hidden_size(self):
        return self.p.shape[1] if self.factored else self.w_h.shape[1]

    def recurrent_matrix(self):
        return self.z_h @ self.p if self.factored else self.w_h

    def interlayer_matrix(self):
        return self.z_x @ self.p if self.factored else self.w_x

    def tensors(self):
        """Stored arrays keyed by tensor-name stem, in container order."""
        if self.factored:
            out = {"Z_h": self.z_h, "P": self.p, "Z_x": self.z_x}
        else:
            out = {"W_h": self.w_h, "W_x": self.w_x}
        out["b"] = self.bias
        if self.has_peepholes:
            out.update(peep_i=self.peep_i, peep_f=self.peep_f, peep_o=self.peep_o)
        return out

    def check(self, n, gates, out_rows, lstm, index):
        where = f"layer {index + 1}"
        if self.factored:
            r = self.p.shape[0]
            expect = {"z_h": (gates * n, r), "p": (r, n), "z_x": (out_rows, r)}
            if not 1 <= r <= n:
                raise ArgumentError(f"{where}: rank {r} outside [1, {n}]")
        else:
            expect = {"w_h": (gates * n, n), "w_x": (out_rows, n)}
        expect["bias"] = (gates * n,)
        if lstm:
            expect.update(peep_i=(n,), peep_f=(n,), peep_o=(n,))
        elif self.has_peepholes:
            raise ArgumentError(f"{where}: vanilla RNN layers have no peepholes")
        for name, shape in expect.items():
            got = getattr(self, name)
            if got is None or got.shape != shape:
                raise ArgumentError(
                    f"{where}: {name} has shape {None if got is None else got.shape}, expected {shape}"
                )


@dataclass(eq=False)
class Model:
    arch: Architecture
    input_matrix: np.ndarray
    layers: list
    output_bias: np.ndarray

    def __post_init__(self):
        arch = self.arch
        self.input_matrix = _frozen(self.input_matrix, 2)
        self.output_bias = _frozen(self.output_bias, 1)
        self.layers = list(self.layers)
        g = arch.gates
        if self.input_matrix.shape != (g * arch.layer_sizes[0], arch.input_dim):
            raise ArgumentError(
                f"input matrix has shape {self.input_matrix.shape}, "
                f"expected {(g * arch.layer_sizes[0], arch.input_dim)}"
            )
        if len(self.layers) != arch.num_layers:
            raise ArgumentError(f"{len(self.layers)} layers given, architecture has {arch.num_layers}")
        for i, (layer, n) in enumerate(zip(self.layers, arch.layer_sizes)):
            layer.check(n, g, arch.outgoing_rows(i), arch.cell_type == "lstm", i)
        if self.output_bias.shape != (arch.output_dim,):
            raise ArgumentError(f"output bias has shape {self.output_bias.shape}")

    @property
    def compressed(self):
        return any(layer.factored for layer in self.layers)

    @property
    def ranks(self):
        return [layer.rank for layer in self.layers]

    def named_tensors(self):
        """All stored tensors in canonical container order."""
        out = [("W_x.0", self.input_matrix)]
        for i, layer in enumerate(self.layers, start=1):
            out.extend((f"{stem}.{i}", arr) for stem, arr in layer.tensors().items())
        out.append(("b.out", self.output_bias))
        return out


def param_count(model):
    """Exact number of stored real parameters."""
    return sum(int(arr.size) for _, arr in model.named_tensors())


def generate_random(arch, seed):
    """Deterministic random model.

    Draw order from one ``Lcg64(seed)`` stream: the input matrix, then for each
    layer in turn its recurrent matrix, outgoing inter-layer matrix and (LSTM)
    the input/forget/output peepholes. Matrices are filled row-major. Weights are
    uniform in [-0.2, 0.2], peepholes in [-0.1, 0.1], biases zero; every value is
    rounded to float32 so the model survives a save/load round trip exactly.
    """
    rng = Lcg64(seed)
    g = arch.gates
    lstm = arch.cell_type == "lstm"

    def draw(shape, scale):
        return rng.uniform(-scale, scale, shape).astype(np.float32).astype(np.float64)

    input_matrix = draw((g * arch.layer_sizes[0], arch.input_dim), WEIGHT_RANGE)
    layers = []
    for i, n in enumerate(arch.layer_sizes):
        w_h = draw((g * n, n), WEIGHT_RANGE)
        w_x = draw((arch.outgoing_rows(i), n), WEIGHT_RANGE)
        peeps = {}
        if lstm:
            peeps = {k: draw((n,), PEEPHOLE_RANGE) for k in ("peep_i", "peep_f", "peep_o")}
        layers.append(LayerWeights(bias=np.zeros(g * n), w_h=w_h, w_x=w_x, **peeps))
    return Model(arch, input_matrix, layers, np.zeros(arch.output_dim))


def atomic_write(path, chunks):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            for chunk in chunks:
                fh.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode(model):
    """Serialise ``model`` to container bytes."""
    tensors = []
    payload = []
    offset = 0
    for name, arr in model.named_tensors():
        rows, cols = (arr.shape[0], 1) if arr.ndim == 1 else arr.shape
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append({"name": name, "rows": rows, "cols": cols, "dtype": "f32", "offset": offset})
        payload.append(data)
        offset += len(data)
    header = dict(model.arch.to_json(), gate_order=list(GATE_ORDER), tensors=tensors)
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([_PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)), hbytes] + payload)


def save(model, path):
    atomic_write(path, [encode(model)])


def _expected_layout(arch, factored):
    """Expected tensor names and shapes for an architecture, in order."""
    g = arch.gates
    out = [("W_x.0", (g * arch.layer_sizes[0], arch.input_dim))]
    for i, n in enumerate(arch.layer_sizes):
        idx = i + 1
        rows_out = arch.outgoing_rows(i)
        if idx in factored:
            r = factored[idx]
            out += [(f"Z_h.{idx}", (g * n, r)), (f"P.{idx}", (r, n)), (f"Z_x.{idx}", (rows_out, r))]
        else:
            out += [(f"W_h.{idx}", (g * n, n)), (f"W_x.{idx}", (rows_out, n))]
        out.append((f"b.{idx}", (g * n, 1)))
        if arch.cell_type == "lstm":
            out += [(f"{k}.{idx}", (n, 1)) for k in ("peep_i", "peep_f", "peep_o")]
    out.append(("b.out", (arch.output_dim, 1)))
    return out


def decode(blob):
    """Parse container bytes into a ``Model``; raises a ``LoadError`` subclass."""
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(blob[:4])!r}, expected {MAGIC!r}")
    if len(blob) < _PREFIX.size:
        raise TruncatedPayloadError("file ends inside the fixed prefix")
    _, version, header_len = _PREFIX.unpack_from(blob)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported container version {version}")
    start = _PREFIX.size + header_len
    if start > len(blob):
        raise TruncatedPayloadError(f"header length {header_len} exceeds file size")
    try:
        header = json.loads(blob[_PREFIX.size:start].decode("utf-8"))
        arch = Architecture(
            header["cell_type"], header["input_dim"], header["layer_sizes"], header["output_dim"]
        )
        entries = header["tensors"]
        gate_order = header["gate_order"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ArgumentError) as exc:
        raise HeaderError(f"malformed header: {exc}") from exc
    if gate_order != list(GATE_ORDER):
        raise HeaderError(f"gate_order must be {list(GATE_ORDER)}, got {gate_order!r}")
    if header["cell_type"] not in _FILE_CELL.values():
        raise HeaderError(f"unknown cell_type {header['cell_type']!r}")
    payload = memoryview(blob)[start:]

    try:
        factored = {
            int(e["name"].split(".", 1)[1]): int(e["rows"])
            for e in entries
            if e["name"].startswith("P.")
        }
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise HeaderError(f"malformed tensor table: {exc}") from exc
    layout = _expected_layout(arch, factored)
    if [e.get("name") for e in entries] != [name for name, _ in layout]:
        raise HeaderError(
            f"tensor table {[e.get('name') for e in entries]} does not match the architecture"
        )

    arrays = {}
    offset = 0
    for entry, (name, shape) in zip(entries, layout):
        if entry.get("dtype") != "f32":
            raise HeaderError(f"{name}: unsupported dtype {entry.get('dtype')!r}")
        if (entry.get("rows"), entry.get("cols")) != shape:
            raise ShapeMismatchError(
                f"{name}: header declares {entry.get('rows')}x{entry.get('cols')}, architecture needs {shape[0]}x{shape[1]}"
            )
        if entry.get("offset") != offset:
            raise ShapeMismatchError(f"{name}: offset {entry.get('offset')} != expected {offset}")
        nbytes = 4 * shape[0] * shape[1]
        if offset + nbytes > len(payload):
            raise TruncatedPayloadError(
                f"{name}: needs {shape[0] * shape[1]} values, payload holds "
                f"{max(0, (len(payload) - offset) // 4)}"
            )
        arr = np.frombuffer(payload[offset:offset + nbytes], dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{name}: non-finite values in payload")
        arrays[name] = arr.reshape(shape)
        offset += nbytes
    if offset != len(payload):
        raise ShapeMismatchError(f"payload has {len(payload) - offset} bytes beyond the declared tensors")

    layers = []
    for i in range(1, arch.num_layers + 1):
        kw = {"bias": arrays[f"b.{i}"][:, 0]}
        if i in factored:
            kw.update(z_h=arrays[f"Z_h.{i}"], p=arrays[f"P.{i}"], z_x=arrays[f"Z_x.{i}"])
        else:
            kw.update(w_h=arrays[f"W_h.{i}"], w_x=arrays[f"W_x.{i}"])
        if arch.cell_type == "lstm":
            kw.update({k: arrays[f"{k}.{i}"][:, 0] for k in ("peep_i", "peep_f", "peep_o")})
        layers.append(LayerWeights(**kw))
    try:
        return Model(arch, arrays["W_x.0"], layers, arrays["b.out"][:, 0])
    except ArgumentError as exc:
        raise ShapeMismatchError(str(exc)) from exc


def load(path):
    with open(path, "rb") as fh:
        return decode(fh.read())
