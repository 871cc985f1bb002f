"""Joint low-rank compression of recurrent layers.

For every hidden layer the stacked recurrent matrix ``W_h`` is truncated to
rank r via its SVD, giving ``W_h ~= Z_h @ P`` with ``P = V_r.T``. The layer's
outgoing inter-layer matrix is then refit through the *same* projection,
``Z_x = argmin ||Z_x @ P - W_x||_F``, so at run time the projected state
``P @ h`` is computed once and consumed by both the recurrence and the next
layer.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import linalg
from .errors import ArgumentError, DegenerateSpectrumError, NumericalError, StateError
from .model import LayerWeights, Model, param_count


@dataclass(frozen=True)
class RankPolicy:
    """Either an explained-variance threshold ``tau`` or explicit per-layer ranks."""

    tau: float = None
    explicit_ranks: tuple = None

    def __post_init__(self):
        if (self.tau is None) == (self.explicit_ranks is None):
            raise ArgumentError("give exactly one of tau or explicit_ranks")
        if self.tau is not None:
            tau = float(self.tau)
            if not 0.0 < tau <= 1.0:
                raise ArgumentError(f"tau must lie in (0, 1], got {self.tau}")
            object.__setattr__(self, "tau", tau)
        else:
            ranks = tuple(self.explicit_ranks)
            if any(isinstance(r, bool) or int(r) != r or r < 1 for r in ranks):
                raise ArgumentError(f"ranks must be positive integers: {ranks}")
            object.__setattr__(self, "explicit_ranks", tuple(int(r) for r in ranks))


def explained_fractions(sigma):
    """Cumulative fraction of squared singular values, ending at exactly 1."""
    sigma = np.asarray(sigma, dtype=np.float64)
    energy = np.cumsum((sigma / sigma[0]) ** 2)
    return energy / energy[-1]


def select_rank(sigma, tau):
    """Largest k whose top-k explained variance is at most ``tau``.

    Falls back to 1 when even the leading singular value explains more than
    ``tau``.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 1 or sigma.size == 0:
        raise ArgumentError("sigma must be a non-empty vector")
    if not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
        raise ArgumentError("sigma must be finite and non-negative")
    if np.any(np.diff(sigma) > 0):
        raise ArgumentError("sigma must be sorted non-increasing")
    if not 0.0 < tau <= 1.0:
        raise ArgumentError(f"tau must lie in (0, 1], got {tau}")
    if sigma[0] == 0.0:
        raise DegenerateSpectrumError("all singular values are zero")
    feasible = np.flatnonzero(explained_fractions(sigma) <= tau)
    return int(feasible[-1]) + 1 if feasible.size else 1


def factorize_recurrent(w_h, r, svd_result=None):
    """Rank-``r`` truncated SVD factors ``(Z_h, P)`` of ``w_h``."""
    res = svd_result if svd_result is not None else linalg.svd(w_h)
    return linalg.truncate(res, r)


def solve_interlayer(w_x, p, layer=None):
    w_x = linalg.as_matrix(w_x, "inter-layer matrix")
    p = linalg.as_matrix(p, "projection")
    if w_x.shape[1] != p.shape[1]:
        raise ArgumentError(f"inter-layer matrix {w_x.shape} does not match projection {p.shape}")
    return linalg.least_squares_rowspace(p, w_x, layer=layer)


@dataclass
class LayerReport:
    index: int
    rank: int
    explained_fraction: float
    spectrum_length: int
    rec_err_abs: float
    rec_err_rel: float
    inter_err_abs: float
    inter_err_rel: float


@dataclass
class CompressionReport:
    layers: list = field(default_factory=list)
    params_before: int = 0
    params_after: int = 0

    @property
    def ratio(self):
        return self.params_after / self.params_before

    def to_dict(self):
        return {
            "layers": [asdict(layer) for layer in self.layers],
            "params_before": self.params_before,
            "params_after": self.params_after,
            "ratio": self.ratio,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _relative(err, ref):
    return err / ref if ref > 0 else 0.0


def _compress_layer(index, layer, rank_for):
    w_h = layer.w_h
    try:
        res = linalg.svd(w_h)
        r = rank_for(index, res.sigma)
        z_h, p = linalg.truncate(res, r)
        z_x = solve_interlayer(layer.w_x, p, layer=index + 1)
    except NumericalError as exc:
        if exc.layer is None:
            raise type(exc)(str(exc), layer=index + 1) from exc
        raise
    rec_err = linalg.frobenius_norm(z_h @ p - w_h)
    inter_err = linalg.frobenius_norm(z_x @ p - layer.w_x)
    fractions = explained_fractions(res.sigma) if res.sigma[0] > 0 else np.zeros(res.k)
    new = LayerWeights(
        bias=layer.bias, z_h=z_h, p=p, z_x=z_x,
        peep_i=layer.peep_i, peep_f=layer.peep_f, peep_o=layer.peep_o,
    )
    report = LayerReport(
        index=index + 1,
        rank=r,
        explained_fraction=float(fractions[r - 1]),
        spectrum_length=res.k,
        rec_err_abs=rec_err,
        rec_err_rel=_relative(rec_err, linalg.frobenius_norm(w_h)),
        inter_err_abs=inter_err,
        inter_err_rel=_relative(inter_err, linalg.frobenius_norm(layer.w_x)),
    )
    return new, report


def thread_count():
    """Worker count from ``RNNPRESS_THREADS`` (unset or 0 means automatic)."""
    raw = os.environ.get("RNNPRESS_THREADS", "0")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ArgumentError(f"RNNPRESS_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ArgumentError("RNNPRESS_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def compress_model(model, policy, threads=None):
    """Factor every hidden layer of an uncompressed model.

    The input matrix, biases and peepholes are carried over unchanged. Layers
    are independent, so they may be processed concurrently; the result does
    not depend on the order.
    """
    if model.compressed:
        raise StateError("model is already compressed")
    sizes = model.arch.layer_sizes
    if policy.explicit_ranks is not None:
        if len(policy.explicit_ranks) != len(sizes):
            raise ArgumentError(f"{len(policy.explicit_ranks)} ranks given for {len(sizes)} layers")
        for i, (r, n) in enumerate(zip(policy.explicit_ranks, sizes)):
            if r > n:
                raise ArgumentError(f"layer {i + 1}: rank {r} exceeds layer size {n}")

    def rank_for(index, sigma):
        if policy.explicit_ranks is not None:
            return policy.explicit_ranks[index]
        return select_rank(sigma, policy.tau)

    jobs = list(enumerate(model.layers))
    workers = min(threads or thread_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _compress_layer(*job, rank_for), jobs))
    else:
        results = [_compress_layer(i, layer, rank_for) for i, layer in jobs]

    compressed = Model(model.arch, model.input_matrix, [r[0] for r in results], model.output_bias)
    report = CompressionReport(
        layers=[r[1] for r in results],
        params_before=param_count(model),
        params_after=param_count(compressed),
    )
    return compressed, report
