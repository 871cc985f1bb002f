"""Dense linear algebra used by the compressor.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The SVD is
computed here rather than delegated to LAPACK so that its ordering, sign
convention, rank clamping and failure behaviour are pinned down exactly:
Householder QR reduces the input to a square triangular factor, then a
one-sided Jacobi iteration (round-robin pair ordering, vectorised per round)
orthogonalises its columns.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConvergenceError, SingularMatrixError

MAX_SWEEPS = 75
SIGMA_CLAMP = 1e-12
ORTHONORMAL_TOL = 1e-8
GRAM_COND_LIMIT = 1e-12

_EPS = np.finfo(np.float64).eps


def as_matrix(a, name="matrix"):
    """Coerce ``a`` to a finite float64 2-D array with both dims >= 1."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ArgumentError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ArgumentError(f"{name} has an empty dimension: {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return m


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ArgumentError(f"matmul needs a matrix on the left, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ArgumentError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def frobenius_norm(a):
    a = np.asarray(a, dtype=np.float64)
    peak = np.max(np.abs(a)) if a.size else 0.0
    if peak == 0.0 or not np.isfinite(peak):
        return float(peak)
    a = a / peak
    return float(peak * np.sqrt(np.sum(a * a)))


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(sigma) @ v.T``.

    ``u`` is m x k, ``v`` is n x k with k = min(m, n); ``sigma`` is sorted
    non-increasing and values below ``SIGMA_CLAMP * sigma[0]`` are exactly 0.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def k(self):
        return self.sigma.shape[0]

    def reconstruct(self):
        return (self.u * self.sigma) @ self.v.T


def _householder_qr(a):
    """Thin QR of a tall matrix: returns Q (m x n, orthonormal cols), R (n x n)."""
    m, n = a.shape
    r = a.copy()
    reflectors = []
    for j in range(n):
        x = r[j:, j]
        peak = np.max(np.abs(x))
        if peak == 0.0:
            reflectors.append(None)
            continue
        v = x / peak
        normv = np.sqrt(v @ v)
        v[0] += normv if v[0] >= 0 else -normv
        v /= np.sqrt(v @ v)
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        reflectors.append(v)
    q = np.eye(m, n)
    for j in range(n - 1, -1, -1):
        v = reflectors[j]
        if v is not None:
            q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])
    return q, np.triu(r[:n, :])


def _round_robin(n):
    """Pairings for a round-robin tournament over n columns.

    Every unordered pair appears exactly once per sweep; pairs within one
    round are disjoint, so a whole round can be rotated at once.
    """
    players = list(range(n + (n % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        half = size // 2
        pairs = [(players[i], players[size - 1 - i]) for i in range(half)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _jacobi(a):
    """One-sided Jacobi on the columns of square ``a``; returns (a @ v, v).

    Works on transposed copies so that each pair gather touches contiguous rows.
    """
    n = a.shape[1]
    g = np.ascontiguousarray(a.T)
    vt = np.eye(n)
    if n == 1:
        return g.T, vt.T
    tol = np.sqrt(n) * _EPS
    # columns at rounding-noise level are left alone; their singular values
    # fall far below the clamp anyway and rotating them never settles
    floor = (_EPS * np.sqrt(np.sum(g * g))) ** 2
    rounds = _round_robin(n)
    for _ in range(MAX_SWEEPS):
        rotated = 0
        for p, q in rounds:
            gp = g[p]
            gq = g[q]
            alpha = np.einsum("ij,ij->i", gp, gp)
            beta = np.einsum("ij,ij->i", gq, gq)
            gamma = np.einsum("ij,ij->i", gp, gq)
            active = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (alpha > floor) & (beta > floor)
            if not active.any():
                continue
            rotated += int(active.sum())
            if not active.all():
                p, q = p[active], q[active]
                gp, gq = gp[active], gq[active]
                alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = (1.0 / np.sqrt(1.0 + t * t))[:, None]
            s = c * t[:, None]
            g[p] = c * gp - s * gq
            g[q] = s * gp + c * gq
            vp = vt[p]
            vq = vt[q]
            vt[p] = c * vp - s * vq
            vt[q] = s * vp + c * vq
        if rotated == 0:
            return g.T, vt.T
    raise ConvergenceError(f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")


def _complete_basis(u, missing):
    """Replace columns ``missing`` of ``u`` by an orthonormal completion."""
    keep = [j for j in range(u.shape[1]) if j not in set(missing)]
    basis = u[:, keep]
    for j in missing:
        # standard basis vector least covered by the current span
        coverage = np.einsum("ij,ij->i", basis, basis)
        e = np.zeros(u.shape[0])
        e[int(np.argmin(coverage))] = 1.0
        for _ in range(2):
            e -= basis @ (basis.T @ e)
        e /= np.sqrt(e @ e)
        u[:, j] = e
        basis = np.column_stack([basis, e])
    return u


def _fix_signs(u, v):
    rows = np.argmax(np.abs(u), axis=0)
    flip = u[rows, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    v[:, flip] *= -1.0
    return u, v


def svd(a):
    """Thin singular value decomposition of ``a``.

    Deterministic: the largest-magnitude entry of each column of ``u`` is
    non-negative (first such row on ties). Raises ``ConvergenceError`` if the
    Jacobi iteration exceeds ``MAX_SWEEPS`` sweeps.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        t = svd(a.T)
        u, v = _fix_signs(t.v.copy(), t.u.copy())
        return SvdResult(u=u, sigma=t.sigma, v=v)

    # exact power-of-two scaling keeps squared norms clear of under/overflow
    exponent = int(np.frexp(np.max(np.abs(a)))[1])
    q, r = _householder_qr(np.ldexp(a, -exponent))
    g, v = _jacobi(r)
    sigma = np.sqrt(np.einsum("ij,ij->j", g, g))
    order = np.argsort(-sigma, kind="stable")
    sigma, g, v = sigma[order], g[:, order], v[:, order]

    cutoff = SIGMA_CLAMP * sigma[0]
    small = sigma < cutoff if sigma[0] > 0 else np.ones_like(sigma, dtype=bool)
    sigma = np.where(small, 0.0, sigma)
    ur = np.zeros_like(g)
    ur[:, ~small] = g[:, ~small] / sigma[~small]
    missing = np.flatnonzero(small).tolist()
    if missing:
        ur = _complete_basis(ur, missing)
    u, v = _fix_signs(q @ ur, v)
    return SvdResult(u=u, sigma=np.ldexp(sigma, exponent), v=v)


def truncate(res, r):
    """Rank-``r`` factors of an SVD: ``(U_r * sigma_r, V_r.T)``."""
    if isinstance(r, bool) or not isinstance(r, (int, np.integer)) or not 1 <= r <= res.k:
        raise ArgumentError(f"rank {r!r} outside [1, {res.k}]")
    left = res.u[:, :r] * res.sigma[:r]
    proj = res.v[:, :r].T.copy()
    return left, proj


def least_squares_rowspace(p, w, layer=None):
    """Minimise ``||Z @ p - w||_F`` over Z.

    Uses ``Z = w @ p.T`` when ``p`` already has orthonormal rows; otherwise
    solves the normal equations through an SVD of the Gram matrix ``p @ p.T``
    and raises ``SingularMatrixError`` if it is numerically rank deficient.
    """
    p = as_matrix(p, "projection")
    w = as_matrix(w, "target")
    r, n = p.shape
    if r > n:
        raise ArgumentError(f"projection has more rows than columns: {p.shape}")
    if w.shape[1] != n:
        raise ArgumentError(f"target has {w.shape[1]} columns, projection has {n}")
    gram = p @ p.T
    wpt = w @ p.T
    if frobenius_norm(gram - np.eye(r)) <= ORTHONORMAL_TOL * r:
        return wpt
    eig = svd(gram)
    if eig.sigma[-1] <= GRAM_COND_LIMIT * eig.sigma[0]:
        raise SingularMatrixError(
            f"projection Gram matrix is singular (eigenvalue ratio "
            f"{eig.sigma[-1] / eig.sigma[0] if eig.sigma[0] else 0.0:.3e})",
            layer=layer,
        )
    # gram is symmetric positive definite, so u == v and inverse = v diag(1/s) v^T
    inv = (eig.v / eig.sigma) @ eig.u.T
    return wpt @ inv
