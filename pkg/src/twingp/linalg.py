"""Dense SPD algebra and the Schur-complement block solver.

Everything here works in float64. Factorizations that fail are retried with a
small diagonal jitter before giving up; the jitter actually used is kept on
the returned object so callers can report it.

Block systems may carry leading batch dimensions: one shared global block
``Sigma_gg^{-1}`` of shape (g, g) and stacks of cross/local blocks of shape
(..., g, l) and (..., l, l). A batch of queries then costs one stacked
``matmul`` per step instead of a Python loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a matrix stays indefinite after the whole jitter ladder."""


@dataclass(frozen=True)
class SPDFactor:
    """Lower Cholesky factor of ``M + jitter * I``."""

    lower: np.ndarray
    jitter: float = 0.0

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def spd_factorize(M, ladder=JITTER_LADDER) -> SPDFactor:
    """Cholesky-factor a symmetric matrix, escalating diagonal jitter on failure."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    eye = np.eye(M.shape[0])
    for jitter in ladder:
        try:
            L = np.linalg.cholesky(M + jitter * eye if jitter else M)
        except np.linalg.LinAlgError:
            continue
        return SPDFactor(L, jitter)
    raise NotPositiveDefinite(
        f"matrix of size {M.shape[0]} is not positive definite "
        f"even with diagonal jitter {ladder[-1]:g}"
    )


def solve(f: SPDFactor, B) -> np.ndarray:
    """Return X with (M + jitter I) X = B."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != f.size:
        raise ValueError(f"right-hand side has {B.shape[0]} rows, factor has {f.size}")
    return sla.cho_solve((f.lower, True), B, check_finite=False)


def log_det(f: SPDFactor) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(f.lower))))


def spd_inverse(f: SPDFactor) -> np.ndarray:
    """Explicit inverse from a factor, symmetrized."""
    inv = solve(f, np.eye(f.size))
    return 0.5 * (inv + inv.T)


def inverse_root(f: SPDFactor) -> np.ndarray:
    """``L^{-1}`` for the Cholesky factor ``L``, so that ``M^{-1} = L^{-T} L^{-1}``.

    Quadratic forms ``v' M^{-1} v`` computed as ``|L^{-1} v|^2`` stay
    nonnegative and lose far less accuracy than going through ``M^{-1}``.
    """
    return sla.solve_triangular(f.lower, np.eye(f.size), lower=True)


def _batched_cholesky(S: np.ndarray, ladder=JITTER_LADDER):
    """Cholesky of a stack of matrices.

    Returns ``(L, jitter, ok)`` where ``ok`` marks slices that factorized.
    The fast path factors the whole stack at once; only when that fails are
    slices retried one by one with jitter.
    """
    try:
        L = np.linalg.cholesky(S)
        shape = S.shape[:-2]
        return L, np.zeros(shape), np.ones(shape, dtype=bool)
    except np.linalg.LinAlgError:
        pass
    flat = S.reshape(-1, *S.shape[-2:])
    L = np.zeros_like(flat)
    jit = np.zeros(flat.shape[0])
    ok = np.zeros(flat.shape[0], dtype=bool)
    for i, Si in enumerate(flat):
        try:
            fi = spd_factorize(0.5 * (Si + Si.T), ladder)
        except (NotPositiveDefinite, ValueError):
            L[i] = np.eye(Si.shape[0])
            continue
        L[i], jit[i], ok[i] = fi.lower, fi.jitter, True
    shape = S.shape[:-2]
    return L.reshape(S.shape), jit.reshape(shape), ok.reshape(shape)


@dataclass(frozen=True)
class BlockSystem:
    """Block form of ``[[Sigma_gg, R_gl], [R_lg, R_ll + eta I]]``.

    ``W = Sigma_gg^{-1} R_gl`` is kept because every solve reuses it. When
    the inverse root of ``Sigma_gg`` is supplied, ``V = root R_gl`` is kept
    as well and ``S`` is formed as ``R_ll_eta - V'V``.
    """

    sigma_gg_inv: np.ndarray
    R_gl: np.ndarray
    R_ll_eta: np.ndarray
    W: np.ndarray
    S: np.ndarray
    S_lower: np.ndarray
    S_jitter: np.ndarray
    ok: np.ndarray
    sigma_root: np.ndarray | None = None
    V: np.ndarray | None = None

    @property
    def g(self) -> int:
        return self.sigma_gg_inv.shape[0]

    @property
    def l(self) -> int:
        return self.R_ll_eta.shape[-1]


def build_block_system(sigma_gg_inv, R_gl, R_ll_eta, strict=True, sigma_root=None) -> BlockSystem:
    """Form the Schur complement ``S = R_ll_eta - R_lg Sigma^{-1} R_gl`` and factor it.

    With ``strict=False`` slices whose ``S`` cannot be factored are flagged in
    ``ok`` instead of raising, so a batch can fall back per query.
    """
    sigma_gg_inv = np.asarray(sigma_gg_inv, dtype=float)
    R_gl = np.asarray(R_gl, dtype=float)
    R_ll_eta = np.asarray(R_ll_eta, dtype=float)
    g = sigma_gg_inv.shape[0]
    if sigma_gg_inv.shape != (g, g) or R_gl.shape[-2] != g:
        raise ValueError("inconsistent global block shapes")
    l = R_gl.shape[-1]
    if R_ll_eta.shape[-2:] != (l, l) or R_ll_eta.shape[:-2] != R_gl.shape[:-2]:
        raise ValueError("inconsistent local block shapes")
    R_lg = np.swapaxes(R_gl, -1, -2)
    V = None
    if sigma_root is None:
        W = np.matmul(sigma_gg_inv, R_gl)
        S = R_ll_eta - np.matmul(R_lg, W)
    else:
        V = np.matmul(sigma_root, R_gl)
        W = np.matmul(sigma_root.T, V)
        S = R_ll_eta - np.matmul(np.swapaxes(V, -1, -2), V)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    L, jitter, ok = _batched_cholesky(S)
    if strict and not np.all(ok):
        raise NotPositiveDefinite("Schur complement is not positive definite")
    return BlockSystem(sigma_gg_inv, R_gl, R_ll_eta, W, S, L, jitter, ok, sigma_root, V)


def _schur_solve(sys: BlockSystem, B):
    # jittered slices solve against S + jitter I, matching their factor
    L = sys.S_lower
    return np.linalg.solve(np.swapaxes(L, -1, -2), np.linalg.solve(L, B))


def block_solve(sys: BlockSystem, v) -> np.ndarray:
    """Apply ``[R_mm + eta I]^{-1}`` to ``v`` using only ``Sigma_gg^{-1}`` and ``S``.

    ``v`` has shape (..., g + l) or (..., g + l, k); batch dimensions must
    match those of the system. The dense (g + l) x (g + l) inverse is never
    formed.
    """
    v = np.asarray(v, dtype=float)
    vector = v.ndim == sys.R_gl.ndim - 1
    if vector:
        v = v[..., None]
    g = sys.g
    if v.shape[-2] != g + sys.l:
        raise ValueError(f"vector length {v.shape[-2]} does not match g + l = {g + sys.l}")
    a, b = v[..., :g, :], v[..., g:, :]
    R_lg = np.swapaxes(sys.R_gl, -1, -2)
    if sys.sigma_root is None:
        u = np.matmul(sys.sigma_gg_inv, a)
    else:
        u = np.matmul(sys.sigma_root.T, np.matmul(sys.sigma_root, a))
    lower = _schur_solve(sys, b - np.matmul(R_lg, u))
    upper = u - np.matmul(sys.W, lower)
    out = np.concatenate([upper, lower], axis=-2)
    return out[..., 0] if vector else out


def block_quad(sys: BlockSystem, r) -> np.ndarray:
    """``r' [R_mm + eta I]^{-1} r`` for each (..., g + l) vector ``r``.

    With an inverse root this is a sum of two squared norms, which keeps
    ``1 - quad`` accurate when the system is nearly singular.
    """
    r = np.asarray(r, dtype=float)
    g = sys.g
    if sys.sigma_root is None:
        return np.sum(r * block_solve(sys, r), axis=-1)
    rg, rl = r[..., :g, None], r[..., g:, None]
    qg = np.matmul(sys.sigma_root, rg)
    w = rl - np.matmul(np.swapaxes(sys.V, -1, -2), qg)
    z = np.linalg.solve(sys.S_lower, w)
    return np.sum(qg[..., 0] ** 2, axis=-1) + np.sum(z[..., 0] ** 2, axis=-1)


def dense_block_matrix(sys: BlockSystem) -> np.ndarray:
    """Reassemble the full matrix ``R_mm + eta I`` (for checks only)."""
    sigma = np.linalg.inv(sys.sigma_gg_inv)
    sigma = np.broadcast_to(sigma, sys.R_gl.shape[:-2] + sigma.shape)
    top = np.concatenate([sigma, sys.R_gl], axis=-1)
    bottom = np.concatenate([np.swapaxes(sys.R_gl, -1, -2), sys.R_ll_eta], axis=-1)
    return np.concatenate([top, bottom], axis=-2)
