"""Correlation functions: power exponential (global), Wendland (local), and their mix.

All inputs are expected on the unit-scaled input space. The scalar functions
exist for readability and testing; model code goes through ``kernel_matrix``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GlobalKernelParams:
    """Power exponential kernel ``exp(-sum_i |dx_i|^alpha / theta_i)`` plus nugget."""

    lengthscales: np.ndarray
    alpha: float = 2.0
    nugget: float = 1e-6
    # coordinates excluded from the distance (constant input columns)
    active: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", theta)
        if not np.all(theta > 0):
            raise ValueError("lengthscales must be positive")
        if not 1.0 <= self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in [1, 2], got {self.alpha}")
        if not self.nugget > 0:
            raise ValueError("nugget must be positive")
        if self.active is not None:
            active = np.asarray(self.active, dtype=bool)
            if active.shape != theta.shape:
                raise ValueError("active mask must match the number of lengthscales")
            object.__setattr__(self, "active", active)

    @property
    def dim(self) -> int:
        return self.lengthscales.size


@dataclass(frozen=True)
class LocalKernelParams:
    """Wendland kernel with support radius ``radius`` and smoothness ``q``."""

    radius: float
    q: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("support radius must be positive")
        if self.q < 2:
            raise ValueError("q must be at least 2")

    @classmethod
    def for_dimension(cls, radius: float, d: int) -> "LocalKernelParams":
        return cls(float(radius), wendland_q(d))


@dataclass(frozen=True)
class MixtureParams:
    lam: float
    local_nugget: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.local_nugget > 0:
            raise ValueError("local nugget must be positive")

    def nugget(self, global_nugget: float) -> float:
        """Combined nugget ``(1 - lam) * eta_g + lam * eta_l``."""
        return (1.0 - self.lam) * global_nugget + self.lam * self.local_nugget


@dataclass(frozen=True)
class CombinedKernel:
    """``(1 - lam) G + lam L``."""

    global_params: GlobalKernelParams
    local_params: LocalKernelParams
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")


def wendland_q(d: int) -> int:
    return d // 2 + 2


def _as_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim < 2:
        raise ValueError(f"expected an array of points, got shape {X.shape}")
    return X


def _wendland(u: np.ndarray, q: int) -> np.ndarray:
    # clipping at 0 makes the value exactly 0 for u >= 1
    return ((q + 1) * u + 1.0) * np.maximum(0.0, 1.0 - u) ** (q + 1)


def global_kernel(x_a, x_b, p: GlobalKernelParams) -> float:
    diff = np.abs(np.asarray(x_a, dtype=float) - np.asarray(x_b, dtype=float))
    if p.active is not None:
        diff = np.where(p.active, diff, 0.0)
    return float(np.exp(-np.sum(diff**p.alpha / p.lengthscales)))


def local_kernel(x_a, x_b, p: LocalKernelParams, active=None) -> float:
    diff = np.asarray(x_a, dtype=float) - np.asarray(x_b, dtype=float)
    if active is not None:
        diff = np.where(active, diff, 0.0)
    u = np.sqrt(np.sum(diff * diff)) / p.radius
    return float(_wendland(np.asarray(u), p.q))


def combined_kernel(x_a, x_b, g: GlobalKernelParams, l: LocalKernelParams,
                    m: MixtureParams | float) -> float:
    lam = m.lam if isinstance(m, MixtureParams) else float(m)
    if lam == 0.0:
        return global_kernel(x_a, x_b, g)
    if lam == 1.0:
        return local_kernel(x_a, x_b, l, g.active)
    return (1.0 - lam) * global_kernel(x_a, x_b, g) + lam * local_kernel(x_a, x_b, l, g.active)


def _pair_shape(XA, XB):
    batch = np.broadcast_shapes(XA.shape[:-2], XB.shape[:-2])
    return batch + (XA.shape[-2], XB.shape[-2])


# The matrix builders accept (..., a, d) and (..., b, d) with broadcastable
# leading dimensions and return (..., a, b).

def global_matrix(XA, XB, p: GlobalKernelParams) -> np.ndarray:
    XA, XB = _as_rows(XA), _as_rows(XB)
    if XA.shape[-1] != p.dim or XB.shape[-1] != p.dim:
        raise ValueError("point dimension does not match the lengthscales")
    expo = np.zeros(_pair_shape(XA, XB))
    for i in range(p.dim):
        if p.active is not None and not p.active[i]:
            continue
        diff = np.abs(XA[..., :, None, i] - XB[..., None, :, i])
        if p.alpha == 2.0:
            diff = diff * diff
        elif p.alpha != 1.0:
            diff = diff**p.alpha
        expo += diff / p.lengthscales[i]
    return np.exp(-expo)


def sq_distances(XA, XB, active=None) -> np.ndarray:
    sq = np.zeros(_pair_shape(XA, XB))
    for i in range(XA.shape[-1]):
        if active is not None and not active[i]:
            continue
        diff = XA[..., :, None, i] - XB[..., None, :, i]
        sq += diff * diff
    return sq


def local_matrix(XA, XB, p: LocalKernelParams, active=None) -> np.ndarray:
    XA, XB = _as_rows(XA), _as_rows(XB)
    if XA.shape[-1] != XB.shape[-1]:
        raise ValueError("point sets have different dimensions")
    u = np.sqrt(sq_distances(XA, XB, active)) / p.radius
    return _wendland(u, p.q)


def kernel_matrix(XA, XB, spec) -> np.ndarray:
    """Correlation matrix between two point sets for any supported kernel spec.

    ``spec`` is a :class:`GlobalKernelParams`, a :class:`LocalKernelParams`
    or a :class:`CombinedKernel`.
    """
    XA, XB = _as_rows(XA), _as_rows(XB)
    if XA.shape[-1] != XB.shape[-1]:
        raise ValueError(f"dimension mismatch: {XA.shape[-1]} vs {XB.shape[-1]}")
    if isinstance(spec, GlobalKernelParams):
        return global_matrix(XA, XB, spec)
    if isinstance(spec, LocalKernelParams):
        return local_matrix(XA, XB, spec)
    if isinstance(spec, CombinedKernel):
        if spec.lam == 0.0:
            return global_matrix(XA, XB, spec.global_params)
        active = spec.global_params.active
        if spec.lam == 1.0:
            return local_matrix(XA, XB, spec.local_params, active)
        return ((1.0 - spec.lam) * global_matrix(XA, XB, spec.global_params)
                + spec.lam * local_matrix(XA, XB, spec.local_params, active))
    raise TypeError(f"unsupported kernel spec {type(spec).__name__}")
