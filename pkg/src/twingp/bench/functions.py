"""Test functions for emulation experiments.

Each multivariate function takes points in the unit cube, maps them to the
physical input ranges used in the literature, and evaluates row-wise.
"""
from __future__ import annotations

import numpy as np

PISTON_RANGES = np.array([
    [30.0, 60.0],        # M   piston weight (kg)
    [0.005, 0.020],      # S   piston surface area (m^2)
    [0.002, 0.010],      # V0  initial gas volume (m^3)
    [1000.0, 5000.0],    # k   spring coefficient (N/m)
    [90000.0, 110000.0], # P0  atmospheric pressure (N/m^2)
    [290.0, 296.0],      # Ta  ambient temperature (K)
    [340.0, 360.0],      # T0  filling gas temperature (K)
])

BOREHOLE_RANGES = np.array([
    [0.05, 0.15],        # rw  borehole radius (m)
    [100.0, 50000.0],    # r   radius of influence (m)
    [63070.0, 115600.0], # Tu  upper aquifer transmissivity (m^2/yr)
    [990.0, 1110.0],     # Hu  upper aquifer head (m)
    [63.1, 116.0],       # Tl  lower aquifer transmissivity (m^2/yr)
    [700.0, 820.0],      # Hl  lower aquifer head (m)
    [1120.0, 1680.0],    # L   borehole length (m)
    [9855.0, 12045.0],   # Kw  borehole hydraulic conductivity (m/yr)
])


def _unit_rows(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != d:
        raise ValueError(f"expected {d} input columns, got {x.shape[1]}")
    return x


def _to_physical(u, ranges):
    return ranges[:, 0] + u * (ranges[:, 1] - ranges[:, 0])


def _squeeze(out, x):
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def gramacy_1d(x):
    """``sin(10 pi x) / (2x) + (x - 1)^4`` on [0.5, 2.5]."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.5) | (x > 2.5)):
        raise ValueError("gramacy_1d is defined on [0.5, 2.5]")
    out = np.sin(10 * np.pi * x) / (2 * x) + (x - 1) ** 4
    return float(out) if out.ndim == 0 else out


def gramacy_1d_unit(u):
    """:func:`gramacy_1d` with its domain mapped to [0, 1]; takes (t, 1) rows."""
    u = _unit_rows(u, 1)
    return gramacy_1d(np.clip(0.5 + 2.0 * u[:, 0], 0.5, 2.5))


def piston(u):
    """Piston cycle time in seconds."""
    x = _to_physical(_unit_rows(u, 7), PISTON_RANGES)
    M, S, V0, k, P0, Ta, T0 = x.T
    A = P0 * S + 19.62 * M - k * V0 / S
    V = S / (2 * k) * (np.sqrt(A**2 + 4 * k * (P0 * V0 / T0) * Ta) - A)
    C = 2 * np.pi * np.sqrt(M / (k + S**2 * (P0 * V0 / T0) * (Ta / V**2)))
    return _squeeze(C, u)


def borehole(u):
    """Water flow rate through a borehole in m^3/yr."""
    x = _to_physical(_unit_rows(u, 8), BOREHOLE_RANGES)
    rw, r, Tu, Hu, Tl, Hl, L, Kw = x.T
    log_ratio = np.log(r / rw)
    flow = 2 * np.pi * Tu * (Hu - Hl) / (
        log_ratio * (1 + 2 * L * Tu / (log_ratio * rw**2 * Kw) + Tu / Tl))
    return _squeeze(flow, u)


def dette_pepelyshev(u):
    """Eight-dimensional Dette-Pepelyshev function on the unit cube."""
    x = _unit_rows(u, 8)
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    out = (4 * (x1 - 2 + 8 * x2 - 8 * x2**2) ** 2
           + (3 - 4 * x2) ** 2
           + 16 * np.sqrt(x3 + 1) * (2 * x3 - 1) ** 2)
    csum = np.cumsum(x[:, 2:], axis=1)
    for i in range(4, 9):
        out = out + i * np.log(1 + csum[:, i - 3])
    return _squeeze(out, u)


FUNCTIONS = {
    "gramacy1d": (gramacy_1d_unit, 1),
    "piston": (piston, 7),
    "borehole": (borehole, 8),
    "detpep": (dette_pepelyshev, 8),
}
