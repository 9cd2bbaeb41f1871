"""Regenerate the reference values for the emulator test functions.

Scalar, pure-``math`` transcription of the published formulas, written
separately from the package code and deliberately not importing it.
Run from the repository root: ``python3 tests/fixtures/make_function_fixtures.py``.
"""
import json
import math
import random
from pathlib import Path

PISTON = [(30, 60), (0.005, 0.020), (0.002, 0.010), (1000, 5000),
          (90000, 110000), (290, 296), (340, 360)]
BOREHOLE = [(0.05, 0.15), (100, 50000), (63070, 115600), (990, 1110),
            (63.1, 116), (700, 820), (1120, 1680), (9855, 12045)]


def scale(u, ranges):
    return [lo + ui * (hi - lo) for ui, (lo, hi) in zip(u, ranges)]


def piston(u):
    M, S, V0, k, P0, Ta, T0 = scale(u, PISTON)
    A = P0 * S + 19.62 * M - k * V0 / S
    V = S / (2 * k) * (math.sqrt(A * A + 4 * k * P0 * V0 / T0 * Ta) - A)
    return 2 * math.pi * math.sqrt(M / (k + S * S * P0 * V0 / T0 * Ta / (V * V)))


def borehole(u):
    rw, r, Tu, Hu, Tl, Hl, L, Kw = scale(u, BOREHOLE)
    lr = math.log(r / rw)
    return 2 * math.pi * Tu * (Hu - Hl) / (lr * (1 + 2 * L * Tu / (lr * rw * rw * Kw) + Tu / Tl))


def detpep(x):
    out = 4 * (x[0] - 2 + 8 * x[1] - 8 * x[1] ** 2) ** 2 + (3 - 4 * x[1]) ** 2
    out += 16 * math.sqrt(x[2] + 1) * (2 * x[2] - 1) ** 2
    for i in range(4, 9):
        out += i * math.log(1 + sum(x[2:i]))
    return out


def gramacy(x):
    return math.sin(10 * math.pi * x) / (2 * x) + (x - 1) ** 4


def main():
    rng = random.Random(20240601)
    out = {}
    for name, f, d in [("piston", piston, 7), ("borehole", borehole, 8), ("detpep", detpep, 8)]:
        pts = [[0.5] * d, [0.0] * d, [1.0] * d]
        pts += [[rng.random() for _ in range(d)] for _ in range(17)]
        out[name] = [{"x": p, "y": f(p)} for p in pts]
    xs = [0.5, 1.0, 2.5] + [0.5 + 2 * rng.random() for _ in range(17)]
    out["gramacy1d"] = [{"x": [x], "y": gramacy(x)} for x in xs]
    path = Path(__file__).with_name("test_functions.json")
    path.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
