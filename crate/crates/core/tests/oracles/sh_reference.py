"""Independent spherical-harmonic synthesis used to freeze reference values.

Generates the degree-13 synthetic coefficient file (data/synthetic_deg13.shm)
and evaluates B = -grad V with mpmath (arbitrary precision Ferrers functions and
numerical differentiation of the potential).  The printed table is pasted into
tests/geomag_reference.rs.  Run once:

    python3 tests/oracles/sh_reference.py
"""

import math
import os

import mpmath as mp
import numpy as np

A = 6371200.0
EPOCH = 2020.0
MAX_DEGREE = 13
HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "..", "data", "synthetic_deg13.shm")


def generate():
    rng = np.random.default_rng(20200101)
    coeffs = {}
    coeffs[(1, 0)] = (-29404.8, 0.0, 5.7, 0.0)
    coeffs[(1, 1)] = (-1450.9, 4652.5, 7.4, -25.9)
    for n in range(2, MAX_DEGREE + 1):
        amp = 4000.0 * 0.6 ** (n - 2)
        sv = 20.0 * 0.7 ** (n - 1)
        for m in range(0, n + 1):
            g = round(float(rng.uniform(-amp, amp)), 1)
            h = 0.0 if m == 0 else round(float(rng.uniform(-amp, amp)), 1)
            gd = round(float(rng.uniform(-sv, sv)), 1)
            hd = 0.0 if m == 0 else round(float(rng.uniform(-sv, sv)), 1)
            coeffs[(n, m)] = (g, h, gd, hd)
    with open(OUT, "w") as f:
        f.write("# synthetic degree-13 test model (not a real geomagnetic reference field)\n")
        f.write(f"SHMODEL {EPOCH:.1f} {MAX_DEGREE}\n")
        for n in range(1, MAX_DEGREE + 1):
            for m in range(0, n + 1):
                g, h, gd, hd = coeffs[(n, m)]
                f.write(f"{n} {m} {g:.1f} {h:.1f} {gd:.1f} {hd:.1f}\n")
    return coeffs


def schmidt(n, m, x):
    # mpmath legenp (type 2) includes the Condon-Shortley phase.
    p = mp.legenp(n, m, x, type=2)
    if m == 0:
        return p
    return (-1) ** m * mp.sqrt(2 * mp.factorial(n - m) / mp.factorial(n + m)) * p


def potential(coeffs, epoch, r, theta, phi):
    dt = epoch - EPOCH
    x = mp.cos(theta)
    v = mp.mpf(0)
    for (n, m), (g, h, gd, hd) in coeffs.items():
        gt = mp.mpf(g) + mp.mpf(gd) * dt
        ht = mp.mpf(h) + mp.mpf(hd) * dt
        v += (A / r) ** (n + 1) * (gt * mp.cos(m * phi) + ht * mp.sin(m * phi)) * schmidt(n, m, x)
    return A * v


def field(coeffs, epoch, lat_deg, lon_deg, alt):
    mp.mp.dps = 40
    r0 = mp.mpf(A + alt)
    th0 = mp.pi / 2 - mp.radians(lat_deg)
    ph0 = mp.radians(lon_deg)
    dvr = mp.diff(lambda r: potential(coeffs, epoch, r, th0, ph0), r0)
    dvt = mp.diff(lambda t: potential(coeffs, epoch, r0, t, ph0), th0)
    dvp = mp.diff(lambda p: potential(coeffs, epoch, r0, th0, p), ph0)
    br = -dvr
    bt = -dvt / r0
    bp = -dvp / (r0 * mp.sin(th0))
    return float(-bt), float(bp), float(-br)


if __name__ == "__main__":
    coeffs = generate()
    cases = [
        (35.0, -110.0, 5000.0, 2024.5),
        (-34.3, 146.0, 1100.0, 2025.1),
        (80.0, 10.0, 0.0, 2020.0),
        (-1.5, -60.0, 19000.0, 2029.9),
    ]
    for lat, lon, alt, ep in cases:
        x, y, z = field(coeffs, ep, lat, lon, alt)
        print(f"({lat:.1f}, {lon:.1f}, {alt:.1f}, {ep:.1f}, [{x:.6f}, {y:.6f}, {z:.6f}]),")
