#!/usr/bin/env python3
"""Arbitrary-precision reference values for the subsampled Gaussian RDP bound.

Evaluates log(sum_k C(a,k) (1-q)^(a-k) q^k exp((k^2-k)/(2 z^2))) / (a-1)
with mpmath at 60 significant digits and prints a Rust array literal that is
pasted into tests/accountant_oracle.rs.
"""
import itertools
import random

import mpmath as mp

mp.mp.dps = 60


def rdp(q, z, a):
    q, z = mp.mpf(q), mp.mpf(z)
    if q == 1:
        return mp.mpf(a) / (2 * z * z)
    total = mp.mpf(0)
    for k in range(a + 1):
        total += mp.binomial(a, k) * (1 - q) ** (a - k) * q ** k * mp.exp(mp.mpf(k * k - k) / (2 * z * z))
    return mp.log(total) / (a - 1)


qs = ["0.001", "0.0033333333333333335", "0.01", "0.05", "0.1", "0.25", "0.5", "0.9", "1"]
zs = ["0.01", "0.3", "0.5", "0.8", "1.1", "2", "5"]
alphas = [2, 3, 4, 5, 8, 12, 16, 32, 64, 128, 256]
grid = list(itertools.product(qs, zs, alphas))
rng = random.Random(7)
picked = rng.sample(grid, 47)
for must in [("0.01", "1.1", 32), ("0.0033333333333333335", "0.01", 2), ("1", "1", 2)]:
    if must not in picked:
        picked.append(must)
picked = picked[:50] if len(picked) > 50 else picked
while len(picked) < 50:
    c = rng.choice(grid)
    if c not in picked:
        picked.append(c)
picked.sort(key=lambda t: (float(t[0]), float(t[1]), t[2]))
print("const RDP_REFERENCE: [(f64, f64, f64, f64); %d] = [" % len(picked))
for q, z, a in picked:
    v = rdp(q, z, a)
    print("    (%s, %s, %d.0, %s)," % (q if "." in q else q + ".0", z if "." in z else z + ".0", a, mp.nstr(v, 20, min_fixed=-30, max_fixed=30)))
print("];")
