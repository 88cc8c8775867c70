"""Generate the frozen Welch t-test oracle fixture.

Computes t, Welch-Satterthwaite df, and the two-sided p-value for 50 fixed
sample pairs at 60 decimal digits with mpmath, independently of the engine's
own statistics code. The p-value comes straight from the regularized
incomplete beta identity p = I_x(df/2, 1/2) with x = df / (df + t^2).

Run from the repo root:

    python tools/gen_welch_oracle.py > tests/fixtures/welch_oracle.json
"""

from __future__ import annotations

import json
import random
import sys

import mpmath as mp

mp.mp.dps = 60


def _mean(xs: list[mp.mpf]) -> mp.mpf:
    return mp.fsum(xs) / len(xs)


def _var(xs: list[mp.mpf]) -> mp.mpf:
    m = _mean(xs)
    return mp.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def welch_exact(a: list[float], b: list[float]) -> tuple[float, float, float]:
    xa = [mp.mpf(repr(v)) for v in a]
    xb = [mp.mpf(repr(v)) for v in b]
    na, nb = len(xa), len(xb)
    va, vb = _var(xa), _var(xb)
    sa, sb = va / na, vb / nb
    t = (_mean(xa) - _mean(xb)) / mp.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
    x = df / (df + t**2)
    p = mp.betainc(df / 2, mp.mpf(1) / 2, 0, x, regularized=True)
    return float(t), float(df), float(p)


def main() -> None:
    rng = random.Random(90125)
    pairs: list[tuple[list[float], list[float]]] = [
        # Hand-picked edges: identical samples, pooled-df reduction, strong
        # separation, near-zero variance, tiny n.
        ([1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0, 5.0]),
        ([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]),
        ([1.0, 2.0, 3.0, 4.0], [11.0, 12.0, 13.0, 14.0]),
        ([0.0, 1.0], [100.0, 101.0]),
        ([5.0, 5.000001, 4.999999], [5.1, 5.2, 5.05]),
        ([-3.0, -1.0, 0.0, 1.0, 3.0], [-2.0, 2.0]),
    ]
    while len(pairs) < 50:
        na = rng.randint(2, 40)
        nb = rng.randint(2, 40)
        loc_a = rng.uniform(-5, 5)
        loc_b = loc_a + rng.uniform(-2, 2)
        sd_a = rng.uniform(0.05, 4.0)
        sd_b = rng.uniform(0.05, 4.0)
        a = [round(rng.gauss(loc_a, sd_a), 9) for _ in range(na)]
        b = [round(rng.gauss(loc_b, sd_b), 9) for _ in range(nb)]
        if _var([mp.mpf(repr(v)) for v in a]) == 0 and _var([mp.mpf(repr(v)) for v in b]) == 0:
            continue
        pairs.append((a, b))

    cases = []
    for a, b in pairs:
        t, df, p = welch_exact(a, b)
        cases.append({"a": a, "b": b, "t": t, "df": df, "p": p})
    json.dump({"digits": 60, "cases": cases}, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
