"""Regenerates the pure-noise fixture and its golden estimates.

The estimates come from a direct O(n^2) evaluation of the localized
estimator that scans every candidate neighbor, using the same floating
point operation order as the library so results agree bit for bit.

    python3 gen_golden.py
"""

import math
import random

P = 4
TICKS = 400
SCALE = 0.005
SEED = 20240611
TICK_DURATION = 1.0
K = 3
XI = 2.5
BETA = 1.2e-4

# Banded noise correlation, applied through a hand-written Cholesky factor.
R = [[1.0, 0.6, 0.3, 0.0], [0.6, 1.0, 0.6, 0.3], [0.3, 0.6, 1.0, 0.6], [0.0, 0.3, 0.6, 1.0]]


def cholesky(a):
    n = len(a)
    low = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            s = a[i][j] - sum(low[i][k] * low[j][k] for k in range(j))
            low[i][j] = math.sqrt(s) if i == j else s / low[j][j]
    return low


def make_panel():
    rng = random.Random(SEED)
    low = cholesky(R)
    obs = {f"A{i}": [] for i in range(P)}
    for t in range(1, TICKS + 1):
        z = [rng.gauss(0.0, 1.0) for _ in range(P)]
        u = [SCALE * sum(low[i][k] * z[k] for k in range(i + 1)) for i in range(P)]
        for i in range(P):
            # Asset i is observed with probability 1 - i/8.
            if rng.random() < 1.0 - i / 8.0:
                obs[f"A{i}"].append((t, u[i]))
    return obs


def pair_grid(obs, a, b):
    vb = dict(obs[b])
    ticks, yi, yj = [], [], []
    for t, v in obs[a]:
        if t in vb:
            ticks.append(t)
            yi.append(v)
            yj.append(vb[t])
    return ticks, yi, yj


def local_estimate(ticks, yi, yj, in_window):
    zetas = []
    n = len(ticks)
    for k in range(n):
        s = 0.0
        count = 0
        for l in range(n):
            if l != k and in_window(k, l):
                s += (yi[l] - yi[k]) * (yj[l] - yj[k])
                count += 1
        if count > 0:
            zetas.append(s / (2.0 * count))
    total = 0.0
    for z in zetas:
        total += z
    return total / len(zetas)


def estimate(obs, window):
    names = sorted(obs)
    m = [[0.0] * P for _ in range(P)]
    n_star = None
    for i in range(P):
        for j in range(i, P):
            ticks, yi, yj = pair_grid(obs, names[i], names[j])
            n_star = len(ticks) if n_star is None else min(n_star, len(ticks))
            if window == "K":
                f = lambda k, l: abs(l - k) <= K
            else:
                f = lambda k, l, t=ticks: abs(t[l] - t[k]) * TICK_DURATION <= XI
            m[i][j] = m[j][i] = local_estimate(ticks, yi, yj, f)
    return names, m, n_star


def universal(m, n_star):
    cutoff = BETA * math.sqrt(math.log(P) / n_star)
    return [[v if abs(v) >= cutoff else 0.0 for v in row] for row in m]


def write_matrix(path, names, m):
    with open(path, "w") as f:
        f.write(",".join(names) + "\n")
        for row in m:
            f.write(",".join(repr(v) for v in row) + "\n")


def main():
    obs = make_panel()
    with open("pure_noise_ticks.csv", "w") as f:
        f.write("tick,asset,value\n")
        for name in sorted(obs):
            for t, v in obs[name]:
                f.write(f"{t},{name},{v!r}\n")
    for window in ("K", "xi"):
        names, m, n_star = estimate(obs, window)
        write_matrix(f"golden_{window}_raw.csv", names, m)
        write_matrix(f"golden_{window}_universal.csv", names, universal(m, n_star))


if __name__ == "__main__":
    main()
