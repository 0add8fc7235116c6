"""Reference desire spectrum of the shipped d=4 spectral mixture.

Independent of the Rust code: plain numpy rejection sampling of each
truncated Gaussian on the non-negative unit ball, 10^7 accepted draws per
marginal, split into 20 batches for a standard error. Prints JSON that the
Rust tests freeze as constants.

    python3 tools/oracles/spectral_reference.py
"""

import json

import numpy as np

N = 10_000_000
BATCHES = 20

COMPONENTS = [
    dict(g=[0.85, 0.2, 0.1, 0.1], kg=[500, 30, 30, 30],
         r=[0.2, 0.1, 0.1, 0.85], kr=[30, 30, 30, 500], mg=1.0, mr=0.6),
    dict(g=[0.1, 0.8, 0.3, 0.1], kg=[30, 500, 30, 30],
         r=[0.7, 0.5, 0.1, 0.1], kr=[500, 500, 30, 30], mg=1.0, mr=0.4),
]


def second_moment_batches(rng, mean, kappa):
    mean = np.asarray(mean, float)
    sd = 1.0 / np.sqrt(np.asarray(kappa, float))
    per = N // BATCHES
    out = []
    for _ in range(BATCHES):
        acc = np.zeros((4, 4))
        got = 0
        while got < per:
            x = rng.normal(mean, sd, size=(1_000_000, 4))
            ok = (x >= 0).all(1) & (x <= 1).all(1) & ((x * x).sum(1) <= 1)
            x = x[ok][: per - got]
            acc += x.T @ x
            got += len(x)
        out.append(acc / per)
    return np.array(out)


def spectrum(sg, sr):
    w, v = np.linalg.eigh(sg)
    h = v @ np.diag(np.sqrt(np.clip(w, 0, None))) @ v.T
    ev = np.linalg.eigvalsh(h @ sr @ h)
    return np.sort(np.sqrt(np.clip(ev, 0, None)))[::-1]


def main():
    rng = np.random.default_rng(20240607)
    gamma = np.array([c["mg"] * c["mr"] for c in COMPONENTS])
    pi = gamma / gamma.sum()
    sg = sum(p * second_moment_batches(rng, c["g"], c["kg"]) for p, c in zip(pi, COMPONENTS))
    sr = sum(p * second_moment_batches(rng, c["r"], c["kr"]) for p, c in zip(pi, COMPONENTS))
    per_batch = np.array([spectrum(a, b) for a, b in zip(sg, sr)])
    full = spectrum(sg.mean(0), sr.mean(0))
    se = per_batch.std(0, ddof=1) / np.sqrt(BATCHES)
    print(json.dumps({
        "samples_per_marginal": N,
        "sigma_g": sg.mean(0).tolist(),
        "sigma_r": sr.mean(0).tolist(),
        "singular_values": full.tolist(),
        "singular_values_se": se.tolist(),
    }, indent=2))


if __name__ == "__main__":
    main()
