"""Susceptibility and correlation-length observables with bootstrap CIs.

Averages follow the quenched convention: a thermal mean inside each
disorder realisation first, then a plain mean over realisations.
Confidence intervals come from percentile bootstrap over the disorder
axis.
"""

from __future__ import annotations

import numpy as np


def square_coords(L):
    """Row-major (row, col) coordinates of an L x L spin grid."""
    r, c = np.divmod(np.arange(L * L), L)
    return np.stack([r, c], axis=1).astype(np.float64)


def susceptibility(samples, k, L, coords=None):
    """Wave-vector susceptibility chi(k) = L^-2 <|sum_i s_i e^{i k.r_i}|^2>.

    `samples` is an (m, N) array of +-1 spins, one row per measurement;
    the mean over rows is the thermal (or thermal-then-disorder) average.
    Coordinates default to the square grid; pass them explicitly for any
    other layout.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[None, :]
    if coords is None:
        if samples.shape[1] != L * L:
            raise ValueError(
                f"{samples.shape[1]} spins but no coordinates; the square "
                f"grid default needs L^2 = {L * L}"
            )
        coords = square_coords(L)
    coords = np.asarray(coords, dtype=np.float64)
    if len(coords) != samples.shape[1]:
        raise ValueError("coordinate count does not match spin count")
    phase = np.exp(1j * (coords @ np.asarray(k, dtype=np.float64)))
    amps = samples @ phase
    return float(np.mean(np.abs(amps) ** 2)) / L ** 2


def k_min(L, axis=1):
    """Smallest nonzero wavevector along one grid axis."""
    k = np.zeros(2)
    k[axis] = 2 * np.pi / L
    return k


def correlation_length(chi0, chik, L):
    """Second-moment finite-size correlation length.

    xi = sqrt(chi(0)/chi(k_min) - 1) / (2 sin(k_min/2)). A negative
    argument (chi0 < chik, a noise-dominated measurement) yields NaN
    rather than an exception so that scans can report and continue.
    """
    if chik <= 0:
        return float("nan")
    arg = chi0 / chik - 1.0
    if arg < 0:
        return float("nan")
    return float(np.sqrt(arg) / (2.0 * np.sin(np.pi / L)))


def bootstrap_ci(values, resamples=10000, level=0.95, rng=None,
                 statistic=None):
    """Percentile bootstrap interval over the disorder axis.

    `values` is resampled along axis 0; `statistic` maps one resample to
    a scalar (default: mean of a 1-D array). Deterministic for a fixed
    rng seed.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n < 10:
        raise ValueError(f"bootstrap needs >= 10 disorder samples, got {n}")
    if rng is None:
        rng = np.random.default_rng(0)
    if statistic is None:
        if values.ndim != 1:
            raise ValueError("default statistic needs 1-D values")
        statistic = np.mean
    idx = rng.integers(0, n, size=(resamples, n))
    stats = np.array([statistic(values[row]) for row in idx])
    stats = stats[np.isfinite(stats)]
    if not len(stats):
        return (float("nan"), float("nan"))
    alpha = (1.0 - level) / 2.0
    return (float(np.quantile(stats, alpha)),
            float(np.quantile(stats, 1.0 - alpha)))


def xi_over_l_estimate(m0sq, mksq, L, resamples=10000, rng=None):
    """Point estimate and bootstrap CI of xi/L from per-disorder thermal
    means of |M(0)|^2 and |M(k_min)|^2."""
    m0sq = np.asarray(m0sq, dtype=np.float64)
    mksq = np.asarray(mksq, dtype=np.float64)

    def stat(rows):
        chi0 = rows[:, 0].mean() / L ** 2
        chik = rows[:, 1].mean() / L ** 2
        return correlation_length(chi0, chik, L) / L

    data = np.stack([m0sq, mksq], axis=1)
    point = stat(data)
    lo, hi = bootstrap_ci(data, resamples=resamples, rng=rng, statistic=stat)
    return point, (lo, hi)


def equilibration_check(bin_estimates):
    """Consistency of the last three logarithmic bins.

    `bin_estimates` is a sequence of (xi, ci_lo, ci_hi) triples, one per
    bin in time order. Equilibrated iff each of the last three point
    estimates lies inside the other two bins' intervals.
    """
    if len(bin_estimates) < 3:
        raise ValueError("need at least three complete bins")
    last = list(bin_estimates)[-3:]
    ok = True
    for i, (xi, _, _) in enumerate(last):
        for j, (_, lo, hi) in enumerate(last):
            if i == j:
                continue
            if not (np.isfinite(xi) and lo <= xi <= hi):
                ok = False
    return ok, {
        "bins": [tuple(map(float, b)) for b in last],
        "equilibrated": ok,
    }
