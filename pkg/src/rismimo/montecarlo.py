"""Monte Carlo oracle: exact eigenvalues, mutual information, and covariance
estimates from sampled channel realizations.

Trials are keyed by (seed, trial) so estimates are bit-identical for a given
spec regardless of worker count or evaluation order; reductions run over
arrays indexed by trial (numpy pairwise summation).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import (
    ChannelSpec,
    eta,
    eta_tilde,
    sample_realization,
    sample_scatter_F,
    sample_scatter_G,
    zeta,
    zeta_tilde,
)
from .linalg import as_cmatrix

_COVARIANCE_MAPS = ("eta", "eta_tilde", "zeta", "zeta_tilde")


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    trials: int
    seed: int

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("need at least 2 trials for a standard error")


def _run_trials(fn, trials: int, threads: int = 1):
    """Evaluate fn(trial) for trial in range(trials) into a list, in order."""
    if threads <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials)))


def empirical_eigenvalues(spec: ChannelSpec, trials: int, seed: int,
                          threads: int = 1) -> np.ndarray:
    """Eigenvalue samples of H H^dagger over seeded trials (trials * R values)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def one(t: int) -> np.ndarray:
        H = sample_realization(spec, seed, t).H
        vals = np.linalg.eigvalsh(H @ H.conj().T)
        return np.clip(vals, -1e-10, None)

    return np.concatenate(_run_trials(one, trials, threads))


def empirical_density(samples, bin_edges) -> np.ndarray:
    """Histogram density over ``bin_edges``, normalized to unit mass in range."""
    samples = np.asarray(samples, dtype=np.float64)
    edges = np.asarray(bin_edges, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("no samples")
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly ascending with >= 2 entries")
    counts, _ = np.histogram(samples, bins=edges)
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples fall inside the bin range")
    widths = np.diff(edges)
    return counts / (total * widths)


def freedman_diaconis_edges(samples, min_bins: int = 40) -> np.ndarray:
    """Freedman-Diaconis bin edges with a floor on the bin count."""
    samples = np.asarray(samples, dtype=np.float64)
    lo, hi = samples.min(), samples.max()
    if hi <= lo:
        hi = lo + 1.0
    q75, q25 = np.percentile(samples, [75, 25])
    iqr = q75 - q25
    width = 2.0 * iqr / samples.size ** (1.0 / 3.0) if iqr > 0 else 0.0
    nbins = int(np.ceil((hi - lo) / width)) if width > 0 else min_bins
    nbins = max(nbins, min_bins)
    return np.linspace(lo, hi, nbins + 1)


def empirical_mutual_information(spec: ChannelSpec, gamma: float, trials: int,
                                 seed: int, threads: int = 1) -> MCEstimate:
    """Mean and standard error of log det(I + gamma H H^dagger), in nats."""
    if trials < 2:
        raise ValueError("trials must be >= 2")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    eye = np.eye(spec.R)

    def one(t: int) -> float:
        H = sample_realization(spec, seed, t).H
        _, logdet = np.linalg.slogdet(eye + gamma * (H @ H.conj().T))
        return float(logdet)

    vals = np.array(_run_trials(one, trials, threads))
    mean = float(np.sum(vals) / trials)
    std = float(np.sqrt(np.sum((vals - mean) ** 2) / (trials - 1)))
    return MCEstimate(mean=mean, stderr=std / np.sqrt(trials), trials=trials, seed=seed)


def empirical_covariance(spec: ChannelSpec, which: str, k: int, P: np.ndarray,
                         trials: int, seed: int, threads: int = 1) -> np.ndarray:
    """Sample mean of the quadratic form matching one correlation map.

    ``which`` selects the map: "eta" averages Gsc^dag P Gsc, "eta_tilde"
    averages Gsc P Gsc^dag, "zeta" averages Fsc^dag P Fsc, and "zeta_tilde"
    averages Fsc P Fsc^dag, all for link ``k``.  The output is symmetrized.
    """
    if which not in _COVARIANCE_MAPS:
        raise ValueError(f"unknown map {which!r}, expected one of {_COVARIANCE_MAPS}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    P = as_cmatrix(P, "P")

    if which in ("eta", "eta_tilde"):
        if not 1 <= k <= spec.K:
            raise ValueError(f"G-link index must be in [1, {spec.K}], got {k}")
        link = spec.links_G[k - 1]
        R, Lk = link.shape
        expected = (R, R) if which == "eta" else (Lk, Lk)

        def draw(t: int) -> np.ndarray:
            return sample_scatter_G(link, seed, t)
    else:
        if not 0 <= k <= spec.K:
            raise ValueError(f"F-link index must be in [0, {spec.K}], got {k}")
        link = spec.links_F[k]
        Lk, T = link.shape
        expected = (Lk, Lk) if which == "zeta" else (T, T)

        def draw(t: int) -> np.ndarray:
            return sample_scatter_F(link, seed, t)

    if P.shape != expected:
        raise ValueError(f"P must be {expected} for map {which!r} link {k}, got {P.shape}")

    def one(t: int) -> np.ndarray:
        X = draw(t)
        if which in ("eta", "zeta"):
            return X.conj().T @ P @ X
        return X @ P @ X.conj().T

    acc = np.sum(np.stack(_run_trials(one, trials, threads)), axis=0) / trials
    return 0.5 * (acc + acc.conj().T)


def analytic_covariance(spec: ChannelSpec, which: str, k: int, P: np.ndarray) -> np.ndarray:
    """The correlation-map value that :func:`empirical_covariance` estimates."""
    if which == "eta":
        return eta(spec.links_G[k - 1], P)
    if which == "eta_tilde":
        return eta_tilde(spec.links_G[k - 1], P)
    if which == "zeta":
        return zeta(spec.links_F[k], P)
    if which == "zeta_tilde":
        return zeta_tilde(spec.links_F[k], P)
    raise ValueError(f"unknown map {which!r}")
