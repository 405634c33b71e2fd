"""Spectral densities, mutual information, and high-SNR diagnostics computed
from converged Cauchy-transform evaluations.

Mutual information uses the integral form I(gamma) = R * int_0^gamma (1/t +
G_B(-1/t)/t^2) dt evaluated with composite Gauss-Legendre panels on real-axis
solves; densities use the boundary values -Im G_B(t + i eps)/pi along a
warm-started sweep.  A :class:`CauchyEvaluator` caches real-axis values so
sweeps and bisection searches share one continuation chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSpec
from .solver import SolverOptions, SolverState, cauchy_B, solve_fixed_point, sweep


class DeviationNotFound(RuntimeError):
    """The deviation from the high-SNR law never reaches the threshold."""


@dataclass
class SpectralResult:
    """Density samples f_B(t) on a grid, with the smoothing shift used."""

    t_grid: np.ndarray
    density: np.ndarray
    epsilon: float
    mass: float
    failures: tuple[int, ...] = ()

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=np.float64)
        self.density = np.asarray(self.density, dtype=np.float64)


@dataclass
class MIResult:
    """Mutual information (nats) at one linear SNR."""

    gamma: float
    value: float
    quadrature_error_estimate: float

    @property
    def bits(self) -> float:
        return self.value / math.log(2.0)


def high_snr_slope(T: int, R: int) -> float:
    """High-SNR growth rate of the mutual information, nats per dB."""
    if T < 1 or R < 1:
        raise ValueError("antenna counts must be >= 1")
    return min(T, R) / (10.0 * math.log10(math.e))


def support_edge_estimate(spec: ChannelSpec) -> float:
    """Deterministic upper estimate of the eigenvalue support edge."""
    from .channel import scatter_power_H

    mean_norm = np.linalg.norm(spec.mean_effective, 2)
    scatter = math.sqrt(scatter_power_H(spec) / min(spec.R, spec.T))
    return 1.1 * (mean_norm + 2.0 * scatter) ** 2 + 1e-9


class CauchyEvaluator:
    """Caches Cauchy-transform values at z = -1/t along one warm chain.

    Nodes are solved in ascending t (descending |z|), each warm-started from
    the previous converged state; nodes behind the chain head are solved from
    a cold start (they sit far from the spectrum where cold starts are cheap).
    """

    def __init__(self, spec: ChannelSpec, opts: SolverOptions | None = None):
        self.spec = spec
        self.opts = opts or SolverOptions()
        self._cache: dict[float, float] = {}
        self._warm: SolverState | None = None
        self._warm_t: float = 0.0
        self.solves = 0
        self.iterations = 0

    def values(self, t_nodes) -> np.ndarray:
        """G_B(-1/t) for each node; raises naming the node on solver failure."""
        t_nodes = np.asarray(t_nodes, dtype=np.float64)
        if (t_nodes <= 0).any():
            raise ValueError("quadrature nodes must be positive")
        missing = sorted({float(t) for t in t_nodes} - self._cache.keys())
        for t in missing:
            init = self._warm if t >= self._warm_t else None
            st = solve_fixed_point(self.spec, complex(-1.0 / t), init=init, opts=self.opts)
            self.solves += 1
            self.iterations += st.iterations
            if not st.converged:
                raise RuntimeError(
                    f"fixed-point solve failed at quadrature node t={t:g} "
                    f"(z={-1.0 / t:g}): {st.failure}"
                )
            self._cache[t] = cauchy_B(st).real
            if t >= self._warm_t:
                self._warm, self._warm_t = st, t
        return np.array([self._cache[float(t)] for t in t_nodes])


def _gauss_panels(edges, nodes: int):
    """Gauss-Legendre nodes/weights over consecutive panels."""
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    ts, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        ts.append(0.5 * (b - a) * xs + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * ws)
    return np.concatenate(ts), np.concatenate(weights)


def _geometric_edges(gamma: float, panels: int, ratio: float = 4.0):
    return [0.0] + [gamma * ratio ** (-(panels - 1 - j)) for j in range(panels)]


def _mi_integrand(t: np.ndarray, gvals: np.ndarray) -> np.ndarray:
    return 1.0 / t + gvals / t ** 2


def _segment_integral(evaluator: CauchyEvaluator, edges, nodes: int) -> float:
    t, w = _gauss_panels(edges, nodes)
    order = np.argsort(t)
    g = evaluator.values(t[order])
    return float(np.sum(w[order] * _mi_integrand(t[order], g)))


def mutual_information(spec: ChannelSpec, gamma: float, opts: SolverOptions | None = None,
                       *, panels: int = 8, nodes: int = 16,
                       evaluator: CauchyEvaluator | None = None) -> MIResult:
    """Ergodic mutual information in nats at linear SNR ``gamma``.

    Composite Gauss-Legendre quadrature on (0, gamma] with geometrically
    shrinking panels toward 0; the error estimate compares against an
    embedded half-order rule on the same panels.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0:
        return MIResult(gamma=0.0, value=0.0, quadrature_error_estimate=0.0)
    ev = evaluator or CauchyEvaluator(spec, opts)
    edges = _geometric_edges(gamma, panels)
    main = _segment_integral(ev, edges, nodes)
    coarse = _segment_integral(ev, edges, max(nodes // 2, 2))
    value = spec.R * main
    return MIResult(gamma=float(gamma), value=value,
                    quadrature_error_estimate=abs(spec.R * (main - coarse)))


def mutual_information_sweep(spec: ChannelSpec, gammas_db, opts: SolverOptions | None = None,
                             *, panels: int = 8, nodes: int = 16,
                             evaluator: CauchyEvaluator | None = None,
                             max_panel_db: float = 3.0) -> list[MIResult]:
    """Mutual information along an ascending dB grid.

    Values accumulate segment integrals between consecutive SNRs, so the
    whole sweep shares one continuation chain through the evaluator.
    """
    gammas_db = np.asarray(gammas_db, dtype=np.float64)
    if gammas_db.size == 0:
        return []
    if np.any(np.diff(gammas_db) <= 0):
        raise ValueError("gamma grid must be strictly ascending (dB)")
    ev = evaluator or CauchyEvaluator(spec, opts)
    results: list[MIResult] = []
    acc = 0.0
    acc_err = 0.0
    prev_gamma = 0.0
    for gdb in gammas_db:
        gamma = 10.0 ** (gdb / 10.0)
        if prev_gamma == 0.0:
            edges = _geometric_edges(gamma, panels)
        else:
            span_db = gdb - 10.0 * math.log10(prev_gamma)
            npan = max(1, int(math.ceil(span_db / max_panel_db)))
            edges = list(np.geomspace(prev_gamma, gamma, npan + 1))
        main = _segment_integral(ev, edges, nodes)
        coarse = _segment_integral(ev, edges, max(nodes // 2, 2))
        acc += main
        acc_err += abs(main - coarse)
        results.append(MIResult(gamma=float(gamma), value=spec.R * acc,
                                quadrature_error_estimate=spec.R * acc_err))
        prev_gamma = gamma
    return results


def spectral_density(spec: ChannelSpec, t_grid, epsilon: float,
                     opts: SolverOptions | None = None,
                     *, richardson: bool = False) -> SpectralResult:
    """Asymptotic eigenvalue density on ``t_grid`` via boundary values at
    height ``epsilon`` (optionally Richardson-extrapolated with epsilon/2)."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if t_grid.size == 0 or (t_grid < 0).any() or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t grid must be nonnegative and strictly ascending")

    def densities(eps: float):
        states = sweep(spec, [complex(t, eps) for t in t_grid], opts)
        vals = np.full(t_grid.shape, np.nan)
        fails = []
        for i, st in enumerate(states):
            if st.converged:
                vals[i] = -cauchy_B(st).imag / math.pi
            else:
                fails.append(i)
        return vals, fails

    vals, fails = densities(epsilon)
    if richardson:
        vals_half, fails_half = densities(epsilon / 2.0)
        vals = (4.0 * vals_half - vals) / 3.0
        fails = sorted(set(fails) | set(fails_half))
    ok = ~np.isnan(vals)
    mass = float(np.trapezoid(vals[ok], t_grid[ok])) if ok.sum() >= 2 else float("nan")
    return SpectralResult(t_grid=t_grid, density=vals, epsilon=float(epsilon),
                          mass=mass, failures=tuple(fails))


def mi_from_density(result: SpectralResult, gamma: float, R: int) -> float:
    """Mutual information from a resolved density grid (nats): the Shannon
    transform route R * int log(1 + gamma t) f(t) dt, for cross-validation
    against the quadrature route."""
    ok = ~np.isnan(result.density)
    t = result.t_grid[ok]
    f = np.clip(result.density[ok], 0.0, None)
    return float(R * np.trapezoid(np.log1p(gamma * t) * f, t))


def deviation_snr(spec: ChannelSpec, threshold: float, opts: SolverOptions | None = None,
                  *, search_db: tuple[float, float] = (0.0, 50.0), fit_db: float = 50.0,
                  resolution_db: float = 0.1, scan_step_db: float = 1.0,
                  evaluator: CauchyEvaluator | None = None) -> float:
    """Largest SNR (dB) at which the mutual information deviates from the
    fitted high-SNR affine law by at least ``threshold``.

    The law has slope :func:`high_snr_slope` and intercept fitted at
    ``fit_db``; the deviation is |I - law| relative to I, so it is bounded
    near 1 when the law undershoots.  Raises :class:`DeviationNotFound` if
    the deviation never reaches the threshold on the search range.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be a fraction in (0, 1)")
    lo_db, hi_db = search_db
    if hi_db > fit_db:
        raise ValueError("search range must not exceed the fit point")
    ev = evaluator or CauchyEvaluator(spec, opts)
    slope = high_snr_slope(spec.T, spec.R)

    scan = list(np.arange(lo_db, hi_db + 1e-9, scan_step_db))
    grid = sorted(set(scan) | {fit_db})
    # The sweep grid must be strictly positive in gamma; 0 dB is gamma=1.
    mis = mutual_information_sweep(spec, grid, evaluator=ev)
    mi_at = {round(g, 9): r.value for g, r in zip(grid, mis)}
    intercept = mi_at[round(fit_db, 9)] - slope * fit_db

    def deviation_of(gdb: float, value: float) -> float:
        law = slope * gdb + intercept
        if value <= 0:
            return math.inf
        return abs(value - law) / value

    dev = [deviation_of(g, mi_at[round(g, 9)]) for g in scan]
    hits = [i for i, d in enumerate(dev) if d >= threshold]
    if not hits:
        raise DeviationNotFound(
            f"deviation never reaches {threshold:.0%} on [{lo_db}, {hi_db}] dB"
        )
    i = hits[-1]
    if i == len(scan) - 1:
        return float(scan[i])
    lo, hi = scan[i], scan[i + 1]

    def mi_single(gdb: float) -> float:
        return mutual_information(spec, 10.0 ** (gdb / 10.0), evaluator=ev).value

    while hi - lo > resolution_db:
        mid = 0.5 * (lo + hi)
        if deviation_of(mid, mi_single(mid)) >= threshold:
            lo = mid
        else:
            hi = mid
    return float(round(lo / resolution_db) * resolution_db)
