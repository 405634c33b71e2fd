"""Config-driven experiment runner.

A run is described by a YAML document::

    mode: density | mi_sweep | mc_compare | covariance_check
    output: results/run1          # directory for CSVs and the manifest
    seed: 7                       # Monte Carlo trial seed
    channel:
      # either a stock preset ...
      preset: {name: fig3, T: 8, R: 8, kappa: 10.0, seed: 31}
      #   names: mp(n) | deterministic(K,T,R,Lk,seed) | fig2(K,seed,kappa)
      #          | fig3(T,R,kappa,seed) | fig4(K,kappa,seed) | fig5(K,seed,kappa)
      # ... or an explicit description:
      T: 8                        # transmit antennas
      R: 8                        # receive antennas
      stats_seed: 11              # stream for random profiles/bases/angles
      normalize_power: true       # hold mean link power constant across kappa
      tx_shape: [4, 2]            # planar-array factorization (upa speculars)
      rx_shape: [4, 2]
      direct:                     # the direct link
        kappa: 1.0                # Rician factor (dimensionless power ratio)
        specular: {kind: upa, departure: [0.5, 1.1], arrival: [2.0, 0.7]}
        profile: {kind: random}   # random | ones | zero | explicit{values}
        bases: {kind: random}     # random | identity | explicit{left/right re/im}
      panels:
        - L: 16
          shape: [4, 4]
          rho: 0.9                # relative link gain in (0, 1]
          F: {kappa: 1.0, specular: {kind: gaussian}, profile: {kind: random},
              bases: {kind: random}}
          G: {kappa: 1.0, specular: {kind: gaussian}, profile: {kind: random},
              bases: {kind: random}, phases: {kind: zero}}
    grids:
      t: {start: 0.05, stop: 3.95, points: 50}    # or {values: [...]}
      gamma_db: {values: [0, 10, 20, 30]}
    solver: {tolerance: 1.0e-10, max_iterations: 5000, damping: 0.5}
    density: {epsilon: 1.0e-4, richardson: false}
    mc: {trials: 1000, seed: 7}
    compare: {rel_tolerance: 0.02, stderr_sigmas: 3}
    covariance: {trials: 10000}
    kappa_sweep: [1, 10, 100]     # optional: one output set per kappa override

Specular kinds: zero | gaussian | upa{departure,arrival} |
upa_random{departure_center, departure_span, arrival_center, arrival_span} |
explicit{re, im}.  Angles are radians; SNR grids are dB; kappa is a
dimensionless power ratio; rho lies in (0, 1].

Outputs: per-mode CSV files (12 significant digits, '.' decimal separator)
plus ``manifest.yaml`` with the resolved config, seeds, tool version, and
wall-clock.  Exit codes: 0 success, 2 config parse error, 3 validation
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__, presets, rng
from .analysis import (
    CauchyEvaluator,
    mutual_information_sweep,
    spectral_density,
    high_snr_slope,
)
from .channel import (
    ChannelSpec,
    LinkSpecF,
    LinkSpecG,
    absorb_phases,
    apply_rician_factor,
    los_specular,
    make_channel_spec,
)
from .montecarlo import (
    analytic_covariance,
    empirical_covariance,
    empirical_eigenvalues,
    empirical_density,
    empirical_mutual_information,
)
from .solver import SolverOptions

log = logging.getLogger("rismimo")

MODES = ("density", "mi_sweep", "mc_compare", "covariance_check")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    """CSV number format: 12 significant digits, locale-independent."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".12g")


# --------------------------------------------------------------------------
# Config loading and validation


def load_config(path) -> dict:
    text = Path(path).read_text()
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    return doc


def _grid_values(node, name, errors) -> np.ndarray | None:
    if not isinstance(node, dict):
        errors.append(f"{name}: must be a mapping with values or start/stop/points")
        return None
    if "values" in node:
        vals = np.asarray(node["values"], dtype=np.float64)
    else:
        try:
            vals = np.linspace(float(node["start"]), float(node["stop"]),
                               int(node["points"]))
        except (KeyError, TypeError, ValueError):
            errors.append(f"{name}: need values or start/stop/points")
            return None
    if vals.size == 0:
        errors.append(f"{name}: grid is empty")
        return None
    if vals.ndim != 1 or np.any(np.diff(vals) <= 0):
        errors.append(f"{name}: grid must be strictly ascending")
        return None
    return vals


def _explicit_matrix(node, name, errors):
    try:
        re = np.asarray(node["re"], dtype=np.float64)
        im_node = node.get("im")
        im = np.zeros_like(re) if im_node is None else np.asarray(im_node, dtype=np.float64)
        return re + 1j * im
    except (KeyError, TypeError, ValueError) as err:
        errors.append(f"{name}: bad explicit matrix ({err})")
        return None


def _build_specular(node, shape, ctx, errors):
    """ctx: dict with rx_shape, tx_shape, gen (angle stream)."""
    kind = node.get("kind", "zero")
    if kind == "zero":
        return np.zeros(shape, dtype=np.complex128)
    if kind == "gaussian":
        return rng.complex_gaussian(ctx["spec_gen"], shape, 1.0)
    if kind in ("upa", "upa_random"):
        rx_shape, tx_shape = ctx["rx_shape"], ctx["tx_shape"]
        if rx_shape is None or tx_shape is None:
            errors.append(f"{ctx['name']}: upa specular needs array shape factorizations")
            return None
        if int(np.prod(rx_shape)) != shape[0] or int(np.prod(tx_shape)) != shape[1]:
            errors.append(f"{ctx['name']}: array shapes {rx_shape}x{tx_shape} "
                          f"do not factor {shape}")
            return None
        if kind == "upa":
            try:
                dep = tuple(float(a) for a in node["departure"])
                arr = tuple(float(a) for a in node["arrival"])
            except (KeyError, TypeError, ValueError):
                errors.append(f"{ctx['name']}: upa specular needs departure/arrival angles")
                return None
        else:
            gen = ctx["angle_gen"]
            try:
                dc = node["departure_center"]
                ac = node["arrival_center"]
                ds = float(node.get("departure_span", 0.0))
                ars = float(node.get("arrival_span", 0.0))
            except (KeyError, TypeError):
                errors.append(f"{ctx['name']}: upa_random needs center angles")
                return None
            dep = (gen.uniform(dc[0] - ds / 2, dc[0] + ds / 2),
                   gen.uniform(dc[1] - ds / 2, dc[1] + ds / 2))
            arr = (gen.uniform(ac[0] - ars / 2, ac[0] + ars / 2),
                   gen.uniform(ac[1] - ars / 2, ac[1] + ars / 2))
        return los_specular(dep, arr, rx_shape, tx_shape)
    if kind == "explicit":
        mat = _explicit_matrix(node, ctx["name"], errors)
        if mat is not None and mat.shape != shape:
            errors.append(f"{ctx['name']}: explicit specular has shape {mat.shape}, "
                          f"expected {shape}")
            return None
        return mat
    errors.append(f"{ctx['name']}: unknown specular kind {kind!r}")
    return None


def _build_profile(node, shape, gen, name, errors):
    kind = node.get("kind", "random")
    if kind == "random":
        return presets.random_profile(gen, shape)
    if kind == "ones":
        return np.ones(shape)
    if kind == "zero":
        return np.zeros(shape)
    if kind == "explicit":
        try:
            vals = np.asarray(node["values"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as err:
            errors.append(f"{name}: bad explicit profile ({err})")
            return None
        if vals.shape != shape:
            errors.append(f"{name}: profile has shape {vals.shape}, expected {shape}")
            return None
        if (vals < 0).any():
            errors.append(f"{name}: profile entries must be nonnegative")
            return None
        return vals
    errors.append(f"{name}: unknown profile kind {kind!r}")
    return None


def _build_bases(node, left_n, right_n, gen, name, errors):
    kind = node.get("kind", "random")
    if kind == "random":
        return rng.haar_unitary(gen, left_n), rng.haar_unitary(gen, right_n)
    if kind == "identity":
        return np.eye(left_n), np.eye(right_n)
    if kind == "explicit":
        left = _explicit_matrix({"re": node.get("left_re"), "im": node.get("left_im")},
                                name + ".left", errors)
        right = _explicit_matrix({"re": node.get("right_re"), "im": node.get("right_im")},
                                 name + ".right", errors)
        return left, right
    errors.append(f"{name}: unknown bases kind {kind!r}")
    return None, None


_PRESET_BUILDERS = {
    "mp": lambda **kw: presets.mp_spec(int(kw.get("n", kw.get("T", 64)))),
    "deterministic": lambda **kw: presets.deterministic_spec(
        K=int(kw.get("K", 0)), T=int(kw.get("T", 8)), R=int(kw.get("R", 8)),
        Lk=int(kw.get("Lk", 8)), seed=int(kw.get("seed", 0)),
        rho=float(kw.get("rho", 0.8))),
    "fig2": lambda **kw: presets.fig2_style_spec(
        K=int(kw.get("K", 0)), seed=int(kw.get("seed", 2024)),
        kappa=float(kw.get("kappa", 1.0))),
    "fig3": lambda **kw: presets.fig3_style_spec(
        T=int(kw.get("T", 8)), R=int(kw.get("R", 8)), kappa=float(kw.get("kappa", 1.0)),
        seed=int(kw.get("seed", 31)), K=int(kw.get("K", 6)), Lk=int(kw.get("Lk", 16))),
    "fig4": lambda **kw: presets.fig4_style_spec(
        K=int(kw.get("K", 0)), kappa=float(kw.get("kappa", 1.0)),
        seed=int(kw.get("seed", 41))),
    "fig5": lambda **kw: presets.fig5_style_spec(
        K=int(kw.get("K", 0)), seed=int(kw.get("seed", 51)),
        kappa=float(kw.get("kappa", 10.0)), T=int(kw.get("T", 16)),
        R=int(kw.get("R", 8)), Lk=int(kw.get("Lk", 8))),
}


def _build_link_pair_shapes(node, errors):
    try:
        L = int(node["L"])
        if L < 1:
            raise ValueError
    except (KeyError, TypeError, ValueError):
        errors.append("panels: each panel needs a positive element count L")
        return None
    return L


def build_channel(node, errors, kappa_override=None, k_override=None) -> ChannelSpec | None:
    """Materialize the channel section; append schema violations to errors."""
    if not isinstance(node, dict):
        errors.append("channel: missing or not a mapping")
        return None
    if "preset" in node:
        p = dict(node["preset"])
        name = p.pop("name", None)
        if name not in _PRESET_BUILDERS:
            errors.append(f"channel.preset: unknown preset {name!r}")
            return None
        if kappa_override is not None:
            p["kappa"] = kappa_override
        if k_override is not None:
            p["K"] = k_override
        try:
            return _PRESET_BUILDERS[name](**p)
        except Exception as err:
            errors.append(f"channel.preset: {err}")
            return None
    if k_override is not None:
        errors.append("k_sweep: only supported with preset channels")
        return None

    try:
        T = int(node["T"])
        R = int(node["R"])
        if T < 1 or R < 1:
            raise ValueError
    except (KeyError, TypeError, ValueError):
        errors.append("channel: T and R must be positive integers")
        return None
    stats_seed = int(node.get("stats_seed", 0))
    normalize = bool(node.get("normalize_power", True))
    tx_shape = tuple(node["tx_shape"]) if "tx_shape" in node else None
    rx_shape = tuple(node["rx_shape"]) if "rx_shape" in node else None

    def build_link(link_node, kind, k, rows, cols, rxs, txs):
        name = f"channel.{'direct' if k == 0 and kind == 'F' else f'panel[{k}].{kind}'}"
        if not isinstance(link_node, dict):
            errors.append(f"{name}: missing or not a mapping")
            return None
        kappa = float(link_node.get("kappa", 0.0))
        if kappa_override is not None:
            kappa = float(kappa_override)
        if kappa < 0:
            errors.append(f"{name}: kappa must be nonnegative")
            return None
        trial_slot = 0 if kind == "F" else 1
        ctx = {
            "name": name,
            "rx_shape": rxs,
            "tx_shape": txs,
            "spec_gen": rng.stream(stats_seed, trial_slot, k, rng.ROLE_SPECULAR),
            "angle_gen": rng.stream(stats_seed, trial_slot, k, rng.ROLE_ANGLE),
        }
        spec_mat = _build_specular(link_node.get("specular", {"kind": "zero"}),
                                   (rows, cols), ctx, errors)
        profile = _build_profile(link_node.get("profile", {"kind": "random"}),
                                 (rows, cols),
                                 rng.stream(stats_seed, trial_slot, k, rng.ROLE_PROFILE),
                                 name, errors)
        left, right = _build_bases(link_node.get("bases", {"kind": "random"}),
                                   rows, cols,
                                   rng.stream(stats_seed, trial_slot, k, rng.ROLE_BASIS),
                                   name, errors)
        if spec_mat is None or profile is None or left is None or right is None:
            return None
        return kappa, spec_mat, profile, left, right

    panels = node.get("panels", []) or []
    links_F, links_G, kappa_F, kappa_G = [], [], [], []

    built = build_link(node.get("direct", {}), "F", 0, R, T, rx_shape, tx_shape)
    if built is None:
        return None
    kappa, spec_mat, profile, U, V = built
    try:
        spec_mat = _rician(spec_mat, profile, kappa, T, normalize, R)
        links_F.append(LinkSpecF(k=0, Fbar=spec_mat[0], U=U, V=V, M=spec_mat[1]))
    except ValueError as err:
        errors.append(f"channel.direct: {err}")
        return None
    kappa_F.append(kappa)

    for i, panel in enumerate(panels, start=1):
        if not isinstance(panel, dict):
            errors.append(f"channel.panels[{i - 1}]: not a mapping")
            return None
        L = _build_link_pair_shapes(panel, errors)
        if L is None:
            return None
        p_shape = tuple(panel["shape"]) if "shape" in panel else None
        try:
            rho = float(panel.get("rho", 1.0))
        except (TypeError, ValueError):
            errors.append(f"channel.panels[{i - 1}]: bad rho")
            return None
        if not 0.0 < rho <= 1.0:
            errors.append(f"channel.panels[{i - 1}]: rho must be in (0, 1]")
            return None

        built = build_link(panel.get("F", {}), "F", i, L, T, p_shape, tx_shape)
        if built is None:
            return None
        kappa, spec_mat, profile, U, V = built
        try:
            spec_mat = _rician(spec_mat, profile, kappa, T, normalize, L)
            links_F.append(LinkSpecF(k=i, Fbar=spec_mat[0], U=U, V=V, M=spec_mat[1]))
        except ValueError as err:
            errors.append(f"channel.panels[{i - 1}].F: {err}")
            return None
        kappa_F.append(kappa)

        built = build_link(panel.get("G", {}), "G", i, R, L, rx_shape, p_shape)
        if built is None:
            return None
        kappa, spec_mat, profile, W, S = built
        try:
            bar, prof = _rician(spec_mat, profile, kappa, L, normalize, R)
            phases_node = panel.get("G", {}).get("phases", {"kind": "zero"})
            bar, S = _apply_phases(phases_node, bar, S,
                                   rng.stream(stats_seed, 1, i, rng.ROLE_PHASE),
                                   f"channel.panels[{i - 1}].G", errors)
            if bar is None:
                return None
            links_G.append(LinkSpecG(k=i, Gbar=bar, W=W, S=S, N=prof,
                                     rho=rho, r=L / T))
        except ValueError as err:
            errors.append(f"channel.panels[{i - 1}].G: {err}")
            return None
        kappa_G.append(kappa)

    try:
        return make_channel_spec(links_F, links_G, T=T, R=R,
                                 kappa_F=kappa_F, kappa_G=kappa_G)
    except ValueError as err:
        errors.append(f"channel: {err}")
        return None


def _rician(spec_mat, profile, kappa, scatter_norm, normalize, target_rows):
    """Apply the Rician ratio (and optional total power normalization)."""
    if normalize:
        from .presets import _normalized_link

        return _normalized_link(spec_mat, profile, kappa, scatter_norm,
                                target_power=float(target_rows))
    if kappa > 0:
        return apply_rician_factor(spec_mat, profile, kappa, scatter_norm), profile
    return np.zeros_like(np.asarray(spec_mat, dtype=np.complex128)), profile


def _apply_phases(node, Gbar, S, gen, name, errors):
    kind = node.get("kind", "zero")
    Lk = Gbar.shape[1]
    if kind == "zero":
        return Gbar, S
    if kind == "random":
        return absorb_phases(Gbar, S, gen.uniform(0.0, 2.0 * np.pi, size=Lk))
    if kind == "explicit":
        vals = np.asarray(node.get("values", []), dtype=np.float64)
        if vals.shape != (Lk,):
            errors.append(f"{name}: need {Lk} phases")
            return None, None
        return absorb_phases(Gbar, S, vals)
    errors.append(f"{name}: unknown phases kind {kind!r}")
    return None, None


def build_solver_options(node, errors) -> SolverOptions | None:
    node = node or {}
    try:
        return SolverOptions(
            tolerance=float(node.get("tolerance", 1e-10)),
            max_iterations=int(node.get("max_iterations", 5000)),
            damping=float(node.get("damping", 0.5)),
            epsilon_imag=float(node.get("epsilon_imag", 0.0)),
            anderson_memory=int(node.get("anderson_memory", 5)),
        )
    except (TypeError, ValueError) as err:
        errors.append(f"solver: {err}")
        return None


def validate(config: dict) -> list[str]:
    """All schema violations for a parsed config; empty means valid."""
    errors: list[str] = []
    mode = config.get("mode")
    if mode not in MODES:
        errors.append(f"mode: must be one of {MODES}, got {mode!r}")
        return errors

    build_solver_options(config.get("solver"), errors)
    kappa_sweep = config.get("kappa_sweep")
    if kappa_sweep is not None:
        try:
            vals = [float(v) for v in kappa_sweep]
            if not vals or any(v < 0 for v in vals):
                raise ValueError
        except (TypeError, ValueError):
            errors.append("kappa_sweep: must be a nonempty list of nonnegative numbers")
    k_sweep = config.get("k_sweep")
    if k_sweep is not None:
        try:
            vals = [int(v) for v in k_sweep]
            if not vals or any(v < 0 for v in vals):
                raise ValueError
        except (TypeError, ValueError):
            errors.append("k_sweep: must be a nonempty list of nonnegative integers")
        if kappa_sweep is not None:
            errors.append("k_sweep: cannot combine with kappa_sweep")
        if "preset" not in (config.get("channel") or {}):
            errors.append("k_sweep: only supported with preset channels")

    build_channel(config.get("channel"), errors)

    grids = config.get("grids", {}) or {}
    if mode == "density":
        _grid_values(grids.get("t", {}), "grids.t", errors)
        dens = config.get("density", {}) or {}
        if float(dens.get("epsilon", 1e-4)) <= 0:
            errors.append("density.epsilon: must be positive")
    if mode in ("mi_sweep", "mc_compare"):
        _gamma_grid(config, errors)
    if mode == "mc_compare":
        mc = config.get("mc", {}) or {}
        if int(mc.get("trials", 0)) < 2:
            errors.append("mc.trials: mc_compare needs at least 2 trials")
    if mode == "covariance_check":
        cov = config.get("covariance", {}) or {}
        if int(cov.get("trials", 10000)) < 1:
            errors.append("covariance.trials: must be >= 1")
    return errors


# --------------------------------------------------------------------------
# Jobs


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def _gamma_grid(config, errors):
    """SNR grid as (gamma_db_or_None, gamma_linear) pairs; accepts a dB grid
    under grids.gamma_db or a linear grid (zero allowed) under grids.gamma."""
    grids = config.get("grids", {}) or {}
    if "gamma" in grids:
        vals = _grid_values(grids["gamma"], "grids.gamma", errors)
        if vals is None:
            return None
        if (vals < 0).any():
            errors.append("grids.gamma: linear SNRs must be nonnegative")
            return None
        return [(None if g == 0 else 10.0 * math.log10(g), float(g)) for g in vals]
    vals = _grid_values(grids.get("gamma_db", {}), "grids.gamma_db", errors)
    if vals is None:
        return None
    return [(float(g), 10.0 ** (g / 10.0)) for g in vals]


def _mi_rows(spec, gamma_pairs, solver_opts, mc_node, threads):
    positive_db = [gdb if gdb is not None else 10.0 * math.log10(g)
                   for gdb, g in gamma_pairs if g > 0]
    results = iter(mutual_information_sweep(
        spec, positive_db, solver_opts,
        evaluator=CauchyEvaluator(spec, solver_opts)) if positive_db else [])
    trials = int(mc_node.get("trials", 0))
    seed = int(mc_node.get("seed", 0))
    slope = high_snr_slope(spec.T, spec.R)
    rows = []
    for gdb, gamma in gamma_pairs:
        value = 0.0 if gamma == 0 else next(results).value
        if trials >= 2:
            est = empirical_mutual_information(spec, gamma, trials, seed,
                                               threads=threads)
            rows.append((gdb, value, est.mean, est.stderr, slope))
        else:
            rows.append((gdb, value, None, None, slope))
    return rows


def run_density(spec, config, solver_opts, out_dir, suffix, threads):
    grids = config.get("grids", {})
    t_grid = _grid_values(grids.get("t", {}), "grids.t", [])
    dens_node = config.get("density", {}) or {}
    epsilon = float(dens_node.get("epsilon", 1e-4))
    richardson = bool(dens_node.get("richardson", False))
    result = spectral_density(spec, t_grid, epsilon, solver_opts, richardson=richardson)
    mc_node = config.get("mc", {}) or {}
    trials = int(mc_node.get("trials", 0))
    emp = np.full(t_grid.shape, np.nan)
    if trials >= 1:
        samples = empirical_eigenvalues(spec, trials, int(mc_node.get("seed", 0)),
                                        threads=threads)
        mids = 0.5 * (t_grid[1:] + t_grid[:-1])
        first = max(t_grid[0] - (mids[0] - t_grid[0]), 0.0) if t_grid.size > 1 else 0.0
        last = t_grid[-1] + (t_grid[-1] - mids[-1]) if t_grid.size > 1 else t_grid[-1] + 1.0
        edges = np.concatenate([[first], mids, [last]])
        emp = empirical_density(samples, edges)
    rows = [(t, f, e, epsilon) for t, f, e in zip(t_grid, result.density, emp)]
    path = out_dir / f"density{suffix}.csv"
    _write_csv(path, ["t", "f_asymptotic", "f_empirical", "epsilon"], rows)
    failed = len(result.failures)
    return [str(path)], (f"{failed} density points failed" if failed else None)


def run_mi_sweep(spec, config, solver_opts, out_dir, suffix, threads):
    gamma_pairs = _gamma_grid(config, [])
    rows = _mi_rows(spec, gamma_pairs, solver_opts, config.get("mc", {}) or {}, threads)
    path = out_dir / f"mi_sweep{suffix}.csv"
    _write_csv(path, ["gamma_db", "mi_asymptotic_nats", "mi_mc_mean",
                      "mi_mc_stderr", "slope_nats_per_db"], rows)
    return [str(path)], None


def run_mc_compare(spec, config, solver_opts, out_dir, suffix, threads):
    gamma_pairs = _gamma_grid(config, [])
    cmp_node = config.get("compare", {}) or {}
    rel_tol = float(cmp_node.get("rel_tolerance", 0.02))
    sigmas = float(cmp_node.get("stderr_sigmas", 3.0))
    rows = []
    bad = 0
    for gdb, value, mean, stderr, _ in _mi_rows(spec, gamma_pairs, solver_opts,
                                                config.get("mc", {}) or {}, threads):
        if mean in (None, 0.0):
            rel = 0.0 if value == 0.0 else math.inf
            ok = value == 0.0 if mean == 0.0 else False
        else:
            rel = abs(value - mean) / abs(mean)
            ok = abs(value - mean) <= max(rel_tol * abs(mean), sigmas * stderr)
        bad += not ok
        rows.append((gdb, value, mean, stderr, rel, "1" if ok else "0"))
    path = out_dir / f"mi_compare{suffix}.csv"
    _write_csv(path, ["gamma_db", "mi_asymptotic_nats", "mi_mc_mean",
                      "mi_mc_stderr", "rel_error", "within_tol"], rows)
    return [str(path)], (f"{bad} SNR points beyond tolerance" if bad else None)


def run_covariance_check(spec, config, solver_opts, out_dir, suffix, threads):
    cov_node = config.get("covariance", {}) or {}
    trials = int(cov_node.get("trials", 10000))
    seed = int((config.get("mc", {}) or {}).get("seed", config.get("seed", 0)))
    threshold = float(cov_node.get("rel_tolerance", 0.05))
    rows = []
    worst = 0.0
    for which, k_range in (("eta", range(1, spec.K + 1)),
                           ("eta_tilde", range(1, spec.K + 1)),
                           ("zeta", range(spec.K + 1)),
                           ("zeta_tilde", range(spec.K + 1))):
        for k in k_range:
            if which in ("eta", "zeta_tilde"):
                n = spec.R if which == "eta" else spec.partition.sizes[k]
            else:
                n = spec.partition.sizes[k] if which == "eta_tilde" else spec.T
            gen = rng.stream(seed, 2, k, rng.ROLE_BASIS)
            A = rng.complex_gaussian(gen, (n, n), 1.0)
            # Positive definite parameter: indefinite ones cancel in the
            # reference norm and inflate the relative error of the estimate.
            P = A @ A.conj().T / n + np.eye(n)
            est = empirical_covariance(spec, which, k, P, trials, seed, threads=threads)
            ref = analytic_covariance(spec, which, k, P)
            rel = float(np.linalg.norm(est - ref) / max(np.linalg.norm(ref), 1e-300))
            worst = max(worst, rel)
            rows.append((which, float(k), rel))
    path = out_dir / f"covariance{suffix}.csv"
    _write_csv(path, ["map", "link", "rel_frobenius_error"],
               [(w, _fmt(k), _fmt(r)) for w, k, r in rows])
    return [str(path)], (f"worst map error {worst:.3g} exceeds {threshold:g}"
                         if worst > threshold else None)


_RUNNERS = {
    "density": run_density,
    "mi_sweep": run_mi_sweep,
    "mc_compare": run_mc_compare,
    "covariance_check": run_covariance_check,
}


def run(config: dict, out_dir: Path, threads: int = 1,
        seed_override: int | None = None) -> tuple[int, dict]:
    """Execute a validated config; returns (exit_code, manifest_dict)."""
    started = time.time()
    if seed_override is not None:
        config = dict(config)
        config["seed"] = seed_override
        config.setdefault("mc", {})
        config["mc"] = dict(config["mc"] or {}, seed=seed_override)
    mode = config["mode"]
    errors: list[str] = []
    solver_opts = build_solver_options(config.get("solver"), errors)
    if config.get("kappa_sweep"):
        variants = [("kappa", float(v)) for v in config["kappa_sweep"]]
    elif config.get("k_sweep"):
        variants = [("K", int(v)) for v in config["k_sweep"]]
    else:
        variants = [(None, None)]

    outputs: list[str] = []
    failures: list[str] = []
    for kind, value in variants:
        suffix = "" if kind is None else f"_{kind}{_fmt(value) if kind == 'kappa' else value}"
        spec = build_channel(config.get("channel"), errors,
                             kappa_override=value if kind == "kappa" else None,
                             k_override=value if kind == "K" else None)
        if spec is None:
            return EXIT_VALIDATION, {"errors": errors}
        try:
            files, problem = _RUNNERS[mode](spec, config, solver_opts, out_dir,
                                            suffix, threads)
        except Exception as err:  # solver / numerical failures
            log.error("job failed: %s", err)
            failures.append(f"{mode}{suffix}: {err}")
            continue
        outputs.extend(files)
        if problem:
            failures.append(f"{mode}{suffix}: {problem}")

    manifest = {
        "tool": "rismimo",
        "version": __version__,
        "mode": mode,
        "config": config,
        "seed": config.get("seed"),
        "outputs": sorted(outputs),
        "failures": failures,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    with (out_dir / "manifest.yaml").open("w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=True)
    return (EXIT_NUMERICAL if failures else EXIT_OK), manifest


# --------------------------------------------------------------------------
# Entry point


def _error_line(code: int, kind: str, detail: str):
    print(f"rismimo: error code={code} kind={kind} detail={detail}", file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rismimo",
        description="Asymptotic spectra and mutual information of multi-RIS "
                    "assisted MIMO channels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--output-dir", type=Path, default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--seed-override", type=int, default=None)
    p_run.add_argument("--log-level", default="INFO")
    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("config", type=Path)
    p_val.add_argument("--log-level", default="INFO")
    args = parser.parse_args(argv)

    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        config = load_config(args.config)
    except (OSError, yaml.YAMLError, ConfigError) as err:
        _error_line(EXIT_PARSE, "config-parse", str(err))
        return EXIT_PARSE

    violations = validate(config)
    if args.command == "validate":
        for v in violations:
            print(v)
        if violations:
            _error_line(EXIT_VALIDATION, "config-invalid",
                        f"{len(violations)} violations")
            return EXIT_VALIDATION
        print("ok")
        return EXIT_OK

    if violations:
        for v in violations:
            log.error("config: %s", v)
        _error_line(EXIT_VALIDATION, "config-invalid", f"{len(violations)} violations")
        return EXIT_VALIDATION

    out_dir = args.output_dir or Path(config.get("output", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    code, manifest = run(config, out_dir, threads=args.threads,
                         seed_override=args.seed_override)
    if code != EXIT_OK:
        detail = "; ".join(manifest.get("failures", []) or manifest.get("errors", []))
        _error_line(code, "numerical-failure" if code == EXIT_NUMERICAL
                    else "config-invalid", detail)
    return code


if __name__ == "__main__":
    sys.exit(main())
