"""Ready-made channel statistics for the stock experiments.

Builders draw any random statistics (profiles, eigenbases, angles, specular
shapes) from streams keyed per (seed, link, role), so a configuration with
more reflecting panels extends a smaller one instead of reshuffling it, and
every experiment is reproducible from its seed.

Links are power-normalized: after the Rician factor fixes the specular /
scattering ratio, specular part and profile are scaled together so the mean
total link power is independent of the Rician factor.  Without that
normalization a larger factor would add power instead of trading scattering
richness for specular concentration, which is the effect under study.
"""

from __future__ import annotations

import numpy as np

from . import rng
from .channel import (
    ChannelSpec,
    LinkSpecF,
    LinkSpecG,
    apply_rician_factor,
    los_specular,
    make_channel_spec,
)


def random_profile(gen: np.random.Generator, shape) -> np.ndarray:
    """Variance profile with squared entries uniform on (0, 2), mean 1."""
    return np.sqrt(gen.uniform(0.0, 2.0, size=shape))


def _normalized_link(specular, profile, kappa, scatter_norm, target_power):
    """Scale (specular, profile) to hit the Rician ratio and total power."""
    scatter_power = float((profile ** 2).sum() / scatter_norm)
    if kappa > 0:
        specular = apply_rician_factor(specular, profile, kappa, scatter_norm)
    else:
        specular = np.zeros_like(np.asarray(specular, dtype=np.complex128))
    total = scatter_power * (1.0 + kappa)
    scale = np.sqrt(target_power / total)
    return specular * scale, profile * scale


def _f_link(k, Lk, T, kappa, seed, specular_shape, normalize):
    gen_b = rng.stream(seed, 0, k, rng.ROLE_BASIS)
    U = rng.haar_unitary(gen_b, Lk)
    V = rng.haar_unitary(gen_b, T)
    M = random_profile(rng.stream(seed, 0, k, rng.ROLE_PROFILE), (Lk, T))
    spec = specular_shape
    if normalize:
        spec, M = _normalized_link(spec, M, kappa, T, target_power=float(Lk))
    elif kappa > 0:
        spec = apply_rician_factor(spec, M, kappa, T)
    else:
        spec = np.zeros((Lk, T), dtype=np.complex128)
    return LinkSpecF(k=k, Fbar=spec, U=U, V=V, M=M)


def _g_link(k, Lk, R, T, kappa, rho, seed, specular_shape, normalize):
    # trial slot 1 keeps these draws apart from the F-link of the same index
    gen_b = rng.stream(seed, 1, k, rng.ROLE_BASIS)
    W = rng.haar_unitary(gen_b, R)
    S = rng.haar_unitary(gen_b, Lk)
    N = random_profile(rng.stream(seed, 1, k, rng.ROLE_PROFILE), (R, Lk))
    spec = specular_shape
    if normalize:
        spec, N = _normalized_link(spec, N, kappa, Lk, target_power=float(R))
    elif kappa > 0:
        spec = apply_rician_factor(spec, N, kappa, Lk)
    else:
        spec = np.zeros((R, Lk), dtype=np.complex128)
    return LinkSpecG(k=k, Gbar=spec, W=W, S=S, N=N, rho=rho, r=Lk / T)


def _gaussian_shape(gen: np.random.Generator, shape) -> np.ndarray:
    return rng.complex_gaussian(gen, shape, 1.0)


def _upa_shape(gen, arrival_center, departure_center, span_arrival, span_departure,
               rx_shape, tx_shape):
    arr = (gen.uniform(arrival_center[0] - span_arrival / 2, arrival_center[0] + span_arrival / 2),
           gen.uniform(arrival_center[1] - span_arrival / 2, arrival_center[1] + span_arrival / 2))
    dep = (gen.uniform(departure_center[0] - span_departure / 2, departure_center[0] + span_departure / 2),
           gen.uniform(departure_center[1] - span_departure / 2, departure_center[1] + span_departure / 2))
    return los_specular(dep, arr, rx_shape, tx_shape)


def mp_spec(n: int) -> ChannelSpec:
    """Direct-only channel whose Gram matrix follows the square Marchenko-
    Pastur law: no specular part, unit variance profile, identity bases."""
    link = LinkSpecF(k=0, Fbar=np.zeros((n, n)), U=np.eye(n), V=np.eye(n),
                     M=np.ones((n, n)))
    return make_channel_spec([link], [], T=n, R=n)


def deterministic_spec(K: int, T: int, R: int, Lk: int, seed: int = 0,
                       rho: float = 0.8) -> ChannelSpec:
    """All-specular channel (zero variance profiles) with Gaussian speculars."""
    links_F = []
    links_G = []
    for k in range(K + 1):
        rows = R if k == 0 else Lk
        gen = rng.stream(seed, 0, k, rng.ROLE_SPECULAR)
        links_F.append(LinkSpecF(k=k, Fbar=_gaussian_shape(gen, (rows, T)),
                                 U=np.eye(rows), V=np.eye(T), M=np.zeros((rows, T))))
    for k in range(1, K + 1):
        gen = rng.stream(seed, 1, k, rng.ROLE_SPECULAR)
        links_G.append(LinkSpecG(k=k, Gbar=_gaussian_shape(gen, (R, Lk)),
                                 W=np.eye(R), S=np.eye(Lk), N=np.zeros((R, Lk)),
                                 rho=rho, r=Lk / T))
    return make_channel_spec(links_F, links_G, T=T, R=R)


def fig2_style_spec(K: int, seed: int = 2024, T: int = 64, R: int = 64,
                    Lk: int = 144, kappa: float = 1.0) -> ChannelSpec:
    """Large-array density experiment: T = R = 64, panels of 144 elements,
    fully random per-link statistics (Gaussian speculars at the given Rician
    factor).  Increasing K extends the same panel sequence."""
    links_F = [_f_link(0, R, T, kappa, seed,
                       _gaussian_shape(rng.stream(seed, 0, 0, rng.ROLE_SPECULAR), (R, T)),
                       normalize=True)]
    links_G = []
    for k in range(1, K + 1):
        links_F.append(_f_link(k, Lk, T, kappa, seed,
                               _gaussian_shape(rng.stream(seed, 0, k, rng.ROLE_SPECULAR), (Lk, T)),
                               normalize=True))
        links_G.append(_g_link(k, Lk, R, T, kappa, rho=0.8, seed=seed,
                               specular_shape=_gaussian_shape(
                                   rng.stream(seed, 1, k, rng.ROLE_SPECULAR), (R, Lk)),
                               normalize=True))
    kappas = tuple(kappa for _ in range(K + 1))
    return make_channel_spec(links_F, links_G, T=T, R=R,
                             kappa_F=kappas, kappa_G=kappas[1:])


_FIG3_RHOS = (0.9, 0.8, 0.7, 0.5, 0.3, 0.1)


def _upa_factor(n: int) -> tuple[int, int]:
    m = int(np.sqrt(n))
    while n % m:
        m -= 1
    return n // m, m


def fig3_style_spec(T: int, R: int, kappa: float, seed: int = 31,
                    K: int = 6, Lk: int = 16,
                    rhos: tuple = _FIG3_RHOS) -> ChannelSpec:
    """SNR-sweep experiment: K = 6 panels of 16 elements with relative gains
    (0.9, 0.8, 0.7, 0.5, 0.3, 0.1), planar-array specular components at
    random angles, equal Rician factor on every link."""
    tx = _upa_factor(T)
    rx = _upa_factor(R)
    px = _upa_factor(Lk)
    full = 2.0 * np.pi

    def angles(gen):
        return (gen.uniform(0, full), gen.uniform(0, full))

    gena = rng.stream(seed, 0, 0, rng.ROLE_ANGLE)
    links_F = [_f_link(0, R, T, kappa, seed,
                       los_specular(angles(gena), angles(gena), rx, tx), normalize=True)]
    links_G = []
    for k in range(1, K + 1):
        genf = rng.stream(seed, 0, k, rng.ROLE_ANGLE)
        links_F.append(_f_link(k, Lk, T, kappa, seed,
                               los_specular(angles(genf), angles(genf), px, tx),
                               normalize=True))
        geng = rng.stream(seed, 1, k, rng.ROLE_ANGLE)
        links_G.append(_g_link(k, Lk, R, T, kappa, rho=rhos[k - 1], seed=seed,
                               specular_shape=los_specular(angles(geng), angles(geng), rx, px),
                               normalize=True))
    kappas = tuple(kappa for _ in range(K + 1))
    return make_channel_spec(links_F, links_G, T=T, R=R,
                             kappa_F=kappas, kappa_G=kappas[1:])


def fig4_style_spec(K: int, kappa: float, seed: int = 41, T: int = 16, R: int = 8,
                    Lk: int = 8, rho: float = 0.8) -> ChannelSpec:
    """Rician-factor sweep experiment: T = 16, R = 8, panels of 8 elements."""
    rhos = tuple(rho for _ in range(K)) if K else ()
    return fig3_style_spec(T=T, R=R, kappa=kappa, seed=seed, K=K, Lk=Lk, rhos=rhos)


def fig5_style_spec(K: int, seed: int = 51, T: int = 16, R: int = 8, Lk: int = 8,
                    kappa: float = 10.0, span_endpoints: float = 0.05 * np.pi,
                    span_panels: float = 0.1 * np.pi) -> ChannelSpec:
    """Panel-count sweep with restricted angular spread: transmitter departure
    and receiver arrival angles stay inside narrow fixed intervals
    (length 0.05 pi), panel-side angles inside 0.1 pi intervals, so added
    panels provide progressively similar reflected paths."""
    tx = _upa_factor(T)
    rx = _upa_factor(R)
    px = _upa_factor(Lk)
    # Fixed interval centers; per-link angles drawn inside them.
    dep_center = (0.35 * np.pi, 0.40 * np.pi)   # transmitter departures
    arr_center = (1.20 * np.pi, 0.45 * np.pi)   # receiver arrivals
    ris_dep_center = (0.80 * np.pi, 0.55 * np.pi)
    ris_arr_center = (1.60 * np.pi, 0.50 * np.pi)

    def inside(gen, center, span):
        return (gen.uniform(center[0] - span / 2, center[0] + span / 2),
                gen.uniform(center[1] - span / 2, center[1] + span / 2))

    gen0 = rng.stream(seed, 0, 0, rng.ROLE_ANGLE)
    links_F = [_f_link(0, R, T, kappa, seed,
                       los_specular(inside(gen0, dep_center, span_endpoints),
                                    inside(gen0, arr_center, span_endpoints), rx, tx),
                       normalize=True)]
    links_G = []
    for k in range(1, K + 1):
        genf = rng.stream(seed, 0, k, rng.ROLE_ANGLE)
        links_F.append(_f_link(k, Lk, T, kappa, seed,
                               los_specular(inside(genf, dep_center, span_endpoints),
                                            inside(genf, ris_arr_center, span_panels), px, tx),
                               normalize=True))
        geng = rng.stream(seed, 1, k, rng.ROLE_ANGLE)
        links_G.append(_g_link(k, Lk, R, T, kappa, rho=1.0, seed=seed,
                               specular_shape=los_specular(
                                   inside(geng, ris_dep_center, span_panels),
                                   inside(geng, arr_center, span_endpoints), rx, px),
                               normalize=True))
    kappas = tuple(kappa for _ in range(K + 1))
    return make_channel_spec(links_F, links_G, T=T, R=R,
                             kappa_F=kappas, kappa_G=kappas[1:])
