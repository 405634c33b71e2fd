"""Statistical channel description and sampling for multi-RIS MIMO links.

Each of the K+1 transmitter-side links and K reflector-side links carries a
specular component plus a correlated scattering component described by per-link
eigenbases and a nonnegative variance profile.  The four parameterized
correlation maps of that model (``eta``, ``eta_tilde``, ``zeta``,
``zeta_tilde``) drive the fixed-point solver; the sampler draws matching
realizations for Monte Carlo validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import Partition, as_cmatrix, blkdiag
from .rng import ROLE_X, ROLE_Y, complex_gaussian, stream

_UNITARY_TOL = 1e-12


def _check_unitary(u: np.ndarray, name: str) -> np.ndarray:
    u = as_cmatrix(u, name)
    n = u.shape[0]
    if u.shape[1] != n:
        raise ValueError(f"{name} must be square, got {u.shape}")
    defect = np.linalg.norm(u.conj().T @ u - np.eye(n))
    if defect > _UNITARY_TOL * n:
        raise ValueError(
            f"{name} is not unitary (defect {defect:.3e} exceeds tolerance "
            f"{_UNITARY_TOL:g} per dimension)"
        )
    return u


def _check_profile(m, shape, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    if not np.isfinite(m).all() or (m < 0).any():
        raise ValueError(f"{name} must be finite and nonnegative")
    return m


@dataclass(frozen=True)
class LinkSpecF:
    """Transmitter-side link k: L_k x T specular part plus scattering model."""

    k: int
    Fbar: np.ndarray   # L_k x T specular component
    U: np.ndarray      # L_k x L_k unitary receive eigenbasis
    V: np.ndarray      # T x T unitary transmit eigenbasis
    M: np.ndarray      # L_k x T nonnegative variance profile

    def __post_init__(self):
        Fbar = as_cmatrix(self.Fbar, "Fbar")
        Lk, T = Fbar.shape
        object.__setattr__(self, "Fbar", _readonly(Fbar))
        object.__setattr__(self, "U", _readonly(_check_unitary(self.U, "U")))
        object.__setattr__(self, "V", _readonly(_check_unitary(self.V, "V")))
        object.__setattr__(self, "M", _readonly(_check_profile(self.M, (Lk, T), "M")))
        if self.U.shape != (Lk, Lk) or self.V.shape != (T, T):
            raise ValueError("eigenbasis dimensions inconsistent with Fbar")

    @property
    def shape(self) -> tuple[int, int]:
        return self.Fbar.shape

    @property
    def scatter_power(self) -> float:
        """Mean squared Frobenius norm of the scattering part."""
        T = self.Fbar.shape[1]
        return float((self.M ** 2).sum() / T)


@dataclass(frozen=True)
class LinkSpecG:
    """Reflector-side link k: R x L_k specular part (phase shifts absorbed)."""

    k: int
    Gbar: np.ndarray   # R x L_k specular component
    W: np.ndarray      # R x R unitary receive eigenbasis
    S: np.ndarray      # L_k x L_k unitary reflector eigenbasis
    N: np.ndarray      # R x L_k nonnegative variance profile
    rho: float         # relative link gain in (0, 1]
    r: float           # dimension ratio L_k / T

    def __post_init__(self):
        Gbar = as_cmatrix(self.Gbar, "Gbar")
        R, Lk = Gbar.shape
        object.__setattr__(self, "Gbar", _readonly(Gbar))
        object.__setattr__(self, "W", _readonly(_check_unitary(self.W, "W")))
        object.__setattr__(self, "S", _readonly(_check_unitary(self.S, "S")))
        object.__setattr__(self, "N", _readonly(_check_profile(self.N, (R, Lk), "N")))
        if self.W.shape != (R, R) or self.S.shape != (Lk, Lk):
            raise ValueError("eigenbasis dimensions inconsistent with Gbar")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if self.r <= 0:
            raise ValueError(f"dimension ratio must be positive, got {self.r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.Gbar.shape

    @property
    def scatter_power(self) -> float:
        R, Lk = self.Gbar.shape
        T = Lk / self.r
        return float((self.N ** 2).sum() / (T * self.r))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ChannelSpec:
    """Full statistical description of the direct link plus K reflected links."""

    T: int
    R: int
    partition: Partition
    links_F: tuple[LinkSpecF, ...]
    links_G: tuple[LinkSpecG, ...]
    kappa_F: tuple[float, ...]
    kappa_G: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "links_F", tuple(self.links_F))
        object.__setattr__(self, "links_G", tuple(self.links_G))
        object.__setattr__(self, "kappa_F", tuple(float(k) for k in self.kappa_F))
        object.__setattr__(self, "kappa_G", tuple(float(k) for k in self.kappa_G))
        sizes = self.partition.sizes
        K = len(sizes) - 1
        if sizes[0] != self.R:
            raise ValueError(f"partition first block {sizes[0]} must equal R={self.R}")
        if len(self.links_F) != K + 1 or len(self.links_G) != K:
            raise ValueError("need K+1 F-links and K G-links")
        if len(self.kappa_F) != K + 1 or len(self.kappa_G) != K:
            raise ValueError("one Rician factor per link required")
        if any(k < 0 for k in self.kappa_F + self.kappa_G):
            raise ValueError("Rician factors must be nonnegative")
        for k, lf in enumerate(self.links_F):
            if lf.shape != (sizes[k], self.T):
                raise ValueError(f"F-link {k} has shape {lf.shape}, expected {(sizes[k], self.T)}")
        for lg in self.links_G:
            k = lg.k
            if lg.shape != (self.R, sizes[k]):
                raise ValueError(f"G-link {k} has shape {lg.shape}, expected {(self.R, sizes[k])}")

    @property
    def K(self) -> int:
        return len(self.links_G)

    @property
    def L(self) -> int:
        return self.partition.total

    @cached_property
    def Gbar_row(self) -> np.ndarray:
        """Deterministic R x L row block [I_R, sqrt(rho_1) Gbar_1, ...]."""
        parts = [np.eye(self.R, dtype=np.complex128)]
        parts += [np.sqrt(lg.rho) * lg.Gbar for lg in self.links_G]
        return _readonly(np.hstack(parts))

    @cached_property
    def Fbar_stack(self) -> np.ndarray:
        """Deterministic L x T stack [Fbar_0; Fbar_1; ...]."""
        return _readonly(np.vstack([lf.Fbar for lf in self.links_F]))

    @cached_property
    def mean_effective(self) -> np.ndarray:
        """Mean effective channel Fbar_0 + sum_k sqrt(rho_k) Gbar_k Fbar_k."""
        return _readonly(self.Gbar_row @ self.Fbar_stack)


@dataclass(frozen=True)
class ChannelRealization:
    """One sampled draw of all component channels and the effective channel."""

    F: tuple[np.ndarray, ...]   # K+1 matrices, L_k x T
    G: tuple[np.ndarray, ...]   # K matrices, R x L_k
    H: np.ndarray               # R x T effective channel
    seed: int
    trial: int


def upa_steering(azimuth: float, elevation: float, M: int, N: int) -> np.ndarray:
    """Steering vector of an M x N uniform planar array, flat index n*M + m."""
    if M < 1 or N < 1:
        raise ValueError("array dimensions must be >= 1")
    m = np.arange(M)
    n = np.arange(N)
    phase = np.pi * (n[:, None] * np.sin(azimuth) * np.sin(elevation) + m[None, :] * np.cos(elevation))
    return np.exp(1j * phase).reshape(M * N)


def los_specular(departure: tuple[float, float], arrival: tuple[float, float],
                 rx_shape: tuple[int, int], tx_shape: tuple[int, int]) -> np.ndarray:
    """Rank-1 line-of-sight component a(arrival) a(departure)^dagger."""
    a_rx = upa_steering(arrival[0], arrival[1], *rx_shape)
    a_tx = upa_steering(departure[0], departure[1], *tx_shape)
    return np.outer(a_rx, a_tx.conj())


def apply_rician_factor(specular: np.ndarray, profile: np.ndarray, kappa: float,
                        scatter_norm: float) -> np.ndarray:
    """Rescale the specular part so its power is ``kappa`` times the mean
    scattering power ``sum(profile**2) / scatter_norm``.

    ``scatter_norm`` is T for transmitter-side links and T * r_k (= L_k) for
    reflector-side links.  The profile is never modified.
    """
    specular = as_cmatrix(specular, "specular")
    profile = np.asarray(profile, dtype=np.float64)
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if kappa == 0:
        return np.zeros_like(specular)
    spec_power = float(np.linalg.norm(specular) ** 2)
    if spec_power == 0.0:
        raise ValueError("cannot realize kappa > 0 with a zero specular component")
    scatter_power = float((profile ** 2).sum() / scatter_norm)
    if scatter_power == 0.0:
        raise ValueError("cannot realize a finite kappa with a zero variance profile")
    return specular * np.sqrt(kappa * scatter_power / spec_power)


def _diag_congruence(basis: np.ndarray, arg: np.ndarray) -> np.ndarray:
    """Diagonal of basis^dagger @ arg @ basis without the full product."""
    return (basis.conj() * (arg @ basis)).sum(axis=0)


def eta(spec: LinkSpecG, Ctilde: np.ndarray) -> np.ndarray:
    """Mean of Gscatter^dagger Ctilde Gscatter: (1/L_k) S Pi(Ctilde) S^dagger."""
    Ctilde = as_cmatrix(Ctilde, "Ctilde")
    R, Lk = spec.shape
    if Ctilde.shape != (R, R):
        raise ValueError(f"Ctilde must be {R}x{R}, got {Ctilde.shape}")
    q = _diag_congruence(spec.W, Ctilde)        # diag of W^dag Ctilde W, length R
    pi = (spec.N ** 2 * q[:, None]).sum(axis=0)  # length L_k
    return (spec.S * pi[None, :]) @ spec.S.conj().T / Lk


def eta_tilde(spec: LinkSpecG, C_k: np.ndarray) -> np.ndarray:
    """Mean of Gscatter C_k Gscatter^dagger: (1/L_k) W Pi~(C_k) W^dagger."""
    C_k = as_cmatrix(C_k, "C_k")
    R, Lk = spec.shape
    if C_k.shape != (Lk, Lk):
        raise ValueError(f"C_k must be {Lk}x{Lk}, got {C_k.shape}")
    q = _diag_congruence(spec.S, C_k)            # diag of S^dag C_k S, length L_k
    pi = (spec.N ** 2 * q[None, :]).sum(axis=1)  # length R
    return (spec.W * pi[None, :]) @ spec.W.conj().T / Lk


def zeta(spec: LinkSpecF, D_k: np.ndarray) -> np.ndarray:
    """Mean of Fscatter^dagger D_k Fscatter: (1/T) V Sigma(D_k) V^dagger."""
    D_k = as_cmatrix(D_k, "D_k")
    Lk, T = spec.shape
    if D_k.shape != (Lk, Lk):
        raise ValueError(f"D_k must be {Lk}x{Lk}, got {D_k.shape}")
    q = _diag_congruence(spec.U, D_k)            # diag of U^dag D_k U, length L_k
    sig = (spec.M ** 2 * q[:, None]).sum(axis=0)  # length T
    return (spec.V * sig[None, :]) @ spec.V.conj().T / T


def zeta_tilde(spec: LinkSpecF, Dtilde: np.ndarray) -> np.ndarray:
    """Mean of Fscatter Dtilde Fscatter^dagger: (1/T) U Sigma~(Dtilde) U^dagger."""
    Dtilde = as_cmatrix(Dtilde, "Dtilde")
    Lk, T = spec.shape
    if Dtilde.shape != (T, T):
        raise ValueError(f"Dtilde must be {T}x{T}, got {Dtilde.shape}")
    q = _diag_congruence(spec.V, Dtilde)          # diag of V^dag Dtilde V, length T
    sig = (spec.M ** 2 * q[None, :]).sum(axis=1)  # length L_k
    return (spec.U * sig[None, :]) @ spec.U.conj().T / T


def sample_scatter_F(spec: LinkSpecF, seed: int, trial: int) -> np.ndarray:
    """One draw of the scattering part U (M o X) V^dagger, X entries CN(0, 1/T)."""
    Lk, T = spec.shape
    x = complex_gaussian(stream(seed, trial, spec.k, ROLE_X), (Lk, T), 1.0 / T)
    return spec.U @ (spec.M * x) @ spec.V.conj().T


def sample_scatter_G(spec: LinkSpecG, seed: int, trial: int) -> np.ndarray:
    """One draw of the scattering part (1/sqrt r) W (N o Y) S^dagger."""
    R, Lk = spec.shape
    T = round(Lk / spec.r)
    y = complex_gaussian(stream(seed, trial, spec.k, ROLE_Y), (R, Lk), 1.0 / T)
    return spec.W @ (spec.N * y) @ spec.S.conj().T / np.sqrt(spec.r)


def sample_realization(spec: ChannelSpec, seed: int, trial: int) -> ChannelRealization:
    """Draw all component channels for one trial and assemble the effective one.

    Deterministic in (seed, trial): every link reads its own keyed stream, so
    results do not depend on evaluation order.
    """
    Fs = tuple(lf.Fbar + sample_scatter_F(lf, seed, trial) for lf in spec.links_F)
    Gs = tuple(lg.Gbar + sample_scatter_G(lg, seed, trial) for lg in spec.links_G)
    H = Fs[0].astype(np.complex128, copy=True)
    for lg, Gk, Fk in zip(spec.links_G, Gs[:], Fs[1:]):
        H += np.sqrt(lg.rho) * (Gk @ Fk)
    return ChannelRealization(F=Fs, G=Gs, H=H, seed=seed, trial=trial)


def assemble_GF(real: ChannelRealization, spec: ChannelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Factor the effective channel as H = G F with G: R x L and F: L x T."""
    parts = [np.eye(spec.R, dtype=np.complex128)]
    parts += [np.sqrt(lg.rho) * Gk for lg, Gk in zip(spec.links_G, real.G)]
    G = np.hstack(parts)
    F = np.vstack(real.F)
    return G, F


def absorb_phases(Gbar: np.ndarray, S: np.ndarray, phases: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fold a diagonal phase-shift matrix into the specular part and eigenbasis.

    Given the raw reflector channel statistics (specular ``Gbar``, eigenbasis
    ``S``) and per-element phase shifts, returns the equivalent pair with the
    unitary diag(exp(i phases)) absorbed, so the run-time model never carries
    explicit phase-shift matrices.
    """
    phases = np.asarray(phases, dtype=np.float64).reshape(-1)
    Lk = as_cmatrix(Gbar, "Gbar").shape[1]
    if phases.shape[0] != Lk:
        raise ValueError(f"need {Lk} phases, got {phases.shape[0]}")
    theta = np.exp(1j * phases)
    return Gbar * theta[None, :], _check_unitary(S, "S") * theta[:, None].conj()


def scatter_power_H(spec: ChannelSpec) -> float:
    """Mean squared Frobenius norm of the zero-mean part of the effective channel."""
    I_R = np.eye(spec.R, dtype=np.complex128)
    I_T = np.eye(spec.T, dtype=np.complex128)
    total = float(np.trace(zeta_tilde(spec.links_F[0], I_T)).real)
    for lf, lg in zip(spec.links_F[1:], spec.links_G):
        eggI = eta(lg, I_R)                       # E[Gsc^dag Gsc]
        effI = zeta_tilde(lf, I_T)                # E[Fsc Fsc^dag]
        term = np.trace(lf.Fbar.conj().T @ eggI @ lf.Fbar).real
        term += np.trace(lg.Gbar.conj().T @ lg.Gbar @ effI).real
        term += np.trace(eggI @ effI).real
        total += lg.rho * float(term)
    return total


def first_moment(spec: ChannelSpec) -> float:
    """First spectral moment E[tr(H H^dagger)] / R of the channel Gram matrix."""
    return (float(np.linalg.norm(spec.mean_effective) ** 2) + scatter_power_H(spec)) / spec.R


def make_channel_spec(links_F, links_G, T: int, R: int,
                      kappa_F=None, kappa_G=None) -> ChannelSpec:
    """Assemble a ChannelSpec, deriving the partition from the link shapes."""
    links_F = tuple(links_F)
    links_G = tuple(links_G)
    sizes = tuple(lf.shape[0] for lf in links_F)
    if kappa_F is None:
        kappa_F = tuple(0.0 for _ in links_F)
    if kappa_G is None:
        kappa_G = tuple(0.0 for _ in links_G)
    return ChannelSpec(T=T, R=R, partition=Partition(sizes), links_F=links_F,
                       links_G=links_G, kappa_F=kappa_F, kappa_G=kappa_G)


def blockdiag_from_links(blocks) -> np.ndarray:
    """Convenience: dense block-diagonal from a list of square blocks."""
    return blkdiag(blocks)
