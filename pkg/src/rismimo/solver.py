"""Fixed-point solver for the block-matrix Cauchy transform of the channel
Gram matrix.

At a complex point z the solver iterates eight coupled matrix-valued
functions: four self-energy-like maps built from the channel correlation
functions and four resolvent blocks.  The resolvent blocks are evaluated in a
product form, e.g. (N - Tt^{-1})^{-1} = -Tt (I - N Tt)^{-1}, which stays
valid when the intermediate factors are singular (deterministic channels,
first iterations), so only genuinely well-conditioned inverses are taken.

The update rule is the damped iteration new = d * computed + (1 - d) * old;
by default a safeguarded Anderson extrapolation over a short history is
layered on top, falling back to the plain damped step whenever the
extrapolated residual misbehaves.  Near the real axis the plain iteration
contracts at a rate approaching 1, so the acceleration is what keeps dense
spectral grids affordable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSpec, eta, eta_tilde, zeta, zeta_tilde
from .linalg import SingularMatrixError, blkdiag, extract_diag_block, hermitian_inverse


@dataclass
class SolverOptions:
    tolerance: float = 1e-10
    max_iterations: int = 5000
    damping: float = 0.5
    epsilon_imag: float = 0.0
    anderson_memory: int = 5    # 0 disables extrapolation (plain damped updates)

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must be in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.epsilon_imag < 0:
            raise ValueError("epsilon_imag must be nonnegative")
        if self.anderson_memory < 0:
            raise ValueError("anderson_memory must be nonnegative")


@dataclass
class SolverState:
    """Converged (or last) iterate of the eight matrix functions at one z."""

    z: complex
    Psi_tilde: np.ndarray   # R x R
    Psi: np.ndarray         # L x L block-diagonal, first block zero
    Phi_tilde: np.ndarray   # L x L block-diagonal
    Phi: np.ndarray         # T x T
    Gc_tilde: np.ndarray    # R x R
    Gc: np.ndarray          # L x L block-diagonal, first block pinned to zero
    Gd_tilde: np.ndarray    # T x T
    Gd: np.ndarray          # L x L block-diagonal
    Xi_inv: np.ndarray      # L x L, inverse of the coupling matrix Xi(z)
    residual: float
    iterations: int
    converged: bool
    failure: str | None = None
    spec: ChannelSpec | None = field(default=None, repr=False)

    @property
    def Xi(self) -> np.ndarray:
        """The coupling matrix Xi(z) itself.

        Raises :class:`SingularMatrixError` for degenerate (zero-profile)
        channels where Xi is only defined through its inverse.
        """
        return hermitian_inverse(self.Xi_inv)

    def gc_block(self, k: int) -> np.ndarray:
        return extract_diag_block(self.Gc, self.spec.partition, k)

    def gd_block(self, k: int) -> np.ndarray:
        return extract_diag_block(self.Gd, self.spec.partition, k)


def _bound_2norm(a: np.ndarray) -> float:
    """Cheap upper bound on the spectral norm: sqrt(norm1 * norminf)."""
    if a.size == 0:
        return 0.0
    col = np.abs(a).sum(axis=0).max()
    row = np.abs(a).sum(axis=1).max()
    return float(np.sqrt(col * row))


def _change(new: np.ndarray, old: np.ndarray) -> float:
    """Conservative spectral-norm change of an iterate, relative to 1+norm."""
    num = _bound_2norm(new - old)
    den = 1.0 + np.linalg.norm(new) / np.sqrt(new.shape[0])
    return num / den


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


class _System:
    """Per-spec constants and block packing of the fixed-point equations."""

    def __init__(self, spec: ChannelSpec):
        self.spec = spec
        self.partition = spec.partition
        self.R = spec.R
        self.T = spec.T
        self.L = spec.L
        self.K = spec.K
        self.Gbar = spec.Gbar_row          # R x L
        self.Fbar = spec.Fbar_stack        # L x T
        self.I_R = np.eye(self.R, dtype=np.complex128)
        self.I_T = np.eye(self.T, dtype=np.complex128)
        self.I_L = np.eye(self.L, dtype=np.complex128)
        # Packed layout: Gc_tilde, Gc blocks 1..K, Gd_tilde, Gd blocks 0..K.
        sizes = self.partition.sizes
        self._shapes = (
            [(self.R, self.R)]
            + [(s, s) for s in sizes[1:]]
            + [(self.T, self.T)]
            + [(s, s) for s in sizes]
        )
        self._dim = sum(r * c for r, c in self._shapes)

    # -- packing ---------------------------------------------------------

    def pack(self, Gc_tilde, Gc_blocks, Gd_tilde, Gd_blocks) -> np.ndarray:
        parts = [Gc_tilde.ravel()]
        parts += [b.ravel() for b in Gc_blocks[1:]]
        parts.append(Gd_tilde.ravel())
        parts += [b.ravel() for b in Gd_blocks]
        return np.concatenate(parts)

    def unpack(self, x: np.ndarray):
        mats = []
        pos = 0
        for r, c in self._shapes:
            mats.append(x[pos:pos + r * c].reshape(r, c))
            pos += r * c
        nb = self.partition.nblocks
        Gc_tilde = mats[0]
        Gc_blocks = [np.zeros((self.R, self.R), dtype=np.complex128)] + mats[1:nb]
        Gd_tilde = mats[nb]
        Gd_blocks = mats[nb + 1:]
        return Gc_tilde, Gc_blocks, Gd_tilde, Gd_blocks

    def zeros(self) -> np.ndarray:
        return np.zeros(self._dim, dtype=np.complex128)

    # -- the coupled equations --------------------------------------------

    def psi_funcs(self, z: complex, Gc_tilde, Gc_blocks, Gd_tilde, Gd_blocks):
        """Self-energy maps from the current resolvent blocks."""
        spec = self.spec
        Psi_tilde = z * self.I_R.copy()
        for lg, Ck in zip(spec.links_G, Gc_blocks[1:]):
            Psi_tilde -= lg.rho * eta_tilde(lg, Ck)
        psi_blocks = [np.zeros((self.R, self.R), dtype=np.complex128)]
        psi_blocks += [-lg.rho * eta(lg, Gc_tilde) for lg in spec.links_G]
        Psi = blkdiag(psi_blocks)
        Phi_tilde = blkdiag([-zeta_tilde(lf, Gd_tilde) for lf in spec.links_F])
        Phi = self.I_T.copy()
        for lf, Dk in zip(spec.links_F, Gd_blocks):
            Phi -= zeta(lf, Dk)
        return Psi_tilde, Psi, Phi_tilde, Phi

    def g_funcs(self, Psi_tilde, Psi, Phi_tilde, Phi, return_aux: bool = False):
        """Resolvent blocks from the self-energies (robust product form)."""
        Gbar, Fbar = self.Gbar, self.Fbar
        Phi_i = hermitian_inverse(Phi)
        Psit_i = hermitian_inverse(Psi_tilde)
        Tt = Phi_tilde - Fbar @ Phi_i @ Fbar.conj().T          # L x L
        Nmat = Psi - Gbar.conj().T @ Psit_i @ Gbar             # L x L
        X1 = hermitian_inverse(self.I_L - Nmat @ Tt)
        A_C = -Tt @ X1                                          # (N - Tt^-1)^-1
        ACN = A_C @ Nmat
        A_D = -Nmat + Nmat @ ACN                                # (Tt - N^-1)^-1

        P = Gbar @ A_C @ Gbar.conj().T                          # R x R
        core = hermitian_inverse(Psi_tilde + P)
        Gc_tilde = hermitian_inverse(Psi_tilde - P + P @ core @ P)

        Q = Fbar.conj().T @ A_D @ Fbar                          # T x T
        zcore = hermitian_inverse(Phi + Q)
        Gd_tilde = hermitian_inverse(Phi - Q + Q @ zcore @ Q)

        part = self.partition
        Gc_blocks = [np.zeros((self.R, self.R), dtype=np.complex128)]
        Gc_blocks += [extract_diag_block(A_C, part, k) for k in range(1, part.nblocks)]
        Gd_blocks = [extract_diag_block(A_D, part, k) for k in range(part.nblocks)]
        out = (Gc_tilde, Gc_blocks, Gd_tilde, Gd_blocks)
        if not return_aux:
            return out
        aux = {
            "Phi_i": Phi_i, "Psit_i": Psit_i, "Tt": Tt, "Nmat": Nmat,
            "X1": X1, "A_C": A_C, "A_D": A_D, "P": P, "core": core,
            "Gc_tilde": Gc_tilde, "Q": Q, "zcore": zcore, "Gd_tilde": Gd_tilde,
        }
        return out, aux

    def psi_lin(self, vGc_tilde, vGc_blocks, vGd_tilde, vGd_blocks):
        """Linear part of the self-energy maps (their differential)."""
        spec = self.spec
        dPsi_tilde = np.zeros((self.R, self.R), dtype=np.complex128)
        for lg, Ck in zip(spec.links_G, vGc_blocks[1:]):
            dPsi_tilde -= lg.rho * eta_tilde(lg, Ck)
        dpsi_blocks = [np.zeros((self.R, self.R), dtype=np.complex128)]
        dpsi_blocks += [-lg.rho * eta(lg, vGc_tilde) for lg in spec.links_G]
        dPsi = blkdiag(dpsi_blocks)
        dPhi_tilde = blkdiag([-zeta_tilde(lf, vGd_tilde) for lf in spec.links_F])
        dPhi = np.zeros((self.T, self.T), dtype=np.complex128)
        for lf, Dk in zip(spec.links_F, vGd_blocks):
            dPhi -= zeta(lf, Dk)
        return dPsi_tilde, dPsi, dPhi_tilde, dPhi

    def g_jvp(self, aux, dPsi_tilde, dPsi, dPhi_tilde, dPhi):
        """Exact differential of g_funcs at the point captured in ``aux``."""
        Gbar, Fbar = self.Gbar, self.Fbar
        Phi_i, Psit_i = aux["Phi_i"], aux["Psit_i"]
        Tt, Nmat, X1 = aux["Tt"], aux["Nmat"], aux["X1"]
        A_C, A_D, P, core = aux["A_C"], aux["A_D"], aux["P"], aux["core"]
        Gct, Q, zcore, Gdt = aux["Gc_tilde"], aux["Q"], aux["zcore"], aux["Gd_tilde"]

        dPhi_i = -Phi_i @ dPhi @ Phi_i
        dPsit_i = -Psit_i @ dPsi_tilde @ Psit_i
        dTt = dPhi_tilde - Fbar @ dPhi_i @ Fbar.conj().T
        dN = dPsi - Gbar.conj().T @ dPsit_i @ Gbar
        dX1 = X1 @ (dN @ Tt + Nmat @ dTt) @ X1
        dA_C = -dTt @ X1 - Tt @ dX1
        dA_D = -dN + dN @ A_C @ Nmat + Nmat @ dA_C @ Nmat + Nmat @ A_C @ dN

        dP = Gbar @ dA_C @ Gbar.conj().T
        dcore = -core @ (dPsi_tilde + dP) @ core
        dMin = dPsi_tilde - dP + dP @ core @ P + P @ dcore @ P + P @ core @ dP
        dGc_tilde = -Gct @ dMin @ Gct

        dQ = Fbar.conj().T @ dA_D @ Fbar
        dzcore = -zcore @ (dPhi + dQ) @ zcore
        dZin = dPhi - dQ + dQ @ zcore @ Q + Q @ dzcore @ Q + Q @ zcore @ dQ
        dGd_tilde = -Gdt @ dZin @ Gdt

        part = self.partition
        dGc_blocks = [np.zeros((self.R, self.R), dtype=np.complex128)]
        dGc_blocks += [extract_diag_block(dA_C, part, k) for k in range(1, part.nblocks)]
        dGd_blocks = [extract_diag_block(dA_D, part, k) for k in range(part.nblocks)]
        return dGc_tilde, dGc_blocks, dGd_tilde, dGd_blocks

    def jvp(self, aux, v: np.ndarray, real_axis: bool) -> np.ndarray:
        """Packed differential of the full cycle map along packed direction v."""
        dpsi = self.psi_lin(*self.unpack(v))
        dnew = self.g_jvp(aux, *dpsi)
        if real_axis:
            dnew = (
                _hermitize(dnew[0]),
                [_hermitize(b) for b in dnew[1]],
                _hermitize(dnew[2]),
                [_hermitize(b) for b in dnew[3]],
            )
        return self.pack(*dnew)

    def cycle(self, z: complex, x: np.ndarray, real_axis: bool, return_aux: bool = False):
        """One full update x -> F(x) plus the per-block change metric."""
        cur = self.unpack(x)
        psi = self.psi_funcs(z, *cur)
        if return_aux:
            new, aux = self.g_funcs(*psi, return_aux=True)
        else:
            new = self.g_funcs(*psi)
            aux = None
        if real_axis:
            new = (
                _hermitize(new[0]),
                [_hermitize(b) for b in new[1]],
                _hermitize(new[2]),
                [_hermitize(b) for b in new[3]],
            )
        changes = [
            _change(new[0], cur[0]),
            _change(new[2], cur[2]),
            max(_change(n, o) for n, o in zip(new[1], cur[1])),
            max(_change(n, o) for n, o in zip(new[3], cur[3])),
        ]
        if return_aux:
            return self.pack(*new), psi, new, max(changes), aux
        return self.pack(*new), psi, new, max(changes)

    def xi_inv(self, Psi, Phi_tilde, Phi) -> np.ndarray:
        """Xi(z)^{-1} = (Psi - Tt^{-1})^{-1} in singularity-tolerant form."""
        Phi_i = hermitian_inverse(Phi)
        Tt = Phi_tilde - self.Fbar @ Phi_i @ self.Fbar.conj().T
        return -Tt @ hermitian_inverse(self.I_L - Psi @ Tt)


def _effective_z(z: complex, opts: SolverOptions) -> complex:
    z = complex(z)
    if z.imag > 0:
        return z
    if z.imag == 0.0:
        if z.real < 0:
            return z
        if opts.epsilon_imag > 0:
            return complex(z.real, opts.epsilon_imag)
        raise ValueError(
            "z must have Im z > 0 or be real negative; "
            "set epsilon_imag for real-axis evaluation at t >= 0"
        )
    raise ValueError(f"z must not lie in the lower half-plane, got {z}")


def _herglotz_failure(z: complex, Gc_tilde: np.ndarray) -> str | None:
    """Branch check: name the violation if the state is on a spurious branch."""
    if z.imag > 0:
        im_part = (Gc_tilde - Gc_tilde.conj().T) / 2j
        top = np.linalg.eigvalsh(_hermitize(im_part)).max()
        if top > 1e-8:
            return f"herglotz-sign-violation ({top:.2e})"
    else:
        top = np.linalg.eigvalsh(_hermitize(Gc_tilde)).max()
        if top >= 0:
            return f"negative-definiteness-violation ({top:.2e})"
    return None


# Inner stopping margin: the change metric upper-bounds the spectral-norm
# defect, so stopping below tolerance/4 keeps the reported state within
# tolerance under the exact metric.
_STOP_MARGIN = 0.25

# Safeguard: wipe the extrapolation history when the residual norm exceeds
# this multiple of the best seen so far.
_ANDERSON_GUARD = 1e3

# Hand over to the Newton polish after this many extrapolated cycles without
# convergence (the fixed-point rate approaches 1 near spectral edges, where
# only a second-order method stays affordable).
_NEWTON_AFTER = 80


def _anderson_step(x, r, hist_x, hist_r, beta: float) -> np.ndarray:
    """Type-II Anderson extrapolation with relaxation beta."""
    dR = np.column_stack([r - rp for rp in hist_r])
    dX = np.column_stack([x - xp for xp in hist_x])
    gamma, *_ = np.linalg.lstsq(dR, r, rcond=None)
    return x + beta * r - (dX + beta * dR) @ gamma


def _to_real(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x.real, x.imag])


def _to_complex(xr: np.ndarray) -> np.ndarray:
    d = xr.size // 2
    return xr[:d] + 1j * xr[d:]


def _gmres(matvec, b: np.ndarray, tol: float, maxit: int) -> np.ndarray:
    """Plain MGS-Arnoldi GMRES from a zero initial guess."""
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    V = [b / bnorm]
    H = np.zeros((maxit + 1, maxit))
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)
    g = np.zeros(maxit + 1)
    g[0] = bnorm
    k_used = 0
    for k in range(maxit):
        w = matvec(V[k])
        for i in range(k + 1):
            H[i, k] = V[i] @ w
            w = w - H[i, k] * V[i]
        H[k + 1, k] = np.linalg.norm(w)
        if H[k + 1, k] > 1e-14 * bnorm:
            V.append(w / H[k + 1, k])
        else:
            V.append(np.zeros_like(w))
        # Givens rotations to keep an upper-triangular least-squares system.
        for i in range(k):
            temp = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = temp
        denom = np.hypot(H[k, k], H[k + 1, k])
        if denom == 0.0:
            k_used = k
            break
        cs[k] = H[k, k] / denom
        sn[k] = H[k + 1, k] / denom
        H[k, k] = denom
        H[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        k_used = k + 1
        if abs(g[k + 1]) <= tol * bnorm:
            break
    if k_used == 0:
        return np.zeros_like(b)
    y = np.linalg.solve(H[:k_used, :k_used] + 1e-300 * np.eye(k_used), g[:k_used])
    return np.sum([y[i] * V[i] for i in range(k_used)], axis=0)


def _final_snapshot(sys: "_System", z: complex, new, real_axis: bool):
    """Self-consistent (self-energies, blocks) pair for the returned state.

    The self-energies are recomputed from the final blocks and the blocks
    from exactly those self-energies, so both code paths of the trace
    formula agree to rounding.
    """
    psi_final = sys.psi_funcs(z, *new)
    blocks_final = sys.g_funcs(*psi_final)
    if real_axis:
        blocks_final = (
            _hermitize(blocks_final[0]),
            [_hermitize(b) for b in blocks_final[1]],
            _hermitize(blocks_final[2]),
            [_hermitize(b) for b in blocks_final[3]],
        )
    return psi_final, blocks_final


def _newton_polish(sys: "_System", z: complex, x: np.ndarray, real_axis: bool,
                   opts: SolverOptions, budget: int):
    """Inexact Newton-GMRES on F(x) - x = 0 with the exact Jacobian action.

    Returns (x, final_blocks_or_None, residual_metric, cycles_used).  The
    Jacobian-vector products come from the closed-form differential of the
    cycle map; GMRES runs over the realified vector space because the
    real-axis hermitization is only real-linear.
    """
    cycles = 0

    def fres(xc: np.ndarray):
        nonlocal cycles
        cycles += 1
        fx, psi, new, metric, aux = sys.cycle(z, xc, real_axis, return_aux=True)
        return fx - xc, metric, new, aux

    r, residual, new, aux = fres(x)
    for _ in range(60):
        if residual <= opts.tolerance * _STOP_MARGIN or cycles >= budget:
            break
        rr = _to_real(r)
        rnorm = np.linalg.norm(rr)

        def jv(vr: np.ndarray) -> np.ndarray:
            nonlocal cycles
            cycles += 1
            v = _to_complex(vr)
            return _to_real(sys.jvp(aux, v, real_axis) - v)

        step = _gmres(jv, -rr, tol=1e-4, maxit=min(80, max(budget - cycles, 1)))
        step_norm = float(np.linalg.norm(step))
        if not np.isfinite(step).all() or step_norm == 0.0:
            break
        # Trust-region style cap plus backtracking on the raw residual norm:
        # the Newton model is only locally valid near square-root branch
        # points, so long steps overshoot.
        scale = min(1.0, 0.5 * (1.0 + np.linalg.norm(x)) / step_norm)
        accepted = False
        for _ in range(12):
            try:
                r_try, metric_try, new_try, aux_try = fres(x + _to_complex(step * scale))
            except SingularMatrixError:
                scale *= 0.5
                continue
            if np.isfinite(metric_try) and np.linalg.norm(_to_real(r_try)) < rnorm:
                x = x + _to_complex(step * scale)
                r, residual, new, aux = r_try, metric_try, new_try, aux_try
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
    return x, new, residual, cycles


def solve_fixed_point(spec: ChannelSpec, z: complex, init: SolverState | None = None,
                      opts: SolverOptions | None = None) -> SolverState:
    """Solve the eight coupled fixed-point equations at the point z.

    Returns a state whose self-energy entries are exact images of its stored
    resolvent blocks and whose resolvent defect is below the tolerance.  On
    non-convergence the last iterate is returned flagged ``converged=False``;
    a singular inverse on the very first cycle raises
    :class:`SingularMatrixError`.

    A failed or branch-violating solve is retried once through a descent in
    the imaginary part (solutions high above the axis are unique and easy;
    walking down tracks the physical branch to the target point).
    """
    opts = opts or SolverOptions()
    st = _solve_once(spec, z, init, opts)
    if st.converged:
        return st
    zeff = _effective_z(z, opts)
    extra = st.iterations
    warm = None
    scale = max(abs(zeff), 1.0)
    floor = max(zeff.imag, scale * 1e-4)
    heights = []
    h = scale
    while h > floor:
        heights.append(h)
        h /= 4.0
    for h in heights:
        try:
            s2 = _solve_once(spec, complex(zeff.real, h), warm, opts)
        except SingularMatrixError:
            continue
        extra += s2.iterations
        if s2.converged:
            warm = s2
    retry = _solve_once(spec, zeff, warm, opts)
    retry.iterations += extra
    return retry


def _solve_once(spec: ChannelSpec, z: complex, init: SolverState | None,
                opts: SolverOptions) -> SolverState:
    sys = _System(spec)
    z = _effective_z(z, opts)
    real_axis = z.imag == 0.0

    if init is not None and init.spec is not None and init.spec.partition == spec.partition:
        x = sys.pack(
            init.Gc_tilde,
            [init.gc_block(k) for k in range(spec.partition.nblocks)],
            init.Gd_tilde,
            [init.gd_block(k) for k in range(spec.partition.nblocks)],
        )
    else:
        x = sys.zeros()

    damping = opts.damping
    min_damping = opts.damping / 16.0
    prev_residual = np.inf
    grow_count = 0
    hist_x: list[np.ndarray] = []
    hist_r: list[np.ndarray] = []
    best_rnorm = np.inf
    failure = None
    residual = np.inf
    final = None
    next_newton_at = _NEWTON_AFTER
    it = 0

    while it < opts.max_iterations:
        it += 1
        try:
            fx, psi, new, residual = sys.cycle(z, x, real_axis)
        except SingularMatrixError:
            if it == 1:
                raise
            failure = "singular-inner-inverse"
            break

        if residual <= opts.tolerance * _STOP_MARGIN:
            final = _final_snapshot(sys, z, new, real_axis)
            break

        if it >= next_newton_at and opts.anderson_memory > 0:
            # The accelerated fixed-point iteration is rate-limited here
            # (spectral-edge creep); switch to an inexact Newton solve, and
            # if that stalls too, resume accelerated cycles from its iterate.
            try:
                x, new_n, residual, used = _newton_polish(
                    sys, z, x, real_axis, opts, budget=opts.max_iterations - it
                )
            except SingularMatrixError:
                failure = "singular-inner-inverse"
                break
            it += used
            if residual <= opts.tolerance * _STOP_MARGIN and new_n is not None:
                final = _final_snapshot(sys, z, new_n, real_axis)
                break
            hist_x.clear()
            hist_r.clear()
            next_newton_at = it + _NEWTON_AFTER
            continue

        if opts.anderson_memory == 0:
            # Plain damped iteration: back off on sustained residual growth.
            # (Extrapolated residuals are non-monotone by nature, so the rule
            # would only throttle the accelerated path.)
            if residual > prev_residual:
                grow_count += 1
                if grow_count >= 10:
                    damping = max(damping / 2.0, min_damping)
                    grow_count = 0
            else:
                grow_count = 0
        prev_residual = residual

        r = fx - x
        rnorm = float(np.linalg.norm(r))
        if not np.isfinite(rnorm) or rnorm > _ANDERSON_GUARD * best_rnorm:
            hist_x.clear()
            hist_r.clear()
        best_rnorm = min(best_rnorm, rnorm)

        if opts.anderson_memory > 0 and hist_x:
            x_next = _anderson_step(x, r, hist_x, hist_r, damping)
            if not np.isfinite(x_next).all():
                x_next = x + damping * r
                hist_x.clear()
                hist_r.clear()
        else:
            x_next = x + damping * r

        hist_x.append(x)
        hist_r.append(r)
        if len(hist_x) > opts.anderson_memory:
            hist_x.pop(0)
            hist_r.pop(0)
        x = x_next

    converged = failure is None and final is not None
    if failure is None and not converged:
        failure = "max-iterations"

    if converged:
        (Psi_tilde, Psi, Phi_tilde, Phi), blocks = final
        Gc_tilde, Gc_blocks, Gd_tilde, Gd_blocks = blocks
    else:
        Gc_tilde, Gc_blocks, Gd_tilde, Gd_blocks = sys.unpack(x)
        Psi_tilde, Psi, Phi_tilde, Phi = sys.psi_funcs(z, Gc_tilde, Gc_blocks, Gd_tilde, Gd_blocks)
    xi_inv = sys.xi_inv(Psi, Phi_tilde, Phi)
    if converged:
        branch_issue = _herglotz_failure(z, Gc_tilde)
        if branch_issue is not None:
            converged = False
            failure = branch_issue

    return SolverState(
        z=z,
        Psi_tilde=Psi_tilde,
        Psi=Psi,
        Phi_tilde=Phi_tilde,
        Phi=Phi,
        Gc_tilde=Gc_tilde,
        Gc=blkdiag(Gc_blocks),
        Gd_tilde=Gd_tilde,
        Gd=blkdiag(Gd_blocks),
        Xi_inv=xi_inv,
        residual=float(residual),
        iterations=it,
        converged=converged,
        failure=failure,
        spec=spec,
    )


def cauchy_B(state: SolverState) -> complex:
    """Cauchy transform of the Gram matrix at the state's point.

    Evaluated freshly from the stored self-energies, (1/R) Tr[(Psi_tilde -
    Gbar Xi^{-1} Gbar^dagger)^{-1}]; agrees with Tr(Gc_tilde)/R at a converged
    state.
    """
    if not state.converged:
        raise ValueError(f"state at z={state.z} did not converge ({state.failure})")
    sys = _System(state.spec)
    xi_inv = sys.xi_inv(state.Psi, state.Phi_tilde, state.Phi)
    A = state.Psi_tilde - sys.Gbar @ xi_inv @ sys.Gbar.conj().T
    return complex(np.trace(hermitian_inverse(A)) / sys.R)


def sweep(spec: ChannelSpec, points, opts: SolverOptions | None = None) -> list[SolverState]:
    """Solve along an ordered grid of points, warm-starting each from the last
    converged state.  Failures are recorded per point and do not abort."""
    opts = opts or SolverOptions()
    states: list[SolverState] = []
    warm: SolverState | None = None
    for z in points:
        try:
            st = solve_fixed_point(spec, z, init=warm, opts=opts)
        except (SingularMatrixError, ValueError) as err:
            st = _failed_state(spec, z, str(err))
        states.append(st)
        if st.converged:
            warm = st
    return states


def _failed_state(spec: ChannelSpec, z: complex, reason: str) -> SolverState:
    zero = np.zeros
    R, T, L = spec.R, spec.T, spec.L
    return SolverState(
        z=complex(z),
        Psi_tilde=zero((R, R), dtype=np.complex128),
        Psi=zero((L, L), dtype=np.complex128),
        Phi_tilde=zero((L, L), dtype=np.complex128),
        Phi=zero((T, T), dtype=np.complex128),
        Gc_tilde=zero((R, R), dtype=np.complex128),
        Gc=zero((L, L), dtype=np.complex128),
        Gd_tilde=zero((T, T), dtype=np.complex128),
        Gd=zero((L, L), dtype=np.complex128),
        Xi_inv=zero((L, L), dtype=np.complex128),
        residual=float("inf"),
        iterations=0,
        converged=False,
        failure=reason,
        spec=spec,
    )


def warm_chain_iterations(states: list[SolverState]) -> int:
    """Total iteration count across a sweep (for continuation diagnostics)."""
    return sum(s.iterations for s in states)
