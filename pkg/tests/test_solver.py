import numpy as np
import pytest

from rismimo.channel import LinkSpecF, LinkSpecG, make_channel_spec
from rismimo.linalg import SingularMatrixError, hermitian_inverse
from rismimo.presets import deterministic_spec, mp_spec
from rismimo.solver import (
    SolverOptions,
    _System,
    cauchy_B,
    solve_fixed_point,
    sweep,
    warm_chain_iterations,
)

RNG = np.random.default_rng(77)


def mp_cauchy(z: complex) -> complex:
    """Closed-form square Marchenko-Pastur Stieltjes transform (ratio 1,
    scale 1): the root of z*G^2 - z*G + 1 = 0 on the physical branch."""
    z = complex(z)
    disc = np.sqrt(z * z - 4 * z + 0j)
    g1 = (z - disc) / (2 * z)
    g2 = (z + disc) / (2 * z)
    if z.imag > 0:
        return g1 if g1.imag < 0 else g2
    return g1 if abs(g1) < abs(g2) else g2


def identity_channel(n=6):
    link = LinkSpecF(0, np.eye(n), np.eye(n), np.eye(n), np.zeros((n, n)))
    return make_channel_spec([link], [], T=n, R=n)


def sample_points(count, rng=RNG, include_real=True):
    pts = []
    for i in range(count):
        if include_real and i % 2:
            pts.append(complex(-rng.uniform(0.05, 20.0)))
        else:
            pts.append(complex(rng.uniform(0.1, 30.0), rng.uniform(1e-3, 3.0)))
    return pts


class TestDeterministicOracle:
    def test_matches_resolvent_trace(self):
        spec = deterministic_spec(K=2, T=6, R=6, Lk=5, seed=3)
        Hbar = spec.mean_effective
        evals = np.linalg.eigvalsh(Hbar @ Hbar.conj().T)
        opts = SolverOptions(damping=1.0)
        for z in sample_points(8):
            if z.imag == 0 and z.real > -0.05:
                continue
            st = solve_fixed_point(spec, z, opts=opts)
            oracle = complex(np.mean(1.0 / (z - evals)))
            assert abs(cauchy_B(st) - oracle) <= 1e-9

    def test_converges_in_two_cycles(self):
        spec = deterministic_spec(K=1, T=5, R=5, Lk=4, seed=1)
        st = solve_fixed_point(spec, complex(-1.0), opts=SolverOptions(damping=1.0))
        assert st.converged and st.iterations <= 2

    def test_identity_channel_closed_form(self):
        spec = identity_channel(6)
        for z in (2.5 + 1.0j, -0.7 + 0j, 4.0 + 0.01j):
            st = solve_fixed_point(spec, z, opts=SolverOptions(damping=1.0))
            assert abs(cauchy_B(st) - 1.0 / (z - 1.0)) < 1e-10


class TestMarchenkoPastur:
    def test_closed_form_agreement(self):
        spec = mp_spec(16)
        opts = SolverOptions(tolerance=1e-11)
        for z in (2.0 + 0.5j, 1.0 + 1e-2j, 0.5 + 1e-3j, -0.5 + 0j, -5.0 + 0j):
            st = solve_fixed_point(spec, z, opts=opts)
            assert st.converged
            assert abs(cauchy_B(st) - mp_cauchy(z)) <= 1e-8

    def test_quadrature_oracle(self):
        # Independent route: integrate the closed-form density directly.
        # Substituting t = u^2 removes the inverse-square-root edge.
        spec = mp_spec(12)
        z = 1.3 + 0.4j
        u = np.linspace(0.0, 2.0, 200_001)
        integrand = np.sqrt(4.0 - u ** 2) / (np.pi * (z - u ** 2))
        oracle = np.trapezoid(integrand, u)
        st = solve_fixed_point(spec, z)
        assert abs(cauchy_B(st) - oracle) < 1e-6  # quadrature-limited

    def test_large_z_asymptote(self):
        spec = mp_spec(8)
        for zmag in (1e4, 1e6):
            st = solve_fixed_point(spec, complex(0, zmag))
            val = complex(zmag * 1j) * cauchy_B(st)
            assert abs(val - 1.0) < 1e-4


@pytest.fixture(scope="module")
def converged(random_spec):
    return {
        "complex": solve_fixed_point(random_spec, 1.5 + 0.2j),
        "real": solve_fixed_point(random_spec, complex(-0.8)),
    }


class TestStateContracts:

    def test_plug_back_defect(self, random_spec, converged):
        sys = _System(random_spec)
        for st in converged.values():
            blocks = (st.Gc_tilde, [st.gc_block(k) for k in range(random_spec.partition.nblocks)],
                      st.Gd_tilde, [st.gd_block(k) for k in range(random_spec.partition.nblocks)])
            psi = sys.psi_funcs(st.z, *blocks)
            for got, stored in zip(psi, (st.Psi_tilde, st.Psi, st.Phi_tilde, st.Phi)):
                assert np.linalg.norm(got - stored, 2) <= 1e-10 * (1 + np.linalg.norm(stored, 2))
            new = sys.g_funcs(*psi)
            for got, stored in ((new[0], st.Gc_tilde), (new[2], st.Gd_tilde)):
                assert np.linalg.norm(got - stored, 2) <= 1e-10 * (1 + np.linalg.norm(stored, 2))

    def test_trace_formula_consistency(self, random_spec, converged):
        # Same expression through two code paths: stored resolvent block vs
        # a fresh evaluation from the self-energies.
        sys = _System(random_spec)
        for st in converged.values():
            xi_inv = sys.xi_inv(st.Psi, st.Phi_tilde, st.Phi)
            fresh = hermitian_inverse(st.Psi_tilde - sys.Gbar @ xi_inv @ sys.Gbar.conj().T)
            scale = np.linalg.norm(st.Gc_tilde)
            assert np.linalg.norm(fresh - st.Gc_tilde) <= 1e-12 * scale
            assert abs(cauchy_B(st) - np.trace(st.Gc_tilde) / random_spec.R) <= 1e-12 * scale

    def test_residual_below_tolerance(self, converged):
        for st in converged.values():
            assert st.converged and st.residual <= 1e-10

    def test_hermitian_on_real_axis(self, converged):
        st = converged["real"]
        for m in (st.Psi_tilde, st.Psi, st.Phi_tilde, st.Phi, st.Gc_tilde, st.Gc,
                  st.Gd_tilde, st.Gd):
            assert np.linalg.norm(m - m.conj().T) <= 1e-11 * (1 + np.linalg.norm(m))

    def test_first_block_pinned(self, random_spec, converged):
        for st in converged.values():
            assert np.count_nonzero(st.gc_block(0)) == 0
            assert np.count_nonzero(st.Gc[:random_spec.R, :random_spec.R]) == 0

    def test_negative_definite_on_negative_axis(self, converged):
        st = converged["real"]
        assert np.linalg.eigvalsh(st.Gc_tilde).max() < 0

    def test_herglotz_sign(self, random_spec):
        for z in sample_points(6, include_real=False):
            st = solve_fixed_point(random_spec, z)
            assert cauchy_B(st).imag < 0

    def test_xi_property_on_scattering_spec(self, random_spec, converged):
        st = converged["complex"]
        xi = st.Xi
        assert np.linalg.norm(xi @ st.Xi_inv - np.eye(random_spec.L)) < 1e-8


class TestSweep:
    def test_single_point_matches_solve(self, random_spec):
        z = 2.0 + 0.5j
        st = sweep(random_spec, [z])[0]
        ref = solve_fixed_point(random_spec, z)
        assert abs(cauchy_B(st) - cauchy_B(ref)) < 1e-12

    def test_path_independence(self, random_spec):
        pts = [complex(t, 5e-3) for t in np.linspace(0.2, 12.0, 25)]
        fwd = sweep(random_spec, pts)
        bwd = sweep(random_spec, pts[::-1])[::-1]
        for a, b in zip(fwd, bwd):
            assert a.converged and b.converged
            assert abs(cauchy_B(a) - cauchy_B(b)) <= 1e-8

    def test_warm_start_saves_iterations(self, random_spec):
        pts = [complex(t, 2e-3) for t in np.linspace(0.1, 12.0, 60)]
        warm = sweep(random_spec, pts)
        cold_total = 0
        for z in pts:
            cold_total += solve_fixed_point(random_spec, z).iterations
        assert all(s.converged for s in warm)
        assert warm_chain_iterations(warm) <= 0.7 * cold_total

    def test_failures_flagged_without_abort(self, random_spec):
        pts = [2.0 + 0.5j, complex(3.0), 4.0 + 0.5j]  # middle point invalid
        states = sweep(random_spec, pts)
        assert states[0].converged and states[2].converged
        assert not states[1].converged
        assert states[1].failure


class TestOptionsAndErrors:
    def test_invalid_options(self):
        with pytest.raises(ValueError):
            SolverOptions(tolerance=0)
        with pytest.raises(ValueError):
            SolverOptions(damping=0)
        with pytest.raises(ValueError):
            SolverOptions(damping=1.5)
        with pytest.raises(ValueError):
            SolverOptions(max_iterations=0)

    def test_real_nonnegative_z_needs_shift(self, random_spec):
        with pytest.raises(ValueError, match="epsilon_imag"):
            solve_fixed_point(random_spec, complex(2.0))
        st = solve_fixed_point(random_spec, complex(2.0),
                               opts=SolverOptions(epsilon_imag=1e-3))
        assert st.z == 2.0 + 1e-3j and st.converged

    def test_lower_half_plane_rejected(self, random_spec):
        with pytest.raises(ValueError):
            solve_fixed_point(random_spec, 1.0 - 0.5j)

    def test_plain_damped_mode_still_converges(self):
        spec = mp_spec(8)
        st = solve_fixed_point(spec, 2.0 + 0.5j,
                               opts=SolverOptions(anderson_memory=0, damping=0.5,
                                                  max_iterations=2000))
        assert st.converged
        assert abs(cauchy_B(st) - mp_cauchy(2.0 + 0.5j)) < 1e-8

    def test_nonconvergence_flagged(self):
        spec = mp_spec(8)
        st = solve_fixed_point(spec, 2.0 + 1e-4j,
                               opts=SolverOptions(anderson_memory=0, damping=0.5,
                                                  max_iterations=5))
        assert not st.converged
        assert st.failure == "max-iterations"

    def test_init_with_other_partition_ignored(self, random_spec):
        other = mp_spec(8)
        warm = solve_fixed_point(other, 2.0 + 0.5j)
        st = solve_fixed_point(random_spec, 2.0 + 0.5j, init=warm)
        assert st.converged
