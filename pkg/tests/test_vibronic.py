import numpy as np
import pytest
from scipy.linalg import expm

from reduced_purities.densmat import DensityMatrixExpansion
from reduced_purities.fock import OperatorString, all_determinants, matrix_element
from reduced_purities.purity import purity_trace
from reduced_purities.rdm import build_rdm
from reduced_purities.vibronic.dynamics import (EhrenfestPropagator, LaserPulse, PropagationError,
                                                TrajectoryEnsemble, normal_modes, one_body_density,
                                                propagate, sample_wigner)
from reduced_purities.vibronic.experiments import ground_state, type1_state, type2_state
from reduced_purities.vibronic.ssh import (HBAR, RelaxationError, SSHChain, SSHParameters, hamiltonian,
                                           relax_geometry, with_parameters)


@pytest.fixture(scope="module")
def chain():
    return relax_geometry(SSHChain())


def test_relaxed_chain_is_dimerized(chain):
    bonds = chain.bond_lengths()
    assert bonds[0] < bonds[1] > bonds[2]
    assert np.linalg.norm(chain.gradient()) < 1e-8
    eps, _ = chain.orbitals()
    assert np.min(np.diff(eps)) > 1.0  # four well separated levels


def test_gap_near_resonance(chain):
    assert chain.homo_lumo_gap() == pytest.approx(4.08, abs=0.1)


def test_no_coupling_gives_uniform_chain():
    c = relax_geometry(SSHChain(SSHParameters(alpha=0.0)))
    np.testing.assert_allclose(c.u, 0.0, atol=1e-12)


def test_relaxation_iteration_cap():
    with pytest.raises(RelaxationError):
        relax_geometry(SSHChain(), max_iter=0)


def test_hamiltonian_is_real_symmetric(chain):
    h = hamiltonian(chain.params, chain.u + 0.01, 0.3)
    assert np.isrealobj(h)
    np.testing.assert_array_equal(h, h.T)
    assert h[0, 1] == pytest.approx(-chain.params.t0 + chain.params.alpha * (chain.u[1] - chain.u[0]))


def test_unrelaxed_geometry_rejected():
    # with strong coupling the uniform chain is a saddle point
    with pytest.raises(PropagationError):
        sample_wigner(SSHChain(SSHParameters(alpha=8.0)), 10, seed=0)


def test_zero_width_single_trajectory(chain):
    ens = sample_wigner(chain, 1, seed=0, width_scale=0.0)
    np.testing.assert_array_equal(ens.u[0], chain.u)
    np.testing.assert_array_equal(ens.p[0], 0.0)
    res = propagate(ens, ground_state(), t_final=2.0, dt=0.01, output_every=1.0, n_bootstrap=0)
    assert res.P1[0] == 4.0 or res.P1[0] == pytest.approx(4.0, abs=1e-12)
    np.testing.assert_allclose(res.P1, 4.0, atol=1e-10)


def test_wigner_moments(chain):
    n = 20000
    ens = sample_wigner(chain, n, seed=7)
    omega, L = normal_modes(chain)
    q = (ens.u - chain.u) @ L
    p = ens.p @ L
    M = chain.params.mass
    sd = np.sqrt(np.var(ens.u - chain.u, axis=0))
    assert np.all(np.abs(np.mean(ens.u - chain.u, axis=0)) < 3 * sd / np.sqrt(n) + 1e-15)
    active = omega > 0
    assert active.sum() == 3
    np.testing.assert_allclose(np.var(q[:, active], axis=0), HBAR / (2 * M * omega[active]), rtol=0.05)
    np.testing.assert_allclose(np.var(p[:, active], axis=0), HBAR * M * omega[active] / 2, rtol=0.05)
    np.testing.assert_allclose(q[:, ~active], 0.0, atol=1e-12)


def test_sampling_is_deterministic(chain):
    a, b = sample_wigner(chain, 5, seed=3), sample_wigner(chain, 5, seed=3)
    np.testing.assert_array_equal(a.u, b.u)
    np.testing.assert_array_equal(a.p, b.p)


def test_laser_envelope():
    pulse = LaserPulse(4.08, 8.7e-3, t_on=300.0, width=100.0)
    t = np.linspace(0, 600, 601)
    env = pulse.envelope(t)
    assert np.all(env >= 0) and np.all(env <= pulse.amplitude)
    assert np.all(np.diff(env[t <= 300]) >= 0)
    np.testing.assert_array_equal(env[t >= 300], pulse.amplitude)
    assert abs(pulse.field(t)).max() <= pulse.amplitude


def many_body_oracle(chain, u, initial, times):
    """Exact propagation over all 70 determinants of 8 spin-orbitals with the
    nuclei frozen at ``u``, in the reference orbital basis."""
    _, V = chain.orbitals()
    h = V.T @ hamiltonian(chain.params, u) @ V
    n = h.shape[0]
    dets = list(all_determinants(2 * n, 4))
    index = {d: k for k, d in enumerate(dets)}
    H = np.zeros((len(dets), len(dets)))
    for p in range(n):
        for q in range(n):
            for s in (0, n):
                op = OperatorString.normal_ordered((p + s,), (q + s,))
                for b, ket in enumerate(dets):
                    for a, bra in enumerate(dets):
                        if h[p, q] != 0:
                            H[a, b] += h[p, q] * matrix_element(bra, op, ket)
    psi0 = np.zeros(len(dets), dtype=complex)
    for d, c in zip(initial.dets, initial.amplitudes):
        psi0[index[d]] = c
    out = []
    for t in times:
        psi = expm(-1j * H * t / HBAR) @ psi0
        out.append(DensityMatrixExpansion(dets, np.outer(psi, psi.conj())))
    return out


def test_projection_matches_many_body_oracle(chain):
    frozen = with_parameters(chain, mass=1e15)
    rng = np.random.default_rng(0)
    u = chain.u + rng.normal(scale=0.05, size=(2, 4))
    ens = TrajectoryEnsemble(frozen, u, np.zeros_like(u), np.zeros(4), np.eye(4))
    init = type1_state()
    res = propagate(ens, init, t_final=4.0, dt=0.01, output_every=2.0, n_bootstrap=0)
    for k, t in enumerate(res.times):
        rhos = [many_body_oracle(chain, u[j], init, [t])[0] for j in range(2)]
        avg = DensityMatrixExpansion(rhos[0].dets, 0.5 * (rhos[0].coeffs + rhos[1].coeffs))
        assert res.P1[k] == pytest.approx(purity_trace(build_rdm(avg, 1)), abs=1e-8)
        assert res.P2[k] == pytest.approx(purity_trace(build_rdm(avg, 2)), abs=1e-8)
        np.testing.assert_allclose(res.rdm1[k], build_rdm(avg, 1).matrix(), atol=1e-8)


def test_one_body_density_of_type2(chain):
    _, V = chain.orbitals()
    g = one_body_density(type2_state(), V)
    assert np.trace(g).real == pytest.approx(4.0)
    g_mo = V.T @ g @ V
    np.testing.assert_allclose(np.diag(g_mo).real, [2, 1.5, 0.5, 0], atol=1e-12)


def test_energy_conservation_and_trace(chain):
    ens = sample_wigner(chain, 8, seed=2)
    res = propagate(ens, type1_state(), t_final=500.0, dt=0.01, output_every=50.0, n_bootstrap=0)
    assert res.energy_drift < 1e-4
    assert res.max_orthonormality_error < 1e-9
    np.testing.assert_allclose(res.orbital_populations.sum(axis=1), 4.0, atol=1e-8)


def test_energy_drift_warning(chain):
    ens = sample_wigner(chain, 4, seed=2, width_scale=3.0)
    with pytest.warns(UserWarning, match="energy drift"):
        propagate(ens, type1_state(), t_final=100.0, dt=2.0, output_every=10.0, n_bootstrap=0)


def test_time_reversal(chain):
    ens = sample_wigner(chain, 4, seed=5)
    prop = EhrenfestPropagator(chain.params)
    _, V = chain.orbitals()
    g0 = one_body_density(type1_state(), V)
    end = prop.run(ens.u, ens.p, g0, t_final=100.0, dt=0.01)
    back = prop.run(end.u, -end.p, np.conj(end.gamma), t_final=100.0, dt=0.01)
    np.testing.assert_allclose(back.u, ens.u, atol=1e-6)
    np.testing.assert_allclose(-back.p, ens.p, atol=1e-6)


def test_single_trajectory_stays_pure(chain):
    ens = sample_wigner(chain, 1, seed=9)
    res = propagate(ens, ground_state(), LaserPulse(4.15, 5e-2, 20.0, 5.0), t_final=60.0, dt=0.01,
                    output_every=10.0, n_bootstrap=0)
    np.testing.assert_allclose(res.P1, 4.0, atol=1e-9)
    np.testing.assert_allclose(res.P2, 6.0, atol=1e-9)


def test_ground_state_is_stationary(chain):
    ens = sample_wigner(chain, 20, seed=1)
    res = propagate(ens, ground_state(), t_final=100.0, dt=0.01, output_every=20.0, n_bootstrap=20, seed=1)
    np.testing.assert_allclose(res.orbital_populations - res.orbital_populations[0], 0.0, atol=0.02)
    np.testing.assert_allclose(res.P1, 4.0, atol=0.05)


def test_zero_field_is_flat(chain):
    ens = sample_wigner(chain, 1, seed=0, width_scale=0.0)
    res = propagate(ens, ground_state(), LaserPulse(4.15, 0.0), t_final=50.0, dt=0.01,
                    output_every=10.0, n_bootstrap=0)
    np.testing.assert_allclose(res.orbital_populations - res.orbital_populations[0], 0.0, atol=1e-12)
    np.testing.assert_allclose(res.P2, 6.0, atol=1e-12)


def test_type2_initial_values(chain):
    ens = sample_wigner(chain, 30, seed=4)
    res = propagate(ens, type2_state(), t_final=60.0, dt=0.01, output_every=20.0, n_bootstrap=20, seed=4)
    assert res.P1[0] == pytest.approx(3.25)
    assert res.P2[0] == pytest.approx(4.5)
    assert np.all(np.abs(res.P1 - 3.25) < 0.05)
    assert res.P2[-1] < 4.3
    assert np.all(res.P2_stderr[1:] > 0)


def test_threads_and_chunks_do_not_change_results(chain):
    ens = sample_wigner(chain, 12, seed=6)
    kw = dict(t_final=20.0, dt=0.01, output_every=10.0, n_bootstrap=10, seed=6)
    a = propagate(ens, type1_state(), **kw)
    b = propagate(ens, type1_state(), chunk_size=5, threads=2, **kw)
    np.testing.assert_array_equal(a.P1, b.P1)
    np.testing.assert_array_equal(a.P2_stderr, b.P2_stderr)


def test_initial_state_shape_checked(chain):
    ens = sample_wigner(chain, 1, seed=0)
    from reduced_purities.densmat import PureState
    from reduced_purities.fock import SlaterDeterminant
    with pytest.raises(ValueError):
        propagate(ens, PureState((SlaterDeterminant.from_string("111000"),), np.ones(1)), t_final=1.0)
