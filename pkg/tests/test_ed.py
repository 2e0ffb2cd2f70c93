import numpy as np
import pytest

from rhflab.ed import (
    FockBasis,
    build_hamiltonian,
    evolve_exact,
    fermi_sea_modes,
    hf_mode_evolution,
    reduced_density_1,
    slater_vector,
    mean_field_gap,
    total_frequency,
)
from rhflab.grids import Dispersion

L = 2.0 * np.pi


def gauss_vhat(width=1.0, amp=1.0):
    return lambda q: amp * np.exp(-0.5 * width**2 * q**2)


class TestBasis:
    def test_lexicographic_enumeration(self):
        basis = FockBasis(4, 2, L)
        assert basis.size == 6
        assert basis.subsets[0] == (0, 1)
        assert basis.subsets[-1] == (2, 3)

    def test_cap(self):
        with pytest.raises(ValueError):
            FockBasis(40, 20, L)

    def test_bad_particle_count(self):
        with pytest.raises(ValueError):
            FockBasis(4, 5, L)


class TestHamiltonian:
    def test_free_case_diagonal(self):
        basis = FockBasis(6, 2, L)
        disp = Dispersion.relativistic(1.0)
        eps = 0.5
        h = build_hamiltonian(basis, disp, eps, lambda q: 0.0)
        dense = h.toarray()
        off = dense - np.diag(dense.diagonal())
        assert np.max(np.abs(off)) == 0.0
        sym = np.sqrt(eps**2 * basis.momenta**2 + 1.0)
        for i, subset in enumerate(basis.subsets):
            assert abs(dense[i, i].real - sum(sym[m] for m in subset)) <= 1e-12

    def test_hermitian(self):
        basis = FockBasis(8, 2, L)
        h = build_hamiltonian(basis, Dispersion.relativistic(1.0), 0.5,
                              gauss_vhat(), coupling=0.7).toarray()
        assert np.max(np.abs(h - h.conj().T)) <= 1e-12

    def test_total_momentum_block_structure(self):
        basis = FockBasis(8, 2, L)
        h = build_hamiltonian(basis, Dispersion.relativistic(1.0), 0.5,
                              gauss_vhat(), coupling=0.7).tocoo()
        for i, j, v in zip(h.row, h.col, h.data):
            if abs(v) > 1e-12:
                assert total_frequency(basis, i) == total_frequency(basis, j)


class TestSlaterVector:
    def test_unit_and_orthogonal(self):
        basis = FockBasis(6, 3, L)
        v1 = slater_vector(basis, (0, 1, 2))
        v2 = slater_vector(basis, (0, 1, 3))
        assert abs(np.linalg.norm(v1) - 1.0) <= 1e-14
        assert abs(np.vdot(v1, v2)) == 0.0

    def test_reduced_density_is_projection(self):
        basis = FockBasis(6, 3, L)
        v = slater_vector(basis, (0, 2, 4))
        gamma = reduced_density_1(v, basis)
        expected = np.zeros((6, 6))
        expected[0, 0] = expected[2, 2] = expected[4, 4] = 1.0
        assert np.max(np.abs(gamma - expected)) <= 1e-14

    def test_wrong_size_rejected(self):
        basis = FockBasis(6, 3, L)
        with pytest.raises(ValueError):
            slater_vector(basis, (0, 1))


class TestReducedDensity:
    def test_superposition_half_occupations(self):
        basis = FockBasis(6, 2, L)
        v = (slater_vector(basis, (0, 1)) + slater_vector(basis, (0, 2))) / np.sqrt(2.0)
        gamma = reduced_density_1(v, basis)
        assert abs(gamma[0, 0] - 1.0) <= 1e-14
        assert abs(gamma[1, 1] - 0.5) <= 1e-14
        assert abs(gamma[2, 2] - 0.5) <= 1e-14
        # hand computation: <a†_2 a_1> moves mode 1 -> 2, sign +1 through mode 0
        assert abs(gamma[1, 2] - 0.5) <= 1e-14

    def test_trace_rule_random_vectors(self):
        basis = FockBasis(7, 3, L)
        rng = np.random.default_rng(90)
        for _ in range(3):
            v = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
            v /= np.linalg.norm(v)
            gamma = reduced_density_1(v, basis)
            assert abs(np.trace(gamma).real - 3.0) <= 1e-10
            assert np.max(np.abs(gamma - gamma.conj().T)) <= 1e-12
            evals = np.linalg.eigvalsh(gamma)
            assert evals.min() >= -1e-10
            assert evals.max() <= 1.0 + 1e-10


class TestEvolveExact:
    def test_free_evolution_preserves_occupation(self):
        basis = FockBasis(8, 2, L)
        h = build_hamiltonian(basis, Dispersion.relativistic(1.0), 0.5, lambda q: 0.0)
        v0 = slater_vector(basis, (0, 1))
        v1 = evolve_exact(v0, h, 1.0, 0.5)
        g0 = reduced_density_1(v0, basis)
        g1 = reduced_density_1(v1, basis)
        assert np.max(np.abs(g1 - g0)) <= 1e-12

    def test_unitarity_and_energy(self):
        basis = FockBasis(10, 2, L)
        h = build_hamiltonian(basis, Dispersion.relativistic(1.0), 1.0,
                              gauss_vhat(), coupling=0.2)
        v0 = slater_vector(basis, fermi_sea_modes(basis, Dispersion.relativistic(1.0), 1.0))
        v1 = evolve_exact(v0, h, 1.0, 1.0)
        assert abs(np.linalg.norm(v1) - 1.0) <= 1e-9
        e0 = np.vdot(v0, h @ v0).real
        e1 = np.vdot(v1, h @ v1).real
        assert abs(e1 - e0) <= 1e-9 * max(1.0, abs(e0))

    def test_matches_dense_expm(self):
        import scipy.linalg

        basis = FockBasis(6, 2, L)
        h = build_hamiltonian(basis, Dispersion.relativistic(1.0), 1.0,
                              gauss_vhat(), coupling=0.5)
        v0 = slater_vector(basis, (0, 1))
        ref = scipy.linalg.expm(-1j * 0.8 * h.toarray()) @ v0
        out = evolve_exact(v0, h, 0.8, 1.0)
        assert np.max(np.abs(out - ref)) <= 1e-9


class TestMeanFieldGap:
    def test_zero_at_t0_and_free(self):
        basis = FockBasis(8, 2, L)
        disp = Dispersion.relativistic(1.0)
        eps = 1.0
        modes = fermi_sea_modes(basis, disp, eps)
        h = build_hamiltonian(basis, disp, eps, lambda q: 0.0)
        times = np.linspace(0.0, 1.0, 5)
        gammas = [reduced_density_1(evolve_exact(slater_vector(basis, modes), h, t, eps),
                                    basis) for t in times]
        hf_times, hf_gammas = hf_mode_evolution(basis, disp, eps, lambda q: 0.0, 0.0,
                                                modes, 1.0, 0.25)
        assert np.allclose(hf_times, times)
        gaps = mean_field_gap(gammas, hf_gammas)
        assert np.max(gaps) <= 1e-12

    def test_single_particle_hf_exact(self):
        # at N=1 the interaction annihilates the sector and the mean-field
        # direct and exchange terms cancel identically
        basis = FockBasis(8, 1, L)
        disp = Dispersion.relativistic(1.0)
        eps = 1.0
        vh = gauss_vhat()
        h = build_hamiltonian(basis, disp, eps, vh, coupling=0.5)
        modes = (0,)
        v0 = slater_vector(basis, modes)
        # superpose two modes so the evolution is nontrivial
        v0 = (v0 + slater_vector(basis, (1,))) / np.sqrt(2.0)
        gamma0 = reduced_density_1(v0, basis)
        t = 1.0
        gamma_ed = reduced_density_1(evolve_exact(v0, h, t, eps), basis)

        from rhflab.ed import ModeMeanField

        mf = ModeMeanField(basis, disp, eps, vh, 0.5)
        orb = np.zeros((1, 8), dtype=complex)
        orb[0, 0] = orb[0, 1] = 1.0 / np.sqrt(2.0)
        n_steps = 1000
        for _ in range(n_steps):
            orb = mf.step(orb, t / n_steps)
        gamma_hf = orb.T @ orb.conj()
        assert np.max(np.abs(gamma_ed - gamma_hf)) <= 1e-9

    def test_weak_coupling_gap_bounded(self):
        basis = FockBasis(10, 2, L)
        disp = Dispersion.relativistic(1.0)
        eps = 1.0
        vh = gauss_vhat()
        coupling = 0.2
        modes = fermi_sea_modes(basis, disp, eps)
        h = build_hamiltonian(basis, disp, eps, vh, coupling=coupling)
        dt, t_final = 0.02, 0.5
        times = np.arange(0.0, t_final + dt / 2, 5 * dt)
        psi = slater_vector(basis, modes)
        gammas = [reduced_density_1(psi, basis)]
        for k in range(1, len(times)):
            psi = evolve_exact(psi, h, times[k] - times[k - 1], eps)
            gammas.append(reduced_density_1(psi, basis))
        hf_times, hf_gammas = hf_mode_evolution(basis, disp, eps, vh, coupling, modes,
                                                t_final, dt, sample_every=5)
        assert np.allclose(hf_times, times)
        gaps = mean_field_gap(gammas, hf_gammas)
        assert gaps[0] == 0.0
        assert np.max(gaps) <= 0.5

    def test_mode_count_mismatch(self):
        with pytest.raises(ValueError):
            mean_field_gap([np.eye(4)], [np.eye(5)])

    def test_instance_dump(self, tmp_path):
        import json

        from rhflab.ed import dump_instance

        basis = FockBasis(6, 2, L)
        h = build_hamiltonian(basis, Dispersion.relativistic(1.0), 0.5,
                              gauss_vhat(), coupling=0.3)
        path = tmp_path / "instance.json"
        dump_instance(path, basis, h)
        data = json.loads(path.read_text())
        assert data["n_modes"] == 6
        assert len(data["states"]) == 15
        assert len(data["hamiltonian"]["rows"]) == h.nnz
        with pytest.raises(ValueError):
            dump_instance(path, FockBasis(16, 8, L))


class TestHfModeEnergy:
    def test_energy_conserved(self):
        from rhflab.ed import ModeMeanField

        basis = FockBasis(8, 2, L)
        disp = Dispersion.relativistic(1.0)
        mf = ModeMeanField(basis, disp, 1.0, gauss_vhat(), 0.4)
        orb = np.zeros((2, 8), dtype=complex)
        orb[0, 0] = 1.0
        orb[1, 1] = 1.0
        e0 = mf.energy(mf.gamma_of(orb))
        for _ in range(200):
            orb = mf.step(orb, 0.005)
        e1 = mf.energy(mf.gamma_of(orb))
        assert abs(e1 - e0) <= 1e-8 * max(1.0, abs(e0))

    def test_mean_field_hermitian(self):
        from rhflab.ed import ModeMeanField

        basis = FockBasis(8, 3, L)
        mf = ModeMeanField(basis, Dispersion.relativistic(1.0), 1.0, gauss_vhat(), 0.7)
        rng = np.random.default_rng(91)
        a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        gamma = a @ a.conj().T
        gamma /= np.trace(gamma).real / 3.0
        h = mf.mean_field(gamma)
        assert np.max(np.abs(h - h.conj().T)) <= 1e-12
