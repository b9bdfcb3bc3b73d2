import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbound import (Domain, DomainError, Povm, affine_model, basis_povm,
                    bloch_state, born_distribution, builtin_model,
                    check_density_matrix, embedding_loss_scale, fidelity,
                    fidelity_embedding, model_from_spec, model_to_spec,
                    pauli_basis_povm)
from qbound.linalg import PAULI_Z, haar_unitary, random_hermitian

from conftest import fd_jacobian, interior_points


class TestBlochState:
    def test_center_is_maximally_mixed(self):
        assert np.allclose(bloch_state([0, 0, 0]), 0.5 * np.eye(2))

    def test_north_pole_is_pure(self):
        assert np.allclose(bloch_state([0, 0, 1]), np.diag([1.0, 0.0]))

    def test_x_axis_point(self):
        # substituting theta = (1,0,0) into the Pauli expansion
        assert np.allclose(bloch_state([1, 0, 0]), 0.5 * np.ones((2, 2)))

    def test_outside_ball_rejected(self):
        with pytest.raises(DomainError):
            bloch_state([0.8, 0.8, 0.8])

    def test_valid_density_matrix_on_random_points(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.normal(size=3)
            x *= rng.random() / np.linalg.norm(x)
            check_density_matrix(bloch_state(x))


class TestPovm:
    def test_elements_must_sum_to_identity(self):
        proj = np.diag([1.0, 0.0])
        with pytest.raises(ValueError):
            Povm((proj, 0.5 * np.diag([0.0, 1.0])))

    def test_elements_must_be_psd(self):
        with pytest.raises(ValueError):
            Povm((np.diag([1.5, 0.0]), np.diag([-0.5, 1.0])))

    def test_basis_povm_is_valid(self):
        rng = np.random.default_rng(1)
        for d in (2, 3, 4):
            m = basis_povm(haar_unitary(d, rng))
            assert len(m) == d
            assert m.dim == d


class TestBornDistribution:
    def test_eigenstate_measurement(self):
        p = born_distribution(np.diag([1.0, 0.0]), pauli_basis_povm(2))
        assert np.allclose(p, [1.0, 0.0])

    def test_maximally_mixed_any_basis(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            p = born_distribution(0.5 * np.eye(2), basis_povm(haar_unitary(2, rng)))
            assert np.allclose(p, [0.5, 0.5])

    def test_pure_state_overlap_rule(self):
        # Pr(outcome = x) = |<psi_x|phi>|^2
        rng = np.random.default_rng(3)
        for _ in range(10):
            phi = rng.normal(size=3) + 1j * rng.normal(size=3)
            phi /= np.linalg.norm(phi)
            u = haar_unitary(3, rng)
            p = born_distribution(np.outer(phi, phi.conj()), basis_povm(u))
            assert np.allclose(p, np.abs(u.conj().T @ phi) ** 2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            born_distribution(np.eye(3) / 3, pauli_basis_povm(0))

    @given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_sums_to_one(self, vec, seed):
        theta = np.array(vec)
        n = np.linalg.norm(theta)
        if n > 1.0:
            theta /= n * (1 + 1e-9)
        rng = np.random.default_rng(seed)
        p = born_distribution(bloch_state(theta), basis_povm(haar_unitary(2, rng)))
        assert np.all(p >= 0.0)
        assert abs(p.sum() - 1.0) < 1e-9


class TestFidelity:
    def test_identical_states(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            rho = bloch_state(0.7 * rng.uniform(-0.57, 0.57, 3))
            assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_pure_states(self):
        assert fidelity(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(0.0, abs=1e-12)

    def test_bloch_closed_form(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a, b = (rng.uniform(-0.57, 0.57, 3) for _ in range(2))
            expected = 0.5 * (1 + a @ b + np.sqrt(1 - a @ a) * np.sqrt(1 - b @ b))
            assert fidelity(bloch_state(a), bloch_state(b)) == pytest.approx(expected, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            a, b = (bloch_state(rng.uniform(-0.5, 0.5, 3)) for _ in range(2))
            assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-9)

    def test_invalid_state_signals_numerical_failure(self):
        good = np.diag([0.5, 0.3, 0.2]).astype(complex)
        bad = np.diag([0.6, 0.5, -0.1]).astype(complex)  # not PSD
        with pytest.raises(ValueError):
            fidelity(bad, good)

    def test_monotone_under_measurement(self):
        # Fid(rho_hat, rho) <= squared Hellinger affinity of any outcome law
        rng = np.random.default_rng(7)
        pairs = [(bloch_state(rng.uniform(-0.5, 0.5, 3)),
                  bloch_state(rng.uniform(-0.5, 0.5, 3))) for _ in range(50)]
        for a, b in pairs:
            fid = fidelity(a, b)
            for _ in range(4):
                m = basis_povm(haar_unitary(2, rng))
                pa, pb = born_distribution(a, m), born_distribution(b, m)
                affinity = float(np.sum(np.sqrt(pa * pb)) ** 2)
                assert fid <= affinity + 1e-9


class TestDerivatives:
    def test_traceless_and_fd_consistent(self, all_models):
        rng = np.random.default_rng(8)
        for name, model in all_models.items():
            for theta in interior_points(model, 100, rng, radius=0.8):
                check_density_matrix(model.state(theta))
                derivs = model.derivs(theta)
                for i, dr in enumerate(derivs):
                    assert abs(np.trace(dr)) < 1e-9
                    e = np.zeros(model.num_params)
                    e[i] = 1e-5
                    fd = (model.state(theta + e) - model.state(theta - e)) / 2e-5
                    assert np.max(np.abs(fd - dr)) < 1e-6 * max(1.0, np.max(np.abs(dr)))


class TestFidelityEmbedding:
    def test_bloch_center(self, all_models):
        psi, _ = fidelity_embedding(all_models["bloch_full"], [0, 0, 0])
        assert np.allclose(psi, [0, 0, 0, 1])

    def test_unit_length_bloch(self, all_models):
        rng = np.random.default_rng(9)
        for theta in interior_points(all_models["bloch_full"], 20, rng, radius=0.9):
            psi, _ = fidelity_embedding(all_models["bloch_full"], theta)
            assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("name", ["bloch_full", "bloch_equatorial",
                                      "pure_qubit", "pure_dim_3"])
    def test_quadratic_identity_exact(self, all_models, name):
        model = all_models[name]
        scale = embedding_loss_scale(model)
        rng = np.random.default_rng(10)
        for _ in range(20):
            a, b = interior_points(model, 2, rng, radius=0.7)
            pa, _ = fidelity_embedding(model, a)
            pb, _ = fidelity_embedding(model, b)
            deficit = 1.0 - fidelity(model.state(a), model.state(b))
            assert deficit == pytest.approx(scale * np.sum((pa - pb) ** 2), abs=1e-10)

    def test_jacobian_matches_fd(self, all_models):
        rng = np.random.default_rng(11)
        for model in all_models.values():
            for theta in interior_points(model, 5, rng):
                _, jac = fidelity_embedding(model, theta)
                fd = fd_jacobian(lambda t: fidelity_embedding(model, t)[0], theta)
                assert np.max(np.abs(jac - fd)) < 1e-6

    def test_unsupported_family(self):
        model = affine_model(0.5 * np.eye(2), [0.5 * PAULI_Z])
        with pytest.raises(ValueError):
            fidelity_embedding(model, [0.2])


class TestModelSpec:
    def test_builtin_roundtrip(self, all_models):
        for model in all_models.values():
            again = model_from_spec(model_to_spec(model))
            assert again.family == model.family
            assert again.num_params == model.num_params

    def test_affine_roundtrip(self, tmp_path):
        model = affine_model(0.5 * np.eye(2), [0.5 * PAULI_Z],
                             Domain("ball", radius=0.9, dim=1))
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(model_to_spec(model)))
        again = model_from_spec(str(path))
        theta = [0.3]
        assert np.allclose(again.state(theta), model.state(theta))

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            model_from_spec({"family": "bloch_full", "extra": 1})

    def test_non_traceless_basis_rejected(self):
        spec = model_to_spec(affine_model(0.5 * np.eye(2), [0.5 * PAULI_Z]))
        spec["basis"][0][0][0] = [0.7, 0.0]  # puts trace on the basis matrix
        with pytest.raises(ValueError, match="traceless"):
            model_from_spec(spec)

    def test_invalid_rho0_rejected(self):
        rng = np.random.default_rng(12)
        bad = random_hermitian(2, rng)  # not a state
        with pytest.raises(ValueError):
            affine_model(bad, [0.5 * PAULI_Z])

    def test_pure_dim_requires_dim(self):
        with pytest.raises(ValueError):
            builtin_model("pure_dim_d")
