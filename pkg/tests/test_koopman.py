import math

import numpy as np
import pytest

from bifdetect.basis import build_basis
from bifdetect.dynamics import KOOPMAN
from bifdetect.errors import InvalidInputError, SpectrumIdentificationError
from bifdetect.koopman import (
    KoopmanScan,
    dmatrix,
    eigenfunction_at,
    eval_eigenfunction,
    pair_coefficients,
    scan,
    select_pair,
)
from bifdetect.sampling import OrbitDataset, generate_dataset, sample_initial
from bifdetect.systems import linear_system

BOX = ((-1.0, 1.0), (-1.0, 1.0))


@pytest.fixture(scope="module")
def case_scan(case_ds, basis5):
    return scan(case_ds, basis5, -5.0, -0.1, 491)


def fake_scan(minima_at, tau=0.1):
    lambdas = np.round(np.arange(-5.0, -0.05, 0.1), 10)
    rmse = np.ones_like(lambdas)
    idx = [int(np.argmin(np.abs(lambdas - m))) for m in minima_at]
    rmse[idx] = 0.5
    coeffs = np.tile([1.0, 0.0], (len(lambdas), 1))
    return KoopmanScan(lambdas, rmse, coeffs, tuple(idx), tau)


class TestDmatrix:
    def test_static_data_at_zero(self):
        states = np.repeat(sample_initial(BOX, 4, 0)[:, None, :], 3, axis=1)
        ds = OrbitDataset(states, (0.0,), 0.1)
        D = dmatrix(ds, build_basis(2, 3), 0.0)
        assert D.shape == (4 * 2, 9)
        assert not np.any(D)

    def test_exact_scalar_eigenfunction(self):
        ds = generate_dataset(linear_system([[-1.0]]), 0.0, [[0.4], [-0.9]], 5, 0.1, step=1e-3)
        D = dmatrix(ds, build_basis(1, 1), -1.0)
        assert D.shape == (10, 1)
        assert np.max(np.abs(D)) < 1e-12


class TestEigenfunctionAt:
    def test_first_mode(self, diag_ds):
        b = build_basis(2, 2)
        xi, rmse = eigenfunction_at(diag_ds, b, -1.0)
        assert rmse <= 1e-6
        assert b.exponents[int(np.argmax(np.abs(xi)))] == (1, 0)
        assert abs(xi[0]) == pytest.approx(1.0, abs=1e-6)

    def test_product_mode(self, diag_ds):
        b = build_basis(2, 2)
        xi, rmse = eigenfunction_at(diag_ds, b, -3.0)
        assert rmse <= 1e-6
        assert b.exponents[int(np.argmax(np.abs(xi)))] == (1, 1)

    def test_off_spectrum(self, diag_ds):
        _, rmse = eigenfunction_at(diag_ds, build_basis(2, 2), -0.37)
        assert rmse >= 1e-3

    def test_unit_norm_and_sign(self, case_ds, basis5):
        xi, rmse = eigenfunction_at(case_ds, basis5, -2.0)
        assert np.linalg.norm(xi) == pytest.approx(1.0, abs=1e-12)
        assert xi[np.argmax(np.abs(xi))] > 0
        D = dmatrix(case_ds, basis5, -2.0)
        assert rmse == pytest.approx(np.linalg.norm(D @ xi) / math.sqrt(D.shape[0]))

    def test_underdetermined_warns(self):
        ds = generate_dataset(linear_system(np.diag([-1.0, -2.0])), 0.0, [[0.5, 0.5]], 2, 0.1)
        with pytest.warns(UserWarning, match="unknowns"):
            eigenfunction_at(ds, build_basis(2, 3), -1.0)

    def test_sparse_refinement(self, diag_ds):
        b = build_basis(2, 3)
        xi, rmse = eigenfunction_at(diag_ds, b, -1.0, sparse=True)
        assert rmse <= 1e-6
        assert np.count_nonzero(xi) == 1 and xi[0] == pytest.approx(1.0)


class TestScan:
    def test_case_study_recovers_reported_pair(self, case_scan):
        lam = case_scan.minima_lambdas
        assert np.min(np.abs(lam - -3.4995)) <= 0.15
        assert np.min(np.abs(lam - -0.5970)) <= 0.15

    def test_case_study_minimum_count(self, case_scan):
        assert len(case_scan.minima) >= 3

    def test_invariants(self, case_scan):
        sc = case_scan
        assert len(sc.lambdas) == 491
        assert np.all(np.diff(sc.lambdas) > 0)
        assert np.all(sc.rmse >= 0)
        assert np.allclose(np.linalg.norm(sc.coeffs, axis=1), 1.0, atol=1e-12)
        for j in sc.minima:
            assert sc.rmse[j] < sc.rmse[j - 1] and sc.rmse[j] < sc.rmse[j + 1]

    def test_linear_spectrum(self, diag_ds):
        sc = scan(diag_ds, build_basis(2, 2), -2.5, -0.5, 201)
        step = sc.lambdas[1] - sc.lambdas[0]
        lam = sc.minima_lambdas
        assert np.min(np.abs(lam + 2.0)) <= step
        assert np.min(np.abs(lam + 1.0)) <= step

    def test_linear_true_eigenvalues_tiny(self):
        ds = generate_dataset(linear_system(np.diag([-1.0, -2.0])), 0.0,
                              sample_initial(BOX, 30, 4), 8, 0.1, step=1e-4)
        for lam in (-1.0, -2.0):
            assert eigenfunction_at(ds, build_basis(2, 3), lam)[1] <= 1e-5

    def test_refinement_stability(self, diag_ds):
        b = build_basis(2, 2)
        coarse = scan(diag_ds, b, -2.5, -0.5, 41)
        fine = scan(diag_ds, b, -2.5, -0.5, 81)
        step = coarse.lambdas[1] - coarse.lambdas[0]
        for lam in coarse.minima_lambdas:
            assert np.min(np.abs(fine.minima_lambdas - lam)) < step

    def test_bad_grid(self, diag_ds):
        b = build_basis(2, 2)
        with pytest.raises(InvalidInputError):
            scan(diag_ds, b, -1.0, -2.0, 10)
        with pytest.raises(InvalidInputError):
            scan(diag_ds, b, -2.0, -1.0, 2)

    def test_csv(self, tmp_path, diag_ds):
        sc = scan(diag_ds, build_basis(2, 2), -2.5, -0.5, 21)
        sc.to_csv(tmp_path / "scan.csv")
        lines = (tmp_path / "scan.csv").read_text().splitlines()
        assert lines[0] == "lambda,rmse,is_min"
        assert len(lines) == 22
        flagged = [i - 1 for i, l in enumerate(lines[1:], 1) if l.endswith(",1")]
        assert flagged == list(sc.minima)


class TestSelectPair:
    def test_end_selection(self):
        tgt = select_pair(fake_scan([-3.5, -2.1, -1.4, -0.6]))
        assert np.allclose(np.diag(tgt.A), [-3.5, -0.6])
        assert tgt.provenance == KOOPMAN
        assert np.allclose(tgt.Abar, np.diag(np.exp(0.1 * np.array([-3.5, -0.6]))))

    def test_two_minima(self):
        assert np.allclose(np.diag(select_pair(fake_scan([-2.0, -1.0])).A), [-2.0, -1.0])

    def test_single_minimum(self):
        with pytest.raises(SpectrumIdentificationError):
            select_pair(fake_scan([-2.0]))
        with pytest.raises(SpectrumIdentificationError):
            pair_coefficients(fake_scan([-2.0]))


class TestEigenfunctionGrid:
    def test_coordinate_function(self):
        b = build_basis(2, 3)
        xi = np.zeros(b.N)
        xi[0] = 1.0
        xs, ys = np.linspace(-1, 1, 5), np.linspace(-1, 1, 7)
        g = eval_eigenfunction(xi, b, xs, ys)
        assert g.values.shape == (5, 7)
        assert np.array_equal(g.values, np.repeat(xs[:, None], 7, axis=1))

    def test_origin_is_zero(self):
        b = build_basis(2, 4)
        xi = np.random.default_rng(0).standard_normal(b.N)
        g = eval_eigenfunction(xi, b, np.linspace(-1, 1, 11), np.linspace(-1, 1, 11))
        assert g.values[5, 5] == 0.0

    def test_planar_only(self):
        with pytest.raises(InvalidInputError):
            eval_eigenfunction(np.ones(3), build_basis(3, 1), [0.0], [0.0])

    def test_csv(self, tmp_path):
        b = build_basis(2, 1)
        g = eval_eigenfunction([0.0, 1.0], b, [0.0, 1.0], [2.0, 3.0])
        g.to_csv(tmp_path / "g.csv")
        assert (tmp_path / "g.csv").read_text().splitlines() == [
            "x1,x2,psi", "0.0,2.0,2.0", "0.0,3.0,3.0", "1.0,2.0,2.0", "1.0,3.0,3.0"]

    def test_held_out_decay(self, pitchfork, case_scan, basis5):
        j = case_scan.minima[0]
        lam, xi = case_scan.lambdas[j], case_scan.coeffs[j]
        held = generate_dataset(pitchfork, -4.0, sample_initial(BOX, 50, 123), 10, 0.1)
        psi = basis5.eval(held.states) @ xi
        away = np.abs(psi[:, :-1]) > 0.05 * np.abs(psi).max()
        ratio = psi[:, 1:][away] / psi[:, :-1][away]
        assert away.sum() > 20
        assert np.max(np.abs(ratio / math.exp(lam * 0.1) - 1.0)) <= 0.05
