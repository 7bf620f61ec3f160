import math

import numpy as np
import pytest
from scipy.optimize import brentq

from vlmnag.core import RunConfig, StepSchedule, check_gradient
from vlmnag.methods import NAG_C, run
from vlmnag.problems import (CahnHilliard1D, EmptyDatasetError, IndexOrderError,
                             NonNumericTokenError, QuadraticProblem, SparseDataset,
                             cahn_hilliard, diag_quadratic, hilbert_matrix, hilbert_quadratic,
                             logistic, logsumexp, parse_sparse_dataset, parse_sparse_lines,
                             power_iteration, synthetic_classification_data,
                             synthetic_logsumexp_data, with_start)


@pytest.fixture(scope="module")
def suite():
    A, b = synthetic_logsumexp_data(200, 30, seed=3)
    return {
        "hilbert": hilbert_quadratic(16),
        "diag": diag_quadratic([1, 2, 3, 4, 5, 6]),
        "ch": cahn_hilliard(101),
        "lse": logsumexp(A, b, 10.0),
        "logistic": logistic(synthetic_classification_data(200, 20, seed=2), 1e-3),
    }


def sample(obj, rng):
    # Cahn-Hilliard's L bound is local to |U| <= 1
    if obj.name.startswith("cahn"):
        return rng.uniform(-1, 1, obj.dim)
    return rng.standard_normal(obj.dim)


@pytest.mark.parametrize("key", ["hilbert", "diag", "ch", "lse", "logistic"])
def test_gradients(suite, key, rng):
    obj = suite[key]
    for _ in range(20):
        check_gradient(obj, sample(obj, rng), rng, rtol=1e-5)


@pytest.mark.parametrize("key", ["hilbert", "diag", "ch", "lse", "logistic"])
def test_convexity_and_smoothness(suite, key, rng):
    obj = suite[key]
    for _ in range(100):
        x, y = sample(obj, rng), sample(obj, rng)
        fx, fy = obj.value(x), obj.value(y)
        scale = max(1.0, abs(fx), abs(fy))
        assert obj.value(0.5 * x + 0.5 * y) <= 0.5 * fx + 0.5 * fy + 1e-10 * scale
        gd = np.linalg.norm(obj.gradient(x) - obj.gradient(y))
        assert gd <= obj.lipschitz_L * np.linalg.norm(x - y) * (1 + 1e-6)


def test_power_iteration_on_known_spectrum():
    w = np.array([1.0, 5.0, 2.0])
    assert power_iteration(lambda v: w * v, 3) == pytest.approx(5.0, rel=1e-8)
    assert power_iteration(lambda v: 0 * v, 3) == 0.0


def test_hilbert_examples():
    h1 = hilbert_quadratic(1)
    assert h1.lipschitz_L == pytest.approx(1.0)
    assert h1.value(np.array([3.0])) == 4.5
    h2 = hilbert_quadratic(2)
    assert np.allclose(hilbert_matrix(2), [[1, 0.5], [0.5, 1 / 3]])
    assert h2.lipschitz_L == pytest.approx((4 + math.sqrt(13)) / 6, rel=1e-8)
    assert hilbert_quadratic(64).lipschitz_L < math.pi
    with pytest.raises(ValueError):
        hilbert_quadratic(0)
    with pytest.raises(ValueError):
        hilbert_quadratic(10**6)


def test_hilbert_ill_conditioned():
    ev = np.linalg.eigvalsh(hilbert_matrix(8))
    assert ev[-1] / ev[0] > 1e8


def test_quadratic_validation():
    with pytest.raises(ValueError):
        QuadraticProblem(H=np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        QuadraticProblem(H=-np.eye(3))
    with pytest.raises(ValueError):
        diag_quadratic([1.0, 0.0])
    with pytest.raises(ValueError):
        QuadraticProblem()


def test_diag_quadratic():
    obj = diag_quadratic([1, 2, 3, 4, 5, 6])
    assert obj.lipschitz_L == 12
    x = np.arange(1.0, 7.0)
    assert obj.value(x) == pytest.approx(np.sum(np.arange(1, 7) * x ** 2))
    iso = diag_quadratic(np.ones(5))
    tr = run(NAG_C, iso, StepSchedule.linear(1 / (4 * iso.lipschitz_L), 3), iso.x0, RunConfig(300))
    assert tr.final_gap < 1e-10


def test_cahn_hilliard_energy_matches_direct_sum():
    N = 1001
    ch = CahnHilliard1D(N)
    U = np.linspace(-1, 1, N)
    dx = 1 / (N - 1)
    total = 0.0
    for k in range(N):
        total += (U[k] ** 4 / 4 - U[k] ** 2 / 2) * dx
    for k in range(N - 1):
        total += 0.5 * ((U[k + 1] - U[k]) / dx) ** 2 * dx
    total += 0.5 * (((U[1] - U[0]) / dx) ** 2 + ((U[N - 1] - U[N - 2]) / dx) ** 2) * dx
    assert ch.energy(ch.ramp()) == pytest.approx(total, rel=1e-12)
    assert total > 0
    assert len(ch.ramp()) == 999


def test_cahn_hilliard_gradient_at_ramp(rng):
    obj = cahn_hilliard(1001)
    check_gradient(obj, obj.x0, rng, rtol=1e-5, n_directions=5)
    assert np.linalg.norm(obj.gradient(obj.x_star)) < 1e-9


def test_cahn_hilliard_single_variable():
    ch = CahnHilliard1D(3)
    g = lambda u: float(ch.gradient(np.array([u]))[0])
    root = brentq(g, -2, 2)
    obj = ch.objective()
    assert obj.x_star[0] == pytest.approx(root, abs=1e-12)
    a = 1 / (4 * obj.lipschitz_L * 1.01)
    tr = run(NAG_C, obj, StepSchedule.linear(a, 3), np.array([0.7]), RunConfig(2000))
    assert tr.x[-1][0] == pytest.approx(root, abs=1e-6)


def test_cahn_hilliard_rejects_small_grid():
    with pytest.raises(ValueError):
        CahnHilliard1D(2)


def test_logsumexp_single_row():
    obj = logsumexp(np.array([[2.0, -1.0]]), np.array([0.5]), 3.0)
    x = np.array([0.3, 0.7])
    assert obj.value(x) == pytest.approx(2 * 0.3 - 0.7 - 0.5)
    assert np.allclose(obj.gradient(x), [2.0, -1.0])


def test_logsumexp_bounds(rng):
    A, b = synthetic_logsumexp_data(50, 5, seed=1)
    for sigma in (0.5, 10.0, 1000.0):
        obj = logsumexp(A, b, sigma)
        x = rng.standard_normal(5)
        z = A @ x - b
        assert z.max() <= obj.value(x) <= z.max() + sigma * math.log(50) + 1e-9
        assert np.linalg.norm(obj.gradient(x)) <= np.linalg.norm(A, axis=1).max() + 1e-12
    with pytest.raises(ValueError):
        logsumexp(A, b, 0.0)


def test_logsumexp_desk_scale(rng):
    A, b = synthetic_logsumexp_data(1000, 100, seed=0)
    obj = logsumexp(A, b, 10.0)
    check_gradient(obj, rng.standard_normal(100), rng, rtol=1e-5)
    sv = np.linalg.norm(A, 2)
    assert obj.lipschitz_L == pytest.approx(sv ** 2 / 10, rel=1e-6)


def test_logistic_margin_zero():
    data = parse_sparse_lines(["+1 1:1"])
    obj = logistic(data, 0.0)
    assert obj.value(np.zeros(1)) == pytest.approx(math.log(2))
    assert obj.gradient(np.zeros(1)) == pytest.approx([-0.5])
    ridge = logistic(data, 0.5)
    assert ridge.gradient(np.zeros(1)) == pytest.approx([-0.5])


def test_logistic_rejects_labels():
    data = parse_sparse_lines(["0 1:1", "1 2:1"])
    with pytest.raises(ValueError):
        logistic(data)


def test_logistic_decreases_under_nag_c():
    obj = logistic(synthetic_classification_data(500, 50, seed=0), 1e-10)
    a = 1 / (4 * 1.01 * obj.lipschitz_L)
    tr = run(NAG_C, obj, StepSchedule.linear(a, 3), obj.x0, RunConfig(500))
    assert tr.f_gap[0] == pytest.approx(math.log(2))
    assert tr.final_gap < math.log(2) * 0.5


def test_logistic_hessian_psd(rng):
    obj = logistic(synthetic_classification_data(100, 10, seed=4), 1e-3)
    x = rng.standard_normal(10)
    for _ in range(20):
        v = rng.standard_normal(10)
        eps = 1e-5
        hv = (obj.gradient(x + eps * v) - obj.gradient(x - eps * v)) / (2 * eps)
        assert v @ hv >= -1e-8


def test_presolve_gives_gap(rng):
    A, b = synthetic_logsumexp_data(100, 10, seed=5)
    obj = logsumexp(A, b, 10.0, presolve=True)
    assert obj.f_star is not None
    assert obj.gap(obj.value(rng.standard_normal(10))) >= -1e-9


def test_with_start(rng):
    obj = diag_quadratic([1, 2])
    assert with_start(obj) is obj
    g = with_start(obj, seed=7)
    assert np.allclose(g.x0, np.random.default_rng(7).standard_normal(2))
    assert np.allclose(with_start(obj, [3.0, 4.0]).x0, [3, 4])
    with pytest.raises(ValueError):
        with_start(obj, [1.0])


# ------------------------------------------------------------------- parser

def test_parse_line_examples():
    ds = parse_sparse_lines(["+1 3:0.5 7:1.0", "-1"])
    assert list(ds.y) == [1.0, -1.0]
    assert ds.dim == 7
    row = ds.X.getrow(0)
    assert sorted(zip(row.indices, row.data)) == [(2, 0.5), (6, 1.0)]
    assert ds.X.getrow(1).nnz == 0


def test_parse_errors_have_locations():
    with pytest.raises(NonNumericTokenError) as e:
        parse_sparse_lines(["+1 1:2", "+1 5:abc"])
    assert (e.value.line, e.value.token) == (2, 2)
    with pytest.raises(NonNumericTokenError) as e:
        parse_sparse_lines(["yes 1:2"])
    assert (e.value.line, e.value.token) == (1, 1)
    with pytest.raises(NonNumericTokenError):
        parse_sparse_lines(["+1 4"])
    with pytest.raises(IndexOrderError) as e:
        parse_sparse_lines(["+1 3:1 3:2"])
    assert e.value.token == 3
    with pytest.raises(IndexOrderError):
        parse_sparse_lines(["+1 0:1"])
    with pytest.raises(EmptyDatasetError):
        parse_sparse_lines(["", "# only a comment"])


def test_parse_file(tmp_path):
    p = tmp_path / "data.txt"
    p.write_text("+1 1:0.5 2:1\n\n-1 2:3 # trailing comment\n")
    ds = parse_sparse_dataset(p)
    assert isinstance(ds, SparseDataset)
    assert ds.m == 2 and ds.dim == 2
    assert ds.X.toarray().tolist() == [[0.5, 1.0], [0.0, 3.0]]
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(EmptyDatasetError):
        parse_sparse_dataset(empty)
    with pytest.raises(ValueError):
        parse_sparse_dataset(p, dim=1)
