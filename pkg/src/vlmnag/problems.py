"""Benchmark objectives, smoothness estimates and dataset loading."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigvalsh_tridiagonal, solve_banded
from scipy.optimize import minimize
from scipy.special import logsumexp as _lse

from .core import ObjectiveSpec

MAX_DENSE_DIM = 10_000


def power_iteration(matvec: Callable, dim: int, tol: float = 1e-8, seed: int = 0,
                    max_iter: int = 100_000) -> float:
    """Largest eigenvalue of a symmetric PSD operator given by ``matvec``.

    Stops when the Rayleigh quotient changes by less than ``tol`` relative.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = matvec(v)
        new = float(v @ u)
        nrm = np.linalg.norm(u)
        if nrm == 0:
            return 0.0
        v = u / nrm
        if abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    return lam


def rayleigh_quotients(matvec: Callable, dim: int, n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    for i in range(n):
        v = rng.standard_normal(dim)
        out[i] = v @ matvec(v) / (v @ v)
    return out


# ---------------------------------------------------------------- quadratics

@dataclass(frozen=True)
class QuadraticProblem:
    """f = 1/2 x^T H x with H dense, or f = sum w_i x_i^2 with diagonal weights."""

    H: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.H is None) == (self.weights is None):
            raise ValueError("give exactly one of H or weights")
        if self.H is not None:
            H = np.asarray(self.H, dtype=float)
            if H.ndim != 2 or H.shape[0] != H.shape[1] or not np.allclose(H, H.T):
                raise ValueError("H must be square and symmetric")
            if rayleigh_quotients(lambda v: H @ v, H.shape[0], 8).min() < -1e-10:
                raise ValueError("H is not positive semidefinite")
            object.__setattr__(self, "H", H)
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or len(w) == 0 or not np.all(w > 0):
                raise ValueError("weights must be a non-empty vector of positive reals")
            object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return len(self.weights) if self.H is None else self.H.shape[0]

    def objective(self, name: str = "quadratic") -> ObjectiveSpec:
        d = self.dim
        if self.H is not None:
            H = self.H
            L = power_iteration(lambda v: H @ v, d)
            value = lambda x: 0.5 * float(x @ (H @ x))
            grad = lambda x: H @ x
        else:
            w = self.weights
            L = 2 * float(w.max())
            value = lambda x: float(w @ (x * x))
            grad = lambda x: 2 * w * x
        # x* = 0, so the zero vector would be a trivial start
        return ObjectiveSpec(d, value, grad, L, 0.0, np.zeros(d), name, np.ones(d))


def hilbert_matrix(d: int) -> np.ndarray:
    i = np.arange(1, d + 1)
    return 1.0 / (i[:, None] + i[None, :] - 1)


def hilbert_quadratic(d: int) -> ObjectiveSpec:
    if d < 1:
        raise ValueError("d must be positive")
    if d > MAX_DENSE_DIM:
        raise ValueError(f"hilbert({d}) exceeds the dense size limit {MAX_DENSE_DIM}")
    return QuadraticProblem(H=hilbert_matrix(d)).objective(f"hilbert({d})")


def diag_quadratic(weights) -> ObjectiveSpec:
    w = np.asarray(weights, dtype=float)
    return QuadraticProblem(weights=w).objective(f"diag_quadratic({len(w)})")


# ----------------------------------------------------------- Cahn-Hilliard

@dataclass(frozen=True)
class CahnHilliard1D:
    """Discrete 1-D Cahn-Hilliard energy; U_1 = -1 and U_N = 1 are fixed."""

    N: int = 1001

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("N must be at least 3")

    @property
    def dx(self) -> float:
        return 1.0 / (self.N - 1)

    @property
    def dim(self) -> int:
        return self.N - 2

    def full(self, v) -> np.ndarray:
        return np.concatenate(([-1.0], v, [1.0]))

    def ramp(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.N)[1:-1]

    def energy(self, v) -> float:
        U = self.full(v)
        dx = self.dx
        dU = np.diff(U) / dx
        bulk = np.sum(U ** 4 / 4 - U ** 2 / 2) * dx
        return float(bulk + 0.5 * np.sum(dU * dU) * dx + 0.5 * (dU[0] ** 2 + dU[-1] ** 2) * dx)

    def gradient(self, v) -> np.ndarray:
        U = self.full(v)
        dx = self.dx
        diff = np.diff(U)
        g = (v ** 3 - v) * dx + (diff[:-1] - diff[1:]) / dx
        g[0] += diff[0] / dx
        g[-1] -= diff[-1] / dx
        return g

    def _quad_bands(self):
        # Hessian of the gradient-energy part (tridiagonal, constant)
        n, dx = self.dim, self.dx
        main = np.full(n, 2.0 / dx)
        main[0] += 1.0 / dx
        main[-1] += 1.0 / dx
        off = np.full(n - 1, -1.0 / dx)
        return main, off

    def lipschitz(self) -> float:
        """Top eigenvalue of the quadratic part plus the bulk curvature bound for |U| <= 1."""
        main, off = self._quad_bands()
        if len(main) == 1:
            top = main[0]
        else:
            top = eigvalsh_tridiagonal(main, off, select="i", select_range=(len(main) - 1,) * 2)[0]
        return float(top + 2 * self.dx)

    def solve(self, tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
        """Newton's method on the tridiagonal Hessian, started from the ramp."""
        main, off = self._quad_bands()
        v = self.ramp()
        for _ in range(max_iter):
            g = self.gradient(v)
            ab = np.zeros((3, self.dim))
            ab[0, 1:] = off
            ab[1] = main + (3 * v * v - 1) * self.dx
            ab[2, :-1] = off
            step = solve_banded((1, 1), ab, g)
            v = v - step
            if np.linalg.norm(step) <= tol * (1 + np.linalg.norm(v)):
                break
        return v

    def objective(self) -> ObjectiveSpec:
        x_star = self.solve()
        return ObjectiveSpec(self.dim, self.energy, self.gradient, self.lipschitz(),
                             self.energy(x_star), x_star, f"cahn_hilliard({self.N})", self.ramp())


def cahn_hilliard(N: int = 1001) -> ObjectiveSpec:
    return CahnHilliard1D(N).objective()


# ---------------------------------------------------------------- LogSumExp

def _presolve(value, grad, x0):
    res = minimize(value, x0, jac=grad, method="L-BFGS-B",
                   options={"maxiter": 20_000, "ftol": 1e-15, "gtol": 1e-12})
    return float(res.fun), np.asarray(res.x)


@dataclass(frozen=True)
class LogSumExpProblem:
    A: np.ndarray
    b: np.ndarray
    sigma: float = 10.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != len(b):
            raise ValueError("A and b disagree on the number of rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def value(self, x) -> float:
        return float(self.sigma * _lse((self.A @ x - self.b) / self.sigma))

    def gradient(self, x) -> np.ndarray:
        z = (self.A @ x - self.b) / self.sigma
        p = np.exp(z - z.max())
        return self.A.T @ (p / p.sum())

    def objective(self, presolve: bool = False) -> ObjectiveSpec:
        A = self.A
        d = A.shape[1]
        L = power_iteration(lambda v: A.T @ (A @ v), d) / self.sigma
        x0 = np.zeros(d)
        f_star = x_star = None
        if presolve:
            f_star, x_star = _presolve(self.value, self.gradient, x0)
        return ObjectiveSpec(d, self.value, self.gradient, L, f_star, x_star,
                             f"logsumexp({A.shape[0]}x{d})", x0)


def synthetic_logsumexp_data(m: int, d: int, seed: int = 0):
    """Rows a_i ~ N(0, I); b = A zeta + eps with zeta ~ N(0, 10) (variance) and eps ~ N(0, 1)."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, d))
    zeta = rng.normal(0.0, math.sqrt(10.0), d)
    return A, A @ zeta + rng.standard_normal(m)


def logsumexp(A, b, sigma: float = 10.0, presolve: bool = False) -> ObjectiveSpec:
    return LogSumExpProblem(A, b, sigma).objective(presolve)


# ----------------------------------------------------------------- logistic

@dataclass(frozen=True)
class SparseDataset:
    X: sp.csr_matrix
    y: np.ndarray

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


class DatasetParseError(ValueError):
    def __init__(self, msg, line=None, token=None):
        self.line, self.token = line, token
        where = "" if line is None else f"line {line}" + ("" if token is None else f", token {token}")
        super().__init__(f"{where}: {msg}" if where else msg)


class NonNumericTokenError(DatasetParseError):
    pass


class IndexOrderError(DatasetParseError):
    pass


class EmptyDatasetError(DatasetParseError):
    pass


def parse_sparse_lines(lines, dim: Optional[int] = None) -> SparseDataset:
    """Parse ``label idx:val idx:val ...`` lines (1-based, strictly increasing indices).

    Tokens are numbered from 1, the label being token 1. Blank lines and
    ``#`` comments are skipped.
    """
    labels, rows, cols, vals = [], [], [], []
    max_idx = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        try:
            labels.append(float(toks[0]))
        except ValueError:
            raise NonNumericTokenError(f"label {toks[0]!r} is not a number", lineno, 1) from None
        prev = 0
        r = len(labels) - 1
        for k, tok in enumerate(toks[1:], start=2):
            idx_s, sep, val_s = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise NonNumericTokenError(f"malformed feature {tok!r}", lineno, k) from None
            if idx < 1:
                raise IndexOrderError(f"index {idx} is not positive", lineno, k)
            if idx <= prev:
                raise IndexOrderError(f"index {idx} does not increase past {prev}", lineno, k)
            prev = idx
            rows.append(r)
            cols.append(idx - 1)
            vals.append(val)
        max_idx = max(max_idx, prev)
    if not labels:
        raise EmptyDatasetError("dataset has no rows")
    d = max_idx if dim is None else dim
    if d < max_idx:
        raise ValueError(f"dim {d} is smaller than the largest index {max_idx}")
    X = sp.csr_matrix((vals, (rows, cols)), shape=(len(labels), d))
    return SparseDataset(X, np.array(labels))


def parse_sparse_dataset(path, dim: Optional[int] = None) -> SparseDataset:
    with open(path) as fh:
        return parse_sparse_lines(fh, dim)


def synthetic_classification_data(m: int = 500, d: int = 50, density: float = 0.2,
                                  seed: int = 0) -> SparseDataset:
    """Linearly separable sparse data: labels are the signs of a planted model."""
    rng = np.random.default_rng(seed)
    X = sp.random(m, d, density=density, format="csr", random_state=rng,
                  data_rvs=rng.standard_normal)
    w = rng.standard_normal(d)
    y = np.sign(X @ w)
    y[y == 0] = 1.0
    return SparseDataset(X, y)


@dataclass(frozen=True)
class LogisticProblem:
    data: SparseDataset
    lam: float = 1e-10

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not np.all(np.isin(self.data.y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    def value(self, x) -> float:
        margins = self.data.y * (self.data.X @ x)
        return float(np.mean(np.logaddexp(0.0, -margins)) + self.lam * (x @ x))

    def gradient(self, x) -> np.ndarray:
        y = self.data.y
        margins = y * (self.data.X @ x)
        # d/dm log(1 + e^{-m}) = -sigmoid(-m)
        s = -y * np.exp(-np.logaddexp(0.0, margins))
        return self.data.X.T @ s / self.data.m + 2 * self.lam * x

    def objective(self, presolve: bool = False) -> ObjectiveSpec:
        X = self.data.X
        d = self.data.dim
        L = power_iteration(lambda v: X.T @ (X @ v), d) / (4 * self.data.m) + 2 * self.lam
        x0 = np.zeros(d)
        f_star = x_star = None
        if presolve:
            f_star, x_star = _presolve(self.value, self.gradient, x0)
        return ObjectiveSpec(d, self.value, self.gradient, L, f_star, x_star,
                             f"logistic({self.data.m}x{d})", x0)


def logistic(data: SparseDataset, lam: float = 1e-10, presolve: bool = False) -> ObjectiveSpec:
    return LogisticProblem(data, lam).objective(presolve)


def with_start(obj: ObjectiveSpec, x0=None, seed: Optional[int] = None) -> ObjectiveSpec:
    """Copy of ``obj`` with a new default start: explicit, or seeded Gaussian."""
    if x0 is None:
        if seed is None:
            return obj
        x0 = np.random.default_rng(seed).standard_normal(obj.dim)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (obj.dim,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({obj.dim},)")
    return ObjectiveSpec(obj.dim, obj.value, obj.gradient, obj.lipschitz_L, obj.f_star,
                         obj.x_star, obj.name, x0)
