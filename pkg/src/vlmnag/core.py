"""Shared domain types: objectives, step-size schedules, coefficients and trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Vector = np.ndarray


@dataclass(frozen=True)
class ObjectiveSpec:
    """A smooth convex objective with its gradient and smoothness constant.

    ``f_star``/``x_star`` are filled in when the optimum is known (or has been
    pre-solved to high accuracy); ``x0`` is the problem's default starting point.
    """

    dim: int
    value: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    lipschitz_L: float
    f_star: Optional[float] = None
    x_star: Optional[Vector] = None
    name: str = "objective"
    x0: Optional[Vector] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if not (self.lipschitz_L > 0 and math.isfinite(self.lipschitz_L)):
            raise ValueError(f"lipschitz_L must be positive and finite, got {self.lipschitz_L}")

    def gap(self, fx: float) -> float:
        """Optimality gap if the optimum is known, otherwise the raw value."""
        return fx - self.f_star if self.f_star is not None else fx

    def translated(self, shift: Vector) -> "ObjectiveSpec":
        """Objective ``x -> f(x - shift)``; used to check translation covariance."""
        shift = np.asarray(shift, dtype=float)
        return ObjectiveSpec(
            dim=self.dim,
            value=lambda x: self.value(x - shift),
            gradient=lambda x: self.gradient(x - shift),
            lipschitz_L=self.lipschitz_L,
            f_star=self.f_star,
            x_star=None if self.x_star is None else self.x_star + shift,
            name=f"{self.name}+shift",
            x0=None if self.x0 is None else self.x0 + shift,
        )


def check_gradient(obj: ObjectiveSpec, x: Vector, rng: np.random.Generator,
                   rtol: float = 1e-5, n_directions: int = 3) -> float:
    """Compare directional central differences of ``value`` with ``gradient``.

    Returns the worst error relative to ``max(|g.u|, 1e-3 * ||g||, 1e-12)`` and
    raises ``AssertionError`` if it exceeds ``rtol``. The finite-difference step
    is scaled by the norm of ``x``.
    """
    x = np.asarray(x, dtype=float)
    g = obj.gradient(x)
    eps = 1e-6 * (1.0 + np.linalg.norm(x))
    worst = 0.0
    for _ in range(n_directions):
        u = rng.standard_normal(obj.dim)
        u /= np.linalg.norm(u)
        fd = (obj.value(x + eps * u) - obj.value(x - eps * u)) / (2 * eps)
        gu = float(g @ u)
        scale = max(abs(gu), 1e-3 * np.linalg.norm(g), 1e-12)
        worst = max(worst, abs(fd - gu) / scale)
    if worst > rtol:
        raise AssertionError(f"gradient check failed for {obj.name}: relative error {worst:.3e}")
    return worst


_KINDS = ("constant", "linear", "exponential")


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``h_n`` of a variable step size method.

    constant:    h_n = h
    linear:      h_n = slope * (n + offset)
    exponential: h_n = h0 * gamma**n
    """

    kind: str
    h: float = 0.0
    slope: float = 0.0
    offset: float = 0.0
    h0: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "constant" and not self.h > 0:
            raise ValueError("constant schedule needs h > 0")
        if self.kind == "linear" and not (self.slope > 0 and self.offset > 0):
            raise ValueError("linear schedule needs slope > 0 and offset > 0")
        if self.kind == "exponential" and not (self.h0 > 0 and self.gamma > 1):
            raise ValueError("exponential schedule needs h0 > 0 and gamma > 1")

    @classmethod
    def constant(cls, h: float) -> "StepSchedule":
        return cls("constant", h=float(h))

    @classmethod
    def linear(cls, slope: float, offset: float = 3.0) -> "StepSchedule":
        return cls("linear", slope=float(slope), offset=float(offset))

    @classmethod
    def exponential(cls, h0: float, gamma: float) -> "StepSchedule":
        return cls("exponential", h0=float(h0), gamma=float(gamma))

    def step(self, n: int) -> float:
        if self.kind == "constant":
            return self.h
        if self.kind == "linear":
            return self.slope * (n + self.offset)
        return self.h0 * self.gamma ** n

    def ratio(self, n: int) -> float:
        """w_{n+1} = h_{n+1} / h_n, in closed form."""
        if self.kind == "constant":
            return 1.0
        if self.kind == "linear":
            return (n + 1 + self.offset) / (n + self.offset)
        return self.gamma

    def steps(self, n: int) -> np.ndarray:
        """h_0, ..., h_{n-1} as an array."""
        return np.array([self.step(j) for j in range(n)], dtype=float)

    def time(self, n: int) -> float:
        """t_n = sum_{j<n} h_j in closed form."""
        if self.kind == "constant":
            return self.h * n
        if self.kind == "linear":
            return self.slope * (n * (n - 1) / 2 + self.offset * n)
        return self.h0 * (self.gamma ** n - 1) / (self.gamma - 1)

    def describe(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "h": self.h}
        if self.kind == "linear":
            return {"kind": "linear", "slope": self.slope, "offset": self.offset}
        return {"kind": "exponential", "h0": self.h0, "gamma": self.gamma}


def schedule_h(s: StepSchedule, n: int) -> float:
    if n < 0:
        raise ValueError("n must be non-negative")
    return s.step(n)


def schedule_ratio(s: StepSchedule, n: int) -> float:
    if n < 0:
        raise ValueError("n must be non-negative")
    return s.ratio(n)


def mu_of(s: StepSchedule, lam: complex, n: int) -> complex:
    """Scaled step increment lam * (h_{n+1} - h_n)."""
    if s.kind == "linear":
        return lam * s.slope
    return lam * (s.step(n + 1) - s.step(n))


@dataclass(frozen=True)
class TwoStepCoefficients:
    """x_{n+2} + a x_{n+1} + b x_n = h_{n+1} (c g(x_{n+1}) - d g(x_n))."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c, self.d)):
            raise ValueError(f"non-finite coefficients {self}")


@dataclass(frozen=True)
class Record:
    n: int
    t: float
    x: Vector
    f_gap: float
    grad_norm: float
    lyapunov: Optional[float] = None
    restarted: bool = False

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)


@dataclass
class Trajectory:
    method_name: str
    schedule: dict
    seed: int = 0
    records: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: Optional[int] = None

    def append(self, rec: Record) -> None:
        if self.records:
            last = self.records[-1]
            if rec.n <= last.n:
                raise ValueError(f"record index {rec.n} does not increase past {last.n}")
            if rec.t < last.t:
                raise ValueError("accumulated time decreased")
        elif rec.n != 0:
            raise ValueError("first record must have n = 0")
        self.records.append(rec)

    def mark_diverged(self, n: int) -> None:
        self.diverged = True
        self.diverged_at = n

    def __len__(self):
        return len(self.records)

    @property
    def n(self) -> np.ndarray:
        return np.array([r.n for r in self.records])

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def f_gap(self) -> np.ndarray:
        return np.array([r.f_gap for r in self.records])

    @property
    def grad_norm(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])

    @property
    def lyapunov(self) -> np.ndarray:
        return np.array([np.nan if r.lyapunov is None else r.lyapunov for r in self.records])

    @property
    def restarted(self) -> np.ndarray:
        return np.array([r.restarted for r in self.records], dtype=bool)

    @property
    def x(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    @property
    def final_gap(self) -> float:
        return self.records[-1].f_gap


@dataclass(frozen=True)
class RunConfig:
    iterations: int
    restart: bool = False
    record_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 2:
            raise ValueError("two-step methods need iterations >= 2")
        if self.record_every < 1:
            raise ValueError("record_every must be positive")

# Applied to estimated smoothness constants before choosing a = 1/(4L).
L_SAFETY = 1.01


def safe_lipschitz(obj: ObjectiveSpec) -> float:
    return L_SAFETY * obj.lipschitz_L
