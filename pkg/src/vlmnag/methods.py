"""Two-step variable step size methods for gradient flow, and the driver that runs them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import ObjectiveSpec, Record, RunConfig, StepSchedule, Trajectory, TwoStepCoefficients

DIVERGENCE_NORM = 1e12


class DivergenceError(ArithmeticError):
    """Raised when an iterate stops being finite."""

    def __init__(self, index: Optional[int] = None):
        self.index = index
        where = "" if index is None else f" at iterate {index}"
        super().__init__(f"iteration diverged{where}")


@dataclass(frozen=True)
class MethodSpec:
    """A two-step VLM given by its coefficient function ``(w, n) -> (a, b, c, d)``.

    ``needs_order1_start`` selects how ``x_1`` is produced: one explicit Euler
    step of size ``h_0`` when true, ``x_1 = x_0`` otherwise.
    """

    name: str
    coeff_fn: Callable[[float, int], TwoStepCoefficients]
    needs_order1_start: bool = False

    def coefficients(self, w: float, n: int) -> TwoStepCoefficients:
        return self.coeff_fn(w, n)


@dataclass(frozen=True)
class RestartPolicy:
    """Function-value restart: fires when f(x_{n+1}) > f(x_n)."""

    enabled: bool = False

    def triggered(self, f_next: float, f_curr: float) -> bool:
        return self.enabled and f_next > f_curr


def nag_c_classic_step(x, y, s, n, grad):
    """One step of Nesterov's method in its original two-sequence form."""
    if not s > 0:
        raise ValueError("s must be positive")
    y_next = x - s * grad(x)
    x_next = y_next + (n - 1) / (n + 2) * (y_next - y)
    return x_next, y_next


def _vlm_update(x_prev, x_curr, g_prev, g_curr, co: TwoStepCoefficients, h_next):
    # gradient flow: g = -grad f
    x_next = -co.a * x_curr - co.b * x_prev - h_next * co.c * g_curr
    if co.d != 0.0:
        x_next = x_next + h_next * co.d * g_prev
    return x_next


def general_vlm_step(x_prev, x_curr, co: TwoStepCoefficients, h_next: float, grad,
                     index: Optional[int] = None):
    """x_{n+2} = -a x_{n+1} - b x_n + h_{n+1} (c g(x_{n+1}) - d g(x_n)), g = -grad f."""
    if not h_next > 0:
        raise ValueError("h_next must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        g_curr = grad(x_curr)
        g_prev = grad(x_prev) if co.d != 0.0 else None
        x_next = _vlm_update(x_prev, x_curr, g_prev, g_curr, co, h_next)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError(index)
    return x_next


def nag_c_vlm_coefficients(w: float, n: int = 0) -> TwoStepCoefficients:
    if not w > 0:
        raise ValueError("step ratio must be positive")
    k = (w - 1) / w
    return TwoStepCoefficients(-(5 - 3 * w), 4 - 3 * w, k * (20 - 12 * w), k * (16 - 12 * w))


def proposed_coefficients(w: float, n: int = 0) -> TwoStepCoefficients:
    if not w > 0:
        raise ValueError("step ratio must be positive")
    b = (4 - 3 * w) ** 2
    return TwoStepCoefficients(-(1 + b), b, (w - 1) / w * (5 - 3 * w) ** 2, 0)


def gradient_descent_coefficients(w: float, n: int = 0) -> TwoStepCoefficients:
    return TwoStepCoefficients(-1.0, 0.0, 1.0, 0.0)


def two_step_adams_coefficients(w: float, n: int = 0) -> TwoStepCoefficients:
    """Explicit two-step Adams method with variable steps."""
    return TwoStepCoefficients(-1.0, 0.0, (2 + w) / 2, w / 2)


NAG_C = MethodSpec("nag_c", nag_c_vlm_coefficients)
PROPOSED = MethodSpec("proposed", proposed_coefficients)
GRADIENT_DESCENT = MethodSpec("gd", gradient_descent_coefficients, needs_order1_start=True)
ADAMS2 = MethodSpec("adams2", two_step_adams_coefficients, needs_order1_start=True)

METHODS = {m.name: m for m in (NAG_C, PROPOSED, GRADIENT_DESCENT, ADAMS2)}


def get_method(name: str) -> MethodSpec:
    try:
        return METHODS[name]
    except KeyError:
        raise KeyError(f"unknown method {name!r}; choose from {sorted(METHODS)}") from None


def _is_diverged(x, fx) -> bool:
    return not (math.isfinite(fx) and np.all(np.isfinite(x))) or np.linalg.norm(x) > DIVERGENCE_NORM


def run(method: MethodSpec, obj: ObjectiveSpec, s: StepSchedule, x0, cfg: RunConfig,
        lyapunov=None) -> Trajectory:
    """Iterate ``method`` on ``obj`` and record the trajectory.

    Records n = 0 .. cfg.iterations (every ``record_every``-th plus the last).
    With restart enabled, an increase f(x_{n+1}) > f(x_n) resets the index fed
    to the schedule and coefficients to 0 and both history slots to x_{n+1}.
    ``lyapunov`` (a :class:`~vlmnag.lyapunov.LyapunovParams`) attaches E(n) to
    each record; it needs ``obj.x_star`` and is incompatible with restart.
    """
    if lyapunov is not None:
        if obj.x_star is None:
            raise ValueError("Lyapunov monitoring needs a known x_star")
        if cfg.restart:
            raise ValueError("Lyapunov monitoring is undefined under restart")
    policy = RestartPolicy(cfg.restart)
    traj = Trajectory(method.name, s.describe(), cfg.seed)
    N = cfg.iterations

    def wanted(n):
        return n % cfg.record_every == 0 or n == N

    x_curr = np.array(x0, dtype=float)
    f_curr = obj.value(x_curr)
    g_curr = obj.gradient(x_curr)
    t = 0.0
    pending = None  # record n waits for x_{n+1} when E(n) is tracked

    def emit(n, t_n, x, f, g, restarted, x_next=None):
        nonlocal pending
        if pending is not None:
            pn, pt, px, pf, pg, pr = pending
            E = lyapunov.value(pn, px, x, obj.gap(pf), pg, obj.x_star)
            traj.append(Record(pn, pt, px, obj.gap(pf), float(np.linalg.norm(pg)), E, pr))
            pending = None
        if not wanted(n):
            return
        if lyapunov is not None:
            pending = (n, t_n, x, f, g, restarted)
        else:
            traj.append(Record(n, t_n, x, obj.gap(f), float(np.linalg.norm(g)), None, restarted))

    emit(0, t, x_curr, f_curr, g_curr, False)

    # x_1
    x_prev, g_prev = x_curr, g_curr
    t += s.step(0)
    if method.needs_order1_start:
        x_curr = x_prev + s.step(0) * -g_prev
        f_curr = obj.value(x_curr)
        if _is_diverged(x_curr, f_curr):
            traj.mark_diverged(1)
            return traj
        g_curr = obj.gradient(x_curr)
    emit(1, t, x_curr, f_curr, g_curr, False)

    k = 0
    for n in range(N - 1):
        co = method.coefficients(s.ratio(k), k)
        h_next = s.step(k + 1)
        t += h_next
        with np.errstate(over="ignore", invalid="ignore"):
            x_next = _vlm_update(x_prev, x_curr, g_prev, g_curr, co, h_next)
            f_next = obj.value(x_next) if np.all(np.isfinite(x_next)) else math.inf
        if _is_diverged(x_next, f_next):
            traj.mark_diverged(n + 2)
            break
        g_next = obj.gradient(x_next)
        restarted = policy.triggered(f_next, f_curr)
        if restarted:
            x_prev, g_prev = x_next, g_next
            k = 0
        else:
            x_prev, g_prev = x_curr, g_curr
            k += 1
        x_curr, f_curr, g_curr = x_next, f_next, g_next
        emit(n + 2, t, x_curr, f_curr, g_curr, restarted)

    if pending is not None:
        pn, pt, px, pf, pg, pr = pending
        traj.append(Record(pn, pt, px, obj.gap(pf), float(np.linalg.norm(pg)), None, pr))
    return traj


def run_nag_c_classic(obj: ObjectiveSpec, s: float, x0, iterations: int) -> np.ndarray:
    """Iterates x_0 .. x_N of the two-sequence form, indexed like :func:`run`.

    x_1 = y_1 = x_0; the step producing x_{n+1} uses momentum (n-1)/(n+2).
    """
    x = np.array(x0, dtype=float)
    xs = [x.copy(), x.copy()]
    y = x.copy()
    for n in range(1, iterations):
        x, y = nag_c_classic_step(x, y, s, n, obj.gradient)
        xs.append(x)
    return np.array(xs)
