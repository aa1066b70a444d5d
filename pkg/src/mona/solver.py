"""Fixed-step implicit Euler / trapezoidal integration of ``F(t, x, x') = 0``
and the shuffle-algorithm index oracle for linear pencils."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np
import scipy.linalg

from .formulations import ImplicitDAE, check_consistency
from .topology import RANK_TOL, null_space_dim

IMPLICIT_EULER = "implicit_euler"
TRAPEZOIDAL = "trapezoidal"
SCHEME_ALIASES = {"ie": IMPLICIT_EULER, "tr": TRAPEZOIDAL,
                  IMPLICIT_EULER: IMPLICIT_EULER, TRAPEZOIDAL: TRAPEZOIDAL}


class NewtonError(RuntimeError):
    """Newton iteration failed; carries the last iterate and its residual norm."""

    def __init__(self, message: str, x: np.ndarray, residual_norm: float, iterations: int):
        self.x = x
        self.residual_norm = residual_norm
        self.iterations = iterations
        super().__init__(f"{message} (|F| = {residual_norm:.3e} after {iterations} iterations)")


class MaxIterationsError(NewtonError):
    pass


class SingularJacobianError(NewtonError):
    pass


class SimulationError(RuntimeError):
    """A time step failed; ``trajectory`` holds the steps accepted so far."""

    def __init__(self, message: str, step: int, t: float, trajectory: "Trajectory"):
        self.step = step
        self.t = t
        self.trajectory = trajectory
        super().__init__(message)


class SingularPencilError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = TRAPEZOIDAL
    dt: float = 0.1
    t_end: float = 1.0
    t0: float = 0.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    startup_ie_steps: int = 0
    strict: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEME_ALIASES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "scheme", SCHEME_ALIASES[self.scheme])
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")
        if not (self.newton_tol > 0 and self.newton_max_iter > 0):
            raise ValueError("Newton tolerance and iteration limit must be positive")
        if self.startup_ie_steps < 0:
            raise ValueError("startup_ie_steps must be >= 0")

    @property
    def n_steps(self) -> int:
        return math.ceil((self.t_end - self.t0) / self.dt - 1e-9)


@dataclass
class Trajectory:
    dae: ImplicitDAE
    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    newton_iterations: np.ndarray
    step_schemes: Tuple[str, ...]
    flags: List[str] = field(default_factory=list)
    aborted_at: float | None = None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def column(self, label: str) -> np.ndarray:
        return self.x[:, self.dae.labels.index(label)]


def newton_solve(F: Callable, J: Callable, x_guess, tol: float = 1e-10,
                 max_iter: int = 50) -> Tuple[np.ndarray, int]:
    """Undamped Newton iteration until ``|F(x)|_inf <= tol (1 + |x|_inf)``.

    Returns the solution and the number of Newton updates performed.
    """
    x = np.array(x_guess, dtype=float)
    r = F(x)
    for k in range(max_iter + 1):
        rn = float(np.linalg.norm(r, np.inf))
        if rn <= tol * (1.0 + np.linalg.norm(x, np.inf)):
            return x, k
        if k == max_iter:
            break
        Jk = J(x)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu = scipy.linalg.lu_factor(Jk, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularJacobianError(f"Jacobian factorisation failed: {exc}", x, rn, k) from None
        diag = np.abs(np.diag(lu[0]))
        if diag.size and diag.min() <= np.finfo(float).eps * max(diag.max(), 1.0) * Jk.shape[0]:
            raise SingularJacobianError("singular Jacobian", x, rn, k)
        x = x - scipy.linalg.lu_solve(lu, r)
        r = F(x)
    raise MaxIterationsError("Newton iteration did not converge", x, rn, max_iter)


def step(dae: ImplicitDAE, scheme: str, t_n: float, x_n, xdot_n, tau: float,
         tol: float = 1e-10, max_iter: int = 50) -> Tuple[np.ndarray, np.ndarray, int]:
    """Advance one step; returns ``(x_next, xdot_next, newton_iterations)``.

    Implicit Euler uses ``x' = (x - x_n)/tau``; the trapezoidal rule uses
    ``x' = (2/tau)(x - x_n) - x_n'``. In both cases ``F(t_n + tau, x, x') = 0``
    is solved for ``x``. Newton starts from whichever of ``x_n`` and the
    explicit predictor ``x_n + tau x_n'`` has the smaller residual. The
    predictor makes the trial derivative equal ``x_n'``, which matters when a
    stiff exponential acts on derivative unknowns.
    """
    scheme = SCHEME_ALIASES[scheme]
    x_n = np.asarray(x_n, dtype=float)
    t1 = t_n + tau
    if scheme == IMPLICIT_EULER:
        a, base = 1.0 / tau, x_n / tau
    else:
        a, base = 2.0 / tau, 2.0 / tau * x_n + np.asarray(xdot_n, dtype=float)
    xdot_n = np.asarray(xdot_n, dtype=float)

    def F(x):
        return dae.residual(t1, x, a * x - base)

    def J(x):
        Jx, Jd = dae.jacobians(t1, x, a * x - base)
        return Jx + a * Jd

    guess = x_n
    predicted = x_n + tau * xdot_n
    if np.all(np.isfinite(predicted)):
        with np.errstate(all="ignore"):
            r_pred = np.linalg.norm(F(predicted), np.inf)
            r_hold = np.linalg.norm(F(x_n), np.inf)
        if r_pred < r_hold:
            guess = predicted
    x1, iters = newton_solve(F, J, guess, tol, max_iter)
    return x1, a * x1 - base, iters


def simulate(dae: ImplicitDAE, config: IntegratorConfig, x0=None, xdot0=None) -> Trajectory:
    """Integrate on the uniform grid ``t0 + n*dt``, ``n = 0..ceil((t_end-t0)/dt)``.

    Without ``xdot0`` the initial derivative comes from :func:`check_consistency`;
    an inconsistent start only triggers a warning. The first
    ``config.startup_ie_steps`` steps use implicit Euler.
    """
    x0 = np.zeros(dae.size) if x0 is None else np.asarray(x0, dtype=float)
    flags: List[str] = []
    if xdot0 is None:
        cons = check_consistency(dae, config.t0, x0)
        xdot0 = cons.xdot0
        if not cons.consistent:
            flags.append(f"inconsistent initial value (|F| = {cons.residual_norm:.3e})")
            warnings.warn(flags[-1], stacklevel=2)
    N = config.n_steps
    t = config.t0 + config.dt * np.arange(N + 1)
    X = np.zeros((N + 1, dae.size))
    XD = np.zeros((N + 1, dae.size))
    iters = np.zeros(N, dtype=int)
    schemes: List[str] = []
    X[0], XD[0] = x0, xdot0

    def partial(n, message):
        traj = Trajectory(dae, t[:n + 1].copy(), X[:n + 1].copy(), XD[:n + 1].copy(),
                          iters[:n].copy(), tuple(schemes), flags, aborted_at=float(t[n + 1]))
        return SimulationError(message, n, float(t[n + 1]), traj)

    for n in range(N):
        scheme = IMPLICIT_EULER if n < config.startup_ie_steps else config.scheme
        try:
            X[n + 1], XD[n + 1], iters[n] = step(dae, scheme, t[n], X[n], XD[n], config.dt,
                                                 config.newton_tol, config.newton_max_iter)
        except (NewtonError, ArithmeticError, np.linalg.LinAlgError) as exc:
            err = partial(n, f"step {n + 1} (t = {t[n + 1]:.6g}) failed: {exc}")
            flags.append(str(err))
            if config.strict:
                raise err from exc
            return err.trajectory
        schemes.append(scheme)
        if dae.models.has_diodes and dae.models.clamped(dae.resistive_voltages(X[n + 1], XD[n + 1])):
            err = partial(n, f"diode exponent clamp active at converged solution, t = {t[n + 1]:.6g}")
            flags.append(str(err))
            if config.strict:
                raise err
            return err.trajectory
    return Trajectory(dae, t, X, XD, iters, tuple(schemes), flags)


def numerical_index(E, A, tol: float = RANK_TOL) -> int:
    """Differentiation index of ``E x' + A x = b`` by the shuffle algorithm.

    Each round rotates the rows so that the algebraic equations of ``E`` are
    exposed (``U^T E = [E1; 0]``), differentiates them and moves them into the
    leading matrix: ``E <- [E1; A2]``, ``A <- [A1; 0]``. The index is the number
    of rounds until ``E`` is nonsingular.
    """
    E = np.array(E, dtype=float)
    A = np.array(A, dtype=float)
    n = E.shape[0]
    if E.shape != (n, n) or A.shape != (n, n):
        raise ValueError("pencil matrices must be square and of equal size")
    for k in range(n + 2):
        dim, _ = null_space_dim(E, tol)
        if dim == 0:
            return k
        U, _, _ = np.linalg.svd(E)
        r = n - dim
        E1, A1 = (U.T @ E)[:r], (U.T @ A)[:r]
        A2 = (U.T @ A)[r:]
        E = np.vstack([E1, A2])
        A = np.vstack([A1, np.zeros_like(A2)])
    raise SingularPencilError("pencil is singular: shuffle algorithm did not terminate")
