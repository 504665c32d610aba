"""Fixed-step time integration of full and reduced structured systems.

One implicit-midpoint core drives everything: the state equation of every
supported structure is linear in the state for a given input signal, so each
step is a single linear solve

    (E - h/2 * A_eff(t_mid)) x_{k+1} = (E + h/2 * A_eff(t_mid)) x_k + h g(t_mid),

which is A-stable and second order.  Supported structures:

* first order:   E xdot = A x + sum_j u_j N_j x + B u
* constant delay: E xdot = A x + A_tau x(t - tau) + sum_j u_j N_j x + B u,
  integrated by the method of steps with stored grid history (the grid must
  align with the lag, so no history interpolation enters the error).
* second order:  M xddot + D xdot + K x = Bu u + sum_j (Np_j x + Nv_j xdot) u_j,
  integrated in companion form on (x, xdot).

The delayed state at a step midpoint is the mean of its two neighboring
stored grid values, which keeps the scheme second order.  Reduced systems
run through the identical code path; non-realified (complex) reduced
matrices are integrated in complex arithmetic.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .matfun import SingularMatrixError, dense

__all__ = [
    "SimProblem",
    "SimResult",
    "simulate",
    "simulate_first_order",
    "simulate_delay",
    "simulate_second_order",
    "parse_signal",
    "first_order_realization",
]

# steps sharing identical input samples reuse one factorization
_FACTOR_CACHE_LIMIT = 16


@dataclass
class SimProblem:
    """One fixed-step simulation task.

    `u` maps time to the m input values (scalar-returning callables are
    accepted for single-input systems).  For delay systems `history` maps
    times in [t0 - tau, t0] to states and defaults to zero.
    """

    system: object
    mu: tuple
    u: callable
    t0: float = 0.0
    tf: float = 1.0
    h: float = 1e-2
    x0: np.ndarray | None = None
    history: callable = None
    store_state: bool = False

    def __post_init__(self):
        self.mu = tuple(float(v) for v in self.mu)
        if self.h <= 0:
            raise ValueError("step size must be positive")
        if self.tf <= self.t0:
            raise ValueError("final time must exceed initial time")

    def input_at(self, t, m):
        val = np.atleast_1d(np.asarray(self.u(t), dtype=float))
        if val.size != m:
            raise ValueError(f"input signal returned {val.size} values, system has m={m}")
        return val


@dataclass
class SimResult:
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray | None = None


def _grid(problem):
    span = problem.tf - problem.t0
    steps = round(span / problem.h)
    if steps < 1 or abs(steps * problem.h - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(
            f"step {problem.h} does not divide the time span {span} into whole steps"
        )
    return problem.t0 + problem.h * np.arange(steps + 1), steps


def _tighten(mat):
    """Drop an all-zero imaginary part so real problems run in real arithmetic."""
    if sps.issparse(mat):
        if np.iscomplexobj(mat.data) and not np.any(mat.data.imag):
            return mat.real
        return mat
    mat = np.asarray(mat)
    if np.iscomplexobj(mat) and not np.any(mat.imag):
        return mat.real.copy()
    return mat


def _solver(mat):
    if sps.issparse(mat):
        lu = spla.splu(mat.tocsc())
        return lu.solve
    lu = sla.lu_factor(mat)
    return lambda rhs: sla.lu_solve(lu, rhs)


class _MidpointStepper:
    """Shared implicit-midpoint core for E xdot = A_eff(t) x + g(t)."""

    def __init__(self, E, A_parts, h):
        # A_eff(t) = A_parts[0] + sum_j u_j(t) * A_parts[j+1]
        self.E = E
        self.A_parts = A_parts
        self.h = h
        self._cache = {}

    def _step_matrices(self, u_mid):
        key = tuple(float(v) for v in u_mid)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        A_eff = self.A_parts[0]
        for j, val in enumerate(u_mid):
            if val != 0.0:
                A_eff = A_eff + val * self.A_parts[j + 1]
        minus = self.E - (self.h / 2.0) * A_eff
        plus = self.E + (self.h / 2.0) * A_eff
        try:
            solve = _solver(minus)
        except (RuntimeError, ValueError) as exc:
            raise SingularMatrixError(f"singular step matrix: {exc}") from exc
        entry = (solve, plus)
        if len(self._cache) < _FACTOR_CACHE_LIMIT:
            self._cache[key] = entry
        return entry

    def advance(self, x, u_mid, forcing):
        solve, plus = self._step_matrices(u_mid)
        rhs = plus @ x + self.h * forcing
        x_new = solve(rhs)
        if not np.all(np.isfinite(x_new)):
            raise FloatingPointError("state became non-finite")
        return x_new


def first_order_realization(sys, mu):
    """Constant matrices (E, A, A_tau, N_list, B, C, tau) at one parameter.

    Splits every pencil coefficient by its frequency signature: the ``s``
    part forms E, the constant part -A, an ``exp(-tau*s)`` part -A_tau.
    Couplings, input and output maps must be frequency-constant here.
    Terms whose parameter weight vanishes are dropped, so e.g. a delay term
    scaled by mu = 0 degenerates cleanly to the undelayed system.
    """
    sys.check_mu(mu)
    n = sys.n
    E = None
    A = None
    A_tau = None
    tau = sys.delay
    for coeff, mat in sys.K.terms:
        for sig, mu_fn in coeff.frequency_parts():
            weight = mu_fn.eval(0.0, mu)
            if weight.imag != 0:
                raise ValueError("time-domain realization needs real parameter weights")
            if weight.real == 0.0:
                continue
            term = mat * weight.real
            if sig == ("poly", 1):
                E = term if E is None else E + term
            elif sig == ("poly", 0):
                A = -term if A is None else A - term
            elif sig[0] == "exp":
                rate = sig[1]
                if rate.imag != 0 or rate.real >= 0:
                    raise ValueError(f"unsupported exponential rate {rate} in pencil")
                lag = -rate.real
                if tau is None:
                    tau = lag
                elif not math.isclose(lag, tau, rel_tol=1e-12):
                    raise ValueError("multiple distinct lags are not supported")
                A_tau = -term if A_tau is None else A_tau - term
            else:
                raise ValueError(f"pencil term s^{sig[1]} has no first-order realization")
    if E is None:
        raise ValueError("pencil has no s-proportional part")
    if A is None:
        A = sps.csr_matrix((n, n)) if sps.issparse(E) else np.zeros((n, n))
    N = []
    for Nj in sys.N:
        if Nj.depends_on_s:
            raise ValueError("frequency-dependent couplings have no first-order realization")
        N.append(_tighten(Nj.eval(0.0, mu)))
    for F in (sys.B, sys.C):
        if F.depends_on_s:
            raise ValueError("frequency-dependent input/output maps are not supported here")
    B = _tighten(dense(sys.B.eval(0.0, mu)))
    C = _tighten(dense(sys.C.eval(0.0, mu)))
    return (_tighten(E), _tighten(A),
            _tighten(A_tau) if A_tau is not None else None, N, B, C, tau)


def simulate_first_order(problem):
    """Implicit-midpoint trajectory of a first-order structured system."""
    E, A, A_tau, N, B, C, _ = first_order_realization(problem.system, problem.mu)
    if A_tau is not None:
        raise ValueError("system has a delay term; use simulate_delay")
    return _run_ode(problem, E, A, N, B, C)


def _state_dtype(*mats):
    parts = [m.dtype for m in mats if m is not None]
    return np.result_type(np.float64, *parts)


def _run_ode(problem, E, A, N, B, C, delayed=None):
    t, steps = _grid(problem)
    sys = problem.system
    n, h = sys.n, problem.h
    dt = _state_dtype(E, A, B, C, *N)
    if problem.x0 is None:
        x = np.zeros(n, dtype=dt)
    else:
        x = np.asarray(problem.x0).astype(dt)
        if x.shape != (n,):
            raise ValueError(f"initial state has shape {x.shape}, expected ({n},)")
    stepper = _MidpointStepper(E, [A] + list(N), h)
    y = np.empty((sys.p, steps + 1), dtype=np.result_type(dt, C.dtype))
    y[:, 0] = C @ x
    xs = [x.copy()] if problem.store_state else None
    states = [x.copy()] if delayed is not None else None
    for k in range(steps):
        t_mid = t[k] + h / 2.0
        u_mid = problem.input_at(t_mid, sys.m)
        forcing = B @ u_mid
        if delayed is not None:
            forcing = forcing + delayed(k, states, t_mid)
        try:
            x = stepper.advance(x, u_mid, forcing)
        except FloatingPointError as exc:
            raise FloatingPointError(f"{exc} at step {k} (t={t[k]:.6g})") from None
        y[:, k + 1] = C @ x
        if states is not None:
            states.append(x.copy())
        if xs is not None:
            xs.append(x.copy())
    return SimResult(t=t, y=y, x=np.column_stack(xs) if xs is not None else None)


def simulate_delay(problem):
    """Method-of-steps trajectory of a constant-delay structured system.

    The lag must be a whole number of steps; the delayed midpoint state is
    the mean of the two neighboring stored grid values (or the history
    callable before the initial time), and the delayed term is treated
    explicitly, so each step is still one linear solve.
    """
    sys = problem.system
    E, A, A_tau, N, B, C, tau = first_order_realization(sys, problem.mu)
    history = problem.history or (lambda t: np.zeros(sys.n))
    if problem.x0 is None and problem.history is not None:
        problem = _with_x0(problem, np.asarray(history(problem.t0)))
    if A_tau is None:
        if tau is None:
            raise ValueError("system has no delay term; use simulate_first_order")
        # delay coefficient vanished at this parameter value
        return _run_ode(problem, E, A, N, B, C)
    h = problem.h
    lag_steps = round(tau / h)
    if lag_steps < 1 or abs(lag_steps * h - tau) > 1e-9 * tau:
        raise ValueError(f"step {h} does not align with the lag {tau}")

    def delayed(k, states, t_mid):
        t_delay = t_mid - tau
        if t_delay <= problem.t0:
            x_del = np.asarray(history(t_delay))
        else:
            j = k - lag_steps
            x_del = 0.5 * (states[j] + states[j + 1])
            if j >= 1:
                states[j - 1] = None  # ring-buffer style pruning
        return A_tau @ x_del

    return _run_ode(problem, E, A, N, B, C, delayed=delayed)


def _with_x0(problem, x0):
    return SimProblem(system=problem.system, mu=problem.mu, u=problem.u,
                      t0=problem.t0, tf=problem.tf, h=problem.h, x0=x0,
                      history=problem.history, store_state=problem.store_state)


def simulate_second_order(problem):
    """Companion-form trajectory of a second-order structured system.

    Builds the (x, xdot) system with E = blkdiag(I, M) and feeds it to the
    shared midpoint core; the output is Cp x + Cv xdot.
    """
    sys = problem.system
    if sys.second_order is None:
        raise ValueError("system carries no second-order structure")
    mu = problem.mu
    sys.check_mu(mu)
    parts = sys.second_order

    def conv(F):
        return _tighten(F.eval(0.0, mu))

    M, D, K = conv(parts["M"]), conv(parts["D"]), conv(parts["K"])
    Np = [conv(F) for F in parts["Np"]]
    Nv = [conv(F) for F in parts["Nv"]]
    Bu = _tighten(dense(parts["Bu"].eval(0.0, mu)))
    Cp = _tighten(dense(parts["Cp"].eval(0.0, mu)))
    Cv = _tighten(dense(parts["Cv"].eval(0.0, mu)))
    n = M.shape[0]

    use_sparse = sps.issparse(M)
    eye = sps.identity(n, format="csr") if use_sparse else np.eye(n)
    zero = sps.csr_matrix((n, n)) if use_sparse else np.zeros((n, n))
    blk = sps.bmat if use_sparse else np.block
    E = blk([[eye, zero], [zero, M]])
    A0 = blk([[zero, eye], [-K, -D]])
    N_parts = [blk([[zero, zero], [Npj, Nvj]]) for Npj, Nvj in zip(Np, Nv)]
    if use_sparse:
        E, A0 = E.tocsr(), A0.tocsr()
        N_parts = [Nc.tocsr() for Nc in N_parts]
    B = np.vstack([np.zeros_like(Bu), Bu])
    C = np.hstack([Cp, Cv])

    x0 = problem.x0
    if x0 is not None:
        x0 = np.asarray(x0)
        if x0.shape == (n,):
            x0 = np.concatenate([x0, np.zeros(n, dtype=x0.dtype)])
    companion = SimProblem(system=_CompanionView(sys, 2 * n), mu=mu, u=problem.u,
                           t0=problem.t0, tf=problem.tf, h=problem.h, x0=x0,
                           store_state=problem.store_state)
    return _run_ode(companion, E, A0, N_parts, B, C)


class _CompanionView:
    """Dimension adapter so the midpoint core sees the companion sizes."""

    def __init__(self, sys, n):
        self.n = n
        self.m = sys.m
        self.p = sys.p


def simulate(problem):
    """Dispatch on the system's structure tag."""
    tag = problem.system.structure
    if tag == "second-order":
        return simulate_second_order(problem)
    if tag == "time-delay":
        return simulate_delay(problem)
    return simulate_first_order(problem)


_UNUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_SIG_TERM = re.compile(
    rf"\s*(?:(?P<coeff>{_UNUM})\s*\*\s*)?(?P<fn>sin|cos)\(\s*(?P<freq>[+-]?{_UNUM})\s*\*\s*t\s*\)"
    rf"|\s*(?P<const>{_UNUM})"
)


def parse_signal(text):
    """Parse an input-signal expression into a callable of t.

    A sum/difference of constants and ``[c*]sin(w*t)`` / ``[c*]cos(w*t)``
    terms, e.g. ``0.05*cos(10*t) + 0.05*cos(5*t)`` or ``sin(200*t) + 200``.
    """
    terms = []
    pos = 0
    stripped = text.strip()
    first = True
    while pos < len(stripped):
        while pos < len(stripped) and stripped[pos].isspace():
            pos += 1
        if pos >= len(stripped):
            break
        sign = 1.0
        if stripped[pos] == "+":
            pos += 1
        elif stripped[pos] == "-":
            sign = -1.0
            pos += 1
        elif not first:
            raise ValueError(f"expected '+' or '-' at byte {pos} of signal {text!r}")
        m = _SIG_TERM.match(stripped, pos)
        if not m:
            raise ValueError(f"cannot parse signal {text!r} at byte {pos}")
        if m.group("const") is not None:
            terms.append((sign * float(m.group("const")), None, 0.0))
        else:
            coeff = float(m.group("coeff")) if m.group("coeff") else 1.0
            fn = math.sin if m.group("fn") == "sin" else math.cos
            terms.append((sign * coeff, fn, float(m.group("freq"))))
        pos = m.end()
        first = False
    if not terms:
        raise ValueError(f"empty signal expression {text!r}")

    def signal(t):
        total = 0.0
        for coeff, fn, freq in terms:
            total += coeff * (fn(freq * t) if fn else 1.0)
        return total

    return signal
