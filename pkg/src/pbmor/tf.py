"""Multivariate subsystem transfer functions of structured bilinear systems.

The level-k kernel of a structured parametric bilinear system is

    G_k(s_1, .., s_k, mu) = C(s_k) K(s_k)^{-1}
        * prod_{j=1}^{k-1} (I_{m^{j-1}} x N(s_{k-j})) (I_{m^j} x K(s_{k-j})^{-1})
        * (I_{m^{k-1}} x B(s_1)),

a p x m^k matrix.  Nothing here ever materializes a Kronecker product: with
the row concatenation ``N(s) = [N_1(s), .., N_m(s)]`` the identity
``N(s) (I_m x Z) = [N_1(s) Z, .., N_m(s) Z]`` turns the evaluation into the
forward propagation

    Z_1 = K(s_1)^{-1} B(s_1),
    Z_j = K(s_j)^{-1} [N_1(s_{j-1}) Z_{j-1}, .., N_m(s_{j-1}) Z_{j-1}],
    G_k = C(s_k) Z_k,

whose column ordering (rightmost factor varies fastest) is fixed and
documented.  Frequency derivatives and parameter gradients are computed
exactly from the coefficient derivatives; analytic mixed frequency partials
are supported up to total order 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matfun import Factorization, deriv_action, dense, solve_deriv_action

__all__ = [
    "TransferRequest",
    "MAX_RESULT_ENTRIES",
    "MAX_ANALYTIC_ORDER",
    "eval_transfer",
    "eval_transfer_siso",
    "eval_transfer_deriv",
    "eval_transfer_param_grad",
    "evaluate",
]

MAX_RESULT_ENTRIES = 10**6
MAX_ANALYTIC_ORDER = 2


@dataclass(frozen=True)
class TransferRequest:
    """One transfer-function evaluation request.

    `freqs` fixes the level k through its length; `orders` optionally asks
    for a mixed frequency partial and `param_grad` for the parameter
    gradient alongside the value.
    """

    freqs: tuple
    mu: tuple
    orders: tuple | None = None
    param_grad: bool = False

    def __post_init__(self):
        object.__setattr__(self, "freqs", tuple(complex(s) for s in self.freqs))
        object.__setattr__(self, "mu", tuple(float(v) for v in self.mu))
        if not self.freqs:
            raise ValueError("at least one frequency point is required")
        if self.orders is not None:
            orders = tuple(int(j) for j in self.orders)
            if len(orders) != len(self.freqs):
                raise ValueError("one derivative order per frequency point is required")
            if any(j < 0 for j in orders):
                raise ValueError("derivative orders must be non-negative")
            object.__setattr__(self, "orders", orders)

    @property
    def level(self):
        return len(self.freqs)


def _guard_size(sys, k, max_entries):
    if sys.p * sys.m**k > max_entries:
        raise ValueError(
            f"level {k} result with p*m^k = {sys.p * sys.m ** k} entries "
            f"exceeds the cap of {max_entries}"
        )


def _factor(K, s, mu, cache):
    if cache is not None:
        return cache.factor(K, s, mu)
    return Factorization(K, s, mu)


def _stack_bilinear(sys, s, mu, Z, s_order=0, mu_index=None):
    """[N_1 Z, .., N_m Z] with the requested coefficient derivatives."""
    blocks = [dense(Nj.eval_deriv(s, mu, s_order=s_order, mu_index=mu_index)) @ Z
              for Nj in sys.N]
    return np.hstack(blocks)


def eval_transfer(sys, freqs, mu, cache=None, max_entries=MAX_RESULT_ENTRIES):
    """Evaluate the level-k kernel at ``freqs = (s_1, .., s_k)``.

    Returns the p x m^k complex matrix.  Raises SingularMatrixError when a
    shifted solve fails and ValueError when the result size exceeds the cap.
    """
    sys.check_mu(mu)
    freqs = [complex(s) for s in freqs]
    k = len(freqs)
    if k < 1:
        raise ValueError("at least one frequency point is required")
    _guard_size(sys, k, max_entries)
    Z = _factor(sys.K, freqs[0], mu, cache).solve(sys.B.eval(freqs[0], mu))
    for j in range(1, k):
        S = _stack_bilinear(sys, freqs[j - 1], mu, Z)
        Z = _factor(sys.K, freqs[j], mu, cache).solve(S)
    return dense(sys.C.eval(freqs[k - 1], mu)) @ Z


def eval_transfer_siso(sys, freqs, mu, cache=None):
    """Level-k kernel of a single-input single-output system, as a scalar.

    Uses the Kronecker-free scalar chain C K^{-1} (prod N K^{-1}) B of
    single-column solves.
    """
    if sys.m != 1 or sys.p != 1:
        raise ValueError(f"system is {sys.p}x{sys.m}, not SISO")
    sys.check_mu(mu)
    freqs = [complex(s) for s in freqs]
    v = _factor(sys.K, freqs[0], mu, cache).solve(sys.B.eval(freqs[0], mu))
    for j in range(1, len(freqs)):
        rhs = dense(sys.N[0].eval(freqs[j - 1], mu)) @ v
        v = _factor(sys.K, freqs[j], mu, cache).solve(rhs)
    return complex((dense(sys.C.eval(freqs[-1], mu)) @ v)[0, 0])


def eval_transfer_deriv(sys, freqs, mu, orders, cache=None,
                        max_entries=MAX_RESULT_ENTRIES):
    """Exact mixed frequency partial of the level-k kernel.

    `orders` gives the derivative order per frequency argument; the total
    order is capped at 2 analytically (higher orders are served by the
    finite-difference fallback in :mod:`pbmor.verify`).
    """
    sys.check_mu(mu)
    freqs = [complex(s) for s in freqs]
    orders = tuple(int(j) for j in orders)
    k = len(freqs)
    if len(orders) != k:
        raise ValueError("one derivative order per frequency point is required")
    if any(j < 0 for j in orders):
        raise ValueError("derivative orders must be non-negative")
    if sum(orders) > MAX_ANALYTIC_ORDER:
        raise ValueError(
            f"total analytic derivative order {sum(orders)} exceeds {MAX_ANALYTIC_ORDER}"
        )
    _guard_size(sys, k, max_entries)

    # states[c] = the mixed partial of the propagated chain with multi-index c
    states = {}
    base = solve_deriv_action(sys.K, sys.B, freqs[0], mu, orders[0], cache=cache)
    for c1 in range(orders[0] + 1):
        states[(c1,)] = base[c1]

    for lev in range(2, k + 1):
        own_order = orders[lev - 1]
        new_states = {}
        for prefix in _multi_indices(orders[: lev - 1]):
            c_prev = prefix[-1]
            S = None
            for a in range(c_prev + 1):
                part = _stack_bilinear(sys, freqs[lev - 2], mu,
                                       states[prefix[:-1] + (c_prev - a,)], s_order=a)
                part = math.comb(c_prev, a) * part
                S = part if S is None else S + part
            acts = deriv_action(sys.K, [S] + [None] * own_order, freqs[lev - 1], mu,
                                cache=cache)
            for b in range(own_order + 1):
                new_states[prefix + (b,)] = acts[b]
        states = new_states

    # output junction: C(s_k) shares the last variable with the leading solve
    ck = orders[k - 1]
    out = None
    for b in range(ck + 1):
        part = dense(sys.C.eval_deriv(freqs[k - 1], mu, s_order=b)) \
            @ states[orders[:-1] + (ck - b,)]
        part = math.comb(ck, b) * part
        out = part if out is None else out + part
    return out


def _multi_indices(bounds):
    """All multi-indices c with 0 <= c_i <= bounds_i, last index complete."""
    if not bounds:
        return [()]
    out = [()]
    for b in bounds:
        out = [c + (v,) for c in out for v in range(b + 1)]
    return out


def eval_transfer_param_grad(sys, freqs, mu, cache=None,
                             max_entries=MAX_RESULT_ENTRIES):
    """Gradient of the level-k kernel in all d parameters.

    Returns a list of d matrices of shape p x m^k.  Each gradient is the sum
    of 2k+1 terms in which exactly one factor of the evaluation chain is
    differentiated; derivatives of the shifted inverses enter through
    ``-K^{-1} (d K) K^{-1}``.  Computed in one forward pass that propagates,
    per parameter, the differentiated state alongside the plain state.
    """
    sys.check_mu(mu)
    freqs = [complex(s) for s in freqs]
    k = len(freqs)
    _guard_size(sys, k, max_entries)
    d = sys.d

    fact = _factor(sys.K, freqs[0], mu, cache)
    Z = fact.solve(sys.B.eval(freqs[0], mu))
    D = []
    for i in range(d):
        rhs = dense(sys.B.eval_deriv(freqs[0], mu, mu_index=i)) \
            - dense(sys.K.eval_deriv(freqs[0], mu, mu_index=i)) @ Z
        D.append(fact.solve(rhs))

    for j in range(1, k):
        s_prev, s_cur = freqs[j - 1], freqs[j]
        fact = _factor(sys.K, s_cur, mu, cache)
        S = _stack_bilinear(sys, s_prev, mu, Z)
        Z_new = fact.solve(S)
        D_new = []
        for i in range(d):
            Si = _stack_bilinear(sys, s_prev, mu, Z, mu_index=i) \
                + _stack_bilinear(sys, s_prev, mu, D[i])
            rhs = Si - dense(sys.K.eval_deriv(s_cur, mu, mu_index=i)) @ Z_new
            D_new.append(fact.solve(rhs))
        Z, D = Z_new, D_new

    C_val = dense(sys.C.eval(freqs[k - 1], mu))
    grads = []
    for i in range(d):
        dC = dense(sys.C.eval_deriv(freqs[k - 1], mu, mu_index=i))
        grads.append(dC @ Z + C_val @ D[i])
    return grads


def evaluate(sys, request, cache=None):
    """Serve a :class:`TransferRequest`; returns (value, grads-or-None)."""
    if request.orders is not None and any(request.orders):
        value = eval_transfer_deriv(sys, request.freqs, request.mu, request.orders,
                                    cache=cache)
    else:
        value = eval_transfer(sys, request.freqs, request.mu, cache=cache)
    grads = None
    if request.param_grad:
        if request.orders is not None and any(request.orders):
            raise ValueError("parameter gradients of frequency derivatives are not supported")
        grads = eval_transfer_param_grad(sys, request.freqs, request.mu, cache=cache)
    return value, grads
