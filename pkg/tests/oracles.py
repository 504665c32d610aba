"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, literal way (explicit
Kronecker products, dense inverses, plain finite differences) and shares no
code with the package's evaluation paths.
"""

import numpy as np
import scipy.sparse as sps


def _dense(mat):
    if sps.issparse(mat):
        return mat.toarray().astype(complex)
    return np.asarray(mat, dtype=complex)


def brute_force_transfer(sys, freqs, mu):
    """Literal level-k kernel with explicit Kronecker products and inverses."""
    k = len(freqs)
    m = sys.m
    Kinv = [np.linalg.inv(_dense(sys.K.eval(s, mu))) for s in freqs]

    def N_full(s):
        return np.hstack([_dense(Nj.eval(s, mu)) for Nj in sys.N])

    G = _dense(sys.C.eval(freqs[-1], mu)) @ Kinv[-1]
    for j in range(1, k):
        G = G @ np.kron(np.eye(m ** (j - 1)), N_full(freqs[k - 1 - j]))
        G = G @ np.kron(np.eye(m ** j), Kinv[k - 1 - j])
    return G @ np.kron(np.eye(m ** (k - 1)), _dense(sys.B.eval(freqs[0], mu)))


def unstructured_transfer(E, A, N_list, B, C, freqs):
    """Classical level-k kernel of E xdot = A x + sum N_j x u_j + B u, y = C x."""
    k = len(freqs)
    m = B.shape[1]
    resolvent = [np.linalg.inv(s * E - A) for s in freqs]
    N_full = np.hstack([np.asarray(Nj, dtype=complex) for Nj in N_list])
    G = np.asarray(C, dtype=complex) @ resolvent[-1]
    for j in range(1, k):
        G = G @ np.kron(np.eye(m ** (j - 1)), N_full)
        G = G @ np.kron(np.eye(m ** j), resolvent[k - 1 - j])
    return G @ np.kron(np.eye(m ** (k - 1)), np.asarray(B, dtype=complex))


def fd_freq_deriv(fun, freqs, orders, step=1e-6):
    """Mixed frequency partial of `fun(freqs)` by central differences.

    One Richardson refinement per level keeps the truncation error around
    O(h^4) without inheriting any package code.
    """
    freqs = tuple(complex(s) for s in freqs)
    orders = tuple(int(j) for j in orders)

    def helper(pts, remaining):
        for idx, j in enumerate(remaining):
            if j > 0:
                break
        else:
            return fun(pts)
        lowered = remaining[:idx] + (j - 1,) + remaining[idx + 1:]
        h = step * (1.0 + abs(freqs[idx]))

        def central(hh):
            up = pts[:idx] + (pts[idx] + hh,) + pts[idx + 1:]
            dn = pts[:idx] + (pts[idx] - hh,) + pts[idx + 1:]
            return (helper(up, lowered) - helper(dn, lowered)) / (2 * hh)

        d1, d2 = central(h), central(h / 2)
        return (4.0 * d2 - d1) / 3.0

    return helper(freqs, orders)


def fd_param_grad(fun, mu, index, step=1e-5):
    """Central difference of `fun(mu)` in one parameter with one refinement."""
    mu = np.asarray(mu, dtype=float)
    h = step * (1.0 + abs(mu[index]))

    def central(hh):
        up = mu.copy()
        dn = mu.copy()
        up[index] += hh
        dn[index] -= hh
        return (fun(tuple(up)) - fun(tuple(dn))) / (2 * hh)

    d1, d2 = central(h), central(h / 2)
    return (4.0 * d2 - d1) / 3.0


def rel_err(a, b):
    a = np.atleast_1d(np.asarray(a))
    b = np.atleast_1d(np.asarray(b))
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)
