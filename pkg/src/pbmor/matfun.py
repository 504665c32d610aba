"""Affine-parametric matrix functions, structured systems, and shifted solves.

A matrix function is stored as a finite sum ``F(s, mu) = sum_j h_j(s, mu) F_j``
of constant (dense or sparse) matrices weighted by :class:`~pbmor.scalarfun.ScalarFn`
coefficients.  This module provides evaluation, exact differentiation of the
coefficient functions, factored shifted solves ``K(s, mu) X = R`` (plain and
adjoint), and the Leibniz recurrence for derivative actions
``d^j/ds^j (K(s, mu)^{-1} F(s, mu))`` that the projection-space constructions
consume.  All solve paths run in complex arithmetic.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .scalarfun import ScalarFn

__all__ = [
    "AffineMatrixFn",
    "StructuredSystem",
    "Factorization",
    "SolveCache",
    "SingularMatrixError",
    "solve_shifted",
    "solve_deriv_action",
]

# Relative backward-error bound accepted from one factored solve.
SOLVE_BACKWARD_TOL = 1e-10


class SingularMatrixError(ValueError):
    """Shifted matrix is singular to working precision at a point (s, mu)."""

    def __init__(self, message, s=None, mu=None):
        point = f" at s={s!r}, mu={tuple(mu) if mu is not None else None!r}"
        super().__init__(message + point)
        self.s = s
        self.mu = mu


def _as_coeff(value):
    if isinstance(value, ScalarFn):
        return value
    if isinstance(value, (int, float, complex)):
        return ScalarFn.const(value)
    raise TypeError(f"coefficient must be a ScalarFn or a number, got {type(value)!r}")


def dense(mat):
    """Return a dense complex ndarray view/copy of a dense or sparse matrix."""
    if sps.issparse(mat):
        return mat.toarray().astype(complex, copy=False)
    return np.asarray(mat, dtype=complex)


class AffineMatrixFn:
    """Finite sum of constant matrices weighted by scalar coefficient functions.

    Parameters
    ----------
    terms
        Iterable of ``(coeff, matrix)`` pairs.  Coefficients may be ScalarFn
        instances or plain numbers; matrices may be dense ndarrays or scipy
        sparse matrices, all of one common shape.
    """

    __slots__ = ("terms", "rows", "cols")

    def __init__(self, terms):
        terms = [( _as_coeff(c), m) for c, m in terms]
        if not terms:
            raise ValueError("an affine matrix function needs at least one term")
        shapes = {m.shape for _, m in terms}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent term shapes: {sorted(shapes)}")
        ((rows, cols),) = shapes
        self.terms = tuple(terms)
        self.rows = int(rows)
        self.cols = int(cols)

    @classmethod
    def constant(cls, mat):
        return cls([(ScalarFn.const(1.0), mat)])

    @classmethod
    def zero(cls, rows, cols, sparse=False):
        mat = sps.csr_matrix((rows, cols)) if sparse else np.zeros((rows, cols))
        return cls([(ScalarFn.const(1.0), mat)])

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def param_dim(self):
        return max(c.param_dim for c, _ in self.terms)

    @property
    def depends_on_s(self):
        return any(c.depends_on_s for c, _ in self.terms)

    @property
    def is_sparse(self):
        return all(sps.issparse(m) for _, m in self.terms)

    def _check_mu(self, mu):
        if len(mu) < self.param_dim:
            raise ValueError(
                f"parameter vector of length {len(mu)} given, "
                f"matrix function needs at least {self.param_dim}"
            )

    def eval(self, s, mu=()):
        """Evaluate ``sum_j h_j(s, mu) F_j`` as a complex matrix."""
        return self.eval_deriv(s, mu, s_order=0)

    def eval_deriv(self, s, mu=(), s_order=0, mu_index=None):
        """Evaluate with each coefficient differentiated as requested.

        Applies ``d^{s_order}/ds^{s_order}`` and, if `mu_index` is given, one
        partial derivative in that parameter, to every coefficient.
        """
        self._check_mu(mu)
        if s_order < 0 or int(s_order) != s_order:
            raise ValueError(f"derivative order must be a non-negative integer, got {s_order}")
        all_sparse = self.is_sparse
        out = None
        for coeff, mat in self.terms:
            if mu_index is not None:
                coeff = coeff.diff_mu(mu_index)
            coeff = coeff.diff_s(s_order)
            w = coeff.eval(s, mu)
            if w == 0:
                continue
            contrib = mat * w
            if not all_sparse and sps.issparse(contrib):
                contrib = contrib.toarray()
            out = contrib if out is None else out + contrib
        if out is None:
            if all_sparse:
                return sps.csr_matrix(self.shape, dtype=complex)
            return np.zeros(self.shape, dtype=complex)
        if sps.issparse(out):
            return out.astype(complex)
        return np.asarray(out, dtype=complex)

    def project(self, left, right):
        """Apply ``left^H F_j right`` term-wise, keeping the coefficients."""
        new_terms = []
        for coeff, mat in self.terms:
            if right is not None:
                m = mat @ right
                if left is not None:
                    m = left.conj().T @ m
            elif left is not None:
                # right-multiply through the adjoint so sparse @ dense applies
                m = (mat.conj().T @ left).conj().T
            else:
                m = dense(mat)
            new_terms.append((coeff, np.asarray(m)))
        return AffineMatrixFn(new_terms)

    def __repr__(self):
        return f"AffineMatrixFn({self.rows}x{self.cols}, {len(self.terms)} terms)"


class Factorization:
    """One LU factorization of an evaluated shifted matrix, reused for all
    right-hand sides and for plain and adjoint solves."""

    def __init__(self, matfn, s, mu):
        self.s = complex(s)
        self.mu = tuple(mu)
        mat = matfn.eval(s, mu)
        if mat.shape[0] != mat.shape[1]:
            raise ValueError(f"cannot factor a non-square {mat.shape} matrix")
        self._mat = mat
        self._sparse = sps.issparse(mat)
        try:
            if self._sparse:
                self._lu = spla.splu(mat.tocsc())
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", sla.LinAlgWarning)
                    self._lu = sla.lu_factor(mat)
        except (RuntimeError, ValueError, sla.LinAlgError, sla.LinAlgWarning) as exc:
            raise SingularMatrixError(f"factorization failed: {exc}", s, mu) from exc
        self._mat_norm = spla.norm(mat) if self._sparse else np.linalg.norm(mat)

    def solve(self, rhs, adjoint=False):
        """Solve ``K X = rhs`` (or ``K^H X = rhs``) and verify the residual."""
        rhs = dense(rhs)
        squeeze = rhs.ndim == 1
        if squeeze:
            rhs = rhs[:, None]
        if self._sparse:
            x = self._lu.solve(rhs, trans="H" if adjoint else "N")
        else:
            x = sla.lu_solve(self._lu, rhs, trans=2 if adjoint else 0)
        op = self._mat.conj().T if adjoint else self._mat
        residual = np.linalg.norm(op @ x - rhs)
        scale = self._mat_norm * np.linalg.norm(x) + np.linalg.norm(rhs)
        if not np.isfinite(residual) or (scale > 0 and residual > SOLVE_BACKWARD_TOL * scale):
            raise SingularMatrixError(
                f"solve residual {residual:.2e} exceeds {SOLVE_BACKWARD_TOL:.0e} * {scale:.2e}",
                self.s,
                self.mu,
            )
        return x[:, 0] if squeeze else x


class SolveCache:
    """Factorization cache keyed by (matrix function, point).

    Matrix functions without parameter dependence share factorizations across
    parameter values.  Not safe for concurrent mutation; use one per sweep.
    """

    def __init__(self):
        self._store = {}

    def factor(self, matfn, s, mu):
        mu_key = tuple(mu) if matfn.param_dim else ()
        key = (id(matfn), complex(s), mu_key)
        fact = self._store.get(key)
        if fact is None:
            fact = Factorization(matfn, s, mu)
            # pin matfn so id() stays unique for the cache lifetime
            self._store[key] = fact
            self._store.setdefault(("pin", id(matfn)), matfn)
        return fact


def _factor(K, s, mu, cache=None):
    if cache is not None:
        return cache.factor(K, s, mu)
    return Factorization(K, s, mu)


def solve_shifted(K, s, mu, rhs, adjoint=False, cache=None):
    """Solve ``K(s, mu) X = rhs`` (adjoint: ``K(s, mu)^H X = rhs``)."""
    return _factor(K, s, mu, cache).solve(rhs, adjoint=adjoint)


def deriv_action(K, rhs_derivs, s, mu, adjoint=False, cache=None):
    """Derivative actions of a shifted inverse against explicit RHS derivatives.

    Given ``rhs_derivs[j]`` equal to the j-th frequency derivative of a
    right-hand side ``F(s)`` (entries may be None for zero), returns the list

        ``X_j = d^j/ds^j (K^{-1} F)(s, mu)``,   j = 0..len(rhs_derivs)-1,

    by the Leibniz recurrence ``K X_j = F^(j) - sum_i binom(j,i) K^(i) X_{j-i}``
    with one factorization.  With ``adjoint=True`` every ``K^(i)`` is replaced
    by its conjugate transpose and the solves use ``K^H``; the caller supplies
    the right-hand sides already in adjoint orientation.
    """
    fact = _factor(K, s, mu, cache)
    max_order = len(rhs_derivs) - 1
    k_derivs = {}
    for i in range(1, max_order + 1):
        ki = K.eval_deriv(s, mu, s_order=i)
        k_derivs[i] = ki.conj().T if adjoint else ki
    out = []
    n = K.rows
    for j in range(max_order + 1):
        rhs = rhs_derivs[j]
        if rhs is None:
            width = out[0].shape[1] if out else 1
            acc = np.zeros((n, width), dtype=complex)
        else:
            acc = dense(rhs).copy()
        for i in range(1, j + 1):
            acc -= math.comb(j, i) * (k_derivs[i] @ out[j - i])
        out.append(fact.solve(acc, adjoint=adjoint))
    return out


def solve_deriv_action(K, F, s, mu, max_order, adjoint=False, cache=None):
    """List ``[X_0 .. X_max]`` with ``X_j = d^j/ds^j (K^{-1} F)(s, mu)``.

    `F` may be an :class:`AffineMatrixFn` or a constant matrix.  With
    ``adjoint=True`` this returns the adjoint-side actions
    ``d^j/ds^j (K^{-H} F^H)`` under the convention that the derivative of a
    conjugate transpose is the conjugate transpose of the derivative; a
    constant `F` is then expected of shape (q, n) like the output map.
    """
    if max_order < 0 or int(max_order) != max_order:
        raise ValueError(f"max_order must be a non-negative integer, got {max_order}")
    rhs_derivs = []
    for j in range(int(max_order) + 1):
        if isinstance(F, AffineMatrixFn):
            fj = F.eval_deriv(s, mu, s_order=j)
            rhs_derivs.append(dense(fj).conj().T if adjoint else fj)
        else:
            if j == 0:
                rhs_derivs.append(dense(F).conj().T if adjoint else F)
            else:
                rhs_derivs.append(None)
    return deriv_action(K, rhs_derivs, s, mu, adjoint=adjoint, cache=cache)


_STRUCTURES = ("first-order", "second-order", "time-delay", "custom")


class StructuredSystem:
    """A parametric bilinear system given through its matrix functions.

    The dynamics are represented by an output map ``C`` (p x n), a frequency
    pencil ``K`` (n x n), an input map ``B`` (n x m) and one bilinear coupling
    ``N_j`` (n x n) per input channel, all affine-parametric matrix functions
    of ``(s, mu)``.  Instances are immutable after construction and safe to
    share between threads.

    Parameters
    ----------
    C, K, B
        AffineMatrixFn members of shapes (p, n), (n, n), (n, m).
    N
        Sequence of m AffineMatrixFn members of shape (n, n).
    d
        Parameter dimension; defaults to the largest dimension any member
        coefficient references.
    structure
        One of 'first-order', 'second-order', 'time-delay', 'custom'.
    second_order
        For the 'second-order' tag: dict with the constituent affine parts
        'M', 'D', 'K', 'Np', 'Nv', 'Bu', 'Cp', 'Cv' ('Np'/'Nv' are lists).
    delay
        Lag time for the 'time-delay' tag.
    """

    __slots__ = ("C", "K", "B", "N", "n", "m", "p", "d", "structure",
                 "second_order", "delay")

    def __init__(self, C, K, B, N, d=None, structure="custom",
                 second_order=None, delay=None):
        if structure not in _STRUCTURES:
            raise ValueError(f"unknown structure tag {structure!r}")
        N = tuple(N)
        if K.rows != K.cols:
            raise ValueError(f"K must be square, got {K.shape}")
        n = K.rows
        if C.cols != n or B.rows != n:
            raise ValueError("C, K, B dimensions are inconsistent")
        m = B.cols
        p = C.rows
        if len(N) != m:
            raise ValueError(f"need one bilinear term per input: {len(N)} != {m}")
        for j, Nj in enumerate(N):
            if Nj.shape != (n, n):
                raise ValueError(f"N[{j}] has shape {Nj.shape}, expected {(n, n)}")
        members_dim = max(F.param_dim for F in (C, K, B, *N))
        if d is None:
            d = members_dim
        elif d < members_dim:
            raise ValueError(f"declared d={d} below referenced parameter index range {members_dim}")
        if structure == "time-delay" and delay is None:
            raise ValueError("time-delay systems need a delay")
        if structure == "second-order" and second_order is None:
            raise ValueError("second-order systems need their constituent parts")
        self.C, self.K, self.B, self.N = C, K, B, N
        self.n, self.m, self.p, self.d = n, m, p, int(d)
        self.structure = structure
        self.second_order = second_order
        self.delay = delay

    @classmethod
    def second_order_system(cls, M, D, K, Np, Nv, Bu, Cp, Cv, d=None):
        """Assemble the pencil ``s^2 M(mu) + s D(mu) + K(mu)`` system.

        All arguments are AffineMatrixFns in mu only (their coefficients may
        not depend on s); `Np`, `Nv` are sequences per input channel and the
        couplings become ``N_j = Np_j + s Nv_j``, the output map
        ``C = Cp + s Cv``.
        """
        s1 = ScalarFn.s_power(1)
        s2 = ScalarFn.s_power(2)
        parts = {"M": M, "D": D, "K": K, "Np": tuple(Np), "Nv": tuple(Nv),
                 "Bu": Bu, "Cp": Cp, "Cv": Cv}
        for name in ("M", "D", "K", "Bu", "Cp", "Cv"):
            if parts[name].depends_on_s:
                raise ValueError(f"second-order part {name} may not depend on s")
        kfull = []
        kfull += [(c * s2, mat) for c, mat in M.terms]
        kfull += [(c * s1, mat) for c, mat in D.terms]
        kfull += list(K.terms)
        N = []
        for Npj, Nvj in zip(Np, Nv, strict=True):
            terms = list(Npj.terms) + [(c * s1, mat) for c, mat in Nvj.terms]
            N.append(AffineMatrixFn(terms))
        cfull = list(Cp.terms) + [(c * s1, mat) for c, mat in Cv.terms]
        return cls(
            C=AffineMatrixFn(cfull),
            K=AffineMatrixFn(kfull),
            B=Bu,
            N=N,
            d=d,
            structure="second-order",
            second_order=parts,
        )

    def check_mu(self, mu):
        if len(mu) != self.d:
            raise ValueError(f"parameter vector of length {len(mu)} given, system has d={self.d}")

    def members(self):
        return {"C": self.C, "K": self.K, "B": self.B, "N": list(self.N)}

    def __repr__(self):
        return (f"StructuredSystem(n={self.n}, m={self.m}, p={self.p}, d={self.d}, "
                f"structure={self.structure!r})")
