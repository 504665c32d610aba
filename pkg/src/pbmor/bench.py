"""Deterministic benchmark and fixture generators.

Two desk-scale benchmarks with parametric bilinear structure:

* ``heated-rod-delay`` -- a one-dimensional heated rod whose reaction terms
  couple the current and the unit-delayed temperature field, discretized by
  second differences on (0, pi) with homogeneous Dirichlet ends.  The
  parameter scales both reaction terms, so the pencil carries a
  ``mu * exp(-s)`` coefficient.
* ``msd-chain`` -- a damped mass-spring chain in second-order form with two
  force inputs at the chain ends and bilinear state couplings on either half
  of the chain, each scaled by its own parameter.

The rod's input/output/coupling matrices and the chain's physical constants
are documented defaults of this package, not values from any external data
set; reruns with equal configurations are bit-identical.  A seeded generator
for well-conditioned random structured systems backs the property tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .matfun import AffineMatrixFn, StructuredSystem
from .scalarfun import ScalarFn

__all__ = [
    "BenchmarkConfig",
    "gen_heated_rod_delay",
    "gen_msd_chain",
    "gen_random_structured",
    "make_benchmark",
    "BENCHMARKS",
]

# below this order the generators store dense matrices
SPARSE_THRESHOLD = 200


@dataclass(frozen=True)
class BenchmarkConfig:
    """Benchmark selection plus its (documented-default) knobs."""

    benchmark: str
    n: int = 1000
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("benchmarks need n >= 3")


def _maybe_sparse(mat, n):
    return sps.csr_matrix(mat) if n >= SPARSE_THRESHOLD else np.asarray(mat)


def gen_heated_rod_delay(n=1000, coupling=0.2, delay=1.0):
    """Heated rod with delayed reaction, as a time-delay structured system.

    Grid points sit at ``zeta_i = i*pi/(n+1)``; the diffusion stencil is the
    scaled second difference, the reaction profile ``sin(zeta)`` vanishes at
    both Dirichlet ends.  The pencil is

        K(s, mu) = s*I - (A0 - mu*Ad) - mu*exp(-delay*s)*Ad

    with ``A0`` the Laplacian and ``Ad = diag(sin(zeta_i))``; the input
    enters every node (B all ones), the output averages the field
    (C = (1/n) * ones), and the bilinear coupling is ``coupling * Ad``.
    """
    if n < 3:
        raise ValueError("rod needs n >= 3")
    h = np.pi / (n + 1)
    zeta = np.arange(1, n + 1) * h
    main = np.full(n, -2.0 / h**2)
    off = np.full(n - 1, 1.0 / h**2)
    A0 = sps.diags([off, main, off], offsets=(-1, 0, 1), format="csr")
    sin_profile = np.sin(zeta)
    Ad = sps.diags(sin_profile, format="csr")
    eye = sps.identity(n, format="csr")
    if n < SPARSE_THRESHOLD:
        A0, Ad, eye = A0.toarray(), Ad.toarray(), np.eye(n)

    mu0 = ScalarFn.mu_power(0)
    K = AffineMatrixFn([
        (ScalarFn.s_power(1), eye),
        (ScalarFn.const(-1.0), A0),
        (mu0, Ad),
        (-1.0 * mu0 * ScalarFn.exponential(-delay), Ad),
    ])
    B = AffineMatrixFn.constant(np.ones((n, 1)))
    C = AffineMatrixFn.constant(np.full((1, n), 1.0 / n))
    N = [AffineMatrixFn.constant(_maybe_sparse(coupling * np.diag(sin_profile), n))]
    return StructuredSystem(C=C, K=K, B=B, N=N, d=1, structure="time-delay",
                            delay=delay)


def gen_msd_chain(n=1000, mass=4.0, stiffness=4.0, coupling_off=-2.0,
                  damping_mass=0.05, damping_stiffness=0.1,
                  bilinear_strength=0.4):
    """Damped mass-spring chain with two parametric bilinear couplings.

    Second-order structure ``s^2 M + s D + K`` with M = mass*I, K the
    tridiagonal spring stencil, Rayleigh damping D, forces at both chain
    ends, and position outputs at states 2 and n-3 (1-based).  The two
    bilinear terms are subdiagonal couplings of the given strength on the
    first and second half of the chain, each weighted by one parameter, so
    the system is linear at mu = (0, 0).
    """
    if n < 5:
        raise ValueError("chain needs n >= 5")
    M = mass * np.eye(n)
    K = (np.diag(np.full(n, stiffness))
         + np.diag(np.full(n - 1, coupling_off), 1)
         + np.diag(np.full(n - 1, coupling_off), -1))
    D = damping_mass * M + damping_stiffness * K
    Bu = np.zeros((n, 2))
    Bu[0, 0] = 1.0
    Bu[n - 1, 1] = 1.0
    Cp = np.zeros((2, n))
    Cp[0, 1] = 1.0
    Cp[1, n - 4] = 1.0
    half = n // 2
    Np1 = np.zeros((n, n))
    Np2 = np.zeros((n, n))
    for i in range(n - 1):
        if i < half:
            Np1[i + 1, i] = bilinear_strength
        else:
            Np2[i + 1, i] = bilinear_strength
    zero = np.zeros((n, n))

    sp = lambda m: _maybe_sparse(m, n)
    mu = [ScalarFn.mu_power(0), ScalarFn.mu_power(1)]
    return StructuredSystem.second_order_system(
        M=AffineMatrixFn.constant(sp(M)),
        D=AffineMatrixFn.constant(sp(D)),
        K=AffineMatrixFn.constant(sp(K)),
        Np=[AffineMatrixFn([(mu[0], sp(Np1))]),
            AffineMatrixFn([(mu[1], sp(Np2))])],
        Nv=[AffineMatrixFn.constant(sp(zero)),
            AffineMatrixFn.constant(sp(zero))],
        Bu=AffineMatrixFn.constant(Bu),
        Cp=AffineMatrixFn.constant(Cp),
        Cv=AffineMatrixFn.constant(np.zeros((2, n))),
        d=2,
    )


def gen_random_structured(seed, n=30, m=2, p=2, d=2, kind="mixed"):
    """Well-conditioned random structured system for property tests.

    The pencil is ``s*I + A`` plus kind-dependent parametric terms; the
    constant part is shifted to diagonal dominance with margin >= 0.5
    against the worst-case magnitudes of every other term over the unit
    parameter box, so the pencil stays nonsingular on the closed right half
    plane (where all test points are drawn).

    Kinds: 'polynomial' adds parameter-scaled constant terms, 'delay' adds a
    ``mu * exp(-s)`` term, 'parametric-bilinear' puts the parameters into
    the couplings only, 'mixed' combines all of it with a trigonometric
    parameter coefficient.
    """
    if kind not in ("polynomial", "delay", "parametric-bilinear", "mixed"):
        raise ValueError(f"unknown random system kind {kind!r}")
    if min(n, m, p, d) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    scale = 0.3 / np.sqrt(n)

    def rand(rows, cols):
        return rng.uniform(-1.0, 1.0, size=(rows, cols)) * scale

    A0 = rand(n, n)
    k_terms = [(ScalarFn.s_power(1), np.eye(n))]
    extra = []
    if kind in ("polynomial", "mixed"):
        extra.append((ScalarFn.mu_power(0), rand(n, n)))
        if d > 1:
            extra.append((ScalarFn.mu_power(1), rand(n, n)))
    if kind in ("delay", "mixed"):
        extra.append((ScalarFn.mu_power(0) * ScalarFn.exponential(-1.0), rand(n, n)))
    if kind == "mixed":
        extra.append((ScalarFn.mu_cos(1.0, min(1, d - 1)), rand(n, n)))

    # diagonal shift: dominance margin 0.5 against all terms at |coeff| <= 1
    # over the unit parameter box and |exp(-s)| <= 1 for Re s >= 0
    budget = np.abs(A0).sum(axis=1)
    for _, mat in extra:
        budget += np.abs(mat).sum(axis=1)
    shift = np.diag(budget + 0.5)
    k_terms.append((ScalarFn.const(1.0), A0 + shift))
    k_terms.extend(extra)
    K = AffineMatrixFn(k_terms)

    N = []
    for j in range(m):
        base = rand(n, n)
        if kind in ("parametric-bilinear", "mixed"):
            N.append(AffineMatrixFn([
                (ScalarFn.const(1.0), base),
                (ScalarFn.mu_power(j % d), rand(n, n)),
            ]))
        else:
            N.append(AffineMatrixFn.constant(base))
    B = AffineMatrixFn.constant(rng.uniform(-1.0, 1.0, size=(n, m)))
    C = AffineMatrixFn.constant(rng.uniform(-1.0, 1.0, size=(p, n)))
    return StructuredSystem(C=C, K=K, B=B, N=N, d=d, structure="custom")


BENCHMARKS = {
    "heated-rod-delay": gen_heated_rod_delay,
    "msd-chain": gen_msd_chain,
    "random": gen_random_structured,
}


def make_benchmark(config):
    """Instantiate a benchmark system from a :class:`BenchmarkConfig`."""
    if config.benchmark == "heated-rod-delay":
        return gen_heated_rod_delay(n=config.n, **config.params)
    if config.benchmark == "msd-chain":
        return gen_msd_chain(n=config.n, **config.params)
    if config.benchmark == "random":
        return gen_random_structured(seed=config.seed, n=config.n, **config.params)
    raise ValueError(f"unknown benchmark {config.benchmark!r}")
