"""Projection bases for structured matrix interpolation and the reduction.

The input-side space for one frequency chain (sigma_1, .., sigma_k) and one
parameter point collects the forward blocks

    V_1 = K(sigma_1)^{-1} B(sigma_1),
    V_j = K(sigma_j)^{-1} [N_1(sigma_{j-1}) V_{j-1}, .., N_m(sigma_{j-1}) V_{j-1}],

the output-side space the adjoint blocks

    W_1 = K(ς_θ)^{-H} C(ς_θ)^H,
    W_i = K(ς_{θ-i+1})^{-H} [N_1(ς_{θ-i+1})^H W_{i-1}, .., N_m(ς_{θ-i+1})^H W_{i-1}],

and the Hermite variants additionally span the frequency derivatives of
those chains up to the requested per-level orders, computed through the
Leibniz recurrences of :func:`pbmor.matfun.deriv_action`.  Any projection
pair (V, W) containing those spans reproduces the corresponding kernel
values (and derivatives) of the full model; using the same chain on both
sides also matches the parameter gradient at the interpolation data without
ever computing it.

Spaces for several parameter points are concatenated, orthonormalized with a
rank-revealing SVD, and optionally realified (conjugate-pair columns replaced
by real and imaginary parts) so that real systems get real reduced matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .matfun import AffineMatrixFn, StructuredSystem, dense, solve_deriv_action, deriv_action
from .tf import MAX_RESULT_ENTRIES

__all__ = [
    "Chain",
    "InterpolationSpec",
    "ReducedSystem",
    "build_V_lagrange",
    "build_W_lagrange",
    "build_V_hermite",
    "build_W_hermite",
    "assemble_basis",
    "project",
    "reduce_system",
]

SIDEDNESS = ("one-sided-V", "one-sided-W", "two-sided", "two-sided-identical")


@dataclass(frozen=True)
class Chain:
    """An ordered tuple of frequency points with per-level derivative orders."""

    points: tuple
    orders: tuple = None

    def __post_init__(self):
        points = tuple(complex(s) for s in self.points)
        if not points:
            raise ValueError("a chain needs at least one frequency point")
        object.__setattr__(self, "points", points)
        orders = self.orders
        if orders is None:
            orders = (0,) * len(points)
        else:
            orders = tuple(int(j) for j in orders)
        if len(orders) != len(points):
            raise ValueError("one derivative order per chain point is required")
        if any(j < 0 for j in orders):
            raise ValueError("derivative orders must be non-negative")
        object.__setattr__(self, "orders", orders)

    @property
    def depth(self):
        return len(self.points)

    @property
    def is_lagrange(self):
        return not any(self.orders)

    @property
    def is_uniform(self):
        return len(set(self.points)) == 1

    def conjugate(self):
        return Chain(tuple(s.conjugate() for s in self.points), self.orders)


@dataclass(frozen=True)
class InterpolationSpec:
    """Interpolation data: parameter points, frequency chains, sidedness.

    `v_chains` drive the input-side space, `w_chains` the output side; with
    sidedness 'two-sided-identical' the output side reuses the input chains
    (and the parameter gradient is matched at the chain data).  `realify`
    may be True, False or None for the automatic rule: on exactly when every
    chain set is closed under conjugation, so real systems keep real reduced
    matrices.
    """

    mu_points: tuple
    v_chains: tuple = ()
    w_chains: tuple = ()
    sidedness: str = "two-sided-identical"
    realify: bool | None = None
    rank_tol: float = 1e-12

    def __post_init__(self):
        mu_points = tuple(tuple(float(v) for v in mu) for mu in self.mu_points)
        if not mu_points:
            raise ValueError("at least one parameter point is required")
        if len({len(mu) for mu in mu_points}) != 1:
            raise ValueError("parameter points must share one dimension")
        object.__setattr__(self, "mu_points", mu_points)
        if self.sidedness not in SIDEDNESS:
            raise ValueError(f"unknown sidedness {self.sidedness!r}")
        v_chains = tuple(self.v_chains)
        w_chains = tuple(self.w_chains)
        if self.sidedness == "two-sided-identical":
            if w_chains and w_chains != v_chains:
                raise ValueError("identical point sets require equal V- and W-chains")
            w_chains = v_chains
        if self.sidedness in ("one-sided-V", "two-sided", "two-sided-identical") and not v_chains:
            raise ValueError("V-side chains are required for this sidedness")
        if self.sidedness in ("one-sided-W", "two-sided") and not w_chains:
            raise ValueError("W-side chains are required for this sidedness")
        object.__setattr__(self, "v_chains", v_chains)
        object.__setattr__(self, "w_chains", w_chains)
        if self.rank_tol <= 0:
            raise ValueError("rank tolerance must be positive")

    @classmethod
    def from_point_set(cls, points, mu_points, depth=1, orders=0,
                       sidedness="two-sided-identical", realify=None,
                       rank_tol=1e-12):
        """Expand an unordered point set into repeated-point chains.

        Each point sigma becomes one chain (sigma, .., sigma) of the given
        depth; this deterministic rule enforces all kernel levels up to
        `depth` at every point and keeps sub-chain data available at each
        point, which also carries the parameter-gradient matching down to
        every level.  `orders` may be a single int (broadcast) or a
        per-level tuple.
        """
        if isinstance(orders, int):
            orders = (orders,) * depth
        chains = tuple(Chain((complex(s),) * depth, tuple(orders)) for s in points)
        return cls(mu_points=tuple(mu_points), v_chains=chains, w_chains=chains,
                   sidedness=sidedness, realify=realify, rank_tol=rank_tol)

    @property
    def param_dim(self):
        return len(self.mu_points[0])

    def chains_conjugation_closed(self):
        for chains in (self.v_chains, self.w_chains):
            chain_set = set(chains)
            if any(c.conjugate() not in chain_set for c in chains):
                return False
        return True

    def to_dict(self):
        return {
            "mu_points": [list(mu) for mu in self.mu_points],
            "v_chains": [{"points": [[s.real, s.imag] for s in c.points],
                          "orders": list(c.orders)} for c in self.v_chains],
            "w_chains": [{"points": [[s.real, s.imag] for s in c.points],
                          "orders": list(c.orders)} for c in self.w_chains],
            "sidedness": self.sidedness,
            "realify": self.realify,
            "rank_tol": self.rank_tol,
        }

    @classmethod
    def from_dict(cls, data):
        def chains(items):
            return tuple(Chain(tuple(complex(re, im) for re, im in c["points"]),
                               tuple(c["orders"])) for c in items)

        return cls(
            mu_points=tuple(tuple(mu) for mu in data["mu_points"]),
            v_chains=chains(data.get("v_chains", [])),
            w_chains=chains(data.get("w_chains", [])),
            sidedness=data.get("sidedness", "two-sided-identical"),
            realify=data.get("realify"),
            rank_tol=data.get("rank_tol", 1e-12),
        )


@dataclass
class ReducedSystem:
    """A reduced structured system together with the bases that produced it."""

    system: StructuredSystem
    V: np.ndarray
    W: np.ndarray
    spec: InterpolationSpec | None = None
    realified: bool = False
    notes: tuple = field(default_factory=tuple)

    @property
    def order(self):
        return self.V.shape[1]


def _guard_width(sys, depth, max_entries):
    if sys.n * sys.m**depth > max_entries:
        raise ValueError(
            f"chain depth {depth} needs blocks with n*m^k = {sys.n * sys.m ** depth} "
            f"entries, exceeding the cap of {max_entries}"
        )


def build_V_hermite(sys, chain, orders, mu, cache=None,
                    max_entries=MAX_RESULT_ENTRIES):
    """Input-side blocks spanning chain values and frequency derivatives.

    Returns the blocks for every level q and order j <= orders[q-1], in
    (level, order) lexicographic sequence.  Level q >= 2 applies the full
    previous-level order at the chain junction, so the spanned derivatives
    are exactly the mixed partials with complete orders below the level
    being varied.
    """
    sys.check_mu(mu)
    chain = tuple(complex(s) for s in chain)
    orders = tuple(int(j) for j in orders)
    if len(orders) != len(chain):
        raise ValueError("one derivative order per chain point is required")
    _guard_width(sys, len(chain), max_entries)
    levels = solve_deriv_action(sys.K, sys.B, chain[0], mu, orders[0], cache=cache)
    blocks = list(levels)
    for q in range(2, len(chain) + 1):
        s_prev = chain[q - 2]
        prev_order = orders[q - 2]
        S = None
        for a in range(prev_order + 1):
            stacked = np.hstack([
                dense(Nj.eval_deriv(s_prev, mu, s_order=a)) @ levels[prev_order - a]
                for Nj in sys.N
            ])
            part = math.comb(prev_order, a) * stacked
            S = part if S is None else S + part
        levels = deriv_action(sys.K, [S] + [None] * orders[q - 1], chain[q - 1], mu,
                              cache=cache)
        blocks.extend(levels)
    return blocks


def build_V_lagrange(sys, chain, mu, cache=None, max_entries=MAX_RESULT_ENTRIES):
    """Input-side value blocks [V_1, .., V_k] for one frequency chain."""
    return build_V_hermite(sys, chain, (0,) * len(chain), mu, cache=cache,
                           max_entries=max_entries)


def build_W_hermite(sys, chain, orders, mu, cache=None,
                    max_entries=MAX_RESULT_ENTRIES):
    """Output-side blocks; adjoint mirror of :func:`build_V_hermite`.

    The chain is consumed back to front: the first block sits at the last
    chain point, deeper blocks move toward the chain head, matching the
    index pattern of the enforced output-side conditions.
    """
    sys.check_mu(mu)
    chain = tuple(complex(s) for s in chain)
    orders = tuple(int(j) for j in orders)
    theta = len(chain)
    if len(orders) != theta:
        raise ValueError("one derivative order per chain point is required")
    _guard_width(sys, theta, max_entries)
    levels = solve_deriv_action(sys.K, sys.C, chain[theta - 1], mu,
                                orders[theta - 1], adjoint=True, cache=cache)
    blocks = list(levels)
    for eta in range(2, theta + 1):
        point = chain[theta - eta]
        own_order = orders[theta - eta]
        prev_full = levels[orders[theta - eta + 1]]
        rhs = []
        for b in range(own_order + 1):
            rhs.append(np.hstack([
                dense(Nj.eval_deriv(point, mu, s_order=b)).conj().T @ prev_full
                for Nj in sys.N
            ]))
        levels = deriv_action(sys.K, rhs, point, mu, adjoint=True, cache=cache)
        blocks.extend(levels)
    return blocks


def build_W_lagrange(sys, chain, mu, cache=None, max_entries=MAX_RESULT_ENTRIES):
    """Output-side value blocks [W_1, .., W_theta] for one frequency chain."""
    return build_W_hermite(sys, chain, (0,) * len(chain), mu, cache=cache,
                           max_entries=max_entries)


def assemble_basis(blocks, realify=False, rank_tol=1e-12):
    """Orthonormalize concatenated basis blocks with a rank-revealing cut.

    Columns are normalized before the SVD (shifts of very different
    magnitude otherwise let the relative tolerance discard valid
    directions); with `realify` each block contributes its real and
    imaginary parts instead.  Directions with relative singular value below
    `rank_tol` are discarded.  The output carries a fixed sign convention
    (largest-modulus entry real positive), so equal inputs give equal bases.
    """
    blocks = [np.atleast_2d(np.asarray(b)) for b in blocks]
    if not blocks:
        raise ValueError("no basis blocks given")
    rows = {b.shape[0] for b in blocks}
    if len(rows) != 1:
        raise ValueError(f"inconsistent block row counts: {sorted(rows)}")
    if realify:
        blocks = [part for b in blocks for part in (b.real, b.imag)]
    cols = []
    for b in blocks:
        norms = np.linalg.norm(b, axis=0)
        keep = norms > 0
        cols.append(b[:, keep] / norms[keep])
    stacked = np.hstack(cols) if cols else np.zeros((rows.pop(), 0))
    if stacked.shape[1] == 0:
        raise ValueError("all basis blocks are zero")
    U, sigma, _ = np.linalg.svd(stacked, full_matrices=False)
    rank = int(np.sum(sigma > rank_tol * sigma[0]))
    return _fix_signs(U[:, :rank])


def _fix_signs(U):
    out = U.copy()
    for col in range(out.shape[1]):
        idx = int(np.argmax(np.abs(out[:, col])))
        pivot = out[idx, col]
        if pivot != 0:
            out[:, col] *= np.conj(pivot) / abs(pivot)
    return out


def _extend_basis(U, extra_pool, r_target):
    """Deterministically pad an orthonormal basis to `r_target` columns."""
    n = U.shape[0]
    dtype = np.result_type(U.dtype, extra_pool.dtype)
    cols = [U.astype(dtype)]
    have = U.shape[1]
    for source in (extra_pool, np.eye(n)):
        for j in range(source.shape[1]):
            if have >= r_target:
                break
            v = source[:, j].astype(dtype)
            basis = np.hstack(cols)
            v = v - basis @ (basis.conj().T @ v)
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                cols.append((v / norm)[:, None])
                have += 1
    out = np.hstack(cols)
    if out.shape[1] < r_target:
        raise ValueError("could not extend the basis to the requested size")
    return out


def project(sys, V, W, spec=None, realified=False, notes=()):
    """Petrov-Galerkin projection keeping every coefficient function.

    Every affine term of every member is projected term-wise (K_j -> W^H K_j V,
    B_j -> W^H B_j, C_j -> C_j V, N_j -> W^H N_j V), so the reduced system has
    the exact same frequency and parameter dependence as the original.
    """
    V = np.atleast_2d(np.asarray(V))
    W = np.atleast_2d(np.asarray(W))
    if V.shape[0] != sys.n or W.shape[0] != sys.n:
        raise ValueError("basis row counts must equal the system order")
    if V.shape[1] != W.shape[1]:
        raise ValueError("V and W must have the same number of columns")
    second_order = None
    if sys.second_order is not None:
        so = sys.second_order
        second_order = {
            "M": so["M"].project(W, V),
            "D": so["D"].project(W, V),
            "K": so["K"].project(W, V),
            "Np": tuple(p.project(W, V) for p in so["Np"]),
            "Nv": tuple(p.project(W, V) for p in so["Nv"]),
            "Bu": so["Bu"].project(W, None),
            "Cp": so["Cp"].project(None, V),
            "Cv": so["Cv"].project(None, V),
        }
    reduced = StructuredSystem(
        C=sys.C.project(None, V),
        K=sys.K.project(W, V),
        B=sys.B.project(W, None),
        N=[Nj.project(W, V) for Nj in sys.N],
        d=sys.d,
        structure=sys.structure,
        second_order=second_order,
        delay=sys.delay,
    )
    return ReducedSystem(system=reduced, V=V, W=W, spec=spec,
                         realified=realified, notes=tuple(notes))


def reduce_system(sys, spec, cache=None, max_entries=MAX_RESULT_ENTRIES):
    """Run the interpolatory reduction described by an InterpolationSpec.

    Builds per-(chain, parameter-point) blocks on the requested sides,
    concatenates them over all parameter points, orthonormalizes (with the
    realification rule), equalizes basis sizes, and projects.
    """
    notes = []
    need_v = spec.sidedness in ("one-sided-V", "two-sided", "two-sided-identical")
    need_w = spec.sidedness in ("one-sided-W", "two-sided", "two-sided-identical")

    realify = spec.realify
    conj_ok = spec.chains_conjugation_closed()
    real_mats = _all_members_real(sys)
    if realify is None:
        realify = conj_ok and real_mats
    elif realify and not (conj_ok and real_mats):
        realify = False
        notes.append("realification disabled: chains not conjugation-closed "
                     "or system matrices not real")

    v_blocks, w_blocks = [], []
    for mu in spec.mu_points:
        if need_v:
            for chain in spec.v_chains:
                v_blocks.extend(build_V_hermite(sys, chain.points, chain.orders, mu,
                                                cache=cache, max_entries=max_entries))
        if need_w:
            for chain in spec.w_chains:
                w_blocks.extend(build_W_hermite(sys, chain.points, chain.orders, mu,
                                                cache=cache, max_entries=max_entries))

    V = assemble_basis(v_blocks, realify=realify, rank_tol=spec.rank_tol) if need_v else None
    W = assemble_basis(w_blocks, realify=realify, rank_tol=spec.rank_tol) if need_w else None

    if spec.sidedness == "one-sided-V":
        W = V
    elif spec.sidedness == "one-sided-W":
        V = W
    elif V.shape[1] != W.shape[1]:
        # span containment is the only requirement, so the smaller basis is
        # padded with deterministic orthonormal directions
        r = max(V.shape[1], W.shape[1])
        if V.shape[1] < r:
            V = _extend_basis(V, _block_pool(v_blocks, realify), r)
            notes.append(f"input basis padded to r={r}")
        else:
            W = _extend_basis(W, _block_pool(w_blocks, realify), r)
            notes.append(f"output basis padded to r={r}")

    return project(sys, V, W, spec=spec, realified=realify, notes=notes)


def _block_pool(blocks, realify):
    bs = [np.atleast_2d(np.asarray(b)) for b in blocks]
    if realify:
        bs = [part for b in bs for part in (b.real, b.imag)]
    return np.hstack(bs)


def _all_members_real(sys):
    for F in (sys.C, sys.K, sys.B, *sys.N):
        for _, mat in F.terms:
            arr = mat.data if sps.issparse(mat) else np.asarray(mat)
            if np.iscomplexobj(arr):
                return False
    return True
