"""Numerical verification of interpolation conditions and error sweeps.

Given a full system and a reduced one produced from an
:class:`~pbmor.mor.InterpolationSpec`, the checkers enumerate every kernel
condition the construction enforces, evaluate both models there, and record
absolute and relative deviations:

* value conditions -- input-side chain prefixes, output-side chain suffixes,
  and the mixed concatenations of an input prefix with an output suffix;
* derivative conditions -- the frequency-Hermite variants, analytic up to
  total order 2 and through Richardson-refined central differences beyond;
* parameter-gradient conditions of identical-chain two-sided reductions,
  cross-checked against central differences in the parameters.

Error sweeps reproduce the benchmark error measures: relative kernel errors
over logarithmic frequency-parameter grids and relative output errors over
matched time grids, with a flagged absolute fallback where the reference is
numerically zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tf import (MAX_ANALYTIC_ORDER, eval_transfer, eval_transfer_deriv,
                 eval_transfer_param_grad)

__all__ = [
    "ConditionRecord",
    "VerificationReport",
    "SweepResult",
    "check_lagrange",
    "check_hermite",
    "check_param_gradient",
    "error_sweep_freq",
    "error_sweep_time",
]

REL_FLOOR = 1e-300
# grid nodes whose reference magnitude falls below this times the grid
# maximum are reported as absolute errors and flagged
ZERO_REFERENCE_REL = 1e-12


def _relative(full, reduced):
    dev = np.linalg.norm(np.atleast_1d(full - reduced))
    ref = max(np.linalg.norm(np.atleast_1d(full)), REL_FLOOR)
    return dev, dev / ref


@dataclass
class ConditionRecord:
    condition_id: str
    kind: str
    points: tuple
    mu: tuple
    orders: tuple | None
    full_norm: float
    reduced_norm: float
    abs_dev: float
    rel_dev: float
    tol: float
    passed: bool
    guaranteed: bool = True
    zero_reference: bool = False
    note: str = ""


@dataclass
class VerificationReport:
    records: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, record):
        if any(r.condition_id == record.condition_id for r in self.records):
            raise ValueError(f"duplicate condition id {record.condition_id}")
        self.records.append(record)

    @property
    def all_passed(self):
        return all(r.passed for r in self.records if r.guaranteed)

    @property
    def max_rel_dev(self):
        devs = [r.rel_dev for r in self.records if r.guaranteed and not r.zero_reference]
        return max(devs) if devs else 0.0

    def summary(self):
        by_kind = {}
        for r in self.records:
            if r.guaranteed and not r.zero_reference:
                by_kind.setdefault(r.kind, []).append(r.rel_dev)
        return {
            "conditions": len(self.records),
            "guaranteed": sum(r.guaranteed for r in self.records),
            "zero_reference": sum(r.zero_reference for r in self.records),
            "passed": self.all_passed,
            "max_rel_dev": self.max_rel_dev,
            "max_rel_dev_by_kind": {k: max(v) for k, v in sorted(by_kind.items())},
        }

    def apply_zero_reference_policy(self):
        """Switch conditions with a numerically zero reference to absolute checks.

        A condition whose reference norm falls below 1e-12 of the largest
        reference of its kind carries no meaningful relative scale (the
        kernel is numerically zero there); it passes when its absolute
        deviation is below tol times that kind-wide scale, mirroring the
        flagged-absolute rule of the error sweeps.
        """
        scale_by_kind = {}
        for r in self.records:
            if math.isfinite(r.full_norm):
                scale_by_kind[r.kind] = max(scale_by_kind.get(r.kind, 0.0), r.full_norm)
        for r in self.records:
            scale = scale_by_kind.get(r.kind, 0.0)
            if (scale > 0 and math.isfinite(r.full_norm)
                    and r.full_norm <= ZERO_REFERENCE_REL * scale):
                r.zero_reference = True
                r.passed = bool(r.abs_dev <= r.tol * scale)
                r.note = (r.note + "; " if r.note else "") + "zero reference: absolute check"
        return self

    def to_dict(self):
        return {
            "summary": self.summary(),
            "notes": list(self.notes),
            "records": [
                {
                    "id": r.condition_id,
                    "kind": r.kind,
                    "points": [[s.real, s.imag] for s in r.points],
                    "mu": list(r.mu),
                    "orders": list(r.orders) if r.orders is not None else None,
                    "full_norm": r.full_norm,
                    "reduced_norm": r.reduced_norm,
                    "abs_dev": r.abs_dev,
                    "rel_dev": r.rel_dev,
                    "tol": r.tol,
                    "passed": r.passed,
                    "guaranteed": r.guaranteed,
                    "zero_reference": r.zero_reference,
                    "note": r.note,
                }
                for r in self.records
            ],
        }


def _record(report, cid, kind, points, mu, orders, full, red, tol,
            guaranteed=True, note=""):
    abs_dev, rel_dev = _relative(full, red)
    report.add(ConditionRecord(
        condition_id=cid,
        kind=kind,
        points=tuple(points),
        mu=tuple(mu),
        orders=tuple(orders) if orders is not None else None,
        full_norm=float(np.linalg.norm(np.atleast_1d(full))),
        reduced_norm=float(np.linalg.norm(np.atleast_1d(red))),
        abs_dev=float(abs_dev),
        rel_dev=float(rel_dev),
        tol=tol,
        passed=bool(rel_dev <= tol),
        guaranteed=guaranteed,
        note=note,
    ))


def _eval_both(full, reduced, points, mu, caches):
    full_cache, red_cache = caches
    G = eval_transfer(full, points, mu, cache=full_cache)
    Gr = eval_transfer(reduced.system, points, mu, cache=red_cache)
    return G, Gr


def check_lagrange(full, reduced, spec, tol=1e-8, caches=None, max_level=None):
    """Check every kernel-value condition the spec construction enforces.

    Input-side chains give conditions at their prefixes, output-side chains
    at their suffixes, and two-sided reductions additionally at every
    concatenation of an input prefix with an output suffix (capped at
    `max_level` when given).  Evaluation failures are recorded per
    condition, not raised.
    """
    caches = caches or (None, None)
    report = VerificationReport()
    two_sided = spec.sidedness in ("two-sided", "two-sided-identical")
    has_v = spec.sidedness != "one-sided-W"
    has_w = spec.sidedness != "one-sided-V"
    if not has_w:
        report.notes.append("one-sided reduction (W = V): output-side and mixed "
                            "value conditions are not enforced")
    if not has_v:
        report.notes.append("one-sided reduction (V = W): input-side and mixed "
                            "value conditions are not enforced")

    for mi, mu in enumerate(spec.mu_points):
        if has_v:
            for ci, chain in enumerate(spec.v_chains):
                for level in range(1, chain.depth + 1):
                    pts = chain.points[:level]
                    cid = f"value:input:mu{mi}:chain{ci}:level{level}"
                    _check_value(report, cid, "value-input", full, reduced, pts, mu,
                                 tol, caches)
        if has_w:
            for ci, chain in enumerate(spec.w_chains):
                for level in range(1, chain.depth + 1):
                    pts = chain.points[chain.depth - level:]
                    cid = f"value:output:mu{mi}:chain{ci}:level{level}"
                    _check_value(report, cid, "value-output", full, reduced, pts, mu,
                                 tol, caches)
        if two_sided:
            for vi, vchain in enumerate(spec.v_chains):
                for wi, wchain in enumerate(spec.w_chains):
                    for q in range(1, vchain.depth + 1):
                        for eta in range(1, wchain.depth + 1):
                            if max_level is not None and q + eta > max_level:
                                continue
                            pts = vchain.points[:q] + wchain.points[wchain.depth - eta:]
                            cid = (f"value:mixed:mu{mi}:v{vi}w{wi}:q{q}eta{eta}")
                            _check_value(report, cid, "value-mixed", full, reduced,
                                         pts, mu, tol, caches)
    return report.apply_zero_reference_policy()


def _check_value(report, cid, kind, full, reduced, pts, mu, tol, caches):
    try:
        G, Gr = _eval_both(full, reduced, pts, mu, caches)
    except Exception as exc:  # recorded, not fatal
        report.add(ConditionRecord(
            condition_id=cid, kind=kind, points=tuple(pts), mu=tuple(mu),
            orders=None, full_norm=math.nan, reduced_norm=math.nan,
            abs_dev=math.inf, rel_dev=math.inf, tol=tol, passed=False,
            note=f"evaluation failed: {exc}"))
        return
    _record(report, cid, kind, pts, mu, None, G, Gr, tol)


def richardson_freq_deriv(sys, points, mu, orders, cache=None, refinements=2,
                          base_step=None):
    """Mixed frequency partial by Richardson-refined central differences.

    Serves derivative orders beyond the analytic cap.  The base step is
    ``1e-5 * (1 + |s_i|)`` per variable for one total order; repeated
    differencing amplifies rounding noise like h^-total, so higher totals
    widen the step toward the classical optimum eps^(1/(total+2)).
    """
    points = tuple(complex(s) for s in points)
    orders = tuple(int(j) for j in orders)
    total = sum(orders)
    if base_step is None:
        if total <= 1:
            base_step = 1e-5
        else:
            # balance O(h^(2(R+1))) truncation against eps/h^total rounding
            # noise at the smallest refined step
            base_step = (2.0 ** refinements
                         * (1e-16) ** (1.0 / (2.0 * (refinements + 1) + total)))

    def helper(pts, remaining):
        for idx, j in enumerate(remaining):
            if j > 0:
                break
        else:
            return eval_transfer(sys, pts, mu, cache=cache)
        h0 = base_step * (1.0 + abs(points[idx]))
        lowered = remaining[:idx] + (j - 1,) + remaining[idx + 1:]

        def central(h):
            up = pts[:idx] + (pts[idx] + h,) + pts[idx + 1:]
            dn = pts[:idx] + (pts[idx] - h,) + pts[idx + 1:]
            return (helper(up, lowered) - helper(dn, lowered)) / (2.0 * h)

        # Richardson extrapolation of the O(h^2) central difference
        table = [central(h0 / 2**r) for r in range(refinements + 1)]
        for level in range(1, refinements + 1):
            factor = 4.0**level
            table = [(factor * table[i + 1] - table[i]) / (factor - 1.0)
                     for i in range(len(table) - 1)]
        return table[0]

    return helper(points, orders)


def _deriv_eval(sys, points, mu, orders, cache):
    if sum(orders) <= MAX_ANALYTIC_ORDER:
        return eval_transfer_deriv(sys, points, mu, orders, cache=cache), "analytic"
    return richardson_freq_deriv(sys, points, mu, orders, cache=cache), "fd"


def check_hermite(full, reduced, spec, tol=1e-6, caches=None,
                  include_mixed=True, max_level=None):
    """Check the frequency-derivative conditions of Hermite constructions.

    For an input chain with orders (l_1, .., l_k) the level-q conditions
    carry full orders on the first q-1 variables and orders 0..l_q on the
    last; output chains mirror this on suffixes, and two-sided reductions
    add the concatenated conditions.  Derivatives with total order above the
    analytic cap are evaluated by Richardson central differences on both
    models.
    """
    caches = caches or (None, None)
    report = VerificationReport()
    has_v = spec.sidedness != "one-sided-W"
    has_w = spec.sidedness != "one-sided-V"
    two_sided = spec.sidedness in ("two-sided", "two-sided-identical")

    for mi, mu in enumerate(spec.mu_points):
        if has_v:
            for ci, chain in enumerate(spec.v_chains):
                for q in range(1, chain.depth + 1):
                    pts = chain.points[:q]
                    base = chain.orders[: q - 1]
                    for j in range(chain.orders[q - 1] + 1):
                        orders = base + (j,)
                        cid = (f"deriv:input:mu{mi}:chain{ci}:level{q}:order{j}")
                        _check_deriv(report, cid, "deriv-input", full, reduced,
                                     pts, mu, orders, tol, caches)
        if has_w:
            for ci, chain in enumerate(spec.w_chains):
                theta = chain.depth
                for eta in range(1, theta + 1):
                    pts = chain.points[theta - eta:]
                    tail = chain.orders[theta - eta + 1:]
                    for j in range(chain.orders[theta - eta] + 1):
                        orders = (j,) + tail
                        cid = (f"deriv:output:mu{mi}:chain{ci}:level{eta}:order{j}")
                        _check_deriv(report, cid, "deriv-output", full, reduced,
                                     pts, mu, orders, tol, caches)
        if two_sided and include_mixed:
            for vi, vchain in enumerate(spec.v_chains):
                for wi, wchain in enumerate(spec.w_chains):
                    theta = wchain.depth
                    for q in range(1, vchain.depth + 1):
                        for eta in range(1, theta + 1):
                            if max_level is not None and q + eta > max_level:
                                continue
                            pts = vchain.points[:q] + wchain.points[theta - eta:]
                            vbase = vchain.orders[: q - 1]
                            wtail = wchain.orders[theta - eta + 1:]
                            for jq in range(vchain.orders[q - 1] + 1):
                                for iw in range(wchain.orders[theta - eta] + 1):
                                    orders = vbase + (jq,) + (iw,) + wtail
                                    cid = (f"deriv:mixed:mu{mi}:v{vi}w{wi}:"
                                           f"q{q}eta{eta}:jv{jq}jw{iw}")
                                    _check_deriv(report, cid, "deriv-mixed", full,
                                                 reduced, pts, mu, orders, tol,
                                                 caches)
    return report.apply_zero_reference_policy()


def _check_deriv(report, cid, kind, full, reduced, pts, mu, orders, tol, caches):
    try:
        G, how = _deriv_eval(full, pts, mu, orders, caches[0])
        Gr, _ = _deriv_eval(reduced.system, pts, mu, orders, caches[1])
    except Exception as exc:
        report.add(ConditionRecord(
            condition_id=cid, kind=kind, points=tuple(pts), mu=tuple(mu),
            orders=tuple(orders), full_norm=math.nan, reduced_norm=math.nan,
            abs_dev=math.inf, rel_dev=math.inf, tol=tol, passed=False,
            note=f"evaluation failed: {exc}"))
        return
    _record(report, cid, kind, pts, mu, orders, G, Gr, tol, note=how)


def check_param_gradient(full, reduced, spec, tol=1e-7, fd_tol=1e-6,
                         fd_step=1e-2, caches=None):
    """Check parameter-gradient matching of identical-chain reductions.

    For each chain the gradient condition is guaranteed at the full chain
    tuple; uniform (repeated-point) chains carry it down to every prefix
    level.  Each gradient is additionally cross-checked against central
    finite differences in the parameters on the full model.  For other
    sidedness modes the records are emitted as informational
    ("not guaranteed") and do not count toward pass/fail.
    """
    caches = caches or (None, None)
    report = VerificationReport()
    guaranteed_mode = spec.sidedness == "two-sided-identical"
    if not guaranteed_mode:
        report.notes.append(
            f"sidedness {spec.sidedness!r} does not guarantee parameter-gradient "
            "matching; gradient records are informational")
    for mi, mu in enumerate(spec.mu_points):
        for ci, chain in enumerate(spec.v_chains):
            levels = range(1, chain.depth + 1) if chain.is_uniform else (chain.depth,)
            for level in levels:
                pts = chain.points[:level]
                try:
                    g_full = eval_transfer_param_grad(full, pts, mu, cache=caches[0])
                    g_red = eval_transfer_param_grad(reduced.system, pts, mu,
                                                     cache=caches[1])
                    g_fd = _param_grad_fd(full, pts, mu, fd_step, caches[0])
                except Exception as exc:
                    report.add(ConditionRecord(
                        condition_id=f"pgrad:mu{mi}:chain{ci}:level{level}",
                        kind="param-grad", points=tuple(pts), mu=tuple(mu),
                        orders=None, full_norm=math.nan, reduced_norm=math.nan,
                        abs_dev=math.inf, rel_dev=math.inf, tol=tol, passed=False,
                        guaranteed=guaranteed_mode,
                        note=f"evaluation failed: {exc}"))
                    continue
                for i in range(full.d):
                    cid = f"pgrad:mu{mi}:chain{ci}:level{level}:param{i}"
                    _record(report, cid, "param-grad", pts, mu, None,
                            g_full[i], g_red[i], tol, guaranteed=guaranteed_mode)
                    dev, rel = _relative(g_full[i], g_fd[i])
                    report.add(ConditionRecord(
                        condition_id=cid + ":fd",
                        kind="param-grad-fd", points=tuple(pts), mu=tuple(mu),
                        orders=None,
                        full_norm=float(np.linalg.norm(np.atleast_1d(g_full[i]))),
                        reduced_norm=float(np.linalg.norm(np.atleast_1d(g_fd[i]))),
                        abs_dev=float(dev), rel_dev=float(rel), tol=fd_tol,
                        passed=bool(rel <= fd_tol), guaranteed=guaranteed_mode,
                        note="analytic gradient vs central differences"))
    return report.apply_zero_reference_policy()


def _param_grad_fd(sys, pts, mu, step, cache, refinements=2):
    """Richardson-refined central differences of the kernel in each parameter.

    The base step scales with the parameter magnitude; refinement suppresses
    the O(h^2) truncation term, which matters where the gradient is orders
    of magnitude below the kernel itself.
    """
    grads = []
    mu = np.asarray(mu, dtype=float)
    for i in range(sys.d):
        h0 = step * (1.0 + abs(mu[i]))

        def central(h):
            up = mu.copy()
            dn = mu.copy()
            up[i] += h
            dn[i] -= h
            return (eval_transfer(sys, pts, tuple(up), cache=cache)
                    - eval_transfer(sys, pts, tuple(dn), cache=cache)) / (2 * h)

        table = [central(h0 / 2**r) for r in range(refinements + 1)]
        for level in range(1, refinements + 1):
            factor = 4.0**level
            table = [(factor * table[idx + 1] - table[idx]) / (factor - 1.0)
                     for idx in range(len(table) - 1)]
        grads.append(table[0])
    return grads


@dataclass
class SweepResult:
    """Tabulated sweep errors plus their maxima.

    `rows` holds one tuple per grid node; `header` names the columns.
    `max_rel` is the maximum over nodes with a trustworthy reference;
    nodes with a numerically zero reference appear in `flagged` with their
    absolute error instead.
    """

    header: tuple
    rows: list
    max_rel: float
    max_abs: float
    flagged: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(self.header) + "\n")
            for row in self.rows:
                fh.write(",".join(_csv_cell(v) for v in row) + "\n")


def _csv_cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _norm_value(G, scalar):
    if scalar:
        return abs(complex(G[0, 0]))
    return float(np.linalg.norm(G, ord=2))


def error_sweep_freq(full, reduced, omega_grid, mu_grid, level=1, caches=None):
    """Relative kernel error over a frequency (pair) x parameter grid.

    Level 1 sweeps ``i*omega``, level 2 the full 2-D grid of imaginary pairs.
    SISO errors use magnitudes, MIMO errors spectral norms.  Nodes whose
    reference magnitude is below 1e-12 of the grid maximum are excluded from
    the relative maximum and reported as flagged absolute errors.
    """
    if level not in (1, 2):
        raise ValueError("frequency error sweeps support levels 1 and 2")
    caches = caches or (None, None)
    scalar = full.m == 1 and full.p == 1
    omega_grid = [float(w) for w in omega_grid]
    mu_grid = [tuple(float(v) for v in mu) for mu in mu_grid]
    entries = []
    if level == 1:
        nodes = [(w,) for w in omega_grid]
    else:
        nodes = [(w1, w2) for w1 in omega_grid for w2 in omega_grid]
    for mu in mu_grid:
        for node in nodes:
            pts = tuple(1j * w for w in node)
            G = eval_transfer(full, pts, mu, cache=caches[0])
            Gr = eval_transfer(reduced.system, pts, mu, cache=caches[1])
            ref = _norm_value(G, scalar)
            dev = _norm_value(G - Gr, scalar)
            entries.append((node, mu, ref, dev))
    return _tabulate_sweep(entries, level, full.d)


def _tabulate_sweep(entries, level, d):
    grid_max = max((ref for _, _, ref, _ in entries), default=0.0)
    floor = ZERO_REFERENCE_REL * grid_max
    header = tuple([f"omega_{i + 1}" for i in range(level)]
                   + [f"mu_{i + 1}" for i in range(d)]
                   + ["reference_norm", "abs_error", "rel_error", "flag"])
    rows = []
    flagged = []
    max_rel = 0.0
    max_abs = 0.0
    for node, mu, ref, dev in entries:
        max_abs = max(max_abs, dev)
        zero_ref = ref <= floor
        rel = dev / max(ref, REL_FLOOR)
        flag = "zero-reference" if zero_ref else ""
        if zero_ref:
            flagged.append((node, mu, dev))
        else:
            max_rel = max(max_rel, rel)
        rows.append(tuple(node) + tuple(mu) + (ref, dev, rel, flag))
    return SweepResult(header=header, rows=rows, max_rel=max_rel,
                       max_abs=max_abs, flagged=flagged)


def error_sweep_time(full, reduced, make_problem, mu_grid):
    """Relative output error of matched full/reduced simulations.

    `make_problem(system, mu)` builds the simulation task; both models run
    on identical grids.  Multi-output errors take, per time, the maximum
    over output channels of the per-channel relative error; channels with a
    numerically zero reference at a node fall back to flagged absolute
    errors, mirroring the frequency sweeps.
    """
    from .sim import simulate

    mu_grid = [tuple(float(v) for v in mu) for mu in mu_grid]
    rows = []
    flagged = []
    max_rel = 0.0
    max_abs = 0.0
    header = None
    for mu in mu_grid:
        res_full = simulate(make_problem(full, mu))
        res_red = simulate(make_problem(reduced.system, mu))
        y, yr = res_full.y, res_red.y
        if y.shape != yr.shape:
            raise ValueError("full and reduced trajectories have different shapes")
        p = y.shape[0]
        if header is None:
            header = tuple(["t"] + [f"mu_{i + 1}" for i in range(len(mu))]
                           + [f"rel_error_y{j + 1}" for j in range(p)]
                           + ["rel_error", "flag"])
        ref_floor = ZERO_REFERENCE_REL * max(np.abs(y).max(), REL_FLOOR)
        for idx, t in enumerate(res_full.t):
            rels = []
            flag = ""
            for j in range(p):
                ref = abs(y[j, idx])
                dev = abs(y[j, idx] - yr[j, idx])
                max_abs = max(max_abs, dev)
                if ref <= ref_floor:
                    flag = "zero-reference"
                    flagged.append((float(t), mu, j, dev))
                    rels.append(math.nan)
                else:
                    rels.append(dev / ref)
            finite = [r for r in rels if not math.isnan(r)]
            combined = max(finite) if finite else math.nan
            if finite:
                max_rel = max(max_rel, combined)
            rows.append((float(t),) + mu + tuple(rels) + (combined, flag))
    return SweepResult(header=header or ("t",), rows=rows, max_rel=max_rel,
                       max_abs=max_abs, flagged=flagged)
