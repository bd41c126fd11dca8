"""Independent reference solvers used to cross-check the dual solver.

Two deliberately different routes to the same optimum: grid_search enumerates
every on-grid allocation of a tiny instance, primal_descent runs penalized
projected gradient directly on the primal. Neither touches the dual machinery,
so agreement between either of them and the dual solver is real evidence, not
an identity. Only the energy model itself is shared, since it defines the
problem rather than any way of solving it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import (
    LN2,
    BitAllocation,
    EnergyReport,
    comp_energy_slot,
    equal_allocation,
    evaluate,
    slot_gains,
    _comm_energy_arr,
)
from .scenario import Scenario, validate

__all__ = [
    "DescentConfig",
    "EnumerationLimitError",
    "InfeasibleGridError",
    "InfeasibleStartError",
    "grid_search",
    "primal_descent",
]


class EnumerationLimitError(RuntimeError):
    """The grid would generate more candidate tuples than the node budget."""


class InfeasibleGridError(RuntimeError):
    """No on-grid allocation satisfies causality and the cloudlet budget."""


class InfeasibleStartError(RuntimeError):
    """The equal-split start already breaks the cloudlet budget.

    Carries the offending candidate so callers can report what was tried.
    """

    def __init__(self, message: str, allocation: BitAllocation, report: EnergyReport):
        super().__init__(message)
        self.allocation = allocation
        self.report = report


def _grid_count(total_bits: float, grid_bits: float, label: str) -> int:
    steps = total_bits / grid_bits
    rounded = round(steps)
    if abs(steps - rounded) > 1e-9 * max(1.0, steps):
        raise ValueError(f"grid_bits must divide the {label} total ({total_bits} / {grid_bits})")
    return int(rounded)


def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer tuples of length `parts` summing to `total`,
    in lexicographic order."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for head in range(total + 1):
        tail = _compositions(total - head, parts - 1)
        block = np.empty((tail.shape[0], parts), dtype=np.int64)
        block[:, 0] = head
        block[:, 1:] = tail
        blocks.append(block)
    return np.vstack(blocks)


def grid_search(
    s: Scenario, grid_bits: float, node_budget: int = 100_000_000
) -> tuple[BitAllocation, float]:
    """Exhaustive minimum over all allocations on a fixed bit grid.

    Only instances with at most three usable slots are accepted; anything
    larger is out of an enumeration oracle's reach anyway. Ties are broken
    toward the lexicographically smallest (uplink, compute, downlink) tuple,
    which makes the result bitwise reproducible.
    """
    violations = validate(s)
    if violations:
        raise ValueError("invalid scenario: " + "; ".join(violations))
    m = s.timing.usable_slots
    if m > 3:
        raise ValueError(f"grid_search handles at most 3 usable slots, scenario has {m}")
    if grid_bits <= 0:
        raise ValueError(f"grid_bits must be positive, got {grid_bits}")
    app, ch, dev, t = s.application, s.channel, s.devices, s.timing
    kappa = app.output_ratio
    k_load = _grid_count(app.input_bits, grid_bits, "input")
    k_down = _grid_count(kappa * app.input_bits, grid_bits, "output")

    n_load = math.comb(k_load + m - 1, m - 1)
    n_down = math.comb(k_down + m - 1, m - 1)
    nodes = n_load * n_load * n_down
    if nodes > node_budget:
        raise EnumerationLimitError(
            f"{nodes} candidate tuples exceed the node budget of {node_budget}"
        )

    gains = slot_gains(s)
    u_rows = _compositions(k_load, m)
    d_rows = _compositions(k_down, m)
    cum_u = np.cumsum(u_rows, axis=1)
    cum_l = cum_u  # compute shares the uplink grid: same total, same step
    cum_d = np.cumsum(d_rows, axis=1)

    e_up = _comm_energy_arr(u_rows * grid_bits, gains[0:m], ch.bandwidth_hz, t.slot_s, ch.noise_psd).sum(axis=1)
    e_comp = comp_energy_slot(u_rows * grid_bits, dev.cloudlet_cap, app.cycles_per_bit, t.slot_s).sum(axis=1)
    e_down = _comm_energy_arr(d_rows * grid_bits, gains[2:m + 2], ch.bandwidth_hz, t.slot_s, ch.noise_psd).sum(axis=1)

    # kappa*integer-grid prefixes are float, so comparisons get a dust-sized
    # slack far below one grid step.
    slack = 1e-6 * grid_bits
    budget_cap = dev.cloudlet_budget_j * (1.0 + 1e-12)

    best_e = math.inf
    best_iu = best_il = best_id = -1
    for iu in range(u_rows.shape[0]):
        if e_up[iu] >= best_e:
            continue  # lex order: an equal or worse value can never displace
        causal_l = np.nonzero((cum_l <= cum_u[iu][None, :]).all(axis=1))[0]
        for il in causal_l:
            mask_d = (cum_d * grid_bits <= kappa * cum_l[il] * grid_bits + slack).all(axis=1)
            mask_d &= e_comp[il] + e_down <= budget_cap
            ids = np.nonzero(mask_d)[0]
            if ids.size:
                best_e = float(e_up[iu])
                best_iu, best_il, best_id = iu, il, int(ids[0])
                break
    if best_iu < 0:
        raise InfeasibleGridError("no on-grid allocation is causal within the cloudlet budget")

    alloc = BitAllocation(
        uplink=u_rows[best_iu] * grid_bits,
        compute=u_rows[best_il] * grid_bits,
        downlink=d_rows[best_id] * grid_bits,
    )
    rep = evaluate(s, alloc)
    if rep.budget_residual_j > 1e-9 * dev.cloudlet_budget_j:
        raise RuntimeError("winner fails the budget under evaluate(); energy model disagreement")
    return alloc, rep.mobile_uplink_total_j


@dataclass(frozen=True)
class DescentConfig:
    """Knobs for primal_descent; feas_tol_bits None defaults to 1e-6 * L."""

    max_outer: int = 30
    max_inner: int = 2000
    tol: float = 1e-4
    feas_tol_bits: float | None = None
    penalty0: float = 100.0
    penalty_growth: float = 10.0
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 50


def _project_simplex(x: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto {y >= 0, sum(y) = total} by threshold search."""
    if x.size == 1:
        return np.array([total])
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - total
    rho = np.nonzero(u - css / np.arange(1, x.size + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


def _defer_to_causal(u: np.ndarray, l: np.ndarray, d: np.ndarray, kappa: float):
    """Push compute and downlink bits later until both prefix chains hold.

    Totals are preserved; the uplink is never touched.
    """
    m = u.size
    # forward pass, compute against uplink
    fixed_l = np.empty(m)
    pending = 0.0
    seen_u = 0.0
    done_l = 0.0
    for i in range(m):
        seen_u += u[i]
        pending += l[i]
        grant = min(pending, seen_u - done_l)
        fixed_l[i] = grant
        pending -= grant
        done_l += grant
    # forward pass, downlink against processed output
    fixed_d = np.empty(m)
    pending = 0.0
    seen_out = 0.0
    done_d = 0.0
    for i in range(m):
        seen_out += kappa * fixed_l[i]
        pending += d[i]
        grant = min(pending, seen_out - done_d)
        fixed_d[i] = grant
        pending -= grant
        done_d += grant
    return fixed_l, fixed_d


def primal_descent(
    s: Scenario, cfg: DescentConfig | None = None
) -> tuple[BitAllocation, float]:
    """Projected gradient on an augmented Lagrangian, from the equal split.

    Works in load fractions so all three blocks live on unit simplices. The
    budget and the two causality chains enter through an augmented Lagrangian
    rather than a bare penalty: the running multiplier estimates carry the
    boundary force, so iterates settle on active constraints instead of
    zigzagging against an ever-steeper wall. The finished iterate is polished
    with a defer-forward sweep and must pass evaluate()'s residual checks.
    Fails loudly rather than ever returning an infeasible allocation.
    """
    cfg = cfg or DescentConfig()
    violations = validate(s)
    if violations:
        raise ValueError("invalid scenario: " + "; ".join(violations))
    app, ch, dev, t = s.application, s.channel, s.devices, s.timing
    m = t.usable_slots
    L = app.input_bits
    kappa = app.output_ratio
    L_down = kappa * L
    feas_tol = cfg.feas_tol_bits if cfg.feas_tol_bits is not None else 1e-6 * L
    gains = slot_gains(s)
    h_up = gains[0:m]
    h_down = gains[2:m + 2]
    bd = ch.bandwidth_hz * t.slot_s
    e0 = dev.cloudlet_budget_j
    comp_k = dev.cloudlet_cap * app.cycles_per_bit**3 / t.slot_s**2

    start = equal_allocation(s)
    start_rep = evaluate(s, start)
    if start_rep.budget_residual_j > 0.0:
        raise InfeasibleStartError(
            f"equal split spends {start_rep.cloudlet_total_j:.6g} J against a budget of {e0:.6g} J",
            start,
            start_rep,
        )

    def energies(u_bits, l_bits, d_bits):
        eu = float(_comm_energy_arr(u_bits, h_up, ch.bandwidth_hz, t.slot_s, ch.noise_psd).sum())
        ec = float(comp_energy_slot(l_bits, dev.cloudlet_cap, app.cycles_per_bit, t.slot_s).sum())
        ed = float(_comm_energy_arr(d_bits, h_down, ch.bandwidth_hz, t.slot_s, ch.noise_psd).sum())
        return eu, ec, ed

    def penalized(xu, xl, xd, pen):
        u_bits, l_bits, d_bits = L * xu, L * xl, L_down * xd
        eu, ec, ed = energies(u_bits, l_bits, d_bits)
        vb = max(0.0, (ec + ed - e0) / e0)
        vcu = np.maximum(np.cumsum(l_bits - u_bits), 0.0) / L
        vcd = np.maximum(np.cumsum(d_bits - kappa * l_bits), 0.0) / L
        fval = eu + pen * (vb**2 + float(vcu @ vcu) + float(vcd @ vcd))
        return fval, eu, vb, vcu, vcd

    def gradient(xu, xl, xd, pen, vb, vcu, vcd):
        u_bits, l_bits, d_bits = L * xu, L * xl, L_down * xd
        marg_u = (ch.noise_psd * LN2 / h_up) * np.exp2(u_bits / bd)
        marg_d = (ch.noise_psd * LN2 / h_down) * np.exp2(d_bits / bd)
        # suffix sums convert per-prefix penalties into per-slot sensitivities
        su = np.cumsum((2.0 * pen / L) * vcu[::-1])[::-1]
        sd = np.cumsum((2.0 * pen / L) * vcd[::-1])[::-1]
        gu = L * (marg_u - su)
        gl = L * ((2.0 * pen * vb / e0) * 3.0 * comp_k * l_bits**2 + su - kappa * sd)
        gd = L_down * ((2.0 * pen * vb / e0) * marg_d + sd)
        return gu, gl, gd

    xu = start.uplink / L
    xl = start.compute / L
    xd = start.downlink / L_down if L_down > 0 else np.zeros(m)
    pen = cfg.penalty0

    for _ in range(cfg.max_outer):
        step = 1.0
        fval, _, vb, vcu, vcd = penalized(xu, xl, xd, pen)
        for _ in range(cfg.max_inner):
            gu, gl, gd = gradient(xu, xl, xd, pen, vb, vcu, vcd)
            moved = False
            for _ in range(cfg.max_backtracks):
                cu = _project_simplex(xu - step * gu, 1.0)
                cl = _project_simplex(xl - step * gl, 1.0)
                cd = _project_simplex(xd - step * gd, 1.0) if L_down > 0 else xd
                cand, _, cvb, cvcu, cvcd = penalized(cu, cl, cd, pen)
                # projected steps: measure decrease against the actual move
                dx2 = float((cu - xu) @ (cu - xu) + (cl - xl) @ (cl - xl) + (cd - xd) @ (cd - xd))
                if cand <= fval - cfg.armijo_c * dx2 / max(step, 1e-300):
                    moved = True
                    break
                step *= cfg.backtrack
            if not moved:
                break
            improved = fval - cand
            xu, xl, xd = cu, cl, cd
            fval, vb, vcu, vcd = cand, cvb, cvcu, cvcd
            step = min(step / cfg.backtrack, 1e6)
            if improved <= 1e-12 * max(1.0, abs(fval)):
                break

        u_bits = L * xu
        l_bits, d_bits = _defer_to_causal(u_bits, L * xl, L_down * xd, kappa)
        alloc = BitAllocation(u_bits, l_bits, d_bits)
        rep = evaluate(s, alloc)
        feasible = (
            float(np.max(rep.causality_residuals_uplink)) <= feas_tol
            and float(np.max(rep.causality_residuals_downlink)) <= feas_tol
            and max(abs(r) for r in rep.totals_residuals) <= feas_tol
            and rep.budget_residual_j <= 1e-6 * e0
        )
        if feasible:
            return alloc, rep.mobile_uplink_total_j
        pen *= cfg.penalty_growth

    raise RuntimeError(
        f"no feasible iterate within {cfg.max_outer} penalty escalations (last penalty {pen:.3g})"
    )
