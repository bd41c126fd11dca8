"""Dual-decomposition solver for minimum-mobile-energy bit allocation.

The program (minimize total mobile transmission energy subject to the cloudlet
energy budget, the two prefix causality chains and the three bit totals) is
convex, so it is attacked through its Lagrangian dual. For fixed multipliers
(mu on the budget, a_n / b_n on the causality chains) the inner minimization
splits into three independent stages with closed-form loads parameterized by
one scalar level each (lam, nu, eta); each level is pinned by bisection so the
stage meets its bit total.

The ascent runs in the cumulative coordinates alpha/beta (suffix sums of
a/b), where the supergradient is the local per-slot residual instead of a
prefix chain; the feasible set there is the nonincreasing nonnegative cone,
reached by isotonic regression. Each coordinate is preconditioned by the
closed forms' own slopes, so no step-size tuning is needed. Ascending in a/b
directly with a diminishing step is kept as a config option, but the
triangular map from a to alpha makes that parameterization ill-conditioned
enough to stall on instances with long binding causality stretches.

Inner minimizers swept through repair_causality provide primal candidates,
and the result is certified by duality gap, feasibility residuals and
stationarity checks rather than by trusting the iteration count.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .models import (
    LN2,
    BitAllocation,
    EnergyReport,
    equal_allocation,
    evaluate,
    slot_gains,
)
from .scenario import Channel, Scenario, validate

__all__ = [
    "DualState",
    "SolverConfig",
    "SolveStatus",
    "Solution",
    "KKTResiduals",
    "BracketError",
    "bisect",
    "solve_uplink",
    "solve_compute",
    "solve_downlink",
    "subgradients",
    "dual_value",
    "repair_causality",
    "kkt_residuals",
    "optimize",
    "solution_to_dict",
]

_TINY = 1e-300


class BracketError(RuntimeError):
    """Geometric bracket expansion failed; the stage total cannot reach its target."""


class SolveStatus(enum.Enum):
    CONVERGED = "Converged"
    ITER_LIMIT = "IterLimit"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class DualState:
    """Multipliers of the dual: mu prices the cloudlet energy budget, a[n] the
    'computed bits never pass received bits' prefix chain and b[n] the
    'returned bits never pass kappa * computed bits' chain.

    alpha/beta are the suffix sums that enter the closed forms; they are
    nonincreasing and nonnegative whenever a, b are nonnegative.
    """

    mu: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))

    @property
    def alpha(self) -> np.ndarray:
        return np.cumsum(self.a[::-1])[::-1]

    @property
    def beta(self) -> np.ndarray:
        return np.cumsum(self.b[::-1])[::-1]


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for optimize(); bit tolerances left as None default to fractions of
    the instance's total load (feas 1e-6 * L, bisection 1e-12 * L).

    The bisection default is deliberately much tighter than the feasibility
    tolerance: dual values are computed at the bisected inner minimizers, and
    slack there leaks into the reported bound at the stages' per-bit prices.
    """

    max_iters: int = 20000
    dual_tol: float = 1e-5
    feas_tol_bits: float | None = None
    kkt_tol: float = 5e-5
    step_rule: str = "auto"  # "auto" (preconditioned) | "diminishing"
    step_scale: float = 1.0
    mu_min: float = 1e-12
    mu_cap: float = 1e12
    bisection_tol_bits: float | None = None
    bisection_max_expand: int = 200
    check_every: int = 1


@dataclass(frozen=True)
class KKTResiduals:
    """Stationarity (normalized, max over loaded slots) and complementary
    slackness magnitudes at a solution."""

    stationarity_uplink: float
    stationarity_compute: float
    stationarity_downlink: float
    slack_budget: float
    slack_causality_uplink: float
    slack_causality_downlink: float

    def to_dict(self) -> dict:
        return {
            "stationarity_uplink": self.stationarity_uplink,
            "stationarity_compute": self.stationarity_compute,
            "stationarity_downlink": self.stationarity_downlink,
            "slack_budget": self.slack_budget,
            "slack_causality_uplink": self.slack_causality_uplink,
            "slack_causality_downlink": self.slack_causality_downlink,
        }


@dataclass(frozen=True)
class Solution:
    """Solver output: recovered allocation plus the dual certificate that backs it.

    dual, lam, nu and eta are the multiplier snapshot taken at the iteration
    that produced the returned allocation, so allocation and certificate are
    mutually consistent. gap_j = primal_value_j - dual_value_j.
    """

    allocation: BitAllocation
    dual: DualState
    lam: float
    nu: float
    eta: float
    dual_value_j: float
    primal_value_j: float
    gap_j: float
    gap_rel: float
    iterations: int
    status: SolveStatus
    report: EnergyReport
    kkt: KKTResiduals


def _resolve(cfg: SolverConfig, total_bits: float) -> SolverConfig:
    feas = cfg.feas_tol_bits if cfg.feas_tol_bits is not None else 1e-6 * total_bits
    btol = cfg.bisection_tol_bits if cfg.bisection_tol_bits is not None else 1e-12 * total_bits
    return replace(cfg, feas_tol_bits=feas, bisection_tol_bits=btol)


def bisect(target: float, alloc_fn, lo_hint: float, cfg: SolverConfig, scale: float = 1.0) -> float:
    """Find the scalar level at which alloc_fn's total meets target.

    alloc_fn maps a scalar to (allocation, total) with total continuous and
    nondecreasing in the scalar. lo_hint must sit at or below the target
    (callers pass the analytic edge of the all-zero region; for target 0 it
    is returned as-is). The upper bracket is found by geometric expansion of
    `scale` away from lo_hint, then the interval is halved until the total is
    within cfg.bisection_tol_bits of target and the bracket is relatively
    tight, so the level itself is accurate, not just the total.
    """
    tol = cfg.bisection_tol_bits if cfg.bisection_tol_bits is not None else 1e-9 * max(target, 1.0)
    if target <= tol:
        return lo_hint
    lo = lo_hint
    _, total_lo = alloc_fn(lo)
    if total_lo > target + tol:
        raise BracketError(f"lower hint already above target ({total_lo} > {target})")
    width = max(abs(scale), _TINY)
    hi = None
    for _ in range(cfg.bisection_max_expand):
        cand = lo + width
        _, total = alloc_fn(cand)
        if total >= target:
            hi = cand
            break
        lo = cand  # keep the bracket tight while expanding
        width *= 2.0
    if hi is None:
        raise BracketError(f"no upper bracket after {cfg.bisection_max_expand} doublings (target {target})")
    best = None
    for _ in range(600):
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            break  # float resolution exhausted
        _, total = alloc_fn(mid)
        if abs(total - target) <= tol:
            best = mid
            if hi - lo <= 1e-12 * max(abs(lo), abs(hi)):
                break
        if total < target:
            lo = mid
        else:
            hi = mid
    if best is not None:
        return best
    return 0.5 * (lo + hi)


def solve_uplink(
    alpha: np.ndarray,
    gains: np.ndarray,
    channel: Channel,
    slot_s: float,
    total_bits: float,
    cfg: SolverConfig,
) -> tuple[np.ndarray, float]:
    """Uplink stage minimizer: water-filling over slots against prices alpha.

    Returns (bits per uplink slot, lam) where lam is the water level that makes
    the loads sum to total_bits. Slots with gain too poor for the level carry
    zero bits.
    """
    alpha = np.asarray(alpha, dtype=float)
    h = np.asarray(gains, dtype=float)
    bd = channel.bandwidth_hz * slot_s
    floor = channel.noise_psd * LN2 / h  # marginal energy per bit at zero load
    lo = float(np.min(floor - alpha))

    def loads(lam):
        arg = (lam + alpha) * h / (channel.noise_psd * LN2)
        bits = bd * np.log2(np.maximum(arg, 1.0))
        return bits, float(np.sum(bits))

    exp = min(total_bits / (max(h.size, 1) * bd), 500.0)
    scale = float(np.mean(floor)) * 2.0**exp
    lam = bisect(total_bits, loads, lo, cfg, scale=scale)
    bits, _ = loads(lam)
    return bits, lam


def solve_compute(
    mu: float,
    alpha: np.ndarray,
    beta: np.ndarray,
    output_ratio: float,
    cloudlet_cap: float,
    cycles_per_bit: float,
    slot_s: float,
    total_bits: float,
    cfg: SolverConfig,
) -> tuple[np.ndarray, float]:
    """Compute stage minimizer against the budget price and causality prices.

    Cubic slot energy gives a square-root profile: load n is
    sqrt(coef * max(nu - alpha_n + kappa*beta_n, 0)) with nu pinned by
    bisection. mu must be positive (the caller clamps it at mu_min).
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    w = alpha - output_ratio * beta
    coef = slot_s**2 / (3.0 * mu * cloudlet_cap * cycles_per_bit**3)
    lo = float(np.min(w))

    def loads(nu):
        bits = np.sqrt(coef * np.maximum(nu - w, 0.0))
        return bits, float(np.sum(bits))

    scale = (total_bits / max(alpha.size, 1)) ** 2 / coef  # curvature scale at the even split
    nu = bisect(total_bits, loads, lo, cfg, scale=scale)
    bits, _ = loads(nu)
    return bits, nu


def solve_downlink(
    mu: float,
    beta: np.ndarray,
    gains: np.ndarray,
    channel: Channel,
    slot_s: float,
    total_bits: float,
    cfg: SolverConfig,
) -> tuple[np.ndarray, float]:
    """Downlink stage minimizer: water-filling with energy priced by mu and
    slots priced by beta. gains must already be the downlink slots' gains
    (slot offset +2 relative to the shared stage index)."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    beta = np.asarray(beta, dtype=float)
    h = np.asarray(gains, dtype=float)
    bd = channel.bandwidth_hz * slot_s
    floor = mu * channel.noise_psd * LN2 / h
    lo = float(np.min(floor + beta))

    def loads(eta):
        arg = (eta - beta) * h / (mu * channel.noise_psd * LN2)
        bits = bd * np.log2(np.maximum(arg, 1.0))
        return bits, float(np.sum(bits))

    exp = min(total_bits / (max(h.size, 1) * bd), 500.0)
    scale = float(np.mean(floor)) * 2.0**exp
    eta = bisect(total_bits, loads, lo, cfg, scale=scale)
    bits, _ = loads(eta)
    return bits, eta


def subgradients(s: Scenario, alloc: BitAllocation) -> tuple[float, np.ndarray, np.ndarray]:
    """Dual subgradient at an inner minimizer: budget residual and the two
    prefix causality residual chains, in that order."""
    rep = evaluate(s, alloc)
    return (
        rep.budget_residual_j,
        rep.causality_residuals_uplink.copy(),
        rep.causality_residuals_downlink.copy(),
    )


def dual_value(s: Scenario, dual: DualState, alloc: BitAllocation) -> float:
    """Lagrangian value at an allocation that already meets the three totals."""
    rep = evaluate(s, alloc)
    return _dual_value_from(s, dual, alloc, rep)


def _dual_value_from(s: Scenario, dual: DualState, alloc: BitAllocation, rep: EnergyReport) -> float:
    kappa = s.application.output_ratio
    alpha, beta = dual.alpha, dual.beta
    return (
        rep.mobile_uplink_total_j
        + dual.mu * rep.budget_residual_j
        - float(alpha @ alloc.uplink)
        + float((alpha - kappa * beta) @ alloc.compute)
        + float(beta @ alloc.downlink)
    )


def repair_causality(alloc: BitAllocation, output_ratio: float) -> BitAllocation:
    """Make an allocation causal without touching its uplink or its totals.

    Sweeps slots in order, clamping each compute load to the bits received
    but not yet processed and each downlink load to kappa * computed bits not
    yet returned; clipped excess rolls forward to later slots. Requires the
    input totals to be consistent (compute total == uplink total and downlink
    total == kappa * compute total), which guarantees the final slot absorbs
    any remaining carry.
    """
    u = alloc.uplink
    m = u.size
    new_l = np.empty(m)
    avail = 0.0  # received minus processed so far
    carry = 0.0
    for i in range(m):
        avail += u[i]
        want = alloc.compute[i] + carry
        take = want if want <= avail else avail
        new_l[i] = take
        carry = want - take
        avail -= take
    new_d = np.empty(m)
    avail = 0.0
    carry = 0.0
    for i in range(m):
        avail += output_ratio * new_l[i]
        want = alloc.downlink[i] + carry
        take = want if want <= avail else avail
        new_d[i] = take
        carry = want - take
        avail -= take
    return BitAllocation(uplink=u.copy(), compute=new_l, downlink=new_d)


def _stationarity(
    s: Scenario,
    alloc: BitAllocation,
    mu: float,
    alpha: np.ndarray,
    beta: np.ndarray,
    lam: float,
    nu: float,
    eta: float,
) -> tuple[float, float, float]:
    """Normalized per-stage stationarity residuals (max over loaded slots).

    All three stationarity systems trade in the same currency (J per bit), so
    each residual is normalized by its own largest term floored at the uplink
    level lam. Without the floor, a stage whose terms all vanish with mu
    (budget slack, prices zero) would divide noise by noise and report an O(1)
    residual where the condition is actually degenerate. Clamped (zero-load)
    slots satisfy inequality conditions instead and are skipped.
    """
    app, ch, dev, t = s.application, s.channel, s.devices, s.timing
    m = t.usable_slots
    gains = slot_gains(s)
    kappa = app.output_ratio
    bd = ch.bandwidth_hz * t.slot_s
    price_scale = max(abs(lam), _TINY)

    def normalized_max(residual, terms, active):
        if not np.any(active):
            return 0.0
        denom = np.maximum(np.max(np.abs(terms), axis=0), price_scale)
        return float(np.max(np.abs(residual[active]) / denom[active]))

    marg_up = (ch.noise_psd * LN2 / gains[0:m]) * np.exp2(alloc.uplink / bd)
    res_up = marg_up - alpha - lam
    terms_up = np.stack([marg_up, alpha, np.full(m, lam)])
    stat_up = normalized_max(res_up, terms_up, alloc.uplink > 0)

    marg_comp = (3.0 * mu * dev.cloudlet_cap * app.cycles_per_bit**3 / t.slot_s**2) * alloc.compute**2
    res_comp = marg_comp + alpha - kappa * beta - nu
    terms_comp = np.stack([marg_comp, alpha, kappa * beta, np.full(m, nu)])
    stat_comp = normalized_max(res_comp, terms_comp, alloc.compute > 0)

    marg_down = (mu * ch.noise_psd * LN2 / gains[2:m + 2]) * np.exp2(alloc.downlink / bd)
    res_down = marg_down + beta - eta
    terms_down = np.stack([marg_down, beta, np.full(m, eta)])
    stat_down = normalized_max(res_down, terms_down, alloc.downlink > 0)
    return stat_up, stat_comp, stat_down


def kkt_residuals(s: Scenario, sol: Solution) -> KKTResiduals:
    """Stationarity and complementary-slackness checks at a solution."""
    stat_up, stat_comp, stat_down = _stationarity(
        s, sol.allocation, sol.dual.mu, sol.dual.alpha, sol.dual.beta, sol.lam, sol.nu, sol.eta
    )
    s_mu, s_a, s_b = subgradients(s, sol.allocation)
    return KKTResiduals(
        stationarity_uplink=stat_up,
        stationarity_compute=stat_comp,
        stationarity_downlink=stat_down,
        slack_budget=abs(sol.dual.mu * s_mu),
        slack_causality_uplink=float(np.max(np.abs(sol.dual.a * s_a), initial=0.0)),
        slack_causality_downlink=float(np.max(np.abs(sol.dual.b * s_b), initial=0.0)),
    )


def _suffix_sums(x: np.ndarray) -> np.ndarray:
    return np.cumsum(x[::-1])[::-1]


def _project_nonincreasing(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto nonincreasing nonnegative sequences.

    Pool-adjacent-violators with a merge stack, then a clip: for a constant
    lower bound, clipping the unconstrained isotonic fit is exact and keeps
    monotonicity.
    """
    vals: list[float] = []
    wts: list[int] = []
    for v in x:
        vals.append(float(v))
        wts.append(1)
        while len(vals) > 1 and vals[-2] < vals[-1]:
            w = wts[-1] + wts[-2]
            vals[-2] = (vals[-1] * wts[-1] + vals[-2] * wts[-2]) / w
            wts[-2] = w
            vals.pop()
            wts.pop()
    out = np.empty(x.size)
    i = 0
    for v, w in zip(vals, wts):
        out[i:i + w] = v
        i += w
    return np.maximum(out, 0.0)


def optimize(s: Scenario, cfg: SolverConfig | None = None) -> Solution:
    """Run the full dual solve and recover a certified primal allocation.

    Returns a Solution whose status is CONVERGED only when the recovered
    allocation is feasible within tolerance and the duality gap is below
    dual_tol * max(1, primal). Identical inputs produce bitwise-identical
    solutions; there is no randomness anywhere in the pipeline.
    """
    cfg = cfg or SolverConfig()
    violations = validate(s)
    if violations:
        raise ValueError("invalid scenario: " + "; ".join(violations))
    if cfg.step_rule not in ("auto", "diminishing"):
        raise ValueError(f"unknown step_rule {cfg.step_rule!r}")

    app, ch, dev, t = s.application, s.channel, s.devices, s.timing
    m = t.usable_slots
    total_up = app.input_bits
    kappa = app.output_ratio
    total_down = kappa * app.input_bits
    cfg = _resolve(cfg, total_up)
    gains = slot_gains(s)
    h_up = gains[0:m]
    h_down = gains[2:m + 2]
    budget = dev.cloudlet_budget_j

    # Cheap necessary condition: the even split minimizes the cubic compute
    # energy and the unpriced water-filling minimizes the downlink energy, so
    # their sum lower-bounds the cloudlet spend of every allocation meeting
    # the totals, causal or not. If even that breaks the budget, nothing can
    # satisfy it.
    eq = equal_allocation(s)
    wf_down, _ = solve_downlink(1.0, np.zeros(m), gains[2:m + 2], ch, t.slot_s, total_down, cfg)
    floor_rep = evaluate(s, BitAllocation(eq.uplink, eq.compute, wf_down))
    eq_rep = evaluate(s, eq)
    if floor_rep.cloudlet_total_j > budget:
        zero = DualState(mu=cfg.mu_min, a=np.zeros(m), b=np.zeros(m))
        sol = Solution(
            allocation=eq,
            dual=zero,
            lam=0.0,
            nu=0.0,
            eta=0.0,
            dual_value_j=math.inf,
            primal_value_j=math.inf,
            gap_j=math.inf,
            gap_rel=math.inf,
            iterations=0,
            status=SolveStatus.INFEASIBLE,
            report=floor_rep,
            kkt=KKTResiduals(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        )
        return sol

    mu = cfg.mu_min
    a = np.zeros(m)
    b = np.zeros(m)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    best_dual = -math.inf
    best_dual_iter = 0

    avg_u = np.zeros(m)
    avg_l = np.zeros(m)
    avg_d = np.zeros(m)
    avg_count = 0
    next_restart = 64  # geometric restarts keep stale early iterates out of the average

    best_primal = math.inf
    best: tuple | None = None  # (alloc, report, dual snapshot, lam, nu, eta)
    loose_primal = math.inf
    best_loose: tuple | None = None  # feasible but failing the stationarity gate
    fallback: tuple | None = None
    seen_feasible = False

    bd = ch.bandwidth_hz * t.slot_s
    tau = min(max(0.5 * cfg.step_scale, 1e-3), 1.0)  # damping for the preconditioned steps
    prev_g = -math.inf
    prev_mu: float | None = None
    prev_s_mu = 0.0
    curv_mu: float | None = None  # secant estimate of -d(budget residual)/d(mu)

    scale_mu = scale_a = scale_b = 0.0
    status = SolveStatus.ITER_LIMIT
    iterations = cfg.max_iters

    def consider(cand_u, cand_l, cand_d, snapshot):
        nonlocal best_primal, best, loose_primal, best_loose, fallback, seen_feasible
        try:
            cand = repair_causality(BitAllocation(cand_u, cand_l, cand_d), kappa)
        except ValueError:
            return
        rep = evaluate(s, cand)
        fallback = (cand, rep, *snapshot)
        causal_ok = (
            float(np.max(rep.causality_residuals_uplink, initial=-math.inf)) <= cfg.feas_tol_bits
            and float(np.max(rep.causality_residuals_downlink, initial=-math.inf)) <= cfg.feas_tol_bits
        )
        totals_ok = max(abs(r) for r in rep.totals_residuals) <= cfg.feas_tol_bits
        budget_ok = rep.budget_residual_j <= cfg.dual_tol * budget
        if not (causal_ok and totals_ok and budget_ok):
            return
        seen_feasible = True
        if rep.mobile_uplink_total_j < loose_primal:
            loose_primal = rep.mobile_uplink_total_j
            best_loose = (cand, rep, *snapshot)
        if rep.mobile_uplink_total_j >= best_primal:
            return
        # Promote only candidates whose stationarity already certifies them:
        # the repair sweep can displace bits enough to spoil the conditions
        # even when the duality gap looks closed.
        snap_dual, snap_lam, snap_nu, snap_eta = snapshot
        stat = _stationarity(s, cand, snap_dual.mu, snap_dual.alpha, snap_dual.beta, snap_lam, snap_nu, snap_eta)
        if max(stat) <= cfg.kkt_tol:
            best_primal = rep.mobile_uplink_total_j
            best = (cand, rep, *snapshot)

    for k in range(1, cfg.max_iters + 1):
        u, lam = solve_uplink(alpha, h_up, ch, t.slot_s, total_up, cfg)
        l, nu = solve_compute(mu, alpha, beta, kappa, dev.cloudlet_cap, app.cycles_per_bit, t.slot_s, total_up, cfg)
        d, eta = solve_downlink(mu, beta, h_down, ch, t.slot_s, total_down, cfg)
        inner = BitAllocation(u, l, d)
        rep = evaluate(s, inner)
        s_mu = rep.budget_residual_j
        s_a = rep.causality_residuals_uplink
        s_b = rep.causality_residuals_downlink
        g = _dual_value_from(s, DualState(mu, a, b), inner, rep)
        if g > best_dual:
            best_dual = g
            best_dual_iter = k

        if k == next_restart:
            avg_u[:] = 0.0
            avg_l[:] = 0.0
            avg_d[:] = 0.0
            avg_count = 0
            next_restart *= 4
        avg_count += 1
        avg_u += (u - avg_u) / avg_count
        avg_l += (l - avg_l) / avg_count
        avg_d += (d - avg_d) / avg_count

        if k == 1 or k % cfg.check_every == 0 or k == cfg.max_iters:
            snapshot = (DualState(mu, a.copy(), b.copy()), lam, nu, eta)
            consider(avg_u, avg_l, avg_d, snapshot)
            consider(u, l, d, snapshot)
            if best is not None:
                gap = best_primal - best_dual
                if gap <= cfg.dual_tol * max(1.0, abs(best_primal)):
                    status = SolveStatus.CONVERGED
                    iterations = k
                    break

        if cfg.step_rule == "auto":
            # In the cumulative coordinates the supergradient is the local slot
            # residual, and each coordinate's curvature is just the closed
            # forms' own response slope, so the natural step is residual over
            # slope: a damped diagonal Newton ascent.
            res_alpha = l - u
            res_beta = d - kappa * l
            slope_up = np.divide(bd / LN2, lam + alpha, out=np.zeros(m), where=u > 0)
            coef = t.slot_s**2 / (3.0 * mu * dev.cloudlet_cap * app.cycles_per_bit**3)
            slope_comp = np.divide(coef, 2.0 * l, out=np.zeros(m), where=l > 0)
            slope_down = np.divide(bd / LN2, eta - beta, out=np.zeros(m), where=d > 0)
            c_alpha = slope_up + slope_comp
            c_beta = slope_down + kappa**2 * slope_comp
            floor = 1e-9 * max(float(np.max(c_alpha, initial=0.0)), float(np.max(c_beta, initial=0.0)), _TINY)
            alpha = _project_nonincreasing(alpha + tau * res_alpha / np.maximum(c_alpha, floor))
            beta = _project_nonincreasing(beta + tau * res_beta / np.maximum(c_beta, floor))
            a = alpha - np.append(alpha[1:], 0.0)
            b = beta - np.append(beta[1:], 0.0)

            # mu has no closed-form slope (every stage's shape shifts with it),
            # so estimate curvature by secant; until one exists, probe
            # geometrically in the residual's direction.
            if prev_mu is not None and mu != prev_mu:
                sec = (s_mu - prev_s_mu) / (mu - prev_mu)
                if sec < 0:
                    curv_mu = -sec
            prev_mu, prev_s_mu = mu, s_mu
            if curv_mu is not None and curv_mu > 0:
                d_mu = tau * s_mu / curv_mu
            else:
                direction = 1.0 if s_mu > 0 else -1.0 if s_mu < 0 else 0.0
                d_mu = tau * direction * max(mu, 1e-3)
            if s_mu > 0 and not seen_feasible:
                # No feasible point sighted: let mu race geometrically so an
                # infeasible instance hits the cap instead of creeping by
                # stale secant steps.
                d_mu = max(d_mu, tau * max(mu, 1e-3))
            d_mu = min(max(d_mu, -2.0 * mu), max(1.0, 2.0 * mu))  # at most double per step
            mu = max(mu + d_mu, cfg.mu_min)

            if g < prev_g - 1e-12 * max(1.0, abs(prev_g)):
                tau = max(0.5 * tau, 1e-3)  # overshot: the diagonal model was too optimistic
            else:
                tau = min(1.3 * tau, 1.0)
            prev_g = g
        else:
            # Literal projected subgradient in the a/b coordinates with a
            # diminishing step, per-block normalized: the budget residual
            # lives in joules, the causality residuals in bits.
            scale_mu = max(scale_mu, abs(s_mu), _TINY)
            scale_a = max(scale_a, float(np.max(np.abs(s_a), initial=0.0)), _TINY)
            scale_b = max(scale_b, float(np.max(np.abs(s_b), initial=0.0)), _TINY)
            step = cfg.step_scale / math.sqrt(k)
            mu = max(mu + step * s_mu / scale_mu, cfg.mu_min)
            a = np.maximum(a + step * s_a / scale_a, 0.0)
            b = np.maximum(b + step * s_b / scale_b, 0.0)
            alpha = _suffix_sums(a)
            beta = _suffix_sums(b)

        if mu > cfg.mu_cap and s_mu > 0 and k - best_dual_iter < 100:
            status = SolveStatus.INFEASIBLE
            iterations = k
            break

    chosen = best if best is not None else best_loose if best_loose is not None else fallback
    if chosen is None:  # max_iters == 0 or every candidate failed to build
        snapshot = (DualState(mu, a, b), 0.0, 0.0, 0.0)
        chosen = (eq, eq_rep, *snapshot)
    alloc, rep, dual_snap, lam_f, nu_f, eta_f = chosen
    primal = rep.mobile_uplink_total_j
    gap = primal - best_dual if math.isfinite(best_dual) else math.inf
    sol = Solution(
        allocation=alloc,
        dual=dual_snap,
        lam=lam_f,
        nu=nu_f,
        eta=eta_f,
        dual_value_j=best_dual,
        primal_value_j=primal,
        gap_j=gap,
        gap_rel=gap / max(1.0, abs(primal)),
        iterations=iterations,
        status=status,
        report=rep,
        kkt=KKTResiduals(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    )
    return replace(sol, kkt=kkt_residuals(s, sol))


def solution_to_dict(sol: Solution) -> dict:
    """JSON-ready form of a Solution; per-slot arrays carry 1-based slot indices."""
    alloc = sol.allocation
    return {
        "status": sol.status.value,
        "iterations": sol.iterations,
        "primal_value_j": sol.primal_value_j,
        "dual_value_j": sol.dual_value_j,
        "gap_j": sol.gap_j,
        "gap_rel": sol.gap_rel,
        "allocation": {
            "uplink": {"slots": [int(x) for x in alloc.slots("uplink")], "bits": [float(x) for x in alloc.uplink]},
            "compute": {"slots": [int(x) for x in alloc.slots("compute")], "bits": [float(x) for x in alloc.compute]},
            "downlink": {"slots": [int(x) for x in alloc.slots("downlink")], "bits": [float(x) for x in alloc.downlink]},
        },
        "dual": {
            "mu": sol.dual.mu,
            "a": [float(x) for x in sol.dual.a],
            "b": [float(x) for x in sol.dual.b],
            "alpha": [float(x) for x in sol.dual.alpha],
            "beta": [float(x) for x in sol.dual.beta],
        },
        "lambda": sol.lam,
        "nu": sol.nu,
        "eta": sol.eta,
        "kkt": sol.kkt.to_dict(),
        "report": sol.report.to_dict(),
    }
