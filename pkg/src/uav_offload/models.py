"""Link/CPU energy models, the two baselines, and allocation scoring.

Slot conventions (1-based slot index over N frames): the mobile transmits
input bits in slots 1..N-2, the cloudlet computes in slots 2..N-1 and sends
output bits back in slots 3..N. The three arrays of a BitAllocation share
index i = 0..N-3 with slot offsets 0, +1, +2; the downlink entry at index i
therefore sees the channel gain of slot i+3. Getting that offset wrong is
the classic mistake here, so evaluate() is the only place gains are paired
with slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, sample_positions

__all__ = [
    "BitAllocation",
    "EnergyReport",
    "path_loss",
    "comm_energy",
    "comp_energy_slot",
    "cpu_frequency",
    "mobile_execution_energy",
    "equal_allocation",
    "evaluate",
    "slot_gains",
]

LN2 = math.log(2.0)

# Past this many bits per Hz*s the rate term 2**x overflows float64 anyway;
# return inf instead of a garbage finite number.
EXP_CAP = 1024.0


def path_loss(position, ref_gain: float) -> float:
    """Channel power gain at a UAV position (m, 3-vector) seen from the origin.

    Free-space inverse-square law anchored at ref_gain for 1 m distance.
    Raises ValueError at the origin itself, where the model is undefined.
    """
    p = np.asarray(position, dtype=float)
    d2 = float(p @ p)
    if d2 == 0.0:
        raise ValueError("path loss undefined at zero distance")
    return ref_gain / d2


def _comm_energy_arr(bits, gains, bandwidth_hz, slot_s, noise_psd):
    """Vectorized slot transmission energy; shared by the scalar API and evaluate()."""
    bits = np.asarray(bits, dtype=float)
    gains = np.asarray(gains, dtype=float)
    symbols = bandwidth_hz * slot_s
    rate = bits / symbols
    with np.errstate(over="ignore"):
        growth = np.exp2(np.minimum(rate, EXP_CAP)) - 1.0
    out = np.where(rate > EXP_CAP, np.inf, growth)
    return out * (noise_psd * symbols / gains)


def comm_energy(bits: float, gain: float, bandwidth_hz: float, slot_s: float, noise_psd: float) -> float:
    """Minimum slot energy (J) to move `bits` over a gain-`gain` link in one slot.

    Inverts the slot capacity B*slot_s*log2(1 + E*h/(N0*B*slot_s)) = bits,
    so it is convex and increasing in bits. bits/(B*slot_s) beyond EXP_CAP
    returns inf rather than overflowing.
    """
    if bits < 0:
        raise ValueError(f"bits must be >= 0, got {bits}")
    return float(_comm_energy_arr(bits, gain, bandwidth_hz, slot_s, noise_psd))


def comp_energy_slot(bits, cap: float, cycles_per_bit: float, slot_s: float):
    """Cloudlet energy (J) to process `bits` within one slot; broadcasts over bits.

    The CPU runs at exactly cycles_per_bit*bits/slot_s, so energy is cubic in bits.
    """
    if np.any(np.asarray(bits) < 0):
        raise ValueError(f"bits must be >= 0, got {bits}")
    return cap * cycles_per_bit**3 * bits**3 / slot_s**2


def cpu_frequency(bits: float, cycles_per_bit: float, window_s: float) -> float:
    """Clock rate (Hz) that finishes `bits` of work in window_s seconds."""
    return cycles_per_bit * bits / window_s


def mobile_execution_energy(s: Scenario) -> float:
    """Energy (J) for the mobile to run the whole workload locally by the deadline."""
    app, t = s.application, s.timing
    return s.devices.mobile_cap * app.cycles_per_bit**3 * app.input_bits**3 / t.deadline_s**2


def slot_gains(s: Scenario) -> np.ndarray:
    """Channel gain per frame, index k-1 for slot k = 1..N."""
    pos = sample_positions(s)
    d2 = np.einsum("ij,ij->i", pos, pos)
    if np.any(d2 == 0.0):
        raise ValueError("trajectory passes through the mobile position")
    return s.channel.ref_gain / d2


@dataclass(frozen=True)
class BitAllocation:
    """Per-stage bit loads, all of length N-2.

    uplink[i] is sent in slot i+1, compute[i] is processed in slot i+2 and
    downlink[i] is returned in slot i+3 (1-based slots).
    """

    uplink: np.ndarray
    compute: np.ndarray
    downlink: np.ndarray

    def __post_init__(self):
        for name in ("uplink", "compute", "downlink"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be a 1-D array")
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} entries must be finite and >= 0")
            object.__setattr__(self, name, arr)
        if not (self.uplink.size == self.compute.size == self.downlink.size):
            raise ValueError("uplink, compute and downlink must have equal length")

    @property
    def stages(self) -> int:
        return int(self.uplink.size)

    def slots(self, stage: str) -> np.ndarray:
        """1-based slot indices occupied by one stage ('uplink' | 'compute' | 'downlink')."""
        offset = {"uplink": 1, "compute": 2, "downlink": 3}[stage]
        return np.arange(offset, offset + self.stages)


@dataclass(frozen=True)
class EnergyReport:
    """Full energy/feasibility picture of one allocation against one scenario.

    Residual sign convention: feasible means <= 0 for budget and causality,
    and == 0 (within tolerance) for the three bit totals.
    """

    mobile_uplink_j: np.ndarray
    mobile_uplink_total_j: float
    cloudlet_compute_j: np.ndarray
    cloudlet_compute_total_j: float
    cloudlet_downlink_j: np.ndarray
    cloudlet_downlink_total_j: float
    cloudlet_total_j: float
    budget_residual_j: float
    causality_residuals_uplink: np.ndarray
    causality_residuals_downlink: np.ndarray
    totals_residuals: tuple[float, float, float]
    cpu_freqs_hz: np.ndarray

    def to_dict(self) -> dict:
        """JSON-ready form; per-slot arrays carry explicit 1-based slot indices."""
        m = self.mobile_uplink_j.size

        def stage(values, offset):
            return {
                "slots": list(range(offset, offset + m)),
                "per_slot": [float(x) for x in values],
            }

        return {
            "mobile_uplink_j": stage(self.mobile_uplink_j, 1) | {"total": self.mobile_uplink_total_j},
            "cloudlet_compute_j": stage(self.cloudlet_compute_j, 2) | {"total": self.cloudlet_compute_total_j},
            "cloudlet_downlink_j": stage(self.cloudlet_downlink_j, 3) | {"total": self.cloudlet_downlink_total_j},
            "cloudlet_total_j": self.cloudlet_total_j,
            "budget_residual_j": self.budget_residual_j,
            "causality_residuals_uplink": [float(x) for x in self.causality_residuals_uplink],
            "causality_residuals_downlink": [float(x) for x in self.causality_residuals_downlink],
            "totals_residuals": [float(x) for x in self.totals_residuals],
            "cpu_freqs_hz": stage(self.cpu_freqs_hz, 2),
        }


def equal_allocation(s: Scenario) -> BitAllocation:
    """Deadline-driven baseline: every stage splits its total evenly across its slots."""
    m = s.timing.usable_slots
    if m < 1:
        raise ValueError(f"need at least 3 frames, got {s.timing.frames}")
    per = s.application.input_bits / m
    # downlink entries are built as kappa * per so the per-slot difference
    # downlink - kappa*compute is exactly zero, not one ulp off
    down = s.application.output_ratio * per
    return BitAllocation(
        uplink=np.full(m, per),
        compute=np.full(m, per),
        downlink=np.full(m, down),
    )


def evaluate(s: Scenario, alloc: BitAllocation) -> EnergyReport:
    """Score an allocation: per-slot energies, totals, and every constraint residual.

    Totals are compensated sums in slot order, so reports are reproducible
    to the last bit across runs.
    """
    m = s.timing.usable_slots
    if alloc.stages != m:
        raise ValueError(f"allocation has {alloc.stages} stages, scenario needs {m}")
    app, ch, dev, t = s.application, s.channel, s.devices, s.timing
    gains = slot_gains(s)

    up_j = _comm_energy_arr(alloc.uplink, gains[0:m], ch.bandwidth_hz, t.slot_s, ch.noise_psd)
    comp_j = dev.cloudlet_cap * app.cycles_per_bit**3 * alloc.compute**3 / t.slot_s**2
    down_j = _comm_energy_arr(alloc.downlink, gains[2:m + 2], ch.bandwidth_hz, t.slot_s, ch.noise_psd)

    up_total = math.fsum(up_j)
    comp_total = math.fsum(comp_j)
    down_total = math.fsum(down_j)
    # cloudlet per-slot load in slot order: compute lives in slot i+2, downlink in i+3
    cloudlet_slots = np.zeros(t.frames)
    cloudlet_slots[1:m + 1] += comp_j
    cloudlet_slots[2:m + 2] += down_j
    cloudlet_total = math.fsum(cloudlet_slots)

    kappa = app.output_ratio
    causality_up = np.cumsum(alloc.compute - alloc.uplink)
    causality_down = np.cumsum(alloc.downlink - kappa * alloc.compute)
    totals = (
        math.fsum(alloc.uplink) - app.input_bits,
        math.fsum(alloc.compute) - app.input_bits,
        math.fsum(alloc.downlink) - kappa * app.input_bits,
    )

    return EnergyReport(
        mobile_uplink_j=up_j,
        mobile_uplink_total_j=up_total,
        cloudlet_compute_j=comp_j,
        cloudlet_compute_total_j=comp_total,
        cloudlet_downlink_j=down_j,
        cloudlet_downlink_total_j=down_total,
        cloudlet_total_j=cloudlet_total,
        budget_residual_j=cloudlet_total - dev.cloudlet_budget_j,
        causality_residuals_uplink=causality_up,
        causality_residuals_downlink=causality_down,
        totals_residuals=totals,
        cpu_freqs_hz=app.cycles_per_bit * alloc.compute / t.slot_s,
    )
