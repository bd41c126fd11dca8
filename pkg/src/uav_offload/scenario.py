"""Problem instances: workload, radio link, CPU energy constants, timing, flight path.

A Scenario bundles everything needed to pose one offloading problem. Positions
are sampled once per frame (the channel is treated as constant within a frame),
so a trajectory only has to provide one 3-vector per frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Application",
    "Channel",
    "Devices",
    "Timing",
    "LinearTrajectory",
    "WaypointTrajectory",
    "Trajectory",
    "Scenario",
    "ScenarioFormatError",
    "ScenarioValidationError",
    "load_scenario",
    "scenario_from_dict",
    "sample_positions",
    "validate",
]

# Tolerance for "deadline is an integer number of frames". Anything further off
# than this is a modelling error in the input, not float noise.
_GRID_RTOL = 1e-9


class ScenarioFormatError(ValueError):
    """Malformed scenario document: bad JSON, wrong types, unknown or missing keys."""


class ScenarioValidationError(ValueError):
    """Structurally sound document that violates model invariants.

    Carries the full list of violations, not just the first one found.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid scenario: " + "; ".join(self.violations))


@dataclass(frozen=True)
class Application:
    """Workload to offload: L input bits, C cycles per bit, kappa output bits per input bit."""

    input_bits: float
    cycles_per_bit: float
    output_ratio: float


@dataclass(frozen=True)
class Channel:
    """FDD link parameters; uplink and downlink each get the full bandwidth.

    ref_gain is the received-power gain at 1 m distance for unit transmit power,
    so the gain at distance d is ref_gain / d**2.
    """

    bandwidth_hz: float
    noise_psd: float  # W/Hz
    ref_gain: float


@dataclass(frozen=True)
class Devices:
    """Effective switched-capacitance constants (J s^2 / cycle^3) and the cloudlet energy budget."""

    mobile_cap: float
    cloudlet_cap: float
    cloudlet_budget_j: float


@dataclass(frozen=True)
class Timing:
    """Slot / frame / deadline grid.

    Each frame holds one uplink, one compute and one downlink slot of length
    slot_s; the remaining frame time belongs to other users. frames is derived
    from deadline_s / frame_s when not given explicitly; validate() rejects
    deadlines that are not an integer number of frames.
    """

    slot_s: float
    frame_s: float
    deadline_s: float
    frames: int | None = None

    def __post_init__(self):
        if self.frames is None:
            n = 0
            if self.frame_s > 0 and math.isfinite(self.deadline_s):
                n = int(round(self.deadline_s / self.frame_s))
            object.__setattr__(self, "frames", n)

    @property
    def usable_slots(self) -> int:
        """Length of the pipeline stages: uplink slots 1..N-2, compute 2..N-1, downlink 3..N."""
        return self.frames - 2


@dataclass(frozen=True)
class LinearTrajectory:
    """Constant-velocity path; the position at frame n (1-based) is start + n * velocity * frame_s."""

    start_m: tuple[float, float, float]
    velocity_mps: tuple[float, float, float]


@dataclass(frozen=True)
class WaypointTrajectory:
    """Explicit per-frame positions; must provide at least one 3-vector per frame."""

    waypoints_m: tuple[tuple[float, float, float], ...]


Trajectory = LinearTrajectory | WaypointTrajectory


@dataclass(frozen=True)
class Scenario:
    application: Application
    channel: Channel
    devices: Devices
    timing: Timing
    trajectory: Trajectory


def sample_positions(s: Scenario) -> np.ndarray:
    """UAV positions per frame as an (N, 3) array; row i is frame i+1.

    The mobile sits at the origin, so row norms are the link distances.
    """
    n = s.timing.frames
    tr = s.trajectory
    if isinstance(tr, LinearTrajectory):
        steps = np.arange(1, n + 1, dtype=float)
        start = np.asarray(tr.start_m, dtype=float)
        drift = np.asarray(tr.velocity_mps, dtype=float) * s.timing.frame_s
        return start[None, :] + steps[:, None] * drift[None, :]
    wp = np.asarray(tr.waypoints_m, dtype=float)
    if wp.ndim != 2 or wp.shape[1] != 3:
        raise ScenarioValidationError(["trajectory.waypoints_m must be a list of 3-vectors"])
    return wp[:n].copy()


def validate(s: Scenario) -> list[str]:
    """Return every violated invariant as a human-readable message (empty when valid)."""
    v: list[str] = []
    app, ch, dev, t = s.application, s.channel, s.devices, s.timing

    def positive(value, name):
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            v.append(f"{name} must be a positive finite number, got {value!r}")

    positive(app.input_bits, "application.input_bits")
    positive(app.cycles_per_bit, "application.cycles_per_bit")
    if not (isinstance(app.output_ratio, (int, float)) and math.isfinite(app.output_ratio) and app.output_ratio >= 0):
        v.append(f"application.output_ratio must be finite and >= 0, got {app.output_ratio!r}")

    positive(ch.bandwidth_hz, "channel.bandwidth_hz")
    positive(ch.noise_psd, "channel.noise_psd")
    positive(ch.ref_gain, "channel.ref_gain")

    positive(dev.mobile_cap, "devices.gamma_mobile")
    positive(dev.cloudlet_cap, "devices.gamma_cloudlet")
    positive(dev.cloudlet_budget_j, "devices.cloudlet_budget_j")

    positive(t.slot_s, "timing.slot_s")
    positive(t.frame_s, "timing.frame_s")
    positive(t.deadline_s, "timing.deadline_s")
    if t.slot_s > 0 and t.frame_s > 0 and not t.slot_s < t.frame_s:
        v.append(f"timing.slot_s must be strictly shorter than frame_s ({t.slot_s} >= {t.frame_s})")
    if t.frame_s > 0 and math.isfinite(t.deadline_s) and t.deadline_s > 0:
        tol = _GRID_RTOL * max(t.frame_s, abs(t.deadline_s))
        if abs(t.deadline_s - t.frames * t.frame_s) > tol:
            v.append(
                f"timing.deadline_s must be an integer multiple of frame_s "
                f"(deadline {t.deadline_s}, frame {t.frame_s})"
            )
        if t.frames < 3:
            v.append(f"need at least 3 frames for the pipeline, got {t.frames}")

    tr = s.trajectory
    if isinstance(tr, WaypointTrajectory) and len(tr.waypoints_m) < max(t.frames, 0):
        v.append(
            f"trajectory.waypoints_m must provide at least {t.frames} positions, got {len(tr.waypoints_m)}"
        )
    elif t.frames >= 3:
        try:
            pos = sample_positions(s)
        except (ScenarioValidationError, ValueError, TypeError):
            v.append("trajectory positions are malformed (expected 3-vectors)")
        else:
            if not np.all(np.isfinite(pos)):
                v.append("trajectory positions must be finite")
            else:
                d2 = np.einsum("ij,ij->i", pos, pos)
                zero = np.nonzero(d2 == 0.0)[0]
                for i in zero:
                    v.append(f"trajectory passes through the mobile position at frame {i + 1} (zero distance)")
    return v


# ---------------------------------------------------------------------------
# document loading

_SECTIONS = {
    "application": {"input_bits", "cycles_per_bit", "output_ratio"},
    "channel": {"bandwidth_hz", "noise_psd_dbm_hz", "ref_snr_db", "ref_gain"},
    "devices": {"gamma_mobile", "gamma_cloudlet", "cloudlet_budget_j"},
    "timing": {"slot_s", "frame_s", "deadline_s"},
    "trajectory": {"kind", "start_m", "velocity_mps", "waypoints_m"},
}


def _require_mapping(doc, name):
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{name} must be a JSON object, got {type(doc).__name__}")


def _check_keys(section: str, obj: dict):
    unknown = set(obj) - _SECTIONS[section]
    if unknown:
        raise ScenarioFormatError(f"unknown keys in {section}: {', '.join(sorted(unknown))}")


def _num(section: str, key: str, obj: dict) -> float:
    if key not in obj:
        raise ScenarioFormatError(f"missing {section}.{key}")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(f"{section}.{key} must be a number, got {value!r}")
    return float(value)


def _vec3(section: str, key: str, value) -> tuple[float, float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 3
        or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in value)
    ):
        raise ScenarioFormatError(f"{section}.{key} must be a list of 3 numbers, got {value!r}")
    return (float(value[0]), float(value[1]), float(value[2]))


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a Scenario from an already-parsed document."""
    _require_mapping(doc, "scenario document")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ScenarioFormatError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
    missing = set(_SECTIONS) - set(doc)
    if missing:
        raise ScenarioFormatError(f"missing sections: {', '.join(sorted(missing))}")
    for name in _SECTIONS:
        _require_mapping(doc[name], name)
        _check_keys(name, doc[name])

    app_doc = doc["application"]
    application = Application(
        input_bits=_num("application", "input_bits", app_doc),
        cycles_per_bit=_num("application", "cycles_per_bit", app_doc),
        output_ratio=_num("application", "output_ratio", app_doc),
    )

    ch_doc = doc["channel"]
    bandwidth = _num("channel", "bandwidth_hz", ch_doc)
    noise_psd = 10.0 ** (_num("channel", "noise_psd_dbm_hz", ch_doc) / 10.0) * 1e-3
    has_snr = "ref_snr_db" in ch_doc
    has_gain = "ref_gain" in ch_doc
    if has_snr == has_gain:
        raise ScenarioFormatError("channel needs exactly one of ref_snr_db or ref_gain")
    if has_gain:
        ref_gain = _num("channel", "ref_gain", ch_doc)
    else:
        # reference SNR at 1 m for unit transmit power: h0 = N0 * B * 10^(snr/10)
        ref_gain = noise_psd * bandwidth * 10.0 ** (_num("channel", "ref_snr_db", ch_doc) / 10.0)
    channel = Channel(bandwidth_hz=bandwidth, noise_psd=noise_psd, ref_gain=ref_gain)

    dev_doc = doc["devices"]
    devices = Devices(
        mobile_cap=_num("devices", "gamma_mobile", dev_doc),
        cloudlet_cap=_num("devices", "gamma_cloudlet", dev_doc),
        cloudlet_budget_j=_num("devices", "cloudlet_budget_j", dev_doc),
    )

    t_doc = doc["timing"]
    timing = Timing(
        slot_s=_num("timing", "slot_s", t_doc),
        frame_s=_num("timing", "frame_s", t_doc),
        deadline_s=_num("timing", "deadline_s", t_doc),
    )

    tr_doc = doc["trajectory"]
    kind = tr_doc.get("kind")
    if not isinstance(kind, str):
        raise ScenarioFormatError("trajectory.kind must be a string")
    kind = kind.lower()
    if kind == "linear":
        if "waypoints_m" in tr_doc:
            raise ScenarioFormatError("trajectory.waypoints_m is not allowed for kind=linear")
        trajectory: Trajectory = LinearTrajectory(
            start_m=_vec3("trajectory", "start_m", tr_doc.get("start_m")),
            velocity_mps=_vec3("trajectory", "velocity_mps", tr_doc.get("velocity_mps")),
        )
    elif kind == "waypoints":
        if "start_m" in tr_doc or "velocity_mps" in tr_doc:
            raise ScenarioFormatError("trajectory.start_m/velocity_mps are not allowed for kind=waypoints")
        wps = tr_doc.get("waypoints_m")
        if not isinstance(wps, (list, tuple)) or not wps:
            raise ScenarioFormatError("trajectory.waypoints_m must be a non-empty list of 3-vectors")
        trajectory = WaypointTrajectory(
            waypoints_m=tuple(_vec3("trajectory", f"waypoints_m[{i}]", w) for i, w in enumerate(wps))
        )
    else:
        raise ScenarioFormatError(f"trajectory.kind must be 'linear' or 'waypoints', got {kind!r}")

    s = Scenario(application, channel, devices, timing, trajectory)
    violations = validate(s)
    if violations:
        raise ScenarioValidationError(violations)
    return s


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario JSON document from disk.

    Raises ScenarioFormatError for malformed documents and
    ScenarioValidationError (listing every violation) for invalid ones.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioFormatError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)
