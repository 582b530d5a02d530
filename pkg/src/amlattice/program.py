"""Modulation programs: ordered static holds and amplitude-modulation bursts.

All durations and times are in lattice units (1/omega_R).  A burst
modulates the depth as ``U0 [1 + alpha w(t) sin(omega_M (t - t_ref) - phi)]``
where the envelope ``w`` rises from 0 to 1 as ``sin^2`` over ``ramp`` at the
start and falls back the same way at the end (``ramp = 0`` gives a square
burst).  Abrupt switching excites above-barrier components that escape the
lattice, so protocols use a short ramp.
With ``phase_reference="segment"`` the reference time ``t_ref`` is the
burst's own switch-on, so identical bursts are identical waveforms no
matter when they start.  ``"global"`` keeps one clock starting at the
program origin ``t0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PHASE_REFERENCES = ("segment", "global")


@dataclass(frozen=True)
class Hold:
    duration: float
    kind: str = field(default="hold", init=False)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")


@dataclass(frozen=True)
class Burst:
    duration: float
    ell: int = 1
    alpha: float = 0.2
    phase: float = 0.0  # rad
    phase_reference: str = "segment"
    omega_ratio: float | None = None  # omega_M / omega_B, None = resonant
    ramp: float = 0.0
    kind: str = field(default="burst", init=False)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError("ell must be a positive integer")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.phase_reference not in PHASE_REFERENCES:
            raise ValueError(f"phase_reference must be one of {PHASE_REFERENCES}")
        if self.omega_ratio is not None and not self.omega_ratio > 0:
            raise ValueError("omega_ratio must be positive")
        if not 0.0 <= self.ramp <= self.duration / 2:
            raise ValueError("ramp must lie in [0, duration / 2]")

    def envelope(self, t_rel):
        """Switching envelope at time ``t_rel`` after the burst starts."""
        t_rel = np.asarray(t_rel, dtype=float)
        if self.ramp == 0:
            return np.ones_like(t_rel)
        edge = np.minimum(t_rel, self.duration - t_rel) / self.ramp
        return np.sin(0.5 * np.pi * np.clip(edge, 0.0, 1.0)) ** 2

    @property
    def area(self) -> float:
        """Integral of the envelope over the burst."""
        return self.duration - self.ramp

    def cumulative_area(self, t_rel: float) -> float:
        """Integral of the envelope from switch-on to ``t_rel``."""
        r, T = self.ramp, self.duration
        t = min(max(t_rel, 0.0), T)
        if r == 0:
            return t

        def rise(s):
            return s / 2 - r / (2 * math.pi) * math.sin(math.pi * s / r)

        if t <= r:
            return rise(t)
        if t <= T - r:
            return r / 2 + (t - r)
        return self.area - rise(T - t)

    @property
    def ratio(self) -> float:
        return float(self.ell if self.omega_ratio is None else self.omega_ratio)


@dataclass(frozen=True)
class ModulationProgram:
    segments: tuple
    t0: float = 0.0  # origin of the global modulation clock

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("program has no segments")

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def with_start_times(self):
        t = 0.0
        for s in self.segments:
            yield s, t
            t += s.duration

    def boundaries(self) -> list[float]:
        out = [0.0]
        for s in self.segments:
            out.append(out[-1] + s.duration)
        return out

    def segment_at(self, t: float):
        if t < 0 or t > self.duration * (1 + 1e-12):
            raise ValueError(f"t = {t} outside program span [0, {self.duration}]")
        for s, start in self.with_start_times():
            if t < start + s.duration:
                return s, start
        return s, start

    def reference_time(self, seg: Burst, start: float) -> float:
        return start if seg.phase_reference == "segment" else self.t0

    def effective_phase(self, seg: Burst, start: float, force: float) -> float:
        """Modulation phase seen from the burst's switch-on time."""
        if seg.phase_reference == "segment":
            return seg.phase
        return seg.phase - seg.ratio * force * (start - self.t0)

    def modulation(self, t: float, force: float) -> float:
        """alpha f(t) at time ``t``; zero during holds."""
        seg, start = self.segment_at(t)
        if seg.kind == "hold":
            return 0.0
        t_ref = self.reference_time(seg, start)
        w = float(seg.envelope(t - start))
        return seg.alpha * w * math.sin(seg.ratio * force * (t - t_ref) - seg.phase)

    def scaled(self, factor: float) -> "ModulationProgram":
        """Program with every duration multiplied by ``factor``."""
        segs = []
        for s in self.segments:
            d = s.duration * factor
            segs.append(Hold(d) if s.kind == "hold" else Burst(
                d, s.ell, s.alpha, s.phase, s.phase_reference, s.omega_ratio,
                s.ramp * factor))
        return ModulationProgram(tuple(segs), self.t0 * factor)

    def to_dict(self) -> dict:
        segs = []
        for s in self.segments:
            if s.kind == "hold":
                segs.append({"kind": "hold", "duration": s.duration})
            else:
                segs.append({"kind": "burst", "duration": s.duration, "ell": s.ell,
                             "alpha": s.alpha, "phase": s.phase,
                             "phase_reference": s.phase_reference,
                             "omega_ratio": s.omega_ratio, "ramp": s.ramp})
        return {"t0": self.t0, "segments": segs}

    @classmethod
    def from_dict(cls, d: dict) -> "ModulationProgram":
        segs = []
        for s in d["segments"]:
            s = dict(s)
            kind = s.pop("kind")
            segs.append(Hold(**s) if kind == "hold" else Burst(**s))
        return cls(tuple(segs), d.get("t0", 0.0))


def echo_program(tau_b: float, burst: float, t_fr: float, ell: int, alpha: float,
                 phase: float = 0.0, phase_reference: str = "segment",
                 ramp: float = 0.5) -> ModulationProgram:
    """Burst, freeze for ``t_fr``, identical burst.

    ``burst`` and ``ramp`` are in Bloch periods, ``t_fr`` in lattice units.
    """
    b = Burst(burst * tau_b, ell, alpha, phase, phase_reference, ramp=ramp * tau_b)
    segs = [b] + ([Hold(t_fr)] if t_fr > 0 else []) + [b]
    return ModulationProgram(tuple(segs))
