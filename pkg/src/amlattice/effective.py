"""Rotating-wave tight-binding model of resonant amplitude modulation.

At resonance ``omega_M = ell * omega_B`` the modulation couples Wannier-Stark
states ``ell`` sites apart with

    H'_{n+ell, n} = i (J / 2) exp(i phi),   J = -alpha U0 <n+ell|cos 2z|n> / 2,

which is diagonal in quasimomentum with the dispersion
``E(k) = J sin(k ell d - phi)``.  All functions here work in lattice units
(energies in E_R, k in k_L, times in 1/omega_R, lengths in 1/k_L so that
``d = pi``); :func:`to_si_velocity` converts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .bands import NumericalError, WannierStarkLadder
from .units import REFERENCE_RECOIL_FREQUENCY, LatticeConfig

D = math.pi  # lattice period in 1/k_L

EMPIRICAL_PREFACTOR = 2500.0  # 1/s
EMPIRICAL_BETA1 = 0.35
EMPIRICAL_BETA2 = 0.25
EMPIRICAL_RANGE = (5.0, 20.0)


@dataclass(frozen=True)
class TunnelingRate:
    harmonic: int
    value: float  # J in E_R, sign kept
    matrix_element: float  # <n+ell|cos 2z|n>
    matrix_element_std: float
    band: int
    alpha: float
    depth: float

    def per_second(self, recoil_frequency: float = REFERENCE_RECOIL_FREQUENCY) -> float:
        """J / hbar in 1/s for a given omega_R (rad/s)."""
        return self.value * recoil_frequency


def matrix_elements(ladder: WannierStarkLadder, ell: int) -> np.ndarray:
    """<n+ell|cos 2z|n> for every interior pair of the ladder."""
    if ell < 1:
        raise ValueError("ell must be a positive integer")
    if len(ladder.sites) < ell + 2:
        raise NumericalError(f"ladder has {len(ladder.sites)} states, need >= {ell + 2}")
    psi = ladder.site_states
    c = np.cos(2 * ladder.grid.z)
    return np.einsum("ij,ij->i", psi[ell:].conj(), c * psi[:-ell]) * ladder.grid.dz


def tunneling_rate(ladder: WannierStarkLadder, ell: int, alpha: float,
                   depth: float | None = None, rel_tol: float = 0.01) -> TunnelingRate:
    depth = ladder.depth if depth is None else depth
    m = matrix_elements(ladder, ell)
    # the gauge makes every pair element equal and real up to roundoff
    mean = complex(np.mean(m))
    std = float(np.std(m))
    if std > rel_tol * abs(mean):
        raise NumericalError(
            f"pair matrix elements scatter by {std / abs(mean):.1e} relative; enlarge the box"
        )
    if abs(mean.imag) > 1e-6 * max(abs(mean), 1e-300):
        raise NumericalError("matrix element is not real; ladder gauge inconsistent")
    return TunnelingRate(
        harmonic=ell,
        value=-alpha * depth * mean.real / 2,
        matrix_element=mean.real,
        matrix_element_std=std,
        band=ladder.band_index,
        alpha=alpha,
        depth=depth,
    )


@dataclass(frozen=True)
class EffectiveDispersion:
    J: float  # E_R
    ell: int
    phi: float = 0.0

    @property
    def zone_edge(self) -> float:
        """Reduced zone edge k_L / ell, in units of k_L."""
        return 1.0 / self.ell


def dispersion(disp: EffectiveDispersion, k) -> np.ndarray:
    return disp.J * np.sin(np.asarray(k) * disp.ell * D - disp.phi)


def group_velocity(disp: EffectiveDispersion, k) -> np.ndarray:
    """dE/dk in units of omega_R / k_L."""
    return disp.ell * D * disp.J * np.cos(np.asarray(k) * disp.ell * D - disp.phi)


def rms_speed(disp: EffectiveDispersion) -> float:
    """k-averaged RMS group velocity, ell d |J| / sqrt(2)."""
    return disp.ell * D * abs(disp.J) / math.sqrt(2)


def to_si_velocity(cfg: LatticeConfig, v: float) -> float:
    s = cfg.scales
    return v * s.recoil_frequency / s.wave_vector


def empirical_J(depth: float, alpha: float, ell: int = 1) -> float:
    """Fitted |J_ell| / hbar in 1/s from the measured depth dependence."""
    lo, hi = EMPIRICAL_RANGE
    if not lo <= depth <= hi:
        warnings.warn(f"U0 = {depth} E_R outside the fit range [{lo}, {hi}]", stacklevel=2)
    j1 = EMPIRICAL_PREFACTOR * alpha * depth * math.exp(-EMPIRICAL_BETA2 * depth)
    return j1 * math.exp(-EMPIRICAL_BETA1 * (ell - 1) * depth)


def analytic_echo_sigma(sigma0, sigma1, tau, t_fr):
    """RMS size after burst, freeze ``t_fr`` and burst; period ``tau``."""
    if np.any(np.asarray(sigma0) < 0) or np.any(np.asarray(sigma1) < 0):
        raise ValueError("sigma0 and sigma1 must be non-negative")
    return np.sqrt(sigma0**2 + sigma1**2 * np.cos(np.pi * np.asarray(t_fr) / tau) ** 2)


# --- tight-binding propagation ------------------------------------------------

def _kappa(n_sites):
    # quasimomentum k d of each FFT component of a periodic site lattice
    return 2 * np.pi * np.fft.fftfreq(n_sites)


def tight_binding_propagate(amplitudes, program, J: float | dict, force: float,
                            output_times=None, norm_tol: float = 1e-9, substeps: int = 64):
    """Evolve site amplitudes through a modulation program.

    ``amplitudes`` has the sites on its last axis (site ``n`` at index
    ``n + n_sites // 2``, periodic) and may carry leading batch axes.
    ``J`` is the tunneling rate per unit modulation amplitude in E_R
    (``-U0 <n+ell|cos 2z|n> / 2``), or a mapping ``{ell: J}``.
    ``force`` is hbar omega_B in E_R and program times are lattice units.

    The result is in the lab frame: Wannier-Stark phases ``exp(-i n F t)``
    accumulate during holds and bursts alike, which is Bloch's acceleration
    theorem in the site basis.  Returns the final amplitudes, or a list of
    ``(t, amplitudes)`` when ``output_times`` is given.
    """
    a = np.array(amplitudes, dtype=complex)
    norm0 = np.sum(np.abs(a) ** 2, axis=-1)
    if np.any(np.abs(norm0 - 1) > norm_tol):
        raise ValueError("amplitudes must be normalized")
    n_sites = a.shape[-1]
    n = np.arange(n_sites) - n_sites // 2
    kappa = _kappa(n_sites)
    bounds = program.boundaries()
    outs = [] if output_times is None else sorted(float(t) for t in output_times)
    events = sorted(set(bounds) | set(outs))
    snaps = []
    if outs and outs[0] == events[0]:
        snaps.append((events[0], a.copy()))
    for ta, tb in zip(events[:-1], events[1:]):
        seg, start = program.segment_at(0.5 * (ta + tb))
        if seg.kind == "burst" and seg.alpha != 0:
            rate = (J[seg.ell] if isinstance(J, dict) else J) * seg.alpha
            phi = program.effective_phase(seg, start, force)
            detuning = (seg.ratio - seg.ell) * force
            # move to the interaction picture of the burst's switch-on
            a = a * np.exp(1j * n * force * (ta - start))
            if detuning == 0:
                # H' at different times commutes, only the envelope area matters
                area = seg.cumulative_area(tb - start) - seg.cumulative_area(ta - start)
                e = rate * np.sin(kappa * seg.ell - phi)
                a = np.fft.ifft(np.exp(-1j * e * area) * np.fft.fft(a, axis=-1), axis=-1)
            else:
                # coupling phase rotates as phi - delta t; midpoint rule
                h = (tb - ta) / substeps
                for s in range(substeps):
                    tm = ta - start + (s + 0.5) * h
                    w = float(seg.envelope(tm))
                    e = w * rate * np.sin(kappa * seg.ell - (phi - detuning * tm))
                    a = np.fft.ifft(np.exp(-1j * e * h) * np.fft.fft(a, axis=-1), axis=-1)
            a = a * np.exp(-1j * n * force * (tb - start))
        else:
            a = a * np.exp(-1j * n * force * (tb - ta))
        if tb in outs:
            snaps.append((tb, a.copy()))
    return a if output_times is None else snaps
