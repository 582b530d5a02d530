"""Ensembles and the experiment protocols: echo, burst-phase scan, mirror, alpha scan.

Ensembles are incoherent mixtures.  Quasimomentum members are propagated
individually; site offsets are integer translations of a member, so their
observables follow from the member's first two moments without extra
propagation.  Rows are propagated in fixed-size chunks and reduced in
member order, which makes every result independent of the worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import analysis
from .bands import NumericalError
from .effective import EffectiveDispersion, rms_speed, tight_binding_propagate, tunneling_rate
from .grid import SpatialGrid
from .program import Burst, Hold, ModulationProgram
from .tdse import (
    GUARD_TOLERANCE,
    BlochPacket,
    SiteLocalized,
    SplitStepPropagator,
    ladder_for,
    packet_coefficients,
    prepare_state,
    steps_per_bloch,
)
from .units import LatticeConfig

BACKENDS = ("tdse", "tight_binding")
CHUNK_ROWS = 8
DEFAULT_BURST_BLOCH = 20.0
DEFAULT_RAMP_BLOCH = 0.5
PACKET_CUTOFF = 8.0  # packet truncation in RMS site widths
BOX_MARGIN = 12  # sites kept clear beyond the expected front
MIN_BOX = 64


class ProtocolError(RuntimeError):
    """A backend failure with the scan point that caused it."""


# --- ensembles ------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSpec:
    """Incoherent initial ensemble.

    ``loading="site"`` uses Wannier-Stark states, which already cover the
    zone uniformly, so the quasimomentum grid is not used.  ``"packet"``
    uses Gaussian Bloch packets of RMS width ``packet_dk`` centred on a
    stratified midpoint grid of ``n_k`` points over ``k_center +- k_width/2``
    (``k_width = 2`` is the whole zone; ``k_width = 0`` is a single packet).
    Site offsets are Gaussian with RMS ``sigma0_sites``.  With ``jitter``
    each k point is drawn uniformly inside its stratum from ``seed``.
    """

    backend: str = "tdse"
    band: int = 1
    loading: str = "site"
    n_k: int = 32
    k_center: float = 0.0
    k_width: float = 2.0
    packet_dk: float = 0.05
    sigma0_sites: float = 5.0
    seed: int = 0
    jitter: bool = False

    def __post_init__(self):
        if self.backend == "tb":
            object.__setattr__(self, "backend", "tight_binding")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.loading not in ("site", "packet"):
            raise ValueError("loading must be 'site' or 'packet'")
        if self.band not in (1, 2):
            raise ValueError("band must be 1 or 2")
        if self.loading == "packet" and self.k_width > 0 and self.n_k < 8:
            raise ValueError("n_k must be >= 8")
        if not 0 <= self.k_width <= 2:
            raise ValueError("k_width must lie in [0, 2] k_L")
        if self.sigma0_sites < 0:
            raise ValueError("sigma0_sites must be non-negative")
        if self.loading == "packet" and not 0 < self.packet_dk < 1:
            raise ValueError("packet_dk must lie in (0, 1) k_L")


@dataclass
class Ensemble:
    spec: EnsembleSpec
    states: list  # base state specs, one per quasimomentum member
    k: np.ndarray
    k_weights: np.ndarray
    offsets: np.ndarray  # site offsets
    offset_weights: np.ndarray

    @property
    def members(self) -> list:
        """All ``(state spec, weight)`` pairs, quasimomentum-major."""
        out = []
        for s, wk in zip(self.states, self.k_weights):
            for o, wo in zip(self.offsets, self.offset_weights):
                out.append((_shifted(s, int(o)), wk * wo))
        return out

    @property
    def n_members(self) -> int:
        return len(self.states) * len(self.offsets)

    def momentum_rms(self) -> float:
        """RMS quasimomentum of the mixture about its mean, in k_L."""
        if self.spec.loading == "site":
            return 1.0 / math.sqrt(3.0)
        kbar = self.k_weights @ self.k
        return math.sqrt(self.k_weights @ (self.k - kbar) ** 2 + self.spec.packet_dk**2)


def _shifted(state, offset: int):
    if isinstance(state, SiteLocalized):
        return replace(state, site=state.site + offset)
    return replace(state, center=state.center + offset)


def site_offsets(sigma0: float, cutoff: float = 5.0):
    """Integer site offsets with normalized Gaussian weights."""
    if sigma0 == 0:
        return np.zeros(1, dtype=int), np.ones(1)
    m = math.ceil(cutoff * sigma0)
    o = np.arange(-m, m + 1)
    w = np.exp(-0.5 * (o / sigma0) ** 2)
    return o, w / w.sum()


def k_grid(n_k: int, center: float, width: float, seed: int = 0, jitter: bool = False):
    """Stratified grid over ``center +- width / 2`` (midpoints unless jittered)."""
    if width == 0:
        return np.array([center]), np.ones(1)
    u = np.full(n_k, 0.5)
    if jitter:
        u = np.random.default_rng(seed).random(n_k)
    k = center - width / 2 + width * (np.arange(n_k) + u) / n_k
    return k, np.full(n_k, 1.0 / n_k)


def build_ensemble(spec: EnsembleSpec, cfg: LatticeConfig | None = None) -> Ensemble:
    offsets, ow = site_offsets(spec.sigma0_sites)
    if spec.loading == "site":
        states = [SiteLocalized(spec.band, 0)]
        k, kw = np.array([math.nan]), np.ones(1)
    else:
        k, kw = k_grid(spec.n_k, spec.k_center, spec.k_width, spec.seed, spec.jitter)
        states = [BlochPacket(spec.band, float(ki), spec.packet_dk, 0.0) for ki in k]
    return Ensemble(spec, states, k, kw, offsets, ow)


def ensemble_extent(ens: Ensemble) -> float:
    if ens.spec.loading == "site":
        return 4.0
    return PACKET_CUTOFF / (2 * math.pi * ens.spec.packet_dk) + 2.0


def box_for(extent: float, excursion: float, ballistic: bool = False,
            minimum: int = MIN_BOX) -> int:
    """Smallest power-of-two box whose half-width covers the expected front.

    ``excursion`` is the largest distance (sites) any component can travel
    at the maximal group velocity.  A localized start (``ballistic``)
    spreads with Bessel-function tails whose Airy edge has a width growing
    as ``excursion**(1/3)``; the margin keeps them below the guard level.
    The box is also at least three times the transport distance.
    """
    margin = BOX_MARGIN
    if ballistic:
        margin += 8 * (excursion / 2) ** (1 / 3)
    half = extent + excursion + margin
    n = minimum
    while n / 2 < half or n < 3 * excursion:
        n *= 2
    return n


# --- pooled observables -----------------------------------------------------------

def pool(mean, var, k_weights, offsets, offset_weights):
    """Mixture mean and variance from per-member moments.

    ``mean`` and ``var`` have the quasimomentum members on axis 0; the
    site offsets translate each member rigidly.
    """
    mo = offset_weights @ offsets
    vo = offset_weights @ (offsets - mo) ** 2
    m = np.tensordot(k_weights, mean, axes=(0, 0))
    second = np.tensordot(k_weights, var + mean**2, axes=(0, 0))
    return m + mo, second - m**2 + vo


def member_spread(values, k_weights):
    """Weighted standard deviation across quasimomentum members."""
    mu = np.tensordot(k_weights, values, axes=(0, 0))
    return np.sqrt(np.maximum(np.tensordot(k_weights, (values - mu) ** 2, axes=(0, 0)), 0))


# --- backends ---------------------------------------------------------------------

@dataclass
class RunOutput:
    times: np.ndarray
    mean: np.ndarray  # (rows, times), sites
    var: np.ndarray
    norm: np.ndarray
    final: np.ndarray  # (rows, n)
    snapshots: list  # [(t, rows array)]
    max_edge: float = 0.0
    n_steps: int = 0


def _tdse_chunk(cfg, grid, dt, guard, program, rows, output_times, keep):
    prop = SplitStepPropagator(cfg, grid, dt, guard)
    r = prop.run(rows, program, output_times, keep_snapshots=keep)
    return (r.times, r.barycenter, r.variance, r.norm, r.final.amplitudes,
            r.snapshots, r.max_edge, r.n_steps)


def _tb_moments(a, n):
    p = np.abs(a) ** 2
    nrm = p.sum(axis=-1)
    m = p @ n / nrm
    return nrm, m, p @ n**2 / nrm - m**2


class TDSEBackend:
    name = "tdse"

    def __init__(self, cfg: LatticeConfig, box_sites: int, dt: float,
                 points_per_site: int = 16, jobs: int = 1, guard: float = GUARD_TOLERANCE):
        self.cfg = cfg
        self.grid = SpatialGrid(box_sites, points_per_site)
        self.dt = dt
        self.jobs = jobs
        self.guard = guard
        self.max_edge = 0.0  # over every run of this backend

    def initial(self, states) -> np.ndarray:
        return np.array([prepare_state(self.cfg, s, self.grid, dt=self.dt).amplitudes
                         for s in states])

    def run(self, rows, program, output_times, keep=False) -> RunOutput:
        rows = np.ascontiguousarray(np.atleast_2d(rows), dtype=complex)
        chunks = [rows[i:i + CHUNK_ROWS] for i in range(0, len(rows), CHUNK_ROWS)]
        args = (self.cfg, self.grid, self.dt, self.guard, program)
        if self.jobs > 1 and len(chunks) > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as ex:
                futs = [ex.submit(_tdse_chunk, *args, c, output_times, keep) for c in chunks]
                outs = [f.result() for f in futs]
        else:
            outs = [_tdse_chunk(*args, c, output_times, keep) for c in chunks]
        snaps = []
        if keep:
            for i, (t, _) in enumerate(outs[0][5]):
                snaps.append((t, np.concatenate([o[5][i][1] for o in outs])))
        self.max_edge = max(self.max_edge, *(o[6] for o in outs))
        return RunOutput(
            times=outs[0][0],
            mean=np.concatenate([o[1] for o in outs]),
            var=np.concatenate([o[2] for o in outs]),
            norm=np.concatenate([o[3] for o in outs]),
            final=np.concatenate([o[4] for o in outs]),
            snapshots=snaps,
            max_edge=max(o[6] for o in outs),
            n_steps=outs[0][7],
        )

    def free_reference(self, rows, t):
        return None

    def resolution(self) -> dict:
        return {"box_sites": self.grid.n_sites, "points_per_site": self.grid.points_per_site,
                "n_points": self.grid.n_points, "dt": self.dt,
                "steps_per_bloch": self.cfg.bloch_period / self.dt}


class TightBindingBackend:
    name = "tight_binding"

    def __init__(self, cfg: LatticeConfig, n_sites: int, ells=(1,)):
        self.cfg = cfg
        self.n_sites = n_sites
        self.n = np.arange(n_sites) - n_sites // 2
        self.max_edge = 0.0
        lad = ladder_for(cfg, cfg.band)
        self.J = {ell: tunneling_rate(lad, ell, 1.0, cfg.depth).value for ell in ells}

    def initial(self, states) -> np.ndarray:
        out = np.zeros((len(states), self.n_sites), dtype=complex)
        c0 = self.n_sites // 2
        for i, s in enumerate(states):
            if isinstance(s, SiteLocalized):
                out[i, c0 + s.site] = 1.0
            else:
                n, c = packet_coefficients(s, PACKET_CUTOFF)
                out[i, c0 + n] = c
        return out

    def run(self, rows, program, output_times, keep=False) -> RunOutput:
        rows = np.atleast_2d(np.asarray(rows, dtype=complex))
        out_t = sorted(set(float(t) for t in output_times))
        snaps = tight_binding_propagate(rows, program, self.J, self.cfg.force, out_t)
        moms = [_tb_moments(a, self.n) for _, a in snaps]
        return RunOutput(
            times=np.array([t for t, _ in snaps]),
            mean=np.array([m[1] for m in moms]).T,
            var=np.array([m[2] for m in moms]).T,
            norm=np.array([m[0] for m in moms]).T,
            final=snaps[-1][1],
            snapshots=snaps if keep else [],
        )

    def free_reference(self, rows, t):
        return rows * np.exp(-1j * self.n * self.cfg.force * t)

    def resolution(self) -> dict:
        return {"n_sites": self.n_sites, "J_per_alpha": {str(k): v for k, v in self.J.items()}}


def make_backend(cfg: LatticeConfig, ens: Ensemble, excursion: float, ells=(1,),
                 alpha: float = 0.0, dt: float | None = None, box_sites: int | None = None,
                 points_per_site: int = 16, jobs: int = 1):
    ballistic = ens.spec.loading == "site"
    if ballistic:
        # the depth dependence of the bare tunneling adds transport beyond
        # first order in alpha, and at large alpha a small fraction is
        # promoted to the faster second band; (1 + alpha)**2 covers both
        # up to alpha = 0.9
        excursion *= (1 + alpha) ** 2
    box = box_sites or box_for(ensemble_extent(ens), excursion, ballistic)
    if ens.spec.backend == "tight_binding":
        return TightBindingBackend(cfg, 2 * box, ells)
    if dt is None:
        dt = cfg.bloch_period / steps_per_bloch(cfg, alpha)
    return TDSEBackend(cfg, box, dt, points_per_site, jobs)


def _J(cfg: LatticeConfig, band: int, ell: int) -> float:
    """Tunneling rate per unit alpha, E_R."""
    return tunneling_rate(ladder_for(cfg, band), ell, 1.0, cfg.depth).value


# --- results ----------------------------------------------------------------------

@dataclass
class ExperimentResult:
    experiment: str
    scan_name: str
    scan_values: np.ndarray
    mean: np.ndarray  # primary observable per scan point
    spread: np.ndarray  # ensemble spread of the primary observable
    n_members: int
    columns: dict = field(default_factory=dict)  # extra per-point columns
    members: list = field(default_factory=list)  # per-member rows
    metadata: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def points_table(self):
        header = [self.scan_name, "mean", "spread", "n_members", *self.columns]
        rows = []
        for i, x in enumerate(self.scan_values):
            rows.append([x, self.mean[i], self.spread[i], self.n_members,
                         *(self.columns[c][i] for c in self.columns)])
        return header, rows

    def member_table(self):
        if not self.members:
            return [], []
        header = list(self.members[0])
        return header, [[m[h] for h in header] for m in self.members]


def _metadata(cfg, ens, backend, program, **extra):
    md = {
        "depth_Er": cfg.depth,
        "force_Er": cfg.force,
        "bloch_period": cfg.bloch_period,
        "bloch_period_s": cfg.seconds(cfg.bloch_period),
        "band": ens.spec.band,
        "ensemble": asdict(ens.spec),
        "backend": backend.name,
        "resolution": backend.resolution(),
        "program": program.to_dict() if program is not None else None,
    }
    md.update(extra)
    return md


def _wrap(exc, context):
    if isinstance(exc, NumericalError):
        return ProtocolError(f"{context}: {exc}")
    return exc


def _run_bursts(backend, starts, burst: Burst, start_times, output_times=None):
    """Run ``burst`` on stacked start states, grouped by effective phase.

    ``starts`` is ``(points, members, n)``; ``start_times[p]`` is the
    switch-on time of point ``p`` on the global modulation clock.  With a
    segment phase reference all points share one waveform.
    """
    n_pts, n_mem = starts.shape[:2]
    phases = []
    for t0 in start_times:
        prog = ModulationProgram((Hold(t0), burst)) if t0 > 0 else ModulationProgram((burst,))
        seg, start = prog.segments[-1], prog.boundaries()[-2]
        phases.append(prog.effective_phase(seg, start, backend.cfg.force) % (2 * math.pi))
    keys = np.round(np.array(phases), 9)
    out_t = [0.0, burst.duration] if output_times is None else output_times
    mean = var = norm = final = None
    times = None
    for key in sorted(set(keys)):
        pts = np.flatnonzero(keys == key)
        b = replace(burst, phase=float(key), phase_reference="segment")
        res = backend.run(starts[pts].reshape(len(pts) * n_mem, -1),
                          ModulationProgram((b,)), out_t)
        if mean is None:
            times = res.times
            shape = (n_pts, n_mem, len(res.times))
            mean, var, norm = np.empty(shape), np.empty(shape), np.empty(shape)
            final = np.empty((n_pts, n_mem, res.final.shape[-1]), dtype=complex)
        mean[pts] = res.mean.reshape(len(pts), n_mem, -1)
        var[pts] = res.var.reshape(len(pts), n_mem, -1)
        norm[pts] = res.norm.reshape(len(pts), n_mem, -1)
        final[pts] = res.final.reshape(len(pts), n_mem, -1)
    return times, mean, var, norm, final


def _hold_snapshots(backend, rows, times):
    """States after holding ``rows`` for each of ``times`` (sorted, >= 0)."""
    times = np.asarray(times, dtype=float)
    out = np.empty((len(times),) + rows.shape, dtype=complex)
    pos = times > 0
    out[~pos] = rows
    if np.any(pos):
        res = backend.run(rows, ModulationProgram((Hold(float(times.max())),)),
                          np.unique(np.concatenate([[0.0], times[pos]])), keep=True)
        snap = dict(res.snapshots)
        for i in np.flatnonzero(pos):
            t = min(snap, key=lambda s: abs(s - times[i]))
            out[i] = snap[t]
    return out


# --- echo scan --------------------------------------------------------------------

def run_echo_scan(cfg: LatticeConfig, ell: int, alpha: float, burst_duration: float,
                  t_fr, ensemble: EnsembleSpec, phase: float = 0.0,
                  phase_reference: str = "segment", ramp: float | None = None,
                  dt: float | None = None, box_sites: int | None = None,
                  points_per_site: int = 16, jobs: int = 1,
                  self_check: bool = False) -> ExperimentResult:
    """RMS size after burst, freeze ``t_fr``, identical burst.

    Durations are lattice units.  ``ramp`` defaults to half a Bloch period.
    """
    tb = cfg.bloch_period
    if burst_duration < 5 * tb * (1 - 1e-9):
        raise ValueError("burst_duration must be >= 5 Bloch periods")
    ramp = DEFAULT_RAMP_BLOCH * tb if ramp is None else ramp
    t_fr = np.sort(np.asarray(t_fr, dtype=float))
    if np.any(t_fr < 0):
        raise ValueError("freezing times must be non-negative")
    ens = build_ensemble(ensemble, cfg)
    burst = Burst(burst_duration, ell, alpha, phase, phase_reference, ramp=ramp)
    J = _J(cfg, ensemble.band, ell)
    excursion = 2 * ell * abs(J) * alpha * burst.area
    backend = make_backend(cfg, ens, excursion, (ell,), alpha, dt, box_sites,
                           points_per_site, jobs)
    t_start = time.perf_counter()
    try:
        rows0 = backend.initial(ens.states)
        r1 = backend.run(rows0, ModulationProgram((burst,)), [0.0, burst_duration])
        held = _hold_snapshots(backend, r1.final, t_fr)
        times, mean, var, norm, final = _run_bursts(
            backend, held, burst, burst_duration + t_fr)
    except NumericalError as exc:
        raise _wrap(exc, f"echo scan (ell={ell}, U0={cfg.depth}, alpha={alpha})") from exc
    m_end, v_end = mean[:, :, -1].T, var[:, :, -1].T  # (members, points)
    pm, pv = pool(m_end, v_end, ens.k_weights, ens.offsets, ens.offset_weights)
    sigma = np.sqrt(pv)
    _, v1 = pool(r1.mean[:, -1], r1.var[:, -1], ens.k_weights, ens.offsets, ens.offset_weights)
    _, v0 = pool(r1.mean[:, 0], r1.var[:, 0], ens.k_weights, ens.offsets, ens.offset_weights)
    drift = float(max(np.max(np.abs(norm - norm[:, :, :1])), np.max(np.abs(r1.norm - r1.norm[:, :1]))))
    fid = np.full(len(t_fr), np.nan)
    ref = backend.free_reference(rows0, 2 * burst_duration + t_fr[:, None, None])
    if ref is not None:
        ov = np.abs(np.sum(ref.conj() * final, axis=-1)) ** 2  # (points, members)
        fid = ov @ ens.k_weights
    columns = {
        "barycenter": pm,
        "fidelity": fid,
        "t_fr_bloch": t_fr / tb,
    }
    members = []
    for p, t in enumerate(t_fr):
        for j in range(len(ens.states)):
            members.append({"t_fr": t, "member": j, "k": float(ens.k[j]),
                            "weight": float(ens.k_weights[j]),
                            "barycenter": float(mean[p, j, -1]),
                            "rms": float(math.sqrt(max(var[p, j, -1], 0)))})
    summary = {
        "sigma_initial": float(math.sqrt(v0)),
        "sigma_after_burst1": float(math.sqrt(v1)),
        "J_Er": J * alpha,
        "J_per_s": J * alpha * cfg.scales.recoil_frequency,
        "tau_ell": tb / ell,
        "norm_drift": drift,
        "max_edge": backend.max_edge,
        "wall_time_s": time.perf_counter() - t_start,
    }
    result = ExperimentResult(
        "echo", "t_fr", t_fr, sigma,
        member_spread(np.sqrt(np.maximum(var[:, :, -1], 0)).T, ens.k_weights),
        ens.n_members, columns, members,
        _metadata(cfg, ens, backend, None, ell=ell, alpha=alpha, phase=phase,
                  phase_reference=phase_reference, burst_duration=burst_duration,
                  ramp=ramp),
        summary,
    )
    if self_check:
        _self_check(result, backend, run_echo_scan, cfg, ell, alpha, burst_duration, t_fr,
                    ensemble, phase=phase, phase_reference=phase_reference, ramp=ramp,
                    box_sites=box_sites, points_per_site=points_per_site, jobs=jobs)
    return result


def _self_check(result, backend, fn, *args, **kw):
    if not isinstance(backend, TDSEBackend):
        return
    kw["box_sites"] = backend.grid.n_sites
    fine = fn(*args, dt=backend.dt / 2, **kw)
    scale = np.maximum(np.abs(result.mean), np.max(np.abs(result.mean)) * 1e-3)
    result.summary["self_check_max_rel"] = float(np.max(np.abs(fine.mean - result.mean) / scale))


# --- burst-phase scan -------------------------------------------------------------

def run_burst_phase_scan(cfg: LatticeConfig, ell: int, alpha: float, burst_duration: float,
                         t0_values, ensemble: EnsembleSpec, phase: float = 0.0,
                         phase_reference: str = "segment", ramp: float | None = None,
                         dt: float | None = None, box_sites: int | None = None,
                         points_per_site: int = 16, jobs: int = 1,
                         self_check: bool = False) -> ExperimentResult:
    """Barycentric displacement during one burst switched on at ``t0``.

    The packet is held (Bloch oscillating) until ``t0``, which sets its
    quasimomentum at switch-on to ``k0 - F t0 / pi``.
    """
    tb = cfg.bloch_period
    ramp = DEFAULT_RAMP_BLOCH * tb if ramp is None else ramp
    ens = build_ensemble(ensemble, cfg)
    if ens.momentum_rms() >= 0.2 / ell:
        raise ValueError("ensemble momentum RMS must be < 0.2 k_L / ell")
    t0 = np.sort(np.asarray(t0_values, dtype=float))
    if np.any(t0 < 0):
        raise ValueError("switch-on times must be non-negative")
    burst = Burst(burst_duration, ell, alpha, phase, phase_reference, ramp=ramp)
    J = _J(cfg, ensemble.band, ell)
    backend = make_backend(cfg, ens, ell * abs(J) * alpha * burst.area, (ell,), alpha, dt,
                           box_sites, points_per_site, jobs)
    t_start = time.perf_counter()
    try:
        rows0 = backend.initial(ens.states)
        held = _hold_snapshots(backend, rows0, t0)
        times, mean, var, norm, _ = _run_bursts(backend, held, burst, t0)
    except NumericalError as exc:
        raise _wrap(exc, f"burst-phase scan (ell={ell}, U0={cfg.depth})") from exc
    disp = (mean[:, :, -1] - mean[:, :, 0]).T  # (members, points)
    d = ens.k_weights @ disp
    _, pv = pool(mean[:, :, -1].T, var[:, :, -1].T, ens.k_weights, ens.offsets, ens.offset_weights)
    members = []
    for p, t in enumerate(t0):
        for j in range(len(ens.states)):
            members.append({"t0": t, "member": j, "k": float(ens.k[j]),
                            "weight": float(ens.k_weights[j]),
                            "displacement": float(disp[j, p])})
    disp_tb = EffectiveDispersion(J * alpha, ell, phase)
    summary = {
        "J_Er": J * alpha,
        "k_at_switch_on": list(ensemble.k_center - cfg.force * t0 / math.pi),
        "max_speed_sites": ell * abs(disp_tb.J),
        "norm_drift": float(np.max(np.abs(norm - norm[:, :, :1]))),
        "max_edge": backend.max_edge,
        "wall_time_s": time.perf_counter() - t_start,
    }
    result = ExperimentResult(
        "burst_phase", "t0", t0, d, member_spread(disp, ens.k_weights), ens.n_members,
        {"t0_bloch": t0 / tb, "rms_end": np.sqrt(pv)}, members,
        _metadata(cfg, ens, backend, None, ell=ell, alpha=alpha, phase=phase,
                  phase_reference=phase_reference, burst_duration=burst_duration, ramp=ramp),
        summary,
    )
    if self_check:
        _self_check(result, backend, run_burst_phase_scan, cfg, ell, alpha, burst_duration,
                    t0, ensemble, phase=phase, phase_reference=phase_reference, ramp=ramp,
                    box_sites=box_sites, points_per_site=points_per_site, jobs=jobs)
    return result


# --- mirror -----------------------------------------------------------------------

def mirror_program(cfg: LatticeConfig, ell: int, alpha: float, burst_duration: float,
                   t_fr: float, phase: float = 0.0, ramp: float | None = None):
    ramp = DEFAULT_RAMP_BLOCH * cfg.bloch_period if ramp is None else ramp
    b = Burst(burst_duration, ell, alpha, phase, "segment", ramp=ramp)
    return ModulationProgram((b, Hold(t_fr), b))


def _plateau_speed(t, x, start, burst):
    m = (t >= start + burst.ramp - 1e-9) & (t <= start + burst.duration - burst.ramp + 1e-9)
    slope, _ = np.polyfit(t[m], x[m], 1)
    return float(slope)


def run_mirror(cfg: LatticeConfig, ensemble: EnsembleSpec, ell: int = 1, alpha: float = 0.33,
               burst_duration: float | None = None, t_fr: float | None = None,
               phase: float = 0.0, ramp: float | None = None, samples_per_bloch: int = 4,
               dt: float | None = None, box_sites: int | None = None,
               points_per_site: int = 16, jobs: int = 1,
               self_check: bool = False) -> ExperimentResult:
    """Barycenter trajectory through burst, freeze ``t_fr``, identical burst.

    With ``t_fr = tau_B / 2`` the quasimomentum moves by a full reduced
    zone between the bursts and the motion reverses.
    """
    tb = cfg.bloch_period
    burst_duration = DEFAULT_BURST_BLOCH * tb if burst_duration is None else burst_duration
    t_fr = tb / (2 * ell) if t_fr is None else t_fr
    prog = mirror_program(cfg, ell, alpha, burst_duration, t_fr, phase, ramp)
    burst = prog.segments[0]
    ens = build_ensemble(ensemble, cfg)
    J = _J(cfg, ensemble.band, ell)
    disp = EffectiveDispersion(J * alpha, ell, phase)
    # worst case: no reversal and the packet keeps going
    reverses = abs(math.cos(cfg.force * t_fr * ell / 2)) < 1e-6
    n_runs = 1 if reverses else 2
    excursion = n_runs * ell * abs(disp.J) * burst.area
    backend = make_backend(cfg, ens, excursion, (ell,), alpha, dt, box_sites,
                           points_per_site, jobs)
    step = tb / samples_per_bloch
    out_t = np.unique(np.concatenate([np.arange(0, prog.duration, step), prog.boundaries()]))
    t_start = time.perf_counter()
    try:
        rows0 = backend.initial(ens.states)
        res = backend.run(rows0, prog, out_t)
    except NumericalError as exc:
        raise _wrap(exc, f"mirror (U0={cfg.depth}, band={ensemble.band})") from exc
    pm, pv = pool(res.mean, res.var, ens.k_weights, ens.offsets, ens.offset_weights)
    sigma = np.sqrt(pv)
    t = res.times
    b2 = burst_duration + t_fr
    v1 = _plateau_speed(t, pm, 0.0, burst)
    v2 = _plateau_speed(t, pm, b2, burst)
    conv = cfg.scales.lattice_period * cfg.scales.recoil_frequency  # sites/unit -> m/s
    summary = {
        "v1_sites_per_bloch": v1 * tb,
        "v2_sites_per_bloch": v2 * tb,
        "v1_mm_s": v1 * conv * 1e3,
        "v2_mm_s": v2 * conv * 1e3,
        "speed_ratio": v2 / v1 if v1 != 0 else math.nan,
        "sigma_initial": float(sigma[0]),
        "sigma_final": float(sigma[-1]),
        "sigma_ratio": float(sigma[-1] / sigma[0]),
        "predicted_speed_mm_s": float(abs(disp.J) * ell * conv * 1e3),
        "J_Er": disp.J,
        "t_fr": t_fr,
        "norm_drift": float(np.max(np.abs(res.norm - res.norm[:, :1]))),
        "max_edge": backend.max_edge,
        "wall_time_s": time.perf_counter() - t_start,
    }
    members = [{"t": float(ti), "member": j, "barycenter": float(res.mean[j, i]),
                "rms": float(math.sqrt(max(res.var[j, i], 0)))}
               for j in range(len(ens.states)) for i, ti in enumerate(t)]
    result = ExperimentResult(
        "mirror", "t", t, pm, member_spread(res.mean, ens.k_weights), ens.n_members,
        {"t_bloch": t / tb, "rms": sigma}, members,
        _metadata(cfg, ens, backend, prog), summary,
    )
    if self_check:
        _self_check(result, backend, run_mirror, cfg, ensemble, ell, alpha, burst_duration,
                    t_fr, phase=phase, ramp=ramp, samples_per_bloch=samples_per_bloch,
                    box_sites=box_sites, points_per_site=points_per_site, jobs=jobs)
    return result


# --- alpha scan -------------------------------------------------------------------

def spread_speed(times, variance, burst: Burst, period: float | None = None) -> float:
    """Asymptotic RMS growth rate over the late half of the burst plateau.

    With ``period`` only samples at whole periods after switch-on are used,
    which removes the micromotion within each Bloch period.
    """
    t = np.asarray(times)
    m = (t >= burst.duration / 2 - 1e-9) & (t <= burst.duration - burst.ramp + 1e-9)
    if period is not None:
        frac = t / period - np.round(t / period)
        m &= np.abs(frac) < 1e-6
    return analysis.spread_rate(t[m], np.asarray(variance)[m])


def run_alpha_scan(cfg: LatticeConfig, ell: int, alphas, burst_duration: float,
                   ensemble: EnsembleSpec, phase: float = 0.0, ramp: float | None = None,
                   samples_per_bloch: int = 4, dt: float | None = None,
                   box_sites: int | None = None, points_per_site: int = 16, jobs: int = 1,
                   self_check: bool = False) -> ExperimentResult:
    """RMS spread speed (sites per unit time) versus modulation amplitude."""
    tb = cfg.bloch_period
    ramp = DEFAULT_RAMP_BLOCH * tb if ramp is None else ramp
    alphas = np.asarray(alphas, dtype=float)
    if np.any((alphas < 0) | (alphas >= 1)):
        raise ValueError("alpha values must lie in [0, 1)")
    ens = build_ensemble(ensemble, cfg)
    J = _J(cfg, ensemble.band, ell)
    out_t = np.arange(0, burst_duration + 1e-9 * burst_duration, tb / samples_per_bloch)
    speeds, oracle, drift, edges = [], [], [], []
    members = []
    t_start = time.perf_counter()
    backend = None
    for a in alphas:
        burst = Burst(burst_duration, ell, float(a), phase, "segment", ramp=ramp)
        backend = make_backend(cfg, ens, ell * abs(J) * a * burst.area, (ell,), float(a), dt,
                               box_sites, points_per_site, jobs)
        try:
            rows0 = backend.initial(ens.states)
            res = backend.run(rows0, ModulationProgram((burst,)), out_t)
        except NumericalError as exc:
            raise _wrap(exc, f"alpha scan (alpha={a}, U0={cfg.depth})") from exc
        _, pv = pool(res.mean, res.var, ens.k_weights, ens.offsets, ens.offset_weights)
        speeds.append(spread_speed(res.times, pv, burst, tb))
        oracle.append(rms_speed(EffectiveDispersion(J * a, ell, phase)) / math.pi)
        drift.append(float(np.max(np.abs(res.norm - res.norm[:, :1]))))
        edges.append(backend.max_edge)
        for j in range(len(ens.states)):
            members.append({"alpha": float(a), "member": j,
                            "speed": spread_speed(res.times, res.var[j], burst, tb)})
    speeds = np.array(speeds)
    fit = analysis.fit_linear_through_origin(alphas, speeds) if len(alphas) >= 3 else None
    summary = {
        "J_per_alpha_Er": J,
        "oracle_slope": rms_speed(EffectiveDispersion(J, ell, phase)) / math.pi,
        "norm_drift": max(drift),
        "max_edge": max(edges),
        "wall_time_s": time.perf_counter() - t_start,
    }
    if fit is not None:
        summary.update(slope=fit["slope"], slope_error=fit.errors["slope"], r2=fit.stats["r2"],
                       slope_ratio=fit["slope"] / summary["oracle_slope"])
    spread = np.zeros_like(speeds)
    if len(ens.states) > 1:
        per = np.array([m["speed"] for m in members]).reshape(len(alphas), -1).T
        spread = member_spread(per, ens.k_weights)
    result = ExperimentResult(
        "alpha_scan", "alpha", alphas, speeds, spread, ens.n_members,
        {"speed_sites_per_bloch": speeds * tb, "oracle": np.array(oracle)}, members,
        _metadata(cfg, ens, backend, None, ell=ell, burst_duration=burst_duration, ramp=ramp),
        summary,
    )
    if self_check:
        _self_check(result, backend, run_alpha_scan, cfg, ell, alphas, burst_duration, ensemble,
                    phase=phase, ramp=ramp, samples_per_bloch=samples_per_bloch,
                    box_sites=box_sites, points_per_site=points_per_site, jobs=jobs)
    return result
