"""Command-line entry point: ``amlattice <subcommand> --config FILE --out DIR``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import struct
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis
from .bands import NumericalError, bloch_bands, landau_zener_check, wannier_stark_ladder
from .config import ConfigError, RunManifest, load_config, load_program, write_atomic, write_json
from .effective import empirical_J, tunneling_rate
from .grid import SpatialGrid
from .protocol import (
    EnsembleSpec,
    ProtocolError,
    box_for,
    build_ensemble,
    ensemble_extent,
    run_alpha_scan,
    run_burst_phase_scan,
    run_echo_scan,
    run_mirror,
)
from .tdse import (
    BlochPacket,
    SiteLocalized,
    ladder_for,
    max_alpha,
    prepare_state,
    propagate,
    steps_per_bloch,
)
from .units import ValidationError

SUBCOMMANDS = ("bands", "wstates", "tunneling", "propagate", "echo", "burst-scan", "mirror",
               "alpha-scan", "fit")
FIT_MODELS = ("echo", "linear", "jscaling", "gravity")


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ConfigError("input", f"{path} is empty")
    header, data = rows[0], rows[1:]
    try:
        cols = {h: np.array([float(r[i]) for r in data]) for i, h in enumerate(header)}
    except (ValueError, IndexError) as exc:
        raise ConfigError("input", f"{path}: non-numeric or ragged data ({exc})") from exc
    return cols


# --- helpers ---------------------------------------------------------------------

class Run:
    """Shared state of one CLI invocation."""

    def __init__(self, args):
        self.args = args
        self.t_start = time.time()
        self.out = Path(args.out)
        self.outputs = []
        if args.config is None:
            raise ConfigError("config", "--config is required")
        self.rc = load_config(args.config, strict=not args.lenient)
        v = self.rc.values
        if args.seed is not None:
            v["seed"] = args.seed
        if args.backend is not None:
            v["backend"] = "tight_binding" if args.backend == "tb" else args.backend
        if getattr(args, "ell", None):
            v["harmonic"] = args.ell
        if args.paper_scale:
            v["burst_tau_B"] = v["paper_burst_tau_B"]
            print(f"paper scale: bursts of {v['burst_tau_B']} tau_B (long-running)",
                  file=sys.stderr)
        self.cfg = self.rc.lattice
        self.out.mkdir(parents=True, exist_ok=True)

    @property
    def v(self):
        return self.rc.values

    @property
    def tb(self):
        return self.cfg.bloch_period

    @property
    def d_um(self):
        return self.cfg.scales.lattice_period * 1e6

    def sec(self, t):
        return np.asarray(t) / self.cfg.scales.recoil_frequency

    def ensemble(self) -> EnsembleSpec:
        v = self.v
        return EnsembleSpec(v["backend"], v["band"], v["loading"], v["n_k"], v["k_center"],
                            v["k_width"], v["packet_dk"], v["sigma0_sites"], v["seed"],
                            v["jitter"])

    def kw(self, alpha):
        v = self.v
        dt = self.tb / v["steps_per_bloch"] if v["steps_per_bloch"] else None
        return dict(dt=dt, box_sites=v["box_sites"] or None,
                    points_per_site=v["points_per_site"], jobs=self.args.jobs,
                    self_check=v["self_check"])

    def write_csv(self, name, header, rows):
        write_atomic(self.out / name, csv_text(header, rows))
        self.outputs.append(name)

    def write_json(self, name, data):
        write_json(self.out / name, data)
        self.outputs.append(name)

    def finish(self, resolutions=None, summary=None):
        m = RunManifest(self.args.command, self.rc.resolved(), self.v["seed"],
                        resolutions or {}, __version__, time.time() - self.t_start,
                        self.outputs + ["manifest.json"], summary or {})
        write_json(self.out / "manifest.json", m.to_dict())


def _result_outputs(run: Run, res, header, rows, fit=None):
    run.write_csv("points.csv", header, rows)
    if run.args.members:
        h, r = res.member_table()
        run.write_csv("members.csv", h, r)
    if fit is not None:
        run.write_json("fit.json", fit)
    run.finish(res.metadata.get("resolution"), res.summary)


# --- subcommands -------------------------------------------------------------------

def cmd_bands(run: Run):
    v = run.v
    spec = bloch_bands(run.cfg, n_bands=max(v["n_bands"], 2), n_k=v["n_k_bands"])
    rows = [[k, *spec.band_energies[:, i]] for i, k in enumerate(spec.k_samples)]
    header = ["k_over_kL"] + [f"band_{b + 1}_Er" for b in range(spec.band_energies.shape[0])]
    run.write_csv("points.csv", header, rows)
    lz = landau_zener_check(run.cfg)
    summary = {"band_gap_Er": spec.band_gap, "bandwidths_Er": list(spec.bandwidths),
               "landau_zener": lz}
    print(f"E_G = {spec.band_gap:.4f} E_R, E_G / hbar omega_B = {lz['E_G_over_hbar_omega_B']:.2f}"
          f", interband tunneling negligible: {lz['negligible']}")
    run.finish({"n_k": v["n_k_bands"]}, summary)


def cmd_wstates(run: Run):
    rows, summary = [], {}
    for band in range(1, min(run.v["n_bands"], 2) + 1):
        lad = wannier_stark_ladder(run.cfg, band, points_per_site=run.v["points_per_site"])
        e = lad.site_energies
        for i, (n, en) in enumerate(zip(lad.sites, e)):
            rows.append([band, int(n), en, e[i] - e[i - 1] if i else math.nan])
        summary[f"band_{band}"] = {"spacing_deviation": lad.spacing_deviation(),
                                   "n_states": len(lad.sites),
                                   "edge_amplitude": lad.edge_amplitude}
        print(f"band {band}: {len(lad.sites)} states, relative spacing deviation "
              f"{lad.spacing_deviation():.2e}")
    run.write_csv("points.csv", ["band", "site", "energy_Er", "spacing_Er"], rows)
    run.finish({"points_per_site": run.v["points_per_site"]}, summary)


def cmd_tunneling(run: Run):
    v = run.v
    rows = []
    w_r = run.cfg.scales.recoil_frequency
    for depth in v["depths_Er"]:
        cfg = run.cfg.with_depth(depth)
        lad = ladder_for(cfg, v["band"])
        for ell in v["ells"]:
            J = tunneling_rate(lad, ell, v["alpha"], depth)
            js = abs(J.value) * w_r
            emp = empirical_J(depth, v["alpha"], ell) if v["alpha"] > 0 else 0.0
            rows.append([depth, ell, v["alpha"], js, J.matrix_element, emp,
                         js / emp if emp else math.nan])
    header = ["U0_Er", "ell", "alpha", "J_over_hbar_s", "matrix_element", "empirical_fit_s",
              "ratio"]
    run.write_csv("points.csv", header, rows)
    fit = None
    if v["alpha"] > 0 and len(v["depths_Er"]) >= 2 and 1 in v["ells"]:
        r = np.array(rows, dtype=float)
        fit = analysis.fit_J_scaling(r[:, 0], r[:, 1], r[:, 3], r[:, 2]).to_dict()
        run.write_json("fit.json", fit)
    run.finish({"band": v["band"]}, {"fit": fit})


def _initial_spec(run: Run):
    v = run.v
    if v["loading"] == "site":
        return SiteLocalized(v["band"], 0)
    return BlochPacket(v["band"], v["k_center"], v["packet_dk"], 0.0)


def cmd_propagate(run: Run):
    v = run.v
    if not run.args.program and not v["program"]:
        raise ConfigError("program", "propagate needs --program or a 'program' key")
    prog = load_program(run.args.program or v["program"], run.tb)
    ens = build_ensemble(run.ensemble())
    area = {}
    for s in prog.segments:
        if s.kind == "burst":
            area[s.ell] = area.get(s.ell, 0.0) + s.alpha * s.area
    lad = ladder_for(run.cfg, v["band"])
    exc = sum(ell * abs(tunneling_rate(lad, ell, 1.0).value) * a for ell, a in area.items())
    box = v["box_sites"] or box_for(ensemble_extent(ens), exc, v["loading"] == "site")
    grid = SpatialGrid(box, v["points_per_site"])
    n = v["steps_per_bloch"] or steps_per_bloch(run.cfg, max_alpha(prog))
    dt = run.tb / n
    psi = prepare_state(run.cfg, _initial_spec(run), grid, dt=dt)
    out_t = np.unique(np.concatenate([
        np.arange(0, prog.duration, v["output_every_tau_B"] * run.tb), [prog.duration]]))
    res = propagate(psi, run.cfg, prog, grid, out_t, dt=dt, keep_snapshots=run.args.snapshots)
    rows = [[run.sec(t), res.barycenter[0, i] * run.d_um, res.rms[0, i] * run.d_um,
             res.fidelity[0, i], res.norm[0, i]] for i, t in enumerate(res.times)]
    run.write_csv("points.csv", ["t_s", "barycenter_um", "rms_um", "fidelity", "norm"], rows)
    if run.args.snapshots:
        buf = io.BytesIO()
        z0 = grid.z_min / run.cfg.scales.wave_vector
        z1 = grid.z_max / run.cfg.scales.wave_vector
        for t, a in res.snapshots:
            buf.write(struct.pack("<qddd", grid.n_points, z0, z1, float(run.sec(t))))
            buf.write(np.ascontiguousarray(a[0], dtype="<c16").tobytes())
        (run.out / "snapshots.bin").write_bytes(buf.getvalue())
        run.outputs.append("snapshots.bin")
    summary = {"norm_drift": res.norm_drift, "max_edge": res.max_edge, "n_steps": res.n_steps}
    run.finish({"box_sites": box, "points_per_site": v["points_per_site"], "dt": dt,
                "steps_per_bloch": n, "program": prog.to_dict()}, summary)


def cmd_echo(run: Run):
    v = run.v
    ell, tb = v["harmonic"], run.tb
    t_fr = np.array(v["t_fr_tau_B"]) * tb if v["t_fr_tau_B"] else \
        np.linspace(0, v["t_fr_periods"] * tb / ell, v["n_t_fr"])
    res = run_echo_scan(run.cfg, ell, v["alpha"], v["burst_tau_B"] * tb, t_fr, run.ensemble(),
                        phase=run.cfg.modulation.phase, phase_reference=v["phase_reference"],
                        ramp=v["ramp_tau_B"] * tb, **run.kw(v["alpha"]))
    ts = run.sec(res.scan_values)
    d = run.d_um
    rows = [[ts[i], res.mean[i] * d, res.spread[i] * d, res.n_members, t_fr[i] / tb,
             res.columns["barycenter"][i] * d, res.columns["fidelity"][i]]
            for i in range(len(ts))]
    header = ["scan_value", "mean", "spread", "n_members", "t_fr_tau_B", "barycenter_um",
              "fidelity"]
    fit = None
    if len(ts) >= 8:
        f = analysis.fit_echo(ts, res.mean * d)
        fit = {"echo": f.to_dict(), "tau_over_expected": f["tau"] / run.sec(tb / ell)}
        if math.isfinite(f["tau"]):
            g = analysis.estimate_g(ts, res.mean * d, run.cfg.physical, ell)
            fit["gravity"] = g.to_dict()
    print(f"echo: sigma(t_fr) in um, {len(ts)} points"
          + (f", fitted tau / (tau_B/ell) = {fit['tau_over_expected']:.5f}" if fit else ""))
    _result_outputs(run, res, header, rows, fit)


def cmd_burst_scan(run: Run):
    v = run.v
    ell, tb = v["harmonic"], run.tb
    t0 = np.array(v["t0_scan_tau_B"]) * tb if v["t0_scan_tau_B"] else \
        np.linspace(0, 2 * tb / ell, v["n_t0"])
    res = run_burst_phase_scan(run.cfg, ell, v["alpha"], v["burst_tau_B"] * tb, t0,
                               run.ensemble(), phase=run.cfg.modulation.phase,
                               phase_reference=v["phase_reference"],
                               ramp=v["ramp_tau_B"] * tb, **run.kw(v["alpha"]))
    ts = run.sec(res.scan_values)
    d = run.d_um
    rows = [[ts[i], res.mean[i] * d, res.spread[i] * d, res.n_members, t0[i] / tb,
             res.columns["rms_end"][i] * d] for i in range(len(ts))]
    fit = None
    if len(ts) >= 5:
        f = analysis.fit_sinusoid(ts, res.mean * d, run.sec(tb / ell))
        fit = {"sinusoid": f.to_dict(),
               "period_over_expected": f["period"] / run.sec(tb / ell)}
    _result_outputs(run, res, ["scan_value", "mean", "spread", "n_members", "t0_tau_B",
                               "rms_end_um"], rows, fit)


def cmd_mirror(run: Run):
    v = run.v
    tb = run.tb
    t_fr = v["t_fr_tau_B"][0] * tb if v["t_fr_tau_B"] else None
    res = run_mirror(run.cfg, run.ensemble(), v["harmonic"], v["alpha"], v["burst_tau_B"] * tb,
                     t_fr, phase=run.cfg.modulation.phase, ramp=v["ramp_tau_B"] * tb,
                     samples_per_bloch=v["samples_per_bloch"], **run.kw(v["alpha"]))
    ts = run.sec(res.scan_values)
    d = run.d_um
    rows = [[ts[i], res.mean[i] * d, res.spread[i] * d, res.n_members,
             res.columns["t_bloch"][i], res.columns["rms"][i] * d] for i in range(len(ts))]
    s = res.summary
    print(f"mirror: v1 = {s['v1_mm_s']:.3f} mm/s, v2 = {s['v2_mm_s']:.3f} mm/s, "
          f"final/initial RMS = {s['sigma_ratio']:.4f}")
    _result_outputs(run, res, ["scan_value", "mean", "spread", "n_members", "t_tau_B", "rms_um"],
                    rows, {"speeds": {k: s[k] for k in ("v1_mm_s", "v2_mm_s", "speed_ratio",
                                                         "sigma_ratio")}})


def cmd_alpha_scan(run: Run):
    v = run.v
    tb = run.tb
    res = run_alpha_scan(run.cfg, v["harmonic"], v["alpha_values"], v["burst_tau_B"] * tb,
                         run.ensemble(), phase=run.cfg.modulation.phase,
                         ramp=v["ramp_tau_B"] * tb, samples_per_bloch=v["samples_per_bloch"],
                         **run.kw(max(v["alpha_values"])))
    conv = run.d_um * run.cfg.scales.recoil_frequency  # sites per unit time -> um/s
    rows = [[a, res.mean[i] * conv, res.spread[i] * conv, res.n_members,
             res.columns["oracle"][i] * conv] for i, a in enumerate(res.scan_values)]
    fit = None
    if len(res.scan_values) >= 3:
        fit = analysis.fit_linear_through_origin(res.scan_values, res.mean * conv).to_dict()
        fit["oracle_slope"] = res.summary["oracle_slope"] * conv
    _result_outputs(run, res, ["scan_value", "mean", "spread", "n_members", "oracle_um_s"],
                    rows, fit)


def cmd_fit(args) -> int:
    if not args.input:
        raise ConfigError("input", "fit needs --input points.csv")
    cols = read_csv(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def need(*names):
        missing = [n for n in names if n not in cols]
        if missing:
            raise ConfigError("input", f"missing column(s) {missing}")
        return [cols[n] for n in names]

    if args.model == "echo":
        x, y = need("scan_value", "mean")
        res = analysis.fit_echo(x, y).to_dict()
    elif args.model == "linear":
        x, y = need("scan_value", "mean")
        res = analysis.fit_linear_through_origin(x, y).to_dict()
    elif args.model == "jscaling":
        U, ell, a, J = need("U0_Er", "ell", "alpha", "J_over_hbar_s")
        res = analysis.fit_J_scaling(U, ell, J, a).to_dict()
    else:
        if args.config is None:
            raise ConfigError("config", "gravity fit needs --config for mass and wavelength")
        rc = load_config(args.config, strict=not args.lenient)
        ell = args.ell or rc["harmonic"]
        x, y = need("scan_value", "mean")
        res = analysis.estimate_g(x, y, rc.lattice.physical, ell).to_dict()
    write_json(out / "fit.json", {"model": args.model, "input": str(args.input), **res})
    print(f"{args.model}: " + ", ".join(f"{k} = {v:.6g}" for k, v in res["params"].items()))
    return 0


COMMANDS = {
    "bands": cmd_bands,
    "wstates": cmd_wstates,
    "tunneling": cmd_tunneling,
    "propagate": cmd_propagate,
    "echo": cmd_echo,
    "burst-scan": cmd_burst_scan,
    "mirror": cmd_mirror,
    "alpha-scan": cmd_alpha_scan,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amlattice", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"amlattice {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="config file, run manifest or preset name")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--backend", choices=("tdse", "tb"))
        s.add_argument("--paper-scale", action="store_true",
                       help="use the full experimental burst length (slow)")
        s.add_argument("--members", action="store_true", help="also write members.csv")
        s.add_argument("--lenient", action="store_true",
                       help="warn about unknown config keys instead of failing")
        s.add_argument("--ell", type=int, help="override the modulation harmonic")
        if name == "propagate":
            s.add_argument("--program", help="program file (durations in Bloch periods)")
            s.add_argument("--snapshots", action="store_true",
                           help="write snapshots.bin with the wave function at each output")
        if name == "fit":
            s.add_argument("--input", help="points CSV")
            s.add_argument("--model", choices=FIT_MODELS, default="echo")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "fit":
            return cmd_fit(args)
        if args.jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
        COMMANDS[args.command](Run(args))
        return 0
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ProtocolError, analysis.FitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
