"""Run configuration files, presets, program files and run manifests.

A configuration is a ``key = value`` text file; ``#`` starts a comment.
Times in configuration files are in Bloch periods unless the key says
otherwise.  Lists are comma separated; ``a:b:n`` expands to ``n`` evenly
spaced values from ``a`` to ``b``.  A run manifest written by the CLI is
itself a valid configuration.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .program import Burst, Hold, ModulationProgram
from .units import LatticeConfig, ModulationParams, PhysicalParams, ValidationError, match_reference

PRESET_DIR = "presets"


class ConfigError(ValidationError):
    """Configuration problem; ``line`` is 1-based when known."""

    def __init__(self, field_name: str, message: str, line: int | None = None,
                 path: str | None = None):
        where = f"{path or '<config>'}:{line}: " if line else ""
        ValueError.__init__(self, f"{where}{field_name}: {message}")
        self.field = field_name
        self.line = line


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _bool(s):
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _str(s):
    return str(s).strip()


def _float_list(s):
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    s = str(s).strip()
    if not s:
        return []
    if ":" in s:
        a, b, n = s.split(":")
        return [float(x) for x in np.linspace(float(a), float(b), int(n))]
    return [float(x) for x in s.replace(";", ",").split(",") if x.strip()]


def _int_list(s):
    out = _float_list(s)
    if any(x != int(x) for x in out):
        raise ValueError("expected integers")
    return [int(x) for x in out]


def _gravity(s):
    if str(s).strip().lower() == "reference":
        return "reference"
    return float(s)


# key: (parser, default); default None marks a required key
SCHEMA = {
    "mass_u": (_float, None),
    "lambda_nm": (_float, None),
    "gravity": (_gravity, None),
    "depth_Er": (_float, None),
    "harmonic": (_int, None),
    "alpha": (_float, None),
    "phase_deg": (_float, None),
    "t0": (_float, None),
    "band": (_int, 1),
    "omega_ratio": (_float, 0.0),
    "phase_reference": (_str, "segment"),
    "burst_tau_B": (_float, 20.0),
    "paper_burst_tau_B": (_float, 287.0),
    "ramp_tau_B": (_float, 0.5),
    "t_fr_tau_B": (_float_list, ""),
    "t_fr_periods": (_float, 2.0),
    "n_t_fr": (_int, 17),
    "t0_scan_tau_B": (_float_list, ""),
    "n_t0": (_int, 17),
    "alpha_values": (_float_list, "0.1:0.9:9"),
    "backend": (_str, "tdse"),
    "loading": (_str, "site"),
    "n_k": (_int, 32),
    "k_center": (_float, 0.0),
    "k_width": (_float, 2.0),
    "packet_dk": (_float, 0.05),
    "sigma0_sites": (_float, 5.0),
    "seed": (_int, 0),
    "jitter": (_bool, False),
    "box_sites": (_int, 0),
    "points_per_site": (_int, 16),
    "steps_per_bloch": (_int, 0),
    "samples_per_bloch": (_int, 4),
    "self_check": (_bool, False),
    "n_bands": (_int, 2),
    "n_k_bands": (_int, 101),
    "depths_Er": (_float_list, "5,8,11,14,17,20"),
    "ells": (_int_list, "1,2,3"),
    "program": (_str, ""),
    "duration_tau_B": (_float, 10.0),
    "output_every_tau_B": (_float, 0.25),
}

REQUIRED = tuple(k for k, (_, d) in SCHEMA.items() if d is None)


@dataclass
class RunConfig:
    values: dict
    source: str = "<config>"
    warnings: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def lattice(self) -> LatticeConfig:
        v = self.values
        try:
            phys = PhysicalParams.from_mass_u(
                v["mass_u"], lattice_wavelength=v["lambda_nm"] * 1e-9,
                gravity=0.0 if v["gravity"] == "reference" else v["gravity"],
                lattice_depth=v["depth_Er"])
            if v["gravity"] == "reference":
                phys = match_reference(phys)
            mod = ModulationParams(
                harmonic=v["harmonic"], alpha=v["alpha"], phase=math.radians(v["phase_deg"]),
                t0=v["t0"], omega_ratio=v["omega_ratio"] or None)
            return LatticeConfig(phys, mod, band=v["band"])
        except ValidationError as exc:
            raise ConfigError(exc.field, str(exc).split(": ", 1)[-1], path=self.source) from exc

    def resolved(self) -> dict:
        """JSON-ready dict of every key, suitable for re-feeding."""
        return {k: v for k, v in self.values.items()}


def _parse_items(items, source, strict):
    values, seen, warns = {}, {}, []
    for line, key, raw in items:
        if key not in SCHEMA:
            msg = f"unknown key {key!r}"
            if strict:
                raise ConfigError(key, msg, line, source)
            warns.append(f"{source}:{line}: {msg}")
            warnings.warn(warns[-1], stacklevel=3)
            continue
        if key in seen:
            raise ConfigError(key, f"duplicate key (first on line {seen[key]})", line, source)
        seen[key] = line
        try:
            values[key] = SCHEMA[key][0](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"bad value {raw!r}: {exc}", line, source) from exc
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(", ".join(missing), "missing required key(s)", path=source)
    for k, (parse, default) in SCHEMA.items():
        if k not in values:
            values[k] = parse(default)
    _check(values, source, seen)
    return RunConfig(values, source, warns)


def _check(v, source, lines):
    def bad(key, msg):
        raise ConfigError(key, msg, lines.get(key), source)

    if v["backend"] in ("tb", "tight-binding"):
        v["backend"] = "tight_binding"
    if v["backend"] not in ("tdse", "tight_binding"):
        bad("backend", "must be tdse or tb")
    if v["loading"] not in ("site", "packet"):
        bad("loading", "must be site or packet")
    if v["phase_reference"] not in ("segment", "global"):
        bad("phase_reference", "must be segment or global")
    if v["band"] not in (1, 2):
        bad("band", "must be 1 or 2")
    if v["burst_tau_B"] <= 0:
        bad("burst_tau_B", "must be positive")
    if not 0 <= v["ramp_tau_B"] <= v["burst_tau_B"] / 2:
        bad("ramp_tau_B", "must lie in [0, burst_tau_B / 2]")
    if v["box_sites"] and (v["box_sites"] & (v["box_sites"] - 1)):
        bad("box_sites", "must be a power of two")


def parse_config(text: str, source: str = "<config>", strict: bool = True) -> RunConfig:
    items = []
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("syntax", f"expected 'key = value', got {line!r}", i, source)
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("syntax", "empty key", i, source)
        items.append((i, key, val))
    return _parse_items(items, source, strict)


def preset_names() -> list[str]:
    d = resources.files("amlattice") / PRESET_DIR
    return sorted(p.name[:-4] for p in d.iterdir() if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    p = resources.files("amlattice") / PRESET_DIR / f"{name}.cfg"
    if not p.is_file():
        raise ConfigError("config", f"no preset named {name!r}; have {preset_names()}")
    return p.read_text()


def load_config(path, strict: bool = True) -> RunConfig:
    """Read a config file, a run manifest (``.json``) or a preset name."""
    p = Path(path)
    if not p.exists():
        if str(path) in preset_names():
            return parse_config(preset_text(str(path)), f"preset:{path}", strict)
        raise ConfigError("config", f"file not found: {path}")
    if p.suffix == ".json":
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("json", exc.msg, exc.lineno, str(p)) from exc
        cfg = data.get("config", data)
        items = [(None, k, v) for k, v in cfg.items()]
        return _parse_items(items, str(p), strict)
    return parse_config(p.read_text(), str(p), strict)


# --- program files -------------------------------------------------------------

def parse_program(text: str, tau_b: float, source: str = "<program>") -> ModulationProgram:
    """Program file: one segment per line, durations in Bloch periods.

        burst 20 ell=1 alpha=0.23 phase_deg=0 ramp=0.5 reference=segment
        hold 0.5
    """
    segs = []
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        kind = line[0].lower()
        try:
            dur = float(line[1]) * tau_b
            opts = dict(tok.split("=", 1) for tok in line[2:])
            if kind == "hold":
                if opts:
                    raise ValueError("hold takes no options")
                segs.append(Hold(dur))
            elif kind == "burst":
                known = {"ell", "alpha", "phase_deg", "ramp", "reference", "omega_ratio"}
                extra = set(opts) - known
                if extra:
                    raise ValueError(f"unknown option(s) {sorted(extra)}")
                ratio = opts.get("omega_ratio")
                segs.append(Burst(
                    dur, int(opts.get("ell", 1)), float(opts.get("alpha", 0.2)),
                    math.radians(float(opts.get("phase_deg", 0.0))),
                    opts.get("reference", "segment"),
                    float(ratio) if ratio else None,
                    float(opts.get("ramp", 0.5)) * tau_b))
            else:
                raise ValueError(f"unknown segment kind {kind!r}")
        except (IndexError, ValueError) as exc:
            raise ConfigError("program", str(exc) or "malformed segment", i, source) from exc
    if not segs:
        raise ConfigError("program", "no segments", path=source)
    return ModulationProgram(tuple(segs))


def load_program(path, tau_b: float) -> ModulationProgram:
    p = Path(path)
    if not p.exists():
        raise ConfigError("program", f"file not found: {path}")
    return parse_program(p.read_text(), tau_b, str(p))


# --- manifests -----------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    resolutions: dict
    version: str
    wall_clock_s: float
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "seed": self.seed,
                "resolutions": self.resolutions, "version": self.version,
                "wall_clock_s": self.wall_clock_s, "outputs": self.outputs,
                "summary": self.summary}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def write_atomic(path, text: str):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, data):
    write_atomic(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
