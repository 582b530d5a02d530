"""Compare the compiled kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--sites 512] [--members 8] [--steps 200]

Reports the time per call of each kernel and of a full split-step interval.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from amlattice import _kernels_py

try:
    from amlattice import _kernels
except ImportError:
    _kernels = None


def bench_kernels(n_points, members, repeat):
    rng = np.random.default_rng(0)
    psi = np.ascontiguousarray(rng.normal(size=(members, n_points)) + 0j)
    static = np.exp(1j * rng.random(n_points))
    periodic = np.exp(1j * rng.random(16))
    x = np.linspace(-1, 1, n_points)
    impls = {"python": _kernels_py}
    if _kernels is not None:
        impls["cython"] = _kernels
    rows = []
    for name, mod in impls.items():
        calls = {
            "apply_phases": lambda: mod.apply_phases(psi, static, periodic),
            "moments": lambda: mod.moments(psi, x),
            "edge_amplitude": lambda: mod.edge_amplitude(psi, 16),
        }
        for k, f in calls.items():
            t = min(timeit.repeat(f, number=repeat, repeat=3)) / repeat
            rows.append((k, name, t))
    return rows


PROPAGATE = """
import time
import numpy as np
from amlattice import tdse, kernels
from amlattice.grid import SpatialGrid
from amlattice.program import Burst, ModulationProgram
from amlattice.units import reference_config
cfg = reference_config(11.2, 1, 0.23)
grid = SpatialGrid({sites}, 16)
dt = cfg.bloch_period / 8000
psi = tdse.prepare_state(cfg, tdse.SiteLocalized(1, 0), grid, dt=dt).amplitudes
rows = np.tile(psi, ({members}, 1))
prog = ModulationProgram((Burst({steps} * dt, 1, 0.23, ramp=0.0),))
prop = tdse.SplitStepPropagator(cfg, grid, dt)
t = time.perf_counter()
prop.run(rows, prog)
print(kernels.BACKEND, (time.perf_counter() - t) / {steps})
"""


def bench_propagate(sites, members, steps):
    out = []
    for pure in ("1", "0"):
        env = dict(os.environ, AMLATTICE_PURE_PYTHON=pure)
        code = PROPAGATE.format(sites=sites, members=members, steps=steps)
        r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                           text=True, check=True)
        name, t = r.stdout.split()
        out.append((name, float(t)))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sites", type=int, default=512)
    p.add_argument("--members", type=int, default=8)
    p.add_argument("--steps", type=int, default=200)
    a = p.parse_args(argv)
    n = a.sites * 16
    print(f"kernels on {a.members} x {n} points")
    res = bench_kernels(n, a.members, 20)
    base = {k: t for k, name, t in res if name == "python"}
    for k, name, t in res:
        print(f"  {k:15s} {name:7s} {t * 1e6:10.1f} us  x{base[k] / t:5.2f}")
    print(f"split-step interval, {a.steps} steps")
    prop = bench_propagate(a.sites, a.members, a.steps)
    ref = prop[0][1]
    for name, t in prop:
        print(f"  {name:7s} {t * 1e3:8.3f} ms/step  x{ref / t:5.2f}")


if __name__ == "__main__":
    main()
