"""NumPy versions of the compiled kernels, used when the extension is absent."""

import numpy as np


def apply_phases(psi, static, periodic):
    nb, n = psi.shape
    p = len(periodic)
    if len(static) != n or n % p:
        raise ValueError("shape mismatch")
    psi *= static
    psi.reshape(nb, n // p, p)[:] *= periodic


def moments(psi, x):
    rho = psi.real**2 + psi.imag**2
    return np.stack([rho.sum(axis=1), rho @ x, rho @ (x * x)], axis=1)


def edge_amplitude(psi, width):
    a = np.concatenate([psi[:, :width], psi[:, -width:]], axis=1)
    return np.abs(a).max(axis=1)
