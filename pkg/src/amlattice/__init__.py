"""Simulation and analysis of resonant amplitude-modulated transport in tilted optical lattices."""

__version__ = "0.1.0"

from .units import (  # noqa: E402
    LatticeConfig,
    ModulationParams,
    PhysicalParams,
    ValidationError,
    derive_scales,
    reference_config,
)
from .bands import (  # noqa: E402
    BoxTooSmallError,
    NumericalError,
    bloch_bands,
    wannier_stark_ladder,
)
from .effective import (  # noqa: E402
    EffectiveDispersion,
    TunnelingRate,
    empirical_J,
    tight_binding_propagate,
    tunneling_rate,
)
from .program import Burst, Hold, ModulationProgram, echo_program  # noqa: E402
from .tdse import BlochPacket, GuardBandError, SiteLocalized, prepare_state, propagate  # noqa: E402
from .protocol import (  # noqa: E402
    EnsembleSpec,
    ExperimentResult,
    build_ensemble,
    run_alpha_scan,
    run_burst_phase_scan,
    run_echo_scan,
    run_mirror,
)

__all__ = [
    "BlochPacket", "BoxTooSmallError", "Burst", "EffectiveDispersion", "EnsembleSpec",
    "ExperimentResult", "GuardBandError", "Hold", "LatticeConfig", "ModulationParams",
    "ModulationProgram", "NumericalError", "PhysicalParams", "SiteLocalized", "TunnelingRate",
    "ValidationError", "bloch_bands", "build_ensemble", "derive_scales", "echo_program",
    "empirical_J", "reference_config", "prepare_state", "propagate", "run_alpha_scan",
    "run_burst_phase_scan", "run_echo_scan", "run_mirror", "tight_binding_propagate",
    "tunneling_rate", "wannier_stark_ladder",
]
