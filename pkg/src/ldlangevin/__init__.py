"""Large deviations of additive functionals of Langevin-type diffusions.

The diffusion is ``dX = D(X) dt + sigma dB`` with ``D(x) = -sgn(x) |x|**kappa``.
Modules cover simulation, the stationary law, cycle decomposition, the
variational rate problem, first-passage density bounds and the tail
experiments built from them.
"""

__version__ = "0.1.0"

from .errors import (InvalidParameterError, InvalidRegimeError, LangevinError,  # noqa: E402
                     ManifestError, NonConvergenceError)
from .params import ModelParams, ScalingExponents, check_regime, scaling_exponents  # noqa: E402
from .drift import DriftFamily, DriftSpec, drift_eval  # noqa: E402
from .noise import NoiseStream  # noqa: E402
from .sde import SamplePath, area_functional, simulate_ensemble, simulate_path  # noqa: E402
from .stationary import StationaryLaw, stationary_moment  # noqa: E402
from .cycles import (CycleRecord, CycleTable, detect_cycles, regenerative_moment_ratio,  # noqa: E402
                     simulate_cycles)
from .variational import (RateFunctionalSpec, VariationalResult, rate_functional,  # noqa: E402
                          solve_box, solve_v, solve_v_plus, solve_v_infinite)
from .fpt import (BoundaryTask, density_bound, lamperti, verify_density_bound)  # noqa: E402

__all__ = [
    "__version__", "LangevinError", "InvalidParameterError", "InvalidRegimeError",
    "ManifestError", "NonConvergenceError", "ModelParams", "ScalingExponents",
    "check_regime", "scaling_exponents", "DriftFamily", "DriftSpec", "drift_eval",
    "NoiseStream", "SamplePath", "area_functional", "simulate_ensemble", "simulate_path",
    "StationaryLaw", "stationary_moment", "CycleRecord", "CycleTable", "detect_cycles",
    "regenerative_moment_ratio", "simulate_cycles", "RateFunctionalSpec",
    "VariationalResult", "rate_functional", "solve_box", "solve_v", "solve_v_plus",
    "solve_v_infinite", "BoundaryTask", "density_bound", "lamperti", "verify_density_bound",
]
