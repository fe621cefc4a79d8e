"""Littlewood-Paley analysis on the periodic grid, control functions, bounded
approximation in critical Triebel-Lizorkin spaces and a bounded Hodge solver."""
__version__ = "0.1.0"

from .grid import DataError, GridFunction, GridSpec, ParameterError, SpectralField  # noqa: E402
from .littlewood_paley import FilterBank, LPDecomposition, build_filter_bank, decompose, reconstruct  # noqa: E402
from .norms import TLParams, tl_norm, tl_norm_of  # noqa: E402
from .control import ControlParams, build_control  # noqa: E402
from .approx import ApproxParams, approximate, select_parameters  # noqa: E402
from .hodge import Form, bounded_solve, exterior_derivative, min_norm_solve  # noqa: E402

__all__ = [
    "__version__", "DataError", "ParameterError", "GridSpec", "GridFunction", "SpectralField",
    "FilterBank", "LPDecomposition", "build_filter_bank", "decompose", "reconstruct",
    "TLParams", "tl_norm", "tl_norm_of", "ControlParams", "build_control",
    "ApproxParams", "approximate", "select_parameters",
    "Form", "bounded_solve", "exterior_derivative", "min_norm_solve",
]
