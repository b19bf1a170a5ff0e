"""Vector NLS solitons by Darboux dressing and GLM inversion, plus the discrete lattice with a defect."""

from . import backlund, checks, darboux, dnls, glm, lax_core
from .errors import VnlsError
from .lax_core import FieldGrid, LaxParams, make_params

__all__ = [
    "backlund",
    "checks",
    "darboux",
    "dnls",
    "glm",
    "lax_core",
    "FieldGrid",
    "LaxParams",
    "VnlsError",
    "make_params",
]
__version__ = "0.1.0"
