"""Exception hierarchy.

Everything raised on purpose by this package derives from ``MdfracError``,
so callers can catch one type at the CLI boundary.
"""


class MdfracError(Exception):
    """Base class for all package errors."""


class GridTopologyError(MdfracError):
    """Inconsistent or unsupported grid connectivity."""


class DegenerateCellError(GridTopologyError):
    """A cell or face with zero (or negative) measure."""


class PlanarityError(GridTopologyError):
    """An embedded cell does not lie in a flat plane within tolerance."""


class NonConformingMeshError(GridTopologyError):
    """Grids of consecutive dimension do not line up face-to-cell."""


class MeshFormatError(MdfracError):
    """Malformed or unsupported mesh file."""


class ConfigError(MdfracError):
    """Invalid simulation configuration."""


class SolverError(MdfracError):
    """Linear solver failure (singular system, non-convergence)."""


class CoarseningError(MdfracError):
    """Invalid coarsening request or unreachable threshold."""
