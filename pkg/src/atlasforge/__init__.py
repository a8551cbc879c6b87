"""Joint Potts segmentation, hyperelastic registration and atlas building for 2D images,
with spline-based PCA of the resulting deformations."""
from .atlas import AtlasResult, AtlasState, run_atlas, sequential_baseline
from .config import PRESETS, AtlasConfig
from .dmspline import SplineConfig, solve_spline
from .errors import (AtlasforgeError, ConfigError, DataError, DegenerateTriangulationError,
                     NumericalError, SolverError)
from .potts import potts_1d, potts_2d
from .shapestats import pca

__version__ = "0.1.0"
