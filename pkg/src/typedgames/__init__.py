"""Safety of simultaneous gradient play in games with typed action spaces."""
from .dynamics import DynamicsConfig, Trajectory, descent_direction_check, nash_check, potential_trace, simulate
from .errors import *  # noqa: F401,F403
from .game import (
    Ball,
    Bilinear,
    BlackBox,
    BlockBall,
    BlockSimplex,
    Box,
    Game,
    Multilinear,
    Quadratic,
    TypeStructure,
    Unconstrained,
    block_game,
    open_game,
)
from .linalg import DEFAULT_TOL, ToleranceConfig
from .safety import (
    CertificateResult,
    SafetyReport,
    SamplerConfig,
    Verdict,
    certify_bilinear,
    certify_multilinear,
    certify_quadratic_block,
    certify_quadratic_open,
    certify_strong_typing,
    empirical_safety,
    potential_check_bilinear,
    potential_check_quadratic,
)

__version__ = "0.1.0"
