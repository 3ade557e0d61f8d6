"""Score-engineered scorecards: divergence-maximizing weights under linear constraints."""

from .constraints import ConstraintSet, assemble
from .errors import (
    DataFormatError,
    DegenerateClassError,
    InfeasibleError,
    NoRootError,
    RankError,
    ScorecardError,
    SolverError,
    SpecError,
    WoeSignError,
    ZeroVarianceError,
)
from .layout import (
    Characteristic,
    EngineeringSpec,
    IndexMap,
    InWeight,
    Pattern,
    ScorecardLayout,
    build_index_map,
    validate_spec,
)
from .moments import MomentSet, check_woe, compute_moments, divergence, woe_gap, woe_scale
from .problems import (
    PROBLEMS,
    RangeTargets,
    ScorecardSolution,
    line_search_root,
    solve_classic,
    solve_inweight,
    solve_penalized,
    solve_range,
    solve_regression,
    tune_lambda,
)
from .qp import QpProblem, QpSolution, QpStatus, kkt_residuals, solve_qp

__version__ = "0.1.0"
