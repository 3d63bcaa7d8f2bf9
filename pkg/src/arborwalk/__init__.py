"""Random walks, cookie walks and percolation on rooted trees."""

from .errors import (ArborwalkError, BudgetExceeded, ConstraintViolation, Inconclusive,
                     InsufficientSamples, NonAdjacent, TreeBudgetError, TreeParseError, ZeroFlow)
from .tree import (LevelProfile, RootedTree, build_path, build_regular,
                   build_spherically_symmetric, estimate_branching, estimate_branching_ruin,
                   load_tree, min_cutset_value, save_tree)
from .conductance import (HeavyTailLaw, escape_curve, estimate_escape_probability, psi_rc,
                          sample_environment)
from .mdrw import CookieConfig, big_psi, estimate_mdrw_escape, psi_m_lambda
from .flows import adapted_conductance, build_unit_flow, effective_conductance, survival_bounds
from .percolation import PsiFunction, independent_percolation, rt_value, survival_estimate
from .rubin import ClockBank, explore_ccp, run_extension

__version__ = "0.1.0"
