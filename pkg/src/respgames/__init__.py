"""Responsibility-aware model checking and equilibrium synthesis for
parametric concurrent stochastic games."""

from .errors import (DegenerateQueryError, FormulaError, InadmissibleError,
                     MissingParameterError, ModelError, NoSolutionError,
                     ResourceLimitError, RespgamesError,
                     UndefinedEstimateError, UnsupportedQueryError,
                     ZeroDenominatorError)
from .polyarith import (Monomial, ParamId, Polynomial, RationalFunction,
                        parse_polynomial, poly_add, poly_eval, poly_mul,
                        poly_neg, poly_sub, poly_substitute, rf_equal_on_box,
                        rf_simplify)
from .model import (AdmissibilityReport, Csg, Psmas, RewardStructure,
                    build_psmas, check_admissible, load_model, parse_model)
from .logic import (CompareOp, DegreeKind, PathFormula, StateFormula,
                    horizon, parse_formula, parse_path_formula,
                    render_formula)
from .trace import (CompatClass, History, Plan, compatible_plans,
                    enumerate_histories, payoff, plan_from_model,
                    plan_histories)
from .checker import (CheckResult, DegreeResult, ExtendedValue, QueryContext,
                      Region, car_degree, check_formula, cpr_degree,
                      degree_value_at, path_sat_prob, reward_value)
from .synth import (NeSolution, NeSystem, ResponsibilitySpec, UtilityConfig,
                    build_ne_system, find_equilibria, payoff_valuation,
                    resp_valuation, solve_ne, utility, verify_ne)
from .oracle import (BestResponse, Estimate, SimConfig, estimate_degree,
                     estimate_path_prob, grid_best_response, simulate_paths)

__version__ = "0.1.0"
