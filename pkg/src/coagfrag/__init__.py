"""Stochastic and deterministic coagulation-fragmentation with random fragment ratios."""

__version__ = "0.1.0"

from .errors import (CoagFragError, DomainError, EventBudgetExceeded, GridOverflow, IndexOrder,
                     IndexOutOfRange, InvalidRatio, MassGain, NoConvergence, NotSorted,
                     RateOverflow, StabilityViolation, UnitFirstRatio)
from .kernels import (CoagKernel, FragKernel, HypothesisReport, SampleGrid, ineq_constant,
                      verify_coag_hypothesis, verify_frag_hypothesis, verify_holder_hypothesis)
from .dislocation import (HALVING, Atom, DislocationMeasure, RatioSequence, c_beta_lambda, psi_n,
                          truncate_beta, validate_theta)
from .particles import (INEQUALITIES, AuditSummary, ParticleState, audit_inequalities, coalesce,
                        d_dlambda_constant, dist_d, dist_dlambda, fragment, norm_lambda, norm_one,
                        random_audit)
from .stochastic import (CoupledTrajectory, CouplingBound, EnsembleResult, SimConfig, Trajectory,
                         coupling_bound, ensemble, make_rng, moment_growth_bound, simulate,
                         simulate_coupled, step, total_rates)
from .solver import (AtomicMeasure, GridPolicy, MeasureTrajectory, SolveConfig, TruncationTable,
                     apply_generator, gronwall_constants, moment, moment_bound_check, pairing,
                     primitive, rebin, solve, solve_euler, solve_picard, sup_tv,
                     truncation_cauchy_check, uniqueness_distance)
