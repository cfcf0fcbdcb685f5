"""Solver-facing conic program representation and interchangeable backends.

Programs are modeled with cvxpy expressions (affine equalities, second-order
cones, PSD blocks, linear objective) but solved through a small backend
contract so the same program can be handed to different SDP-capable solvers.
Backends must be reentrant; each solve works on its own problem object.
"""

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

__all__ = [
    "ConicProgram",
    "SolverResult",
    "ClarabelBackend",
    "ScsBackend",
    "default_backend",
    "secondary_backend",
]

SUCCESS_STATUSES = (cp.OPTIMAL,)
REDUCED_ACCURACY_STATUSES = (cp.OPTIMAL_INACCURATE,)
INFEASIBLE_STATUSES = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)


@dataclass
class ConicProgram:
    """Conic program: named variable blocks, constraint lists, linear objective."""

    variables: dict
    objective: cp.Minimize
    equalities: list = field(default_factory=list)
    soc_constraints: list = field(default_factory=list)
    psd_constraints: list = field(default_factory=list)

    def all_constraints(self):
        return [*self.equalities, *self.soc_constraints, *self.psd_constraints]

    def validate(self):
        """Check every constraint references only declared variable blocks."""
        declared = {v.id for v in self.variables.values()}
        for con in self.all_constraints():
            for v in con.variables():
                if v.id not in declared:
                    raise ValueError(f"constraint references undeclared variable {v.name()}")
        for v in self.objective.variables():
            if v.id not in declared:
                raise ValueError(f"objective references undeclared variable {v.name()}")


@dataclass(frozen=True)
class SolverResult:
    status: str  # success | infeasible | solver-error
    objective: float | None
    values: dict


class _CvxpyBackend:
    """Shared driver: build a cvxpy Problem and map statuses.

    ``accept_inaccurate`` admits reduced-accuracy optimal exits (the solver
    stalled within its relaxed tolerances). Edge solvers re-verify every
    constraint numerically afterwards and recompute costs from the returned
    iterate, so such solutions are safe to consume; strict callers can turn
    this off.
    """

    name = "cvxpy"

    def __init__(self, feas_tol=1e-8, opt_tol=1e-8, verbose=False, accept_inaccurate=True):
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.verbose = verbose
        self.accept_inaccurate = accept_inaccurate

    def solver_options(self):
        return {}

    def solve(self, program):
        problem = cp.Problem(program.objective, program.all_constraints())
        try:
            problem.solve(verbose=self.verbose, **self.solver_options())
        except (cp.SolverError, Exception):
            return SolverResult(status="solver-error", objective=None, values={})
        acceptable = SUCCESS_STATUSES + (
            REDUCED_ACCURACY_STATUSES if self.accept_inaccurate else ()
        )
        if problem.status in acceptable:
            values = {name: np.array(var.value) for name, var in program.variables.items()}
            return SolverResult(status="success", objective=float(problem.value), values=values)
        if problem.status in INFEASIBLE_STATUSES:
            return SolverResult(status="infeasible", objective=None, values={})
        return SolverResult(status="solver-error", objective=None, values={})


class ClarabelBackend(_CvxpyBackend):
    """Interior-point backend; the default for edge solves."""

    name = "clarabel"

    def solver_options(self):
        return {
            "solver": cp.CLARABEL,
            "tol_feas": self.feas_tol,
            "tol_gap_abs": self.opt_tol,
            "tol_gap_rel": self.opt_tol,
        }


class ScsBackend(_CvxpyBackend):
    """First-order backend; used as the independent cross-check solver."""

    name = "scs"

    def __init__(self, feas_tol=1e-8, opt_tol=1e-8, verbose=False, max_iters=200_000):
        super().__init__(feas_tol, opt_tol, verbose)
        self.max_iters = max_iters

    def solver_options(self):
        return {
            "solver": cp.SCS,
            "eps_abs": self.opt_tol,
            "eps_rel": self.opt_tol,
            "max_iters": self.max_iters,
        }


def default_backend(**kwargs):
    return ClarabelBackend(**kwargs)


def secondary_backend(**kwargs):
    kwargs.setdefault("opt_tol", 1e-9)
    kwargs.setdefault("feas_tol", 1e-9)
    return ScsBackend(**kwargs)
