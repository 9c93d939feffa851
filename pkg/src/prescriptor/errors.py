"""Exception types shared across the package.

The CLI maps these onto exit codes: input and validation problems exit 2,
solver and resource failures exit 1.
"""

from __future__ import annotations


class PrescriptorError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PrescriptorError):
    """Malformed user input: files, dimensions, or configuration.

    Carries an optional list of findings (one string per problem) so callers
    can report everything wrong with an instance at once.
    """

    def __init__(self, message: str, findings: list[str] | None = None):
        super().__init__(message)
        self.findings = findings or []


class SolverError(PrescriptorError):
    """The optimization kernel failed numerically; message carries diagnostics."""


class InfeasibleError(PrescriptorError):
    """A subproblem was infeasible; names the first offending stage and scenario."""

    def __init__(self, stage: int, scenario: object = None):
        where = f"stage {stage}" + ("" if scenario is None else f", scenario {scenario}")
        super().__init__(f"infeasible subproblem at {where}")
        self.stage = stage
        self.scenario = scenario


class UnboundedError(PrescriptorError):
    """A subproblem was unbounded below."""


class ResourceError(PrescriptorError):
    """A size or iteration cap was hit; reports the best incumbent and bound."""

    def __init__(self, message: str, incumbent: float | None = None,
                 bound: float | None = None):
        detail = message
        if incumbent is not None or bound is not None:
            detail += f" (incumbent={incumbent}, bound={bound})"
        super().__init__(detail)
        self.incumbent = incumbent
        self.bound = bound
