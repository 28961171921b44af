"""Exception types raised by penreflect."""


class PenreflectError(Exception):
    """Base class for all library errors."""


class ProxConvergenceError(PenreflectError):
    """An iterative proximal/projection solver hit its iteration cap."""

    def __init__(self, iterations, residual):
        super().__init__(
            f"proximal solver did not converge after {iterations} iterations "
            f"(last move {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class InfeasibleSetError(PenreflectError):
    """A halfspace system describes the empty set."""


class UnsupportedBodyError(PenreflectError):
    """The convex set does not support the requested geometric operation."""


class DivergenceError(PenreflectError):
    """A time stepper produced a non-finite state."""

    def __init__(self, step, path=None):
        where = f"step {step}" if path is None else f"step {step}, path {path}"
        super().__init__(f"non-finite state at {where}")
        self.step = step
        self.path = path


class TruncationError(PenreflectError):
    """The quadrature box discards too much probability mass."""


class CoercivityError(PenreflectError):
    """A one-dimensional objective did not grow while bracketing its minimum."""


class TuningError(PenreflectError):
    """MCMC step-size tuning failed to reach a usable acceptance rate."""


class ConfigError(PenreflectError):
    """Experiment configuration failed validation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
