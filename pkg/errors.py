# errors.py


class OWCError(Exception):
    """Base class for every error raised by the owcpark library."""


class DomainError(OWCError, ValueError):
    """An argument lies outside the domain of the model."""


class DataFormatError(OWCError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")


class SolverError(OWCError):
    """A numerical procedure failed (singular system, integrator, continuation)."""


class LayoutInfeasibleError(SolverError):
    """No admissible layout could be sampled."""
