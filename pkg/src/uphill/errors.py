class ConfigurationError(ValueError):
    """Invalid parameters detected before any computation."""


class SolverFault(RuntimeError):
    """Numerical failure during stepping (negativity, non-finite values)."""
