class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (mesh, material, config file, ...)."""


class NumericalError(RuntimeError):
    """A factorization or solve failed; the run cannot continue."""
