"""Exception types shared across the package."""


class KernelError(ValueError):
    """Invalid relaxation kernel specification or evaluation."""


class NonIntegrableTailError(KernelError):
    """Kernel tail integral diverges, so the memory coupling is undefined."""


class SingularDerivativeError(KernelError):
    """Kernel derivative is unbounded at the requested point."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge to the requested accuracy."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """Problem configuration violates a structural requirement."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnsupportedStrategyError(ConfigError):
    """Requested convolution strategy cannot handle the supplied kernel."""


class BlowUpDetected(RuntimeError):
    """Solution left the representable range in finite time.

    Finite-time blow-up is a genuine regime of the model for large data,
    so the solver reports it as a signal instead of crashing.
    """

    def __init__(self, t_index, t):
        super().__init__(f"blow-up detected at step {t_index} (t={t:.6g})")
        self.t_index = t_index
        self.t = t


class InsufficientDataError(ValueError):
    """Not enough samples in the requested fit window."""


class TraceFormatError(ValueError):
    """trace.csv does not conform to the column contract."""
