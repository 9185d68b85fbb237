"""Exception types raised across the toolkit."""


class FomasError(Exception):
    """Base class for domain failures (as opposed to usage errors)."""


class DimensionError(FomasError, ValueError):
    pass


class NumericalError(FomasError, ArithmeticError):
    pass


class ConnectivityError(FomasError, ValueError):
    """Raised when the graph Laplacian cannot be reduced to full row rank."""

    def __init__(self, message: str = "insufficient connectivity"):
        super().__init__(message)


class NotDecentralizedError(FomasError, ValueError):
    """A gain matrix couples different agents."""


class HomotopyStalled(FomasError):
    """The continuation path could not be advanced past ``eta``."""

    def __init__(self, eta: float, best_margin: float):
        self.eta = eta
        self.best_margin = best_margin
        super().__init__(f"homotopy stalled at eta = {eta:.6g} (best margin {best_margin:.3e})")
