"""Exception types shared across the simulator."""


class ShapeError(ValueError):
    """A vector or matrix does not match the shape implied by its model spec."""


class FormatError(ValueError):
    """Raised when binary input (e.g. an IDX file) is malformed."""


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending key."""


class CapacityError(ConfigError):
    """A scenario asks for more samples than the base dataset provides."""


class CoverageError(ValueError):
    """A partition does not cover the node set it is scored against."""


class NumericalError(RuntimeError):
    """Training produced a non-finite loss or gradient.

    Carries the round and client where the failure happened when known.
    """

    def __init__(self, message: str, round_index: int | None = None,
                 client_id: int | None = None):
        ctx = []
        if round_index is not None:
            ctx.append(f"round={round_index}")
        if client_id is not None:
            ctx.append(f"client={client_id}")
        if ctx:
            message = f"{message} ({', '.join(ctx)})"
        super().__init__(message)
        self.round_index = round_index
        self.client_id = client_id


class DiagnosticUnavailableError(RuntimeError):
    """Requested diagnostic needs history that was not recorded."""
