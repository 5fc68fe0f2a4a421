"""Exception types raised by quadenv."""


class InvalidArgumentError(ValueError):
    """A parameter or input violates a documented precondition."""


class EnumerationCapError(RuntimeError):
    """Exhaustive subset enumeration would exceed the configured cap.

    Attributes
    ----------
    count : int
        Number of subsets the request would scan.
    cap : int
        The cap that was exceeded.
    """

    def __init__(self, count, cap):
        self.count = int(count)
        self.cap = int(cap)
        super().__init__(
            f"enumeration of {self.count} subsets exceeds cap {self.cap}; "
            "raise the cap or pass force=True (--force on the CLI)"
        )


class DivergenceError(RuntimeError):
    """The solver produced a non-finite objective value."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = [] if trace is None else list(trace)
