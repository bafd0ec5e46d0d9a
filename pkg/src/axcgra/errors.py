"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 1,
TimingViolationError / RoutingFailedError -> 2, FormatError -> 3.
"""


class AxcgraError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(AxcgraError):
    """Invalid configuration, shape mismatch, or out-of-range argument."""


class AccumulatorOverflowError(ValidationError):
    """A convolution accumulator left the signed 32-bit range."""


class FormatError(AxcgraError):
    """Malformed or inconsistent on-disk artifact (manifest, blob, plan...)."""


class TimingViolationError(AxcgraError):
    """One or more tiles have negative slack at the requested clock period."""

    def __init__(self, offenders, period_ps):
        self.offenders = list(offenders)  # [(tile_id, delay_ps, slack_ps), ...]
        self.period_ps = period_ps
        names = ", ".join(t[0] for t in self.offenders)
        super().__init__(
            f"timing violation at period {period_ps} ps: {names}"
        )


class RoutingFailedError(AxcgraError):
    """The router could not reach a congestion-free state."""

    def __init__(self, overused, iterations):
        self.overused = list(overused)  # [(wire, occupancy), ...]
        self.iterations = iterations
        super().__init__(
            f"unroutable after {iterations} iterations: "
            f"{len(self.overused)} over-capacity wires"
        )
