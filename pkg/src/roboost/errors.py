"""Exception types shared across the package."""


class RoboostError(Exception):
    """Base class for package-specific errors."""


class EmptyEventError(RoboostError):
    """Conditioning event has zero mass.

    Distinct from ValueError on purpose: callers treat it as a
    termination signal rather than a usage bug.
    """


class BudgetExhaustedError(RoboostError):
    """A sampling budget was hit. Carries the draw counters."""

    def __init__(self, message: str, *, drawn: int, budget: int | None = None):
        super().__init__(message)
        self.drawn = drawn
        self.budget = budget


class EmptyRegionSignal(RoboostError):
    """Rejection sampling burned its per-accept budget without a hit.

    Signals that the target region has (near) zero mass; boosting loops
    catch it and terminate safely.
    """

    def __init__(self, message: str, *, attempts: int, drawn: int):
        super().__init__(message)
        self.attempts = attempts
        self.drawn = drawn


class WeakLearnerFailureError(RoboostError):
    """The weak learner retry cap was exceeded in some boosting round."""

    def __init__(self, round_index: int, attempts: int):
        super().__init__(
            f"weak learner failed {attempts} consecutive attempts in round {round_index}"
        )
        self.round_index = round_index
        self.attempts = attempts


class InfeasibleScriptError(RoboostError):
    """The scripted learner cannot realize its promised coverage."""


class ScenarioError(ValueError):
    """Scenario file failed validation. Carries a JSON-path-ish location."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location
