"""Exception hierarchy shared by every windward module."""


class WindwardError(Exception):
    """Base class for all errors raised by windward."""


class InvalidInputError(WindwardError, ValueError):
    """A value is non-finite, out of range or otherwise unusable."""


class EmptyInputError(WindwardError):
    """An input stream or collection had nothing in it."""


class SchemaError(WindwardError):
    """A CSV header is missing a required column."""

    def __init__(self, column: str, source: str = "input"):
        super().__init__(f"{source}: missing required column {column!r}")
        self.column = column
        self.source = source

    def __reduce__(self):
        return (self.__class__, (self.column, self.source))


class RowError(WindwardError):
    """A CSV row could not be parsed."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason

    def __reduce__(self):
        return (self.__class__, (self.line, self.reason))


class AlignmentError(WindwardError):
    """Telemetry and wind series cannot be put on a common grid."""


class RecordFormatError(WindwardError):
    """A persisted record is truncated, corrupted or of another version."""


class ConfigError(WindwardError):
    """Bad configuration or usage; the CLI exits with status 2."""


class TruncationError(WindwardError):
    """A live wind stream ended before the plan did."""

    def __init__(self, step: int, expected: int):
        super().__init__(
            f"live wind stream ended at step {step}, {expected} steps required"
        )
        self.step = step
        self.expected = expected

    def __reduce__(self):
        return (self.__class__, (self.step, self.expected))


class NonArrivalError(WindwardError):
    """The planner used up its step budget without reaching home."""

    def __init__(self, final_offset: tuple[float, float], steps: int):
        north, east = final_offset
        super().__init__(
            f"no arrival after {steps} steps, "
            f"dead-reckoned offset ({north:.2f} m N, {east:.2f} m E)"
        )
        self.final_offset = final_offset
        self.steps = steps

    def __reduce__(self):
        return (self.__class__, (self.final_offset, self.steps))


class ConvergenceError(WindwardError):
    """Coordinate descent did not converge."""

    def __init__(self, slope: float, intercept: float, iterations: int):
        super().__init__(
            f"lasso did not converge after {iterations} iterations "
            f"(last slope={slope!r}, intercept={intercept!r})"
        )
        self.slope = slope
        self.intercept = intercept
        self.iterations = iterations

    def __reduce__(self):
        return (self.__class__, (self.slope, self.intercept, self.iterations))


class UndefinedCorrelationError(WindwardError):
    """Pearson correlation asked for a series with zero variance."""


class UndefinedScoreError(WindwardError):
    """R² asked for targets with zero total sum of squares."""


class ScenarioError(WindwardError):
    """Any failure inside a scenario run, annotated with the scenario id."""

    def __init__(self, scenario_id: str, cause: Exception):
        super().__init__(f"scenario {scenario_id}: {cause}")
        self.scenario_id = scenario_id
        self.cause = cause

    def __reduce__(self):
        # keeps the error picklable across process-pool workers
        return (self.__class__, (self.scenario_id, self.cause))
