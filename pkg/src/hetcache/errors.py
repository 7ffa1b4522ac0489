"""Error types shared across the package, mapped to CLI exit codes."""


class ConfigError(Exception):
    """Invalid or inconsistent configuration (CLI exit code 2)."""

    exit_code = 2


class ResourceLimitError(Exception):
    """A guarded enumeration or search would exceed its size cap (exit code 3)."""

    exit_code = 3


class NumericError(Exception):
    """A numerical routine failed to converge or validate (exit code 4)."""

    exit_code = 4


class TrialError(Exception):
    """A Monte-Carlo trial failed; carries the trial id and the original cause."""

    def __init__(self, trial_id, cause):
        super().__init__(f"trial {trial_id} failed: {cause}")
        self.trial_id = trial_id
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
