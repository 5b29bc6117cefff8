"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid user input: malformed files, unknown nodes, bad parameters."""


class UnsupportedError(ValidationError):
    """A method/variant/scheme combination that cannot be served."""
