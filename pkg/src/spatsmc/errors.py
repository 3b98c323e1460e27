"""Exception types shared across the package."""


class SpatsmcError(Exception):
    """Base class for all package errors."""


class ValidationError(SpatsmcError):
    """A model, argument or configuration failed structural validation."""


class CapabilityError(SpatsmcError):
    """An operation needs a model component that was not supplied."""


class TransformError(SpatsmcError):
    """A parameter value lies outside the domain of its transform."""

    def __init__(self, name, value, scale):
        self.name = name
        super().__init__(
            f"parameter {name!r}={value!r} outside the domain of the "
            f"{scale!r} transform"
        )


class ResamplingError(SpatsmcError):
    """All resampling weights are zero; the caller decides the policy."""
