"""Exception hierarchy shared across the package."""


class CrowdSynthError(Exception):
    """Base class for all package errors."""


class InvalidGeometryError(CrowdSynthError, ValueError):
    """Degenerate or non-finite box coordinates."""


class InstanceNotFoundError(CrowdSynthError, KeyError):
    """An instance id was not found in a scene."""


class InvalidInputError(CrowdSynthError, ValueError):
    """A value violates an operation precondition."""


class ConfigurationError(CrowdSynthError, ValueError):
    """A configuration object violates its invariants."""


class ParseError(CrowdSynthError, ValueError):
    """A document could not be parsed; message carries file/field context."""


class SchemaError(CrowdSynthError, ValueError):
    """A required field is missing or has the wrong type."""


class IntegrityError(CrowdSynthError, ValueError):
    """Cross-references inside a document are inconsistent."""


class PatchNotFoundError(CrowdSynthError, KeyError):
    """A patch id or patch file could not be resolved."""


class InvalidPatchError(CrowdSynthError, ValueError):
    """A patch raster violates its invariants (e.g. empty mask)."""
