"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: input/schema problems
(everything deriving from :class:`InputError`) exit 2, backend transport
failures (:class:`BackendError`) exit 3.
"""


class DriftwatchError(Exception):
    """Base class for all errors raised by this package."""


class InputError(DriftwatchError):
    """Bad user input: malformed manifests, schema violations, missing files."""


class DatasetError(InputError):
    """A run directory or report file failed validation."""


class FixtureError(InputError):
    """A scripted fixture is missing an entry or is malformed."""


class BackendError(DriftwatchError):
    """A feature/segmentation provider failed (transport, timeout, model)."""
