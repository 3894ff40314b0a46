"""Exception hierarchy.

Every error carries the name of the module that raised it so the CLI can
report provenance without inspecting tracebacks.
"""


class GnssMapError(Exception):
    module = "gnssmap"


class ConfigError(GnssMapError, ValueError):
    module = "config"


class GeometryError(GnssMapError, ValueError):
    module = "geo"


class OutOfRangeError(GeometryError):
    pass


class DegenerateGeometryError(GeometryError):
    pass


class InsideFootprintError(GeometryError):
    pass


class IngestError(GnssMapError):
    module = "ingest"


class SchemaError(IngestError):
    pass


class MalformedDataError(IngestError):
    def __init__(self, message, errors=()):
        super().__init__(message)
        self.errors = list(errors)


class EmptyDatasetError(IngestError):
    pass


class FitError(GnssMapError):
    module = "signal_model"


class DegenerateDataError(FitError):
    pass


class NumericalError(FitError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
