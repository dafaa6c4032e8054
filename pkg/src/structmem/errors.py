"""Exception hierarchy shared across the package."""


class StructMemError(Exception):
    """Base class for all structmem errors."""

    code = "error"


class ZeroVectorError(StructMemError):
    code = "zero_vector"


class NonFiniteError(StructMemError):
    code = "non_finite"


class DimMismatchError(StructMemError):
    code = "dim_mismatch"


class CountMismatchError(StructMemError):
    code = "count_mismatch"


class ShapeMismatchError(StructMemError):
    code = "shape_mismatch"


class UnknownValueError(StructMemError):
    code = "unknown_value"

    def __init__(self, attribute, value):
        super().__init__(f"unknown value {value!r} for attribute {attribute!r}")
        self.attribute = attribute
        self.value = value


class DuplicateIdError(StructMemError):
    code = "duplicate_id"


class EmptyDatabaseError(StructMemError):
    code = "empty_database"


class KTooLargeError(StructMemError):
    code = "k_too_large"


class NumericalFailureError(StructMemError):
    code = "numerical_failure"


class DegenerateFusionError(StructMemError):
    code = "degenerate_fusion"


class AllWeightsNonPositiveError(StructMemError):
    code = "all_weights_non_positive"


class EmptyMaskError(StructMemError):
    code = "empty_mask"


class NonPositiveTauError(StructMemError):
    code = "non_positive_tau"


class EmptyAfterCurationError(StructMemError):
    code = "empty_after_curation"


class CorruptManifestError(StructMemError):
    code = "corrupt_manifest"


class ChecksumMismatchError(StructMemError):
    code = "checksum_mismatch"


class ValidationFailedError(StructMemError):
    code = "validation_failed"
