"""Exception taxonomy shared by all vaxclust modules.

Exit-code mapping used by the CLI: ConfigError -> 1, DataError -> 2,
anything else raised inside a (year, k) cell -> recorded per cell, exit 3.
"""

from __future__ import annotations


class VaxclustError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VaxclustError):
    """Bad run configuration (unknown key, missing field, invalid value)."""


class DataError(VaxclustError):
    """Input tables could not be ingested as specified."""


class MissingColumn(DataError):
    def __init__(self, column: str):
        super().__init__(f"required column missing: {column!r}")
        self.column = column


class OutOfRange(DataError):
    def __init__(self, column: str, value, district_id: str = ""):
        where = f" (district {district_id})" if district_id else ""
        super().__init__(f"value {value!r} out of range for column {column!r}{where}")
        self.column = column
        self.value = value
        self.district_id = district_id


class RuralityOutOfDomain(DataError):
    def __init__(self, value, district_id: str = ""):
        where = f" (district {district_id})" if district_id else ""
        super().__init__(f"rurality {value!r} not in 1..6{where}")
        self.value = value
        self.district_id = district_id


class DuplicateDistrict(DataError):
    def __init__(self, district_id: str):
        super().__init__(f"duplicate district id: {district_id!r}")
        self.district_id = district_id


class EmptyTable(DataError):
    pass


class JoinMismatch(DataError):
    """District id sets of the two tables differ.

    ``left_only``/``right_only`` carry the unmatched ids of the vaccination
    and GDSC tables respectively.
    """

    def __init__(self, left_only: list[str], right_only: list[str]):
        super().__init__(
            f"district ids do not match: {len(left_only)} only in vaccination table, "
            f"{len(right_only)} only in gdsc table"
        )
        self.left_only = list(left_only)
        self.right_only = list(right_only)


class TooFewRows(DataError):
    pass


class NonFiniteInput(VaxclustError):
    pass


class KOutOfRange(VaxclustError):
    pass


class DegenerateLabels(VaxclustError):
    """All training rows carry the same class label."""


class NonFiniteFeature(VaxclustError):
    pass


class FeatureArityMismatch(VaxclustError):
    pass


class MissingCover(VaxclustError):
    """Tree ensemble lacks the per-leaf training-row counts needed for attribution."""


class TooManyFeatures(VaxclustError):
    pass


class EmptySample(VaxclustError):
    pass


class KFoldsOutOfRange(VaxclustError):
    pass


class LabelOutOfRange(VaxclustError):
    pass


class LengthMismatch(VaxclustError):
    pass


class EmptyMatrix(VaxclustError):
    pass


class EmptyGroup(VaxclustError):
    pass


class SpecInvalid(VaxclustError):
    """Synthetic-data generation spec violates its own invariants."""


class GeometryKeyMismatch(VaxclustError):
    def __init__(self, missing_ids: list[str]):
        super().__init__(f"no geometry for {len(missing_ids)} district(s): {missing_ids}")
        self.missing_ids = list(missing_ids)
