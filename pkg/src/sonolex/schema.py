"""Lesion data model: the 16 attribute keys, their controlled vocabularies,
and value canonicalization.

Every value is stored in canonical form: lowercase, trimmed, internal
whitespace collapsed, with absent information represented by the literal
"n/a". Clock positions are bare hours ("9"), distances are unit-free
decimal strings with no trailing zeros ("1", "0.5").
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from enum import Enum
from typing import Any, Iterable, Literal, Mapping


class AttributeKey(str, Enum):
    """The 16 lesion attributes, in table order (k1..k16)."""

    DEPTH = "depth"
    ANATOMICAL_REGION = "anatomical_region"
    LESION_TYPE = "lesion_type"
    LESION_SHAPE = "lesion_shape"
    ORIENTATION = "orientation"
    LESION_MARGINS = "lesion_margins"
    ECHOGENICITY = "echogenicity"
    CALCIFICATIONS = "calcifications"
    VASCULARITY = "vascularity"
    POSTERIOR_FEATURES = "posterior_features"
    LESION_SUBTYPE = "lesion_subtype"
    NEXT_STEP = "next_step"
    SUSPICION = "suspicion_of_malignancy"
    SIDE_OF_BREAST = "side_of_breast"
    CLOCK_POSITION = "clock_position"
    DISTANCE_FROM_NIPPLE = "distance_from_nipple"

    @property
    def json_field(self) -> str:
        """Field name used in serialized records."""
        return _JSON_FIELDS[self]

    @property
    def in_location(self) -> bool:
        """True for the three fields nested under the "location" object."""
        return self in _LOCATION_KEYS

    @property
    def json_path(self) -> str:
        """Dotted path of the field in a serialized record."""
        if self.in_location:
            return f"location.{self.json_field}"
        return self.json_field


# Serialized field names. Three keys live inside a nested "location" object;
# a few top-level names are shorter than the attribute identifiers.
_JSON_FIELDS: dict[AttributeKey, str] = {
    AttributeKey.DEPTH: "depth",
    AttributeKey.ANATOMICAL_REGION: "anatomical_region",
    AttributeKey.LESION_TYPE: "type",
    AttributeKey.LESION_SHAPE: "shape",
    AttributeKey.ORIENTATION: "orientation",
    AttributeKey.LESION_MARGINS: "margin",
    AttributeKey.ECHOGENICITY: "echogenicity",
    AttributeKey.CALCIFICATIONS: "calcifications",
    AttributeKey.VASCULARITY: "vascularity",
    AttributeKey.POSTERIOR_FEATURES: "posterior_features",
    AttributeKey.LESION_SUBTYPE: "subtype",
    AttributeKey.NEXT_STEP: "next_step",
    AttributeKey.SUSPICION: "suspicion",
    AttributeKey.SIDE_OF_BREAST: "side_of_breast",
    AttributeKey.CLOCK_POSITION: "clock_position",
    AttributeKey.DISTANCE_FROM_NIPPLE: "distance_from_nipple",
}

_LOCATION_KEYS = frozenset(
    {
        AttributeKey.SIDE_OF_BREAST,
        AttributeKey.CLOCK_POSITION,
        AttributeKey.DISTANCE_FROM_NIPPLE,
    }
)

ALL_KEYS: tuple[AttributeKey, ...] = tuple(AttributeKey)
CLOSE_KEYS: tuple[AttributeKey, ...] = ALL_KEYS[:10]

NA = "n/a"

# Inputs that mean "no information". Compared after normalization.
_NULL_LIKE = frozenset({"", "n/a", "na", "none", "null"})

_WS = re.compile(r"\s+")
_LEADING_INT = re.compile(r"(\d{1,2})")
_NUMBER = re.compile(r"\d+(?:\.\d+)?|\.\d+")
_CANONICAL_DECIMAL = re.compile(r"(?:0|[1-9]\d*)(?:\.\d*[1-9])?$")


def key_set(kind: Literal["close", "exact"]) -> tuple[AttributeKey, ...]:
    """The matching key sets: "close" is the first 10 diagnostic-categorical
    keys, "exact" is all 16. Both in table order."""
    if kind == "close":
        return CLOSE_KEYS
    if kind == "exact":
        return ALL_KEYS
    raise ValueError(f"unknown key set kind: {kind!r}")


@dataclass(frozen=True)
class Vocabulary:
    """Controlled vocabulary for one attribute. All vocabularies are open:
    unknown values warn but are never rejected."""

    key: AttributeKey
    allowed_values: tuple[str, ...]
    open: bool = True


VOCABULARIES: dict[AttributeKey, Vocabulary] = {
    key: Vocabulary(key, values)
    for key, values in {
        AttributeKey.DEPTH: ("posterior", "middle", "anterior", NA),
        AttributeKey.ANATOMICAL_REGION: (
            "retroareolar",
            "axillary tail",
            "periareolar",
            "subareolar",
            "retropectoral",
            NA,
        ),
        AttributeKey.LESION_TYPE: (
            "nodule",
            "cyst",
            "mass",
            "lymph node",
            "scar",
            "duct",
            "seroma",
            "post-surgical change",
            "post-biopsy",
            NA,
        ),
        AttributeKey.LESION_SHAPE: ("oval", "round", "irregular", NA),
        AttributeKey.ORIENTATION: ("parallel", "non-parallel", "other", NA),
        AttributeKey.LESION_MARGINS: (
            "circumscribed",
            "obscured",
            "angular",
            "microlobulated",
            "spiculated",
            "lobulated",
            "irregular",
            "septated",
            NA,
        ),
        AttributeKey.ECHOGENICITY: (
            "anechoic",
            "hyperechoic",
            "hypoechoic",
            "isoechoic",
            "heterogeneous",
            "solid",
            NA,
        ),
        AttributeKey.CALCIFICATIONS: ("yes", "no", NA),
        AttributeKey.VASCULARITY: ("absent", "present", NA),
        AttributeKey.POSTERIOR_FEATURES: ("enhancement", "shadowing", NA),
        AttributeKey.LESION_SUBTYPE: (
            "abnormal lymph node",
            "simple cyst",
            "complicated cyst",
            "cyst with debris",
            "reactive lymph node",
            "fat necrosis",
            "sebaceous cyst",
            "lipoma",
            "cyst cluster",
            "focally ectatic duct with debris",
            NA,
        ),
        AttributeKey.NEXT_STEP: (
            "1 year screening mammogram",
            "mri follow up",
            "6 months follow-up",
            "12 months follow-up",
            "fine needle aspiration",
            "ultrasound guided core biopsy",
            "surgical excision",
            NA,
        ),
        # The source vocabulary lists no n/a for suspicion; "n/a" is still
        # admitted at validation time (it occurs in real ground truth).
        AttributeKey.SUSPICION: (
            "low",
            "moderate",
            "high",
            "benign",
            "probably benign",
            "negative",
        ),
        AttributeKey.SIDE_OF_BREAST: ("left", "right", NA),
        AttributeKey.CLOCK_POSITION: tuple(str(h) for h in range(1, 13)) + (NA,),
        # Numeric; validated against the canonical decimal form instead of a list.
        AttributeKey.DISTANCE_FROM_NIPPLE: (),
    }.items()
}

# Optional alias table: canonical value -> aliases, per key. Applied after
# normalization; empty by default because value synonymy in reports is a
# site-specific policy choice.
SynonymMap = Mapping[AttributeKey, Mapping[str, Iterable[str]]]


def build_synonym_lookup(synonyms: SynonymMap) -> dict[AttributeKey, dict[str, str]]:
    """Invert a canonical->aliases map into an alias->canonical lookup."""
    lookup: dict[AttributeKey, dict[str, str]] = {}
    for key, table in synonyms.items():
        inverted: dict[str, str] = {}
        for canonical, aliases in table.items():
            for alias in aliases:
                inverted[_normalize_text(alias)] = _normalize_text(canonical)
        lookup[key] = inverted
    return lookup


def _normalize_text(raw: str) -> str:
    return _WS.sub(" ", raw.strip()).lower()


def _canonical_decimal(token: str) -> str:
    """Normalize a numeric token: no leading/trailing zeros, no trailing dot."""
    if token.startswith("."):
        token = "0" + token
    if "." in token:
        intpart, frac = token.split(".", 1)
        frac = frac.rstrip("0")
    else:
        intpart, frac = token, ""
    intpart = intpart.lstrip("0") or "0"
    return f"{intpart}.{frac}" if frac else intpart


def canonicalize_with_warning(
    key: AttributeKey,
    raw: Any,
    synonym_lookup: Mapping[AttributeKey, Mapping[str, str]] | None = None,
) -> tuple[str, str | None]:
    """Canonicalize a raw value; total. Returns (value, warning-or-None).

    Unparseable clock positions and distances come back as "n/a" with a
    warning rather than an error.
    """
    if raw is None:
        return NA, None
    text = _normalize_text(str(raw))
    if text in _NULL_LIKE:
        return NA, None
    if synonym_lookup and key in synonym_lookup:
        text = synonym_lookup[key].get(text, text)
    if key is AttributeKey.CLOCK_POSITION:
        m = _LEADING_INT.match(text)
        if m:
            hour = int(m.group(1))
            if 1 <= hour <= 12:
                return str(hour), None
        return NA, f"unparseable clock position: {raw!r}"
    if key is AttributeKey.DISTANCE_FROM_NIPPLE:
        m = _NUMBER.search(text)
        if m:
            return _canonical_decimal(m.group()), None
        return NA, f"unparseable distance from nipple: {raw!r}"
    return text, None


def canonicalize_value(key: AttributeKey, raw: Any) -> str:
    """Canonical form of a raw value for the given key. Idempotent."""
    return canonicalize_with_warning(key, raw)[0]


@dataclass(frozen=True)
class LesionRecord:
    """One lesion's 16 canonical attribute values, in table order."""

    depth: str = NA
    anatomical_region: str = NA
    lesion_type: str = NA
    lesion_shape: str = NA
    orientation: str = NA
    lesion_margins: str = NA
    echogenicity: str = NA
    calcifications: str = NA
    vascularity: str = NA
    posterior_features: str = NA
    lesion_subtype: str = NA
    next_step: str = NA
    suspicion_of_malignancy: str = NA
    side_of_breast: str = NA
    clock_position: str = NA
    distance_from_nipple: str = NA

    def get(self, key: AttributeKey) -> str:
        return getattr(self, key.value)

    @property
    def distance_cm(self) -> float | None:
        """Parsed nipple distance in centimeters, when present."""
        if self.distance_from_nipple == NA:
            return None
        try:
            return float(self.distance_from_nipple)
        except ValueError:
            return None


def make_record(**values: Any) -> LesionRecord:
    """Build a record from raw values keyed by attribute identifier,
    canonicalizing each one."""
    canonical = {
        name: canonicalize_value(AttributeKey(name), value)
        for name, value in values.items()
    }
    return LesionRecord(**canonical)


def validate_record(record: LesionRecord) -> list[str]:
    """One warning per out-of-vocabulary value. "n/a" never warns: it is
    admitted for every key even where the vocabulary omits it."""
    warnings: list[str] = []
    for key in ALL_KEYS:
        value = record.get(key)
        if value == NA:
            continue
        if key is AttributeKey.DISTANCE_FROM_NIPPLE:
            if not _CANONICAL_DECIMAL.match(value):
                warnings.append(
                    f"non-numeric distance_from_nipple value: {value!r}"
                )
            continue
        if value not in VOCABULARIES[key].allowed_values:
            warnings.append(f"out-of-vocabulary {key.value}: {value!r}")
    return warnings


def record_to_mapping(record: LesionRecord) -> dict[str, Any]:
    """Serialize to the canonical record layout: a nested "location" object
    first, then the remaining fields."""
    location = {
        key.json_field: record.get(key)
        for key in ALL_KEYS
        if key.in_location
    }
    mapping: dict[str, Any] = {"location": location}
    for key in _SERIALIZED_TOP_LEVEL_ORDER:
        mapping[key.json_field] = record.get(key)
    return mapping


# Top-level field order in serialized records (suspicion precedes subtype).
_SERIALIZED_TOP_LEVEL_ORDER: tuple[AttributeKey, ...] = (
    AttributeKey.DEPTH,
    AttributeKey.ANATOMICAL_REGION,
    AttributeKey.LESION_TYPE,
    AttributeKey.LESION_SHAPE,
    AttributeKey.ORIENTATION,
    AttributeKey.LESION_MARGINS,
    AttributeKey.ECHOGENICITY,
    AttributeKey.CALCIFICATIONS,
    AttributeKey.VASCULARITY,
    AttributeKey.POSTERIOR_FEATURES,
    AttributeKey.SUSPICION,
    AttributeKey.LESION_SUBTYPE,
    AttributeKey.NEXT_STEP,
)

_TOP_LEVEL_BY_FIELD = {
    key.json_field: key for key in ALL_KEYS if not key.in_location
}
_LOCATION_BY_FIELD = {key.json_field: key for key in ALL_KEYS if key.in_location}


def _coerce_scalar(key: AttributeKey, value: Any) -> tuple[str, str | None]:
    if value is not None and not isinstance(value, (str, int, float)):
        return NA, f"non-scalar value for {key.json_path}: {value!r}"
    return canonicalize_with_warning(key, value)


def record_from_mapping(obj: Mapping[str, Any]) -> tuple[LesionRecord, list[str]]:
    """Coerce a parsed mapping into a record. Known fields are matched by
    serialized name, missing fields become "n/a", unknown fields are dropped
    with a warning, and every value is canonicalized."""
    values: dict[str, str] = {}
    warnings: list[str] = []
    for name, raw in obj.items():
        if name == "location":
            if not isinstance(raw, Mapping):
                warnings.append(f"location is not an object: {raw!r}")
                continue
            for loc_name, loc_raw in raw.items():
                loc_key = _LOCATION_BY_FIELD.get(loc_name)
                if loc_key is None:
                    warnings.append(f"unknown location field dropped: {loc_name!r}")
                    continue
                value, warning = _coerce_scalar(loc_key, loc_raw)
                values[loc_key.value] = value
                if warning:
                    warnings.append(warning)
            continue
        key = _TOP_LEVEL_BY_FIELD.get(name)
        if key is None:
            warnings.append(f"unknown field dropped: {name!r}")
            continue
        value, warning = _coerce_scalar(key, raw)
        values[key.value] = value
        if warning:
            warnings.append(warning)
    return LesionRecord(**values), warnings


@dataclass(frozen=True)
class ReportDocument:
    """A report with its isolated observation and impression sections."""

    id: str
    raw_text: str
    observation: str
    impression: str | None = None


def _check_key_table() -> None:
    # The key <-> serialized-path mapping must be a bijection over 16 keys.
    assert len(ALL_KEYS) == 16
    paths = {key.json_path for key in ALL_KEYS}
    assert len(paths) == 16
    assert set(CLOSE_KEYS) < set(ALL_KEYS)
    record_fields = tuple(f.name for f in fields(LesionRecord))
    assert record_fields == tuple(key.value for key in ALL_KEYS)


_check_key_table()
