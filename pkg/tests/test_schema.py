import pytest
from hypothesis import given
from hypothesis import strategies as st

from sonolex.schema import (
    ALL_KEYS,
    CLOSE_KEYS,
    NA,
    VOCABULARIES,
    AttributeKey,
    LesionRecord,
    build_synonym_lookup,
    canonicalize_value,
    canonicalize_with_warning,
    key_set,
    make_record,
    record_from_mapping,
    record_to_mapping,
    validate_record,
)


def test_sixteen_keys_with_bijective_paths():
    assert len(ALL_KEYS) == 16
    assert len({k.json_path for k in ALL_KEYS}) == 16
    assert ALL_KEYS[0] is AttributeKey.DEPTH
    assert ALL_KEYS[-1] is AttributeKey.DISTANCE_FROM_NIPPLE


def test_location_keys_nest_under_location():
    assert AttributeKey.SIDE_OF_BREAST.json_path == "location.side_of_breast"
    assert AttributeKey.CLOCK_POSITION.json_path == "location.clock_position"
    assert AttributeKey.DISTANCE_FROM_NIPPLE.json_path == "location.distance_from_nipple"
    assert AttributeKey.LESION_TYPE.json_path == "type"
    assert AttributeKey.SUSPICION.json_path == "suspicion"


def test_key_sets():
    close = key_set("close")
    exact = key_set("exact")
    assert len(close) == 10
    assert len(exact) == 16
    assert close[-1] is AttributeKey.POSTERIOR_FEATURES
    assert set(close) < set(exact)
    assert close == CLOSE_KEYS
    with pytest.raises(ValueError):
        key_set("other")


@pytest.mark.parametrize(
    "key, raw, expected",
    [
        (AttributeKey.DISTANCE_FROM_NIPPLE, "1 cm", "1"),
        (AttributeKey.SUSPICION, "PROBABLY BENIGN", "probably benign"),
        (AttributeKey.CLOCK_POSITION, "9:00", "9"),
        (AttributeKey.DEPTH, "n/a", "n/a"),
        (AttributeKey.CLOCK_POSITION, "9 o'clock", "9"),
        (AttributeKey.CLOCK_POSITION, "9", "9"),
        (AttributeKey.DISTANCE_FROM_NIPPLE, "0.50", "0.5"),
        (AttributeKey.DISTANCE_FROM_NIPPLE, "3.00 cm", "3"),
        (AttributeKey.DISTANCE_FROM_NIPPLE, ".5", "0.5"),
        (AttributeKey.DEPTH, "  Anterior  ", "anterior"),
        (AttributeKey.LESION_MARGINS, "Micro  Lobulated", "micro lobulated"),
        (AttributeKey.DEPTH, "", "n/a"),
        (AttributeKey.DEPTH, "N/A", "n/a"),
        (AttributeKey.DEPTH, "none", "n/a"),
        (AttributeKey.DEPTH, None, "n/a"),
        (AttributeKey.CLOCK_POSITION, 9, "9"),
        (AttributeKey.DISTANCE_FROM_NIPPLE, 1.0, "1"),
    ],
)
def test_canonicalize_examples(key, raw, expected):
    assert canonicalize_value(key, raw) == expected


def test_unparseable_clock_and_distance_warn():
    value, warning = canonicalize_with_warning(AttributeKey.CLOCK_POSITION, "noonish")
    assert value == NA and warning
    value, warning = canonicalize_with_warning(AttributeKey.CLOCK_POSITION, "13:00")
    assert value == NA and warning
    value, warning = canonicalize_with_warning(AttributeKey.DISTANCE_FROM_NIPPLE, "close by")
    assert value == NA and warning


@given(
    key=st.sampled_from(list(ALL_KEYS)),
    raw=st.text(max_size=40),
)
def test_canonicalize_idempotent(key, raw):
    once = canonicalize_value(key, raw)
    assert canonicalize_value(key, once) == once


def test_vocabulary_values_are_fixed_points():
    for key, vocabulary in VOCABULARIES.items():
        for value in vocabulary.allowed_values:
            assert canonicalize_value(key, value) == value


def test_vocabulary_na_membership():
    for key, vocabulary in VOCABULARIES.items():
        if key in (AttributeKey.SUSPICION, AttributeKey.DISTANCE_FROM_NIPPLE):
            assert NA not in vocabulary.allowed_values
        else:
            assert NA in vocabulary.allowed_values


def test_validate_record_examples():
    all_na = make_record(suspicion_of_malignancy="benign")
    assert validate_record(all_na) == []
    assert validate_record(make_record(lesion_type="seroma")) == []
    warnings = validate_record(make_record(lesion_type="granuloma"))
    assert len(warnings) == 1 and "lesion_type" in warnings[0]


def test_validate_never_warns_on_na():
    assert validate_record(LesionRecord()) == []


def test_validate_distance_requires_decimal():
    assert validate_record(make_record(distance_from_nipple="2.5")) == []
    noisy = LesionRecord(distance_from_nipple="two")
    assert len(validate_record(noisy)) == 1


def _vocab_strategy(key):
    values = VOCABULARIES[key].allowed_values
    if not values:  # distance: numeric
        return st.sampled_from(["n/a", "1", "0.5", "12", "2.5"])
    return st.sampled_from(values)


@given(
    values=st.fixed_dictionaries({key.value: _vocab_strategy(key) for key in ALL_KEYS})
)
def test_serialization_round_trip(values):
    record = LesionRecord(**values)
    mapping = record_to_mapping(record)
    assert set(mapping["location"]) == {
        "side_of_breast",
        "clock_position",
        "distance_from_nipple",
    }
    restored, warnings = record_from_mapping(mapping)
    assert restored == record
    assert warnings == []


def test_from_mapping_coercion():
    record, warnings = record_from_mapping(
        {
            "location": {"clock_position": 9, "side_of_breast": "Right"},
            "type": "Cyst",
            "extra": "dropped",
        }
    )
    assert record.clock_position == "9"
    assert record.side_of_breast == "right"
    assert record.lesion_type == "cyst"
    assert record.depth == NA
    assert any("extra" in w for w in warnings)


def test_from_mapping_bad_location():
    record, warnings = record_from_mapping({"location": "left"})
    assert record.side_of_breast == NA
    assert warnings


def test_distance_cm_property():
    assert make_record(distance_from_nipple="1 cm").distance_cm == 1.0
    assert LesionRecord().distance_cm is None


def test_synonym_lookup_applies_after_normalization():
    lookup = build_synonym_lookup(
        {AttributeKey.NEXT_STEP: {"6 months follow-up": ["Follow-Up in 6 Months"]}}
    )
    value, _ = canonicalize_with_warning(
        AttributeKey.NEXT_STEP, "FOLLOW-UP   in 6 months", synonym_lookup=lookup
    )
    assert value == "6 months follow-up"
