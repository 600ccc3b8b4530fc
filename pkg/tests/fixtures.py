"""Shared test fixtures: the worked report and the two scored error-case
record sets used across the metric tests."""

from sonolex.schema import make_record

WORKED_REPORT = """Observation:
At the right 9:00 axis, 1 cm from the nipple, there is a 0.4 cm simple cyst. At the left 6:00 retroareolar location, there is a 0.6 x 0.4 x 0.6 cm hypoechoic mass, probably benign may represent a debris-filled cyst and corresponding to the previous mass annotated at the "left nipple posterior" location on exam dated MM/DD/YYYY. No other suspicious cystic or solid masses identified in either breast.

Impression:
PROBABLY BENIGN - FOLLOW-UP RECOMMENDED Left 6:00 retroareolar 0.6 cm hypoechoic mass, probably benign cyst with debris. Recommend follow-up ultrasound in 6 months to assess stability. I personally discussed the findings and recommendations with the patient.
"""

WORKED_OBSERVATION = (
    'At the right 9:00 axis, 1 cm from the nipple, there is a 0.4 cm simple cyst. '
    "At the left 6:00 retroareolar location, there is a 0.6 x 0.4 x 0.6 cm hypoechoic "
    "mass, probably benign may represent a debris-filled cyst and corresponding to the "
    'previous mass annotated at the "left nipple posterior" location on exam dated '
    "MM/DD/YYYY. No other suspicious cystic or solid masses identified in either breast."
)

WORKED_IMPRESSION = (
    "PROBABLY BENIGN - FOLLOW-UP RECOMMENDED Left 6:00 retroareolar 0.6 cm hypoechoic "
    "mass, probably benign cyst with debris. Recommend follow-up ultrasound in 6 months "
    "to assess stability. I personally discussed the findings and recommendations with "
    "the patient."
)

WORKED_OUTPUT_BLOCK = """[{
"location": {
"side_of_breast": "right",
"clock_position": "9",
"distance_from_nipple": "1"
},
"depth": "N/A",
"anatomical_region": "N/A",
"type": "cyst",
"shape": "N/A",
"orientation": "N/A",
"margin": "N/A",
"echogenicity": "N/A",
"calcifications": "N/A",
"vascularity": "N/A",
"posterior_features": "N/A",
"suspicion": "N/A",
"subtype": "N/A",
"next_step": "N/A"
},
{
"location": {
"side_of_breast": "left",
"clock_position": "6",
"distance_from_nipple": "N/A"
},
"depth": "N/A",
"anatomical_region": "retroareolar",
"type": "mass",
"shape": "N/A",
"orientation": "N/A",
"margin": "N/A",
"echogenicity": "hypoechoic",
"calcifications": "N/A",
"vascularity": "N/A",
"posterior_features": "N/A",
"suspicion": "probably benign",
"subtype": "cyst with debris",
"next_step": "follow-up ultrasound in 6 months"
}]"""

WORKED_RECORD_1 = make_record(
    side_of_breast="right",
    clock_position="9",
    distance_from_nipple="1",
    lesion_type="cyst",
)

WORKED_RECORD_2 = make_record(
    side_of_breast="left",
    clock_position="6",
    anatomical_region="retroareolar",
    lesion_type="mass",
    echogenicity="hypoechoic",
    suspicion_of_malignancy="probably benign",
    lesion_subtype="cyst with debris",
    next_step="follow-up ultrasound in 6 months",
)

# Error case 1: prediction misses one of two lesions.
MISSING_LESION_REPORT = """Observation: The study demonstrates heterogeneous background echotexture. Again noted is an area of postsurgical distortion with a 9 x 9 x 4 mm seroma in the upper outer left breast. There is a 3 x 2 mm cyst in the left breast 3:00 N9 location. No suspicious abnormalities were seen sonographically in the left.

Impression: No Impression
"""

MISSING_LESION_PRED = [
    make_record(
        side_of_breast="left",
        clock_position="3",
        distance_from_nipple="9",
        lesion_type="cyst",
    ),
]

MISSING_LESION_TRUTH = [
    make_record(side_of_breast="left", lesion_type="seroma"),
    make_record(
        side_of_breast="left",
        clock_position="3",
        distance_from_nipple="9",
        lesion_type="cyst",
    ),
]

# Error case 2: impression attributes attached to the wrong lesion.
CONFUSION_PRED = [
    make_record(
        side_of_breast="right",
        clock_position="12",
        lesion_type="mass",
        next_step="6 month follow-up",
    ),
    make_record(
        side_of_breast="right",
        clock_position="1",
        lesion_type="mass",
        next_step="6 month follow-up",
    ),
]

CONFUSION_TRUTH = [
    make_record(
        side_of_breast="right",
        clock_position="12",
        lesion_type="mass",
        suspicion_of_malignancy="probably benign",
        next_step="6 month follow-up",
    ),
    make_record(
        side_of_breast="right",
        clock_position="1",
        lesion_type="mass",
        suspicion_of_malignancy="probably benign",
        next_step="12 month follow-up",
    ),
]
