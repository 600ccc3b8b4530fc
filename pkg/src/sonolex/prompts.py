"""Prompt construction: the few-shot labeling prompt and the compact
instruction used for fine-tuning and inference.

The labeling prompt renders, in order: a key-definition preamble, an example
template, the worked examples, an instruction list, nine additional points,
and the report's sections. The fine-tune instruction is a fixed, versioned
zero-shot variant; training and inference must share it, so it lives here as
a single constant.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .schema import (
    NA,
    ALL_KEYS,
    VOCABULARIES,
    AttributeKey,
    LesionRecord,
    ReportDocument,
    record_to_mapping,
)

INSTRUCTION_TEMPLATE_VERSION = "1"

_KEY_HINTS = {
    AttributeKey.DEPTH: "the depth of the lesion",
    AttributeKey.ANATOMICAL_REGION: "anatomical region of the breast",
    AttributeKey.LESION_TYPE: "type of lesion named in the observation",
    AttributeKey.LESION_SHAPE: "shape of the lesion",
    AttributeKey.ORIENTATION: "orientation of the lesion",
    AttributeKey.LESION_MARGINS: "margin characteristics",
    AttributeKey.ECHOGENICITY: "echogenicity of the lesion",
    AttributeKey.CALCIFICATIONS: "presence of calcifications",
    AttributeKey.VASCULARITY: "condition of vascularity",
    AttributeKey.POSTERIOR_FEATURES: "features of the tissue behind the lesion",
    AttributeKey.LESION_SUBTYPE: "the diagnosis given in the impression",
    AttributeKey.NEXT_STEP: "the recommended next step from the impression",
    AttributeKey.SUSPICION: "the suspicion of malignancy stated in the impression",
}


def _values_hint(key: AttributeKey) -> str:
    values = [v for v in VOCABULARIES[key].allowed_values if v != NA]
    return ", ".join(values + ["N/A"])


def _key_definitions() -> str:
    lines = [
        '- location: nested object with "side_of_breast" (left, right, N/A), '
        '"clock_position" (1-12, N/A), and "distance_from_nipple" '
        "(numeric value in cm)"
    ]
    for key in ALL_KEYS:
        if key.in_location:
            continue
        lines.append(f"- {key.json_field}: {_KEY_HINTS[key]} (e.g., {_values_hint(key)})")
    return "\n".join(lines)


def _output_skeleton() -> str:
    placeholder = {name: "content" for name in ("side_of_breast", "clock_position", "distance_from_nipple")}
    record = record_to_mapping(LesionRecord())
    skeleton = {"location": placeholder}
    skeleton.update({name: "content" for name in record if name != "location"})
    return json.dumps([skeleton], indent=2)


def serialize_records(records: list[LesionRecord] | tuple[LesionRecord, ...], indent: int | None = 2) -> str:
    """Render a lesion list in the serialized record layout."""
    return json.dumps([record_to_mapping(r) for r in records], indent=indent)


PREAMBLE = (
    'You are given a breast ultrasound imaging report with "Observation" and '
    '"Impression" sections. Extract the essential information from these '
    "sections into a list of JSON dictionaries, one dictionary per lesion. "
    "Each dictionary must contain the following keys:\n\n"
    + _key_definitions()
)

EXAMPLE_TEMPLATE = (
    "### Template of Example:\n\n"
    "#### Input Report:\n\n---\n\n"
    "#### Observation:\n[Observation text]\n\n"
    "#### Impression:\n[Impression text]\n\n---\n\n"
    "#### Expected output format:\n```\n" + _output_skeleton() + "\n```"
)

INSTRUCTIONS = (
    "1. Use the provided examples to understand the format.",
    '2. Extract the relevant information from the given "Observation" and "Impression" sections.',
    "3. Construct the JSON output with the extracted information.",
)

ADDITIONAL_POINTS = (
    "1. If the report describes two or more distinct lesions, generate one JSON object per lesion.",
    '2. If the information for a key is not found in the report, leave it as "N/A".',
    "3. The key explanations above may not exhaust all the classes; add new classes as needed when the report contains them.",
    '4. If the "Impression" section is not found, leave the "subtype", "suspicion", and "next_step" fields as "N/A".',
    "5. The output should be a list of python dictionary.",
    "6. If the report does not explicitly mention the presence of calcification, leave it as N/A.",
    "7. If the report does not explicitly mention the type of the lesion, leave it as N/A.",
    '8. The "distance_from_nipple" within the "location" key should always be a numerical value and should not be '
    "confused with the depth field; it must never contain terms like 'anterior', 'middle', or 'posterior'.",
    "9. If the report indicates a prior lesion has not recurred, do not generate the JSON for that lesion.",
)


@dataclass(frozen=True)
class FewShotExample:
    """One worked report with its expected lesion list."""

    observation: str
    impression: str
    expected_output: tuple[LesionRecord, ...]


@dataclass(frozen=True)
class PromptTemplate:
    """The fixed blocks of the labeling prompt, in rendering order."""

    preamble: str = PREAMBLE
    example_template: str = EXAMPLE_TEMPLATE
    instruction_block: tuple[str, ...] = INSTRUCTIONS
    additional_points: tuple[str, ...] = ADDITIONAL_POINTS
    input_header: str = "# The input is as follows:"


DEFAULT_TEMPLATE = PromptTemplate()


def _input_block(observation: str, impression: str | None) -> str:
    return (
        "#### Input Report:\n\n---\n\n"
        f"#### Observation:\n{observation}\n\n"
        f"#### Impression:\n{impression or ''}\n\n---"
    )


def _example_block(index: int, example: FewShotExample) -> str:
    return (
        f"### Example {index}\n\n"
        + _input_block(example.observation, example.impression)
        + "\n\n#### Expected output format:\n```\n"
        + serialize_records(example.expected_output)
        + "\n```"
    )


def build_label_prompt(
    examples: list[FewShotExample] | tuple[FewShotExample, ...],
    report: ReportDocument,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> str:
    """Assemble the few-shot labeling prompt for one report."""
    blocks = [template.preamble, template.example_template]
    if examples:
        blocks.append("### Examples")
        for i, example in enumerate(examples, start=1):
            blocks.append(_example_block(i, example))
    blocks.append("## Instructions\n" + "\n".join(template.instruction_block))
    blocks.append(
        "## Additional Points to consider:\n\n" + "\n".join(template.additional_points)
    )
    blocks.append(template.input_header + "\n\n" + _input_block(report.observation, report.impression))
    return "\n\n".join(blocks) + "\n"


FINETUNE_INSTRUCTION = (
    'Extract every distinct lesion from the "Observation" and "Impression" '
    "sections of the breast ultrasound report below into a list of JSON "
    "dictionaries, one dictionary per lesion. Each dictionary must contain "
    "the following keys:\n\n"
    + _key_definitions()
    + '\n\nUse "N/A" for any key whose value is not stated in the report. '
    "Respond with the JSON list only."
)


def finetune_instruction_text() -> str:
    """The fixed instruction prefix shared by training and inference."""
    return FINETUNE_INSTRUCTION


def render_input_block(report: ReportDocument) -> str:
    """The report's sections formatted as the prompt input block."""
    return _input_block(report.observation, report.impression)


def build_finetune_instruction(
    report: ReportDocument, instruction: str | None = None
) -> str:
    """Zero-shot task instruction plus the report sections; the instruction
    prefix is identical for every report."""
    prefix = instruction if instruction is not None else FINETUNE_INSTRUCTION
    return prefix + "\n\n" + render_input_block(report) + "\n"


_INPUT_SCAN = re.compile(
    r"#### Observation:\n(.*?)\n\n#### Impression:\n(.*?)\n\n---\s*$",
    re.DOTALL,
)


def scan_input_block(prompt: str) -> tuple[str, str]:
    """Recover (observation, impression) from a rendered prompt's final
    input block. The impression comes back as "" when it was absent."""
    # Earlier blocks (template, examples) reuse the same section markers, so
    # scan only the text after the input header.
    start = prompt.rfind(DEFAULT_TEMPLATE.input_header)
    match = _INPUT_SCAN.search(prompt, start if start >= 0 else 0)
    if match is None:
        raise ValueError("prompt has no trailing input block")
    return match.group(1), match.group(2)
