"""System prompts for LLM label extraction."""

from __future__ import annotations

from .schemas import VISUAL_11, LabelSchema

# Reference example rows; shorter schemas use a prefix, longer ones cycle.
_DIAGNOSTIC_EXAMPLE = (
    0, 1, -1, -1, 1, -1, -1, -1, -1, -1, 0, 0, 0, 0, 1,
    0, 0, 0, -1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0,
)
_BINARY_EXAMPLE = (0, 1, 0, 0, 0, 1, 0, 1, 0, 0, 0)

_NUMBER_WORDS = (
    "zero one two three four five six seven eight nine ten eleven twelve "
    "thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty"
).split()

DIAGNOSTIC_TEMPLATE = """\
You are a board-certified radiologist specializing in thoracic imaging.

Task
Classify the chest/abdomen CT report for the following {arity} findings,
in the exact order listed:
{category_list}

Labeling rules
- Output a single line of {arity} comma-separated values.
- Use 1 if the finding is explicitly present.
- Use 0 if the finding is explicitly ruled out or absent.
- Use -1 if the report is ambiguous, uncertain, or lacks information.

Only return the comma-separated numbers.
Example:
{example}"""

# Published verbatim, including the line wrapping and trailing blanks.
VISUAL_11_PROMPT = "\n".join([
    'You are an experienced chest radiologist. Review each non-contrast ',
    'chest CT report and determine whether the following visual patterns ',
    'are explicitly described. If a pattern is clearly present, output 1; ',
    'if it is not mentioned or the description is inconclusive, output 0. ',
    'Multiple patterns can be present simultaneously.',
    '',
    'Visual patterns to evaluate (binary flags in this exact order):',
    '- Density patterns -',
    '1. High-attenuation focus (density_high)',
    '2. Low-attenuation focus (density_low)',
    '3. Mixed-attenuation focus (density_mixed)',
    '',
    '- Morphology patterns -',
    '4. Nodular opacity (morphology_nodular)',
    '5. Patchy opacity (morphology_patchy)',
    '6. Linear/stripe-like opacity (morphology_linear)',
    '7. Reticular/network-like opacity (morphology_reticular)',
    '',
    '- Distribution patterns -',
    '8. Focal distribution (distribution_focal)',
    '9. Diffuse distribution (distribution_diffuse)',
    '10. Bilateral symmetric distribution ',
    '    (distribution_bilateral_symmetric)',
    '11. Unilateral distribution (distribution_unilateral)',
    '',
    'Output format: exactly eleven comma-separated binary digits ',
    '(0 or 1) matching the order above, with no additional text ',
    'or punctuation. ',
    'Example: 0,1,0,0,0,1,0,1,0,0,0',
])

VISUAL_TEMPLATE = """\
You are an experienced chest radiologist. Review each non-contrast chest CT report and determine whether the following visual patterns are explicitly described. If a pattern is clearly present, output 1; if it is not mentioned or the description is inconclusive, output 0. Multiple patterns can be present simultaneously.

Visual patterns to evaluate (binary flags in this exact order):
{category_list}

Output format: exactly {arity_words} comma-separated binary digits (0 or 1) matching the order above, with no additional text or punctuation.
Example: {example}"""


def number_word(n: int) -> str:
    return _NUMBER_WORDS[n] if 0 <= n < len(_NUMBER_WORDS) else str(n)


def example_line(schema: LabelSchema) -> str:
    base = _BINARY_EXAMPLE if schema.kind == "visual" else _DIAGNOSTIC_EXAMPLE
    return ",".join(str(base[i % len(base)]) for i in range(schema.arity))


def _visual_items(schema: LabelSchema) -> str:
    names = schema.descriptions or schema.categories
    items = [
        f"{i + 1}. {desc} ({key})" if schema.descriptions else f"{i + 1}. {key}"
        for i, (desc, key) in enumerate(zip(names, schema.categories))
    ]
    if not schema.groups:
        return "\n".join(items)
    blocks, start = [], 0
    for title, count in schema.groups:
        blocks.append("\n".join([f"- {title} -"] + items[start:start + count]))
        start += count
    return "\n\n".join(blocks)


def system_prompt(schema: LabelSchema) -> str:
    if schema == VISUAL_11:
        return VISUAL_11_PROMPT
    if schema.kind == "visual":
        return VISUAL_TEMPLATE.format(
            category_list=_visual_items(schema),
            arity_words=number_word(schema.arity),
            example=example_line(schema),
        )
    return DIAGNOSTIC_TEMPLATE.format(
        arity=schema.arity,
        category_list="\n".join(f"{i + 1}. {c}" for i, c in enumerate(schema.categories)),
        example=example_line(schema),
    )


def build_extraction_prompt(schema: LabelSchema, report: str) -> str:
    """System prompt followed by the report, separated by a blank line."""
    return f"{system_prompt(schema)}\n\n{report}"
