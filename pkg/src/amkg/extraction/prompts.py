"""Prompt templates for the two extraction stages.

User prompts are made of ``### HEADING`` sections; structured payloads sit in
fenced ``json`` blocks so both a language model and the offline heuristic
responder can read them back with :func:`read_section`.
"""

from __future__ import annotations

import json
import re

from ..ontology import EntityKind, RelationKind

ENTITY_SCHEMA = "entities"
RELATION_SCHEMA = "relations"

ENTITY_SYSTEM = """You are an expert in knowledge-graph construction for additive manufacturing.
Extract entities from the text chunk strictly according to the ontology below. Include only
entities that the text explicitly supports; the hints are suggestions to verify, not facts.

Entity types and naming rules:
- ProcessParameter: controllable process settings (e.g. laser_power, scan_speed). snake_case.
- Performance: measurable outcomes (e.g. tensile_strength, surface_roughness). snake_case.
- Variable: a symbol used in an equation (e.g. P, v, E, C_d). Give the LaTeX symbol as "name".
- Equation: descriptive identifier (e.g. equation_energy_density) with the complete LaTeX in
  "latex" and a "variables" list of {"symbol", "role"} with role input|output|constant|unknown.
- Assumption: physical or experimental assumptions (e.g. steady_state, isothermal). snake_case.
- Regime: parameter range or operating window, formatted parameter_min_max_unit
  (e.g. laser_power_100_300_W).
- Material: materials used or studied (e.g. ti_6al_4v, acrylate_resin). snake_case.
- Phenomenon: physical mechanisms (e.g. oxygen_inhibition, light_scattering). snake_case.

Return a JSON array. Each element has "name", "type", "description" (one short sentence),
"unit" (or null), "evidence" (the chunk id) and, for equations, "latex" and "variables"."""

RELATION_SYSTEM = """You are an expert in knowledge-graph construction for additive manufacturing.
Given a fixed list of validated entities and the source text, extract relations between them.
Use only entity names from the list and only these predicates:
- has_input (Equation -> Variable), has_output (Equation -> Variable)
- influences (ProcessParameter|Variable|Material|Phenomenon -> Performance|Variable|Phenomenon),
  which must carry "sign": +1 (increases), -1 (decreases) or 0 (no net effect)
- requires_assumption (Equation -> Assumption)
- valid_in_regime (Equation|ProcessParameter -> Regime)
- corresponds_to (Variable -> ProcessParameter|Performance)
- uses_material (Equation|ProcessParameter -> Material)
- derived_from (Equation -> Equation)
Return a JSON array of {"subject", "predicate", "object", "sign", "evidence"} objects.
Do not invent entities. Omit relations the text does not support."""

FEW_SHOT = [
    {
        "text": "Cured thickness in stereolithography rises with the logarithm of the dose: "
                "the cure depth C_d follows $C_d = D_p \\ln(E/E_c)$, where E is the exposure energy "
                "and D_p and E_c are constants of the resin.",
        "hints": {
            "process_parameters": ["exposure_energy"],
            "performance_metrics": ["cure_depth"],
            "equations": [{"latex": "C_d = D_p \\ln(E/E_c)"}],
            "assumptions": [{"name": "steady_state"}],
        },
        "output": [
            {"name": "exposure_energy", "type": "ProcessParameter",
             "description": "Light energy delivered per unit area during exposure", "unit": "mJ/cm^2",
             "evidence": "chunk_example01"},
            {"name": "cure_depth", "type": "Performance",
             "description": "Thickness of resin solidified by one exposure", "unit": "mm",
             "evidence": "chunk_example01"},
            {"name": "equation_cure_depth", "type": "Equation", "latex": "C_d = D_p \\ln(E/E_c)",
             "description": "Logarithmic working curve for cure depth",
             "variables": [{"symbol": "C_d", "role": "output"}, {"symbol": "E", "role": "input"},
                           {"symbol": "D_p", "role": "constant"}, {"symbol": "E_c", "role": "constant"}],
             "evidence": "chunk_example01"},
        ],
    },
    {
        "text": "For laser powder bed fusion of Ti-6Al-4V the volumetric energy density is "
                "$E_v = P/(v h t)$ with laser power P, scan speed v, hatch spacing h and layer thickness t; "
                "porosity drops as E_v increases within 40-120 J/mm^3.",
        "hints": {
            "process_parameters": ["laser_power", "scan_speed", "hatch_spacing", "layer_thickness"],
            "performance_metrics": ["porosity"],
            "regimes": ["energy_density_40_120_J_per_mm_3"],
            "materials": ["ti_6al_4v"],
        },
        "output": [
            {"name": "laser_power", "type": "ProcessParameter", "description": "Nominal laser power",
             "unit": "W", "evidence": "chunk_example02"},
            {"name": "equation_energy_density", "type": "Equation", "latex": "E_v = P/(v h t)",
             "description": "Volumetric energy density of the scan",
             "variables": [{"symbol": "E_v", "role": "output"}, {"symbol": "P", "role": "input"},
                           {"symbol": "v", "role": "input"}, {"symbol": "h", "role": "input"},
                           {"symbol": "t", "role": "input"}],
             "evidence": "chunk_example02"},
            {"name": "porosity", "type": "Performance", "description": "Volume fraction of pores",
             "unit": "%", "evidence": "chunk_example02"},
            {"name": "energy_density_40_120_J_per_mm_3", "type": "Regime",
             "description": "Energy density window studied", "unit": "J/mm^3", "evidence": "chunk_example02"},
            {"name": "ti_6al_4v", "type": "Material", "description": "Titanium alloy powder",
             "unit": None, "evidence": "chunk_example02"},
        ],
    },
]


def fenced(payload) -> str:
    return "```json\n" + json.dumps(payload, indent=1, ensure_ascii=False, sort_keys=True) + "\n```"


def entity_user_prompt(chunk, hints) -> str:
    examples = []
    for i, ex in enumerate(FEW_SHOT, 1):
        examples.append(
            f"Example {i} text:\n{ex['text']}\n\nExample {i} hints:\n{fenced(ex['hints'])}\n\n"
            f"Example {i} output:\n{fenced(ex['output'])}"
        )
    return (
        "### ONTOLOGY HINTS\n" + fenced(hints.to_dict()) + "\n\n"
        "### EXAMPLES\n" + "\n\n".join(examples) + "\n\n"
        f"### CHUNK {chunk.id}\n" + chunk.text + "\n\n"
        "### TASK\nReturn the JSON array of entities for this chunk."
    )


def relation_user_prompt(chunk, entities) -> str:
    listing = []
    for e in entities:
        item = {"name": e.name, "type": e.kind.value}
        if e.symbol:
            item["symbol"] = e.symbol
        if e.latex:
            item["latex"] = e.latex
        if e.description:
            item["description"] = e.description
        listing.append(item)
    return (
        "### ENTITIES\n" + fenced(listing) + "\n\n"
        f"### CHUNK {chunk.id}\n" + chunk.text + "\n\n"
        "### TASK\nReturn the JSON array of relations among the listed entities."
    )


def read_section(prompt: str, heading: str) -> str:
    """Body of ``### heading`` (prefix match) up to the next ``### `` heading."""
    m = re.search(rf"^### {re.escape(heading)}[^\n]*\n(.*?)(?=^### |\Z)", prompt, re.S | re.M)
    return m.group(1).strip() if m else ""


def read_json_section(prompt: str, heading: str):
    body = read_section(prompt, heading)
    m = re.search(r"```json\n(.*?)\n```", body, re.S)
    return json.loads(m.group(1)) if m else None


def read_chunk_id(prompt: str) -> str:
    m = re.search(r"^### CHUNK (\S+)", prompt, re.M)
    return m.group(1) if m else ""


def parse_json_payload(raw: str):
    """Decode a JSON value from a model reply, tolerating code fences and chatter."""
    text = raw.strip()
    m = re.search(r"```(?:json)?\s*\n(.*?)```", text, re.S)
    if m:
        text = m.group(1).strip()
    try:
        return json.loads(text)
    except ValueError:
        pass
    starts = [i for i in (text.find("["), text.find("{")) if i >= 0]
    if not starts:
        raise ValueError("no JSON value in response")
    start = min(starts)
    closer = "]" if text[start] == "[" else "}"
    end = text.rfind(closer)
    if end <= start:
        raise ValueError("unterminated JSON value")
    return json.loads(text[start:end + 1])


ENTITY_KINDS = [k.value for k in EntityKind]
RELATION_KINDS = [k.value for k in RelationKind]
