"""Offline rule-based answers for every prompt schema the package issues.

The heuristic backend lets the whole pipeline run without a language model.
It reads the structured sections of each user prompt back out (hints, entity
listings, subgraph JSON) and answers with the same JSON shapes a model would
return. The answers are deterministic, so recorded fixtures stay stable.
"""

from __future__ import annotations

import json
import re

from .equations.latex import Node, free_symbols, parse_latex, render, render_symbol
from .errors import ParseError
from .extraction.hints import snake
from .extraction.prompts import read_chunk_id, read_json_section, read_section

PHENOMENA = [
    "oxygen inhibition", "light scattering", "photopolymerization", "polymerization shrinkage",
    "light attenuation", "heat conduction", "marangoni convection", "keyhole formation", "balling",
    "spatter", "lack of fusion", "thermal gradient", "gelation", "photobleaching",
]
POSITIVE = r"increases?|increased|raises?|rises?|grows?|improves?|enhances?|lengthens?|deepens?"
NEGATIVE = r"decreases?|decreased|reduces?|reduced|lowers?|drops?|falls?|declines?|shortens?|limits?"
FLIP = re.compile(r"\b(?:decreasing|reducing|lowering|lower|less|smaller)\s+$")
DERIVED = re.compile(r"\b(?:derived from|follows from|obtained from|substituting)\b", re.I)


def _sentences(text):
    prose = re.sub(r"\$\$.+?\$\$|\\\[.+?\\\]", "\n\n", text, flags=re.S).replace("$", "")
    parts = re.split(r"(?<=[.!?])\s+|\n\s*\n", prose)
    return [" ".join(p.split()) for p in parts if p.strip()]


def _clauses(sentence):
    return [c for c in re.split(r",|;|\s(?:and|while|but|whereas)\s", sentence) if c.strip()]


def _first_sentence_with(phrase, sentences, limit=160):
    pat = re.compile(rf"(?<![\w-]){re.escape(phrase)}(?![\w-])", re.I)
    for s in sentences:
        if pat.search(s):
            return s if len(s) <= limit else s[:limit - 3].rsplit(" ", 1)[0] + "..."
    return ""


# -- entities ----------------------------------------------------------------

def _equation_records(hints, text, taken):
    out = []
    for eq in hints.get("equations") or []:
        variables = eq.get("variables") or []
        outputs = [v for v in variables if v.get("role") == "output"]
        # an equation without a single output symbol is still reported; the rule checks drop it
        head = outputs[0] if outputs else (variables[0] if variables else None)
        if head is None:
            continue
        label = head.get("description") or snake(head["symbol"])
        name = base = "equation_" + snake(label)
        n = 2
        while name in taken:
            name, n = f"{base}_{n}", n + 1
        taken.add(name)
        inputs = [v.get("description") or v["symbol"] for v in variables if v.get("role") == "input"]
        desc = f"Gives {label} in terms of {' and '.join(inputs)}" if inputs else f"Gives {label}"
        out.append({
            "name": name, "type": "Equation", "latex": eq["latex"], "description": desc,
            "variables": [{"symbol": v["symbol"], "role": v.get("role"),
                           "description": v.get("description") or ""} for v in variables],
        })
    return out


def entities(system, user):
    hints = read_json_section(user, "ONTOLOGY HINTS") or {}
    chunk_id = read_chunk_id(user)
    text = read_section(user, "CHUNK")
    sentences = _sentences(text)
    records = []

    def add(name, kind, description="", unit=None):
        records.append({"name": name, "type": kind, "description": description, "unit": unit,
                        "evidence": chunk_id})

    for name in hints.get("process_parameters") or []:
        add(name, "ProcessParameter", _first_sentence_with(name.replace("_", " "), sentences))
    for name in hints.get("performance_metrics") or []:
        add(name, "Performance", _first_sentence_with(name.replace("_", " "), sentences))
    for a in hints.get("assumptions") or []:
        add(a["name"], "Assumption", a.get("statement", ""))
    for r in hints.get("regimes") or []:
        add(r, "Regime", "Operating window stated in the text")
    for m in hints.get("materials") or []:
        add(m, "Material", _first_sentence_with(m.replace("_", " "), sentences))
    low = text.lower()
    for p in PHENOMENA:
        if re.search(rf"(?<![\w-]){re.escape(p)}(?![\w-])", low):
            add(snake(p), "Phenomenon", _first_sentence_with(p, sentences))
    taken = {r["name"] for r in records}
    for rec in _equation_records(hints, text, taken):
        rec["evidence"] = chunk_id
        records.append(rec)
    return json.dumps(records, ensure_ascii=False)


# -- relations ---------------------------------------------------------------

def _mentions(sentence, entries):
    """``[(start, end, entry)]`` for entity phrases found in ``sentence``."""
    low = sentence.lower()
    hits = []
    for e in entries:
        phrase = e["name"].replace("_", " ")
        for m in re.finditer(rf"(?<![\w-]){re.escape(phrase)}(?![\w-])", low):
            hits.append((m.start(), m.end(), e))
    # keep the longest match at each position
    hits.sort(key=lambda h: (h[0], -(h[1] - h[0])))
    out, last_end = [], -1
    for h in hits:
        if h[0] >= last_end:
            out.append(h)
            last_end = h[1]
    return out


def _influences(sentence, sources, targets):
    """Signed (source, target) pairs stated in one clause."""
    low = sentence.lower()
    out = []
    for vm in re.finditer(rf"\b(?:(?P<pos>{POSITIVE})|(?P<neg>{NEGATIVE}))\b", low):
        sign = 1 if vm.group("pos") else -1
        before = [h for h in _mentions(sentence, sources + targets) if h[1] <= vm.start()]
        after = [h for h in _mentions(sentence, sources + targets) if h[0] >= vm.end()]
        tail = low[vm.end():]
        if re.match(r"\s+(?:with|as)\b", tail):
            # "Y decreases with increasing X": the cause follows the verb
            subj = [h for h in after if h[2] in sources]
            obj = [h for h in reversed(before) if h[2] in targets]
        else:
            subj = [h for h in reversed(before) if h[2] in sources]
            obj = [h for h in after if h[2] in targets]
        if not subj or not obj:
            continue
        s, o = subj[0], obj[0]
        if s[2] is o[2]:
            continue
        if FLIP.search(low[:s[0]]):
            sign = -sign
        out.append((s[2]["name"], o[2]["name"], sign))
    return out


def _corresponds(var, others):
    desc = snake(var.get("description") or "")
    if not desc:
        return None
    for e in others:
        if desc == e["name"] or desc.endswith("_" + e["name"]):
            return e["name"]
    return None


def relations(system, user):
    listing = read_json_section(user, "ENTITIES") or []
    text = read_section(user, "CHUNK")
    chunk_id = read_chunk_id(user)
    by_kind = {}
    for e in listing:
        by_kind.setdefault(e["type"], []).append(e)
    eqs = by_kind.get("Equation", [])
    variables = by_kind.get("Variable", [])
    symbol_to_name = {v.get("symbol") or v["name"]: v["name"] for v in variables}
    out = []

    def rel(s, p, o, sign=None):
        item = {"subject": s, "predicate": p, "object": o, "evidence": chunk_id}
        if sign is not None:
            item["sign"] = sign
        if item not in out:
            out.append(item)

    for eq in eqs:
        try:
            parsed = parse_latex(eq["latex"])
        except (ParseError, KeyError):
            continue
        if parsed.target in symbol_to_name:
            rel(eq["name"], "has_output", symbol_to_name[parsed.target])
        for sym in free_symbols(parsed.rhs)[0]:
            if sym in symbol_to_name:
                rel(eq["name"], "has_input", symbol_to_name[sym])
        for a in by_kind.get("Assumption", []):
            rel(eq["name"], "requires_assumption", a["name"])
        for r in by_kind.get("Regime", []):
            rel(eq["name"], "valid_in_regime", r["name"])
        for m in by_kind.get("Material", []):
            rel(eq["name"], "uses_material", m["name"])
    if len(eqs) > 1 and DERIVED.search(text):
        for later, earlier in zip(eqs[1:], eqs[:-1]):
            rel(later["name"], "derived_from", earlier["name"])

    measurable = by_kind.get("ProcessParameter", []) + by_kind.get("Performance", [])
    for v in variables:
        partner = _corresponds(v, measurable)
        if partner:
            rel(v["name"], "corresponds_to", partner)
    for pp in by_kind.get("ProcessParameter", []):
        for r in by_kind.get("Regime", []):
            if r["name"].startswith(pp["name"] + "_"):
                rel(pp["name"], "valid_in_regime", r["name"])

    sources = by_kind.get("ProcessParameter", []) + by_kind.get("Material", []) + by_kind.get("Phenomenon", [])
    targets = by_kind.get("Performance", []) + by_kind.get("Phenomenon", [])
    for clause in (c for sentence in _sentences(text) for c in _clauses(sentence)):
        for s, o, sign in _influences(clause, sources, targets):
            rel(s, "influences", o, sign)
    return json.dumps(out, ensure_ascii=False)


# -- cluster summaries ---------------------------------------------------------

_KIND_WORDS = {
    "Equation": "equations", "Variable": "variables", "Assumption": "assumptions",
    "ProcessParameter": "process parameters", "Performance": "performance measures",
    "Regime": "operating regimes", "Material": "materials", "Phenomenon": "phenomena",
}


def _member_label(kind, name, rest):
    """Readable label: a Variable by its description, anything else by its name."""
    if kind == "Variable" and rest:
        return rest.split(":")[-1].split(" | ")[0].strip()
    return name.replace("_", " ")


def cluster_summary(system, user):
    body = read_section(user, "CLUSTER MEMBERS")
    members, children = [], []
    for line in body.splitlines():
        line = line.strip()
        mc = re.match(r"-\s+Cluster\s+\S+:\s+(.*)", line)
        if mc:
            children.append(mc.group(1).rstrip("."))
            continue
        m = re.match(r"-\s+(\w+)\s+([^\s:(]+)(.*)", line)
        if m:
            members.append((m.group(1), m.group(2), m.group(3)))
    if children:
        theme = children[0][0].lower() + children[0][1:]
        if len(children) == 1:
            text = f"Carries forward one cluster: {theme}."
        else:
            text = f"Combines {len(children)} clusters; the leading theme: {theme}."
        return json.dumps({"summary": text})
    if not members:
        return json.dumps({"summary": ""})
    counts = {}
    for kind, _, _ in members:
        counts[kind] = counts.get(kind, 0) + 1
    main = max(sorted(counts), key=lambda k: counts[k])
    eq = next((n for k, n, _ in members if k == "Equation"), None)
    labels = [_member_label(k, n, r) for k, n, r in members if k != "Equation"]
    labels = [x for x in labels if x][:2]
    if eq:
        tail = f", including {' and '.join(labels)}" if labels else ""
        text = f"Built around {eq.replace('_', ' ')} and the quantities it links{tail}."
    else:
        text = f"Mostly {_KIND_WORDS.get(main, main.lower())}, such as {' and '.join(labels)}."
    return json.dumps({"summary": text})


# -- candidate equations -------------------------------------------------------

def _reparameterize(node: Node, keep):
    """Rename every symbol outside ``keep`` to k_1, k_2, ... in first-appearance order."""
    mapping = {}

    def walk(n):
        if n.op in ("var", "param") and n.value not in keep:
            if n.value not in mapping:
                mapping[n.value] = f"k_{len(mapping) + 1}"
            return Node.param(mapping[n.value])
        if not n.args:
            return n
        return Node(n.op, tuple(walk(a) for a in n.args), n.value)

    return walk(node)


def _templates(target, inputs):
    y = render_symbol(target)
    xs = [render_symbol(x) for x in inputs]
    if len(xs) == 1:
        x = xs[0]
        return [
            f"{y} = k_1 \\ln({x} / k_2)",
            f"{y} = k_1 \\frac{{{x}}}{{k_2 + {x}}}",
            f"{y} = k_1 \\exp(-k_2 / {x})",
            f"{y} = k_1 {x} + k_2",
            f"{y} = k_1 {x}^{{k_2}}",
        ]
    power = " ".join(f"{x}^{{k_{i + 2}}}" for i, x in enumerate(xs))
    linear = " + ".join(f"k_{i + 2} {x}" for i, x in enumerate(xs))
    ratio = f"\\frac{{{xs[0]}}}{{{' '.join(xs[1:])}}}"
    return [
        f"{y} = k_1 {power}",
        f"{y} = k_1 + {linear}",
        f"{y} = k_1 \\ln({ratio} / k_2)",
    ]


def equation_candidates(system, user):
    target = read_section(user, "TARGET").strip()
    inputs = [x.strip() for x in read_section(user, "INPUTS").split(",") if x.strip()]
    try:
        count = int(read_section(user, "COUNT"))
    except ValueError:
        count = 3
    subgraph = read_json_section(user, "SUBGRAPH") or {}
    roles = subgraph.get("roles", {})
    rank = {"target": 0, "input_related": 1, "supporting": 2}
    eqs = [e for e in subgraph.get("entities", []) if e.get("kind") == "Equation" and e.get("latex")]
    eqs.sort(key=lambda e: (rank.get(roles.get(e["uri"]), 3), e["uri"]))
    out = []
    for e in eqs:
        try:
            parsed = parse_latex(e["latex"])
        except ParseError:
            continue
        if parsed.target != target or not set(inputs) <= set(free_symbols(parsed.rhs)[0]):
            continue
        rhs = _reparameterize(parsed.rhs, set(inputs))
        out.append(f"{render_symbol(target)} = {render(rhs)}")
    out.extend(_templates(target, inputs))
    unique = []
    for latex in out:
        key = render(parse_latex(latex).rhs)
        if key not in [render(parse_latex(u).rhs) for u in unique]:
            unique.append(latex)
    return json.dumps({"candidates": [{"latex": c} for c in unique[:count]]}, ensure_ascii=False)


HANDLERS = {
    "entities": entities,
    "relations": relations,
    "cluster_summary": cluster_summary,
    "equation_candidates": equation_candidates,
}
