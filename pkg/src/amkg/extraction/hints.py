"""Rule-based, ontology-aligned hints attached to each chunk before extraction.

Hints are weak priors for the extraction prompt: equation variables with a
tentative role (output for the left-hand side, input or constant on the
right), lexicon matches for process parameters, performance metrics and
materials, assumption statements, and numeric ranges formatted as
``parameter_min_max_unit``. Nothing here is written to the graph.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field

from ..equations.latex import extract_symbols, free_symbols, parse_latex
from ..errors import ParseError
from .chunking import RegexTokenizer

HINT_TOKEN_CAP = 2000

PROCESS_PARAMETERS = [
    "exposure energy", "radiant exposure", "exposure time", "uv exposure time", "light intensity",
    "irradiance", "laser power", "scan speed", "scanning speed", "hatch spacing", "layer thickness",
    "wavelength", "print speed", "printing speed", "nozzle temperature", "bed temperature",
    "build temperature", "photoinitiator concentration", "absorber concentration", "energy density",
    "spot size", "beam diameter", "powder layer thickness", "preheat temperature", "feed rate",
]
PERFORMANCE_METRICS = [
    "cure depth", "cure width", "tensile strength", "yield strength", "elongation", "porosity",
    "relative density", "density", "surface roughness", "surface quality", "dimensional accuracy",
    "degree of conversion", "elastic modulus", "hardness", "shrinkage", "melt pool depth",
    "melt pool width", "residual stress", "fatigue life", "overcure",
]
MATERIALS = [
    "photopolymer resin", "acrylate resin", "pegda", "resin", "photopolymer", "ti-6al-4v",
    "316l stainless steel", "stainless steel", "alsi10mg", "inconel 718", "pla", "abs", "pa12",
    "nylon", "ceramic slurry", "alumina", "zirconia", "hydrogel",
]
ASSUMPTION_PATTERNS = [
    (r"steady[- ]state", "steady_state"),
    (r"isotherm", "isothermal"),
    (r"beer[- ]lambert", "beer_lambert_attenuation"),
    (r"negligible (\w+(?: \w+)?)", "negligible_{0}"),
    (r"uniform (\w+)", "uniform_{0}"),
    (r"(?:no|without) oxygen inhibition", "no_oxygen_inhibition"),
    (r"homogeneous (\w+)", "homogeneous_{0}"),
    (r"quasi[- ]static", "quasi_static"),
    (r"monochromatic", "monochromatic_light"),
]
CRITICAL_WORDS = re.compile(r"\b(must|only valid|requires|breaks down|fails)\b", re.I)
STOPWORDS = frozenset(
    "a an the of and or in on at to for by with from as is are be this that its it into than "
    "then which where while when we here our their these those given each".split()
)

_UNIT = r"(?:[A-Za-zμµ°%][A-Za-z0-9μµ°%/·\^\-²³]*)"
_NUM = r"\d+(?:\.\d+)?"
_RANGE_RE = re.compile(
    rf"(?P<param>[A-Za-z][A-Za-z\- ]{{1,60}}?)\s+(?:(?:ranges?|ranging|varies|varied|lies|is|was)\s+)?(?:of|between|from|ranging from|in the range(?: of)?|range of|within)\s+"
    rf"(?P<lo>{_NUM})\s*(?P<u1>{_UNIT})?\s*(?:–|—|-|to|and)\s*(?P<hi>{_NUM})\s*(?P<unit>{_UNIT})"
)


@dataclass
class HintSet:
    equations: list = field(default_factory=list)   # {"latex", "variables": [{"symbol","role","description"}]}
    process_parameters: list = field(default_factory=list)
    performance_metrics: list = field(default_factory=list)
    assumptions: list = field(default_factory=list)  # {"name","statement","criticality"}
    regimes: list = field(default_factory=list)
    materials: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def is_empty(self):
        return not any(self.to_dict().values())


def snake(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def _sentences(text):
    # paragraphs break on blank lines; hard-wrapped lines inside one are joined
    parts = re.split(r"(?<=[.!?])\s+|\n\s*\n", text)
    return [" ".join(p.split()) for p in parts if p.strip()]


def symbol_pattern(symbol: str) -> re.Pattern:
    """Regex for a symbol as written in prose or inline math (``C_d``, ``C_{d}``)."""
    base, _, sub = symbol.partition("_")
    b = re.escape(base) if len(base) == 1 else r"\\?" + re.escape(base)
    if sub:
        return re.compile(rf"(?<![\w\\]){b}_\{{?{re.escape(sub)}\}}?(?![\w])")
    return re.compile(rf"(?<![\w\\]){b}(?![\w{{]|_)")


def describe_symbol(symbol: str, text: str) -> str:
    """Short noun phrase naming ``symbol`` in ``text``, or ''."""
    prose = re.sub(r"\$\$.+?\$\$|\\\[.+?\\\]", " ", text, flags=re.S)
    prose = " ".join(prose.replace("$", "").split())
    pat = symbol_pattern(symbol)
    for m in pat.finditer(prose):
        after = prose[m.end():m.end() + 80]
        ma = re.match(r"\s*(?:,\s*)?(?:is|denotes|represents|being)\s+(?:the\s+|a\s+|an\s+)?([A-Za-z][A-Za-z\- ]+)", after)
        if ma:
            words = []
            for w in ma.group(1).split():
                # "of" may join a compound noun ("degree of conversion")
                if w.lower() in STOPWORDS and not (w.lower() == "of" and words):
                    break
                words.append(w.lower())
            while words and words[-1] == "of":
                words.pop()
            if words:
                return " ".join(words[:4])
    for m in pat.finditer(prose):
        before = prose[max(0, m.start() - 80):m.start()]
        words = []
        for w in reversed(re.split(r"\s+", before.rstrip())):
            if not re.fullmatch(r"[A-Za-z][A-Za-z\-]*", w) or w.lower() in STOPWORDS:
                break
            words.insert(0, w.lower())
            if len(words) == 3:
                break
        if words:
            return " ".join(words)
    return ""


def _is_constant(symbol, text):
    pat = symbol_pattern(symbol)
    clauses = (c for s in _sentences(text.replace("$", "")) for c in re.split(r",|;|\sand\s(?=\S+\s+(?:is|denotes)\b)", s))
    for s in clauses:
        if pat.search(s) and re.search(r"\bconstants?\b|\bfitted parameters?\b|\bmaterial[- ]dependent\b", s, re.I):
            return True
    return False


def equation_hint(latex: str, text: str) -> dict:
    try:
        eq = parse_latex(latex)
        target = eq.target
        variables, params = free_symbols(eq.rhs)
        rhs = variables + params
    except ParseError:
        target = None
        rhs = [s for s in extract_symbols(latex)]
        if "=" in latex:
            lhs_syms = extract_symbols(latex.split("=", 1)[0])
            target = lhs_syms[0] if len(lhs_syms) == 1 else None
            rhs = [s for s in extract_symbols(latex.split("=", 1)[1])]
    out = []
    if target:
        out.append({"symbol": target, "role": "output", "description": describe_symbol(target, text)})
    for s in rhs:
        if s == target or any(v["symbol"] == s for v in out):
            continue
        if target is None:
            role = "unknown"
        else:
            role = "constant" if _is_constant(s, text) else "input"
        out.append({"symbol": s, "role": role, "description": describe_symbol(s, text)})
    return {"latex": latex, "variables": out}


def _lexicon(text, lexicon, mask=()):
    low = text.lower()
    for phrase in mask:
        low = re.sub(rf"(?<![\w-]){re.escape(phrase.replace('_', ' '))}(?![\w-])", " ", low)
    found = []
    for phrase in lexicon:
        if re.search(rf"(?<![\w-]){re.escape(phrase)}(?![\w-])", low):
            name = snake(phrase)
            # prefer the longest match ("uv exposure time" over "exposure time")
            if not any(name in f and name != f for f in found):
                found = [f for f in found if not (f in name and f != name)]
                found.append(name)
    return found


def _assumptions(text):
    out = []
    for s in _sentences(text):
        low = s.lower()
        for pattern, template in ASSUMPTION_PATTERNS:
            m = re.search(pattern, low)
            if not m:
                continue
            if m.groups():
                name = snake(template.format(*[g for g in m.groups()]))
            else:
                name = template
            if any(a["name"] == name for a in out):
                continue
            out.append({
                "name": name,
                "statement": s.strip(),
                "criticality": "high" if CRITICAL_WORDS.search(s) else "medium",
            })
    return out


def _fmt_number(x):
    return x.replace(".", "p")


def regime_name(param: str, lo: str, hi: str, unit: str) -> str:
    unit = re.sub(r"[^A-Za-z0-9%]+", "_", unit.replace("/", "_per_").replace("%", "pct")).strip("_")
    return f"{snake(param)}_{_fmt_number(lo)}_{_fmt_number(hi)}_{unit}"


def _regimes(text):
    prose = re.sub(r"\$[^$]*\$", " ", text)
    out = []
    for m in _RANGE_RE.finditer(prose):
        param = " ".join(m.group("param").lower().split())
        known = [p for p in PROCESS_PARAMETERS + PERFORMANCE_METRICS if param.endswith(p)]
        if known:
            param = max(known, key=len)
        else:
            words = [w for w in param.split() if w not in STOPWORDS][-2:]
            if not words:
                continue
            param = " ".join(words)
        name = regime_name(param, m.group("lo"), m.group("hi"), m.group("unit"))
        if name not in out:
            out.append(name)
    return out


def _cap(items, tokenizer, cap):
    while items and tokenizer.count(json.dumps(items, ensure_ascii=False)) > cap:
        items = items[:-1]
    return items


def generate_hints(chunk, tokenizer=None, cap=HINT_TOKEN_CAP) -> HintSet:
    tokenizer = tokenizer or RegexTokenizer()
    text = chunk.text
    hints = HintSet(
        equations=[equation_hint(eq, text) for eq in chunk.equations],
        process_parameters=_lexicon(text, PROCESS_PARAMETERS),
        # "density" inside "energy density" is not a performance mention
        performance_metrics=_lexicon(text, PERFORMANCE_METRICS, mask=PROCESS_PARAMETERS),
        assumptions=_assumptions(text),
        regimes=_regimes(text),
        materials=_lexicon(text, MATERIALS),
    )
    for name in ("equations", "process_parameters", "performance_metrics", "assumptions", "regimes", "materials"):
        setattr(hints, name, _cap(getattr(hints, name), tokenizer, cap))
    return hints
