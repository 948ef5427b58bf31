"""Parser and serializer for the line-oriented `.feeder` description format."""

import math
import re
from dataclasses import dataclass, field
from itertools import accumulate
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from feeder.errors import (
    DuplicateId,
    FeederParseError,
    FeederSyntaxError,
    MatrixShapeMismatch,
    UnknownKey,
    UnknownKind,
    UnresolvedReference,
    ValidationFailed,
)
from feeder.model import (
    Bus,
    CapacitorBank,
    DGUnit,
    LineSegment,
    Load,
    PhasedNetwork,
    Regulator,
    Transformer,
    as_matrix,
    phase_set,
    phases_text,
)
from feeder.topology import validate

# Value type of every key, per declaration kind. Dict order is the
# canonical key order used by serialize.
KEY_SCHEMA: Dict[str, Dict[str, str]] = {
    "network": {"v_min_pu": "number", "v_max_pu": "number", "base_kva": "number"},
    "bus": {"phases": "phases", "kv_ln": "number", "source": "bool"},
    "line": {
        "from": "string", "to": "string", "phases": "phases", "z": "matrix",
        "amps": "number", "length_m": "number",
    },
    "transformer": {
        "from": "string", "to": "string", "phases": "phases", "kva": "number",
        "z_pu": "complex", "tap": "number",
    },
    "regulator": {"segment": "string", "phases": "phases", "taps": "vector"},
    "load": {
        "bus": "string", "phases": "phases", "conn": "choice", "model": "choice",
        "kw": "vector", "kvar": "vector",
    },
    "capacitor": {"bus": "string", "phases": "phases", "kvar": "vector", "enabled": "bool"},
    "dg": {
        "bus": "string", "phases": "phases", "p_min_kw": "number", "p_max_kw": "number",
        "capacity_kw": "number",
    },
}

REQUIRED_KEYS: Dict[str, Tuple[str, ...]] = {
    "network": (),
    "bus": ("phases", "kv_ln"),
    "line": ("from", "to", "phases", "z"),
    "transformer": ("from", "to", "phases", "kva", "z_pu"),
    "regulator": ("segment", "phases", "taps"),
    "load": ("bus", "phases", "kw"),
    "capacitor": ("bus", "phases", "kvar"),
    "dg": ("bus", "phases", "p_max_kw"),
}

CHOICES: Dict[str, Dict[str, str]] = {
    "conn": {"wye": "wye", "y": "wye", "delta": "delta", "d": "delta"},
    "model": {
        "pq": "constant_PQ", "constant_pq": "constant_PQ",
        "z": "constant_Z", "constant_z": "constant_Z",
        "i": "constant_I", "constant_i": "constant_I",
    },
}
MODEL_KEYWORDS = {"constant_PQ": "pq", "constant_Z": "z", "constant_I": "i"}

BOOLEANS = {"yes": True, "true": True, "no": False, "false": False}

# Per-phase keys whose length must match |phases|.
PER_PHASE_KEYS = ("kw", "kvar", "taps")

SECTION_ORDER = ("bus", "line", "transformer", "regulator", "load", "capacitor", "dg")


@dataclass
class Declaration:
    """One `<kind> <id> key=value ...` logical line."""

    kind: str
    id: str
    properties: Dict[str, Any]
    line: int
    column: int

    def get(self, key: str, default: Any = None) -> Any:
        return self.properties.get(key, default)


@dataclass
class FeederDocument:
    declarations: List[Declaration] = field(default_factory=list)

    def of_kind(self, kind: str) -> List[Declaration]:
        return [d for d in self.declarations if d.kind == kind]


class _LogicalLine:
    """Characters of one logical line with the (line, byte column) of each."""

    def __init__(self):
        self.text = ""
        self.positions: List[Tuple[int, int]] = []

    def extend(self, fragment: str, line_no: int, byte_columns: List[int]) -> None:
        self.text += fragment
        self.positions.extend((line_no, col) for col in byte_columns[: len(fragment)])

    def position(self, index: int) -> Tuple[int, int]:
        if index < len(self.positions):
            return self.positions[index]
        if self.positions:
            line, col = self.positions[-1]
            return line, col + 1
        return 1, 1


class FeederParser:
    """Reads `.feeder` text into documents and networks, and writes them back."""

    def __init__(self):
        unsigned = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
        real = rf"[+-]?{unsigned}"
        self.patterns = {
            "number": re.compile(real, re.ASCII),
            "complex": re.compile(rf"(?:{real}[+-]{unsigned}j|{real}j?)", re.ASCII),
            "entry": re.compile(rf"(?:{real}\s*[+-]\s*{unsigned}j|{real}j?)", re.ASCII),
            "identifier": re.compile(r"[^\s=\[\]|#\\]+"),
            "key": re.compile(r"[A-Za-z_][A-Za-z0-9_]*"),
        }

    # ------------------------------------------------------------------
    # Lexing
    # ------------------------------------------------------------------
    def logical_lines(self, text: str) -> List[_LogicalLine]:
        """Split text into logical lines, dropping comments and joining `\\` continuations."""
        result: List[_LogicalLine] = []
        current: Optional[_LogicalLine] = None
        for line_no, raw in enumerate(text.split("\n"), start=1):
            if raw.endswith("\r"):
                raw = raw[:-1]
            hash_at = raw.find("#")
            if hash_at >= 0:
                raw = raw[:hash_at]
            body = raw.rstrip()
            continued = body.endswith("\\")
            if continued:
                body = body[:-1]
            byte_columns = [1] + [c + 1 for c in accumulate(len(ch.encode("utf-8")) for ch in body)]
            if current is None:
                current = _LogicalLine()
            elif current.text:
                current.extend(" ", line_no, [1])
            current.extend(body, line_no, byte_columns)
            if not continued:
                if current.text.strip():
                    result.append(current)
                current = None
        if current is not None and current.text.strip():
            result.append(current)
        return result

    def tokenize(self, logical: _LogicalLine) -> List[Tuple[str, int]]:
        """Whitespace-separated tokens; a bracketed list stays one token."""
        text = logical.text
        tokens: List[Tuple[str, int]] = []
        i = 0
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            start = i
            while i < len(text) and not text[i].isspace():
                if text[i] == "[":
                    close = text.find("]", i)
                    if close < 0:
                        line, col = logical.position(i)
                        raise FeederSyntaxError("unclosed '['", line, col, text[i:].strip())
                    i = close + 1
                else:
                    i += 1
            tokens.append((text[start:i], start))
        return tokens

    # ------------------------------------------------------------------
    # Values
    # ------------------------------------------------------------------
    def _fail(self, logical: _LogicalLine, index: int, message: str, token: str,
              error=FeederSyntaxError):
        line, col = logical.position(index)
        raise error(message, line, col, token)

    def _finite(self, value: complex, logical, index, token) -> complex:
        if not (math.isfinite(value.real) and math.isfinite(value.imag)):
            self._fail(logical, index, "number out of range", token)
        return value

    def _to_complex(self, literal: str, logical, index) -> complex:
        try:
            return complex(literal)
        except (ValueError, OverflowError):
            self._fail(logical, index, "expected a number", literal)

    def parse_number(self, token: str, logical, index) -> float:
        if not self.patterns["number"].fullmatch(token):
            self._fail(logical, index, "expected a number", token)
        return self._finite(complex(float(token)), logical, index, token).real

    def parse_complex(self, token: str, logical, index) -> complex:
        if not self.patterns["complex"].fullmatch(token):
            self._fail(logical, index, "expected a complex number", token)
        return self._finite(self._to_complex(token, logical, index), logical, index, token)

    def parse_rows(self, token: str, logical, index) -> List[List[Tuple[complex, bool]]]:
        """Entries of a bracketed list as rows of (value, is_imaginary)."""
        if not (token.startswith("[") and token.endswith("]")):
            self._fail(logical, index, "expected a bracketed list", token)
        rows: List[List[Tuple[complex, bool]]] = [[]]
        i = 1
        end = len(token) - 1
        while i < end:
            ch = token[i]
            if ch.isspace():
                i += 1
                continue
            if ch == "|":
                if not rows[-1]:
                    self._fail(logical, index + i, "empty matrix row", "|")
                rows.append([])
                i += 1
                continue
            match = self.patterns["entry"].match(token, i, end)
            if match is None or (match.end() < end and not (token[match.end()].isspace() or token[match.end()] == "|")):
                stop = i
                while stop < end and not token[stop].isspace() and token[stop] != "|":
                    stop += 1
                self._fail(logical, index + i, "expected a number", token[i:stop] or token[i])
            literal = re.sub(r"\s+", "", match.group(0))
            value = self._finite(self._to_complex(literal, logical, index + i), logical, index + i, literal)
            rows[-1].append((value, literal.endswith("j")))
            i = match.end()
        if not rows[-1]:
            self._fail(logical, index, "empty list", token)
        return rows

    def parse_matrix(self, token: str, logical, index) -> Tuple[Tuple[complex, ...], ...]:
        rows = self.parse_rows(token, logical, index)
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            self._fail(logical, index, "matrix rows differ in length", token, MatrixShapeMismatch)
        return tuple(tuple(v for v, _ in row) for row in rows)

    def parse_vector(self, token: str, logical, index) -> Tuple[float, ...]:
        if not token.startswith("["):
            return (self.parse_number(token, logical, index),)
        rows = self.parse_rows(token, logical, index)
        if len(rows) != 1:
            self._fail(logical, index, "expected a single row", token)
        values = []
        for value, imaginary in rows[0]:
            if imaginary:
                self._fail(logical, index, "expected real numbers", token)
            values.append(value.real)
        return tuple(values)

    def parse_value(self, kind: str, key: str, token: str, logical, index) -> Any:
        value_type = KEY_SCHEMA[kind][key]
        if value_type == "number":
            return self.parse_number(token, logical, index)
        if value_type == "complex":
            return self.parse_complex(token, logical, index)
        if value_type == "matrix":
            return self.parse_matrix(token, logical, index)
        if value_type == "vector":
            return self.parse_vector(token, logical, index)
        if value_type == "phases":
            try:
                return phase_set(token)
            except ValueError:
                self._fail(logical, index, "invalid phase set", token)
        if value_type == "bool":
            if token.lower() not in BOOLEANS:
                self._fail(logical, index, "expected yes/no", token)
            return BOOLEANS[token.lower()]
        if value_type == "choice":
            choice = CHOICES[key].get(token.lower())
            if choice is None:
                self._fail(logical, index, f"invalid {key}", token)
            return choice
        if not self.patterns["identifier"].fullmatch(token):
            self._fail(logical, index, "invalid identifier", token)
        return token

    # ------------------------------------------------------------------
    # Declarations
    # ------------------------------------------------------------------
    def parse_declaration(self, logical: _LogicalLine) -> Declaration:
        tokens = self.tokenize(logical)
        kind_token, kind_at = tokens[0]
        kind = kind_token.lower()
        if kind not in KEY_SCHEMA:
            self._fail(logical, kind_at, f"unknown element kind '{kind_token}'", kind_token, UnknownKind)
        if len(tokens) < 2:
            self._fail(logical, len(logical.text.rstrip()), f"missing id after '{kind_token}'", kind_token)
        id_token, id_at = tokens[1]
        if not self.patterns["identifier"].fullmatch(id_token):
            self._fail(logical, id_at, "invalid identifier", id_token)

        line, column = logical.position(kind_at)
        decl = Declaration(kind=kind, id=id_token, properties={}, line=line, column=column)
        value_at: Dict[str, int] = {}

        for token, at in tokens[2:]:
            key_token, eq, raw_value = token.partition("=")
            if not eq or not self.patterns["key"].fullmatch(key_token):
                self._fail(logical, at, "expected key=value", token)
            key = key_token.lower()
            if key not in KEY_SCHEMA[kind]:
                self._fail(logical, at, f"unknown key '{key_token}' for {kind}", key_token, UnknownKey)
            if key in decl.properties:
                self._fail(logical, at, f"repeated key '{key_token}'", key_token)
            start = at + len(key_token) + 1
            if not raw_value:
                self._fail(logical, start, f"missing value for '{key_token}'", token)
            decl.properties[key] = self.parse_value(kind, key, raw_value, logical, start)
            value_at[key] = start

        for key in REQUIRED_KEYS[kind]:
            if key not in decl.properties:
                self._fail(logical, id_at, f"{kind} '{id_token}' is missing required key '{key}'", id_token)

        self._check_shapes(decl, logical, value_at)
        return decl

    def _check_shapes(self, decl: Declaration, logical, value_at: Dict[str, int]) -> None:
        phases = decl.properties.get("phases")
        if phases is None:
            return
        n = len(phases)
        matrix = decl.properties.get("z")
        if decl.kind == "line" and matrix is not None:
            if len(matrix) != n or any(len(row) != n for row in matrix):
                self._fail(
                    logical, value_at["z"],
                    f"z must be {n}x{n} for phases={phases_text(phases)}",
                    "z", MatrixShapeMismatch,
                )
        for key in PER_PHASE_KEYS:
            values = decl.properties.get(key)
            if values is None:
                continue
            if len(values) == 1 and n > 1 and not logical.text[value_at[key]:].startswith("["):
                decl.properties[key] = values * n
            elif len(values) != n:
                self._fail(
                    logical, value_at[key],
                    f"{key} needs {n} entries for phases={phases_text(phases)}",
                    key, MatrixShapeMismatch,
                )

    def parse(self, text: str) -> FeederDocument:
        """Parse feeder text; raises a positioned FeederParseError on bad input."""
        doc = FeederDocument()
        seen: Dict[Tuple[str, str], Declaration] = {}
        for logical in self.logical_lines(text):
            decl = self.parse_declaration(logical)
            key = ("network", "") if decl.kind == "network" else (decl.kind, decl.id)
            if key in seen:
                first = seen[key]
                _, id_at = self.tokenize(logical)[1]
                self._fail(
                    logical, id_at,
                    f"duplicate {decl.kind} '{decl.id}' (first declared at line {first.line})",
                    decl.id, DuplicateId,
                )
            seen[key] = decl
            doc.declarations.append(decl)
        return doc

    # ------------------------------------------------------------------
    # Building networks
    # ------------------------------------------------------------------
    def build(self, doc: FeederDocument) -> PhasedNetwork:
        """Resolve references, apply defaults and validate."""
        network_decl = next(iter(doc.of_kind("network")), None)
        declared_buses = {d.id for d in doc.of_kind("bus")}
        declared_lines = {d.id for d in doc.of_kind("line")}

        def bus_ref(decl: Declaration, key: str) -> str:
            name = decl.properties[key]
            if name not in declared_buses:
                raise UnresolvedReference(name, referenced_by=decl.id)
            return name

        buses = [
            Bus(id=d.id, phases=d.get("phases"), kv_ln=d.get("kv_ln"), is_source=d.get("source", False))
            for d in doc.of_kind("bus")
        ]
        segments = [
            LineSegment(
                id=d.id, from_bus=bus_ref(d, "from"), to_bus=bus_ref(d, "to"),
                phases=d.get("phases"), z_matrix=as_matrix(d.get("z")),
                ampacity=d.get("amps"), length_m=d.get("length_m"),
            )
            for d in doc.of_kind("line")
        ]
        transformers = [
            Transformer(
                id=d.id, from_bus=bus_ref(d, "from"), to_bus=bus_ref(d, "to"),
                phases=d.get("phases"), rating=d.get("kva"),
                series_impedance=d.get("z_pu"), tap=d.get("tap", 1.0),
            )
            for d in doc.of_kind("transformer")
        ]
        regulators = []
        for d in doc.of_kind("regulator"):
            if d.get("segment") not in declared_lines:
                raise UnresolvedReference(d.get("segment"), referenced_by=d.id)
            regulators.append(
                Regulator(id=d.id, on_segment=d.get("segment"), phases=d.get("phases"), taps=d.get("taps"))
            )
        loads = []
        for d in doc.of_kind("load"):
            kw = d.get("kw")
            loads.append(Load(
                id=d.id, bus=bus_ref(d, "bus"), phases=d.get("phases"),
                connection=d.get("conn", "wye"), model=d.get("model", "constant_PQ"),
                per_phase_kw=kw, per_phase_kvar=d.get("kvar", tuple(0.0 for _ in kw)),
            ))
        capacitors = [
            CapacitorBank(
                id=d.id, bus=bus_ref(d, "bus"), phases=d.get("phases"),
                per_phase_kvar=d.get("kvar"), enabled=d.get("enabled", True),
            )
            for d in doc.of_kind("capacitor")
        ]
        dg_units = [
            DGUnit(
                id=d.id, bus=bus_ref(d, "bus"), phases=d.get("phases"),
                p_min_kw=d.get("p_min_kw", 0.0), p_max_kw=d.get("p_max_kw"),
                capacity_kw=d.get("capacity_kw", d.get("p_min_kw", 0.0)),
            )
            for d in doc.of_kind("dg")
        ]

        settings = network_decl.properties if network_decl else {}
        network = PhasedNetwork(
            name=network_decl.id if network_decl else "feeder",
            buses=_by_id(buses),
            segments=_by_id(segments),
            transformers=_by_id(transformers),
            loads=_by_id(loads),
            capacitors=_by_id(capacitors),
            regulators=_by_id(regulators),
            dg_units=_by_id(dg_units),
            v_min_pu=settings.get("v_min_pu", 0.94),
            v_max_pu=settings.get("v_max_pu", 1.06),
            base_kva=settings.get("base_kva", 1000.0),
        )
        report = validate(network)
        if report:
            raise ValidationFailed(report)
        return network

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------
    def serialize(self, network: PhasedNetwork) -> str:
        """Canonical text: kinds grouped, ids sorted, keys in schema order."""
        lines = [_declaration("network", network.name, {
            "v_min_pu": _number(network.v_min_pu),
            "v_max_pu": _number(network.v_max_pu),
            "base_kva": _number(network.base_kva),
        })]
        rendered = {
            "bus": [
                (b.id, {"phases": phases_text(b.phases), "kv_ln": _number(b.kv_ln),
                        "source": "yes" if b.is_source else "no"})
                for b in network.buses
            ],
            "line": [
                (s.id, {"from": s.from_bus, "to": s.to_bus, "phases": phases_text(s.phases),
                        "z": _matrix(s.z_matrix), "amps": _optional(s.ampacity),
                        "length_m": _optional(s.length_m)})
                for s in network.segments
            ],
            "transformer": [
                (t.id, {"from": t.from_bus, "to": t.to_bus, "phases": phases_text(t.phases),
                        "kva": _number(t.rating), "z_pu": _complex(t.series_impedance),
                        "tap": _number(t.tap)})
                for t in network.transformers
            ],
            "regulator": [
                (r.id, {"segment": r.on_segment, "phases": phases_text(r.phases), "taps": _vector(r.taps)})
                for r in network.regulators
            ],
            "load": [
                (ld.id, {"bus": ld.bus, "phases": phases_text(ld.phases), "conn": ld.connection,
                         "model": MODEL_KEYWORDS[ld.model], "kw": _vector(ld.per_phase_kw),
                         "kvar": _vector(ld.per_phase_kvar)})
                for ld in network.loads
            ],
            "capacitor": [
                (c.id, {"bus": c.bus, "phases": phases_text(c.phases), "kvar": _vector(c.per_phase_kvar),
                        "enabled": "yes" if c.enabled else "no"})
                for c in network.capacitors
            ],
            "dg": [
                (g.id, {"bus": g.bus, "phases": phases_text(g.phases), "p_min_kw": _number(g.p_min_kw),
                        "p_max_kw": _number(g.p_max_kw), "capacity_kw": _number(g.capacity_kw)})
                for g in network.dg_units
            ],
        }
        for kind in SECTION_ORDER:
            for element_id, props in sorted(rendered[kind], key=lambda item: item[0]):
                lines.append(_declaration(kind, element_id, props))
        return "\n".join(lines) + "\n"


def _by_id(items: List) -> Tuple:
    return tuple(sorted(items, key=lambda item: item.id))


def _number(value: float) -> str:
    """Up to 9 significant digits when exact, otherwise the shortest round-trip form."""
    short = f"{value:.9g}"
    return short if float(short) == value else repr(float(value))


def _optional(value: Optional[float]) -> Optional[str]:
    return None if value is None else _number(value)


def _complex(value: complex) -> str:
    sign = "-" if math.copysign(1.0, value.imag) < 0 else "+"
    return f"{_number(value.real)}{sign}{_number(abs(value.imag))}j"


def _vector(values) -> str:
    return "[" + " ".join(_number(v) for v in values) + "]"


def _matrix(rows) -> str:
    return "[" + " | ".join(" ".join(_complex(v) for v in row) for row in rows) + "]"


def _declaration(kind: str, element_id: str, props: Dict[str, Optional[str]]) -> str:
    fields = " ".join(f"{k}={v}" for k, v in props.items() if v is not None)
    return f"{kind} {element_id} {fields}".rstrip()


feeder_parser = FeederParser()


def parse(text: str) -> FeederDocument:
    return feeder_parser.parse(text)


def build(doc: FeederDocument) -> PhasedNetwork:
    return feeder_parser.build(doc)


def serialize(network: PhasedNetwork) -> str:
    return feeder_parser.serialize(network)


def load_feeder(path) -> PhasedNetwork:
    """Read, parse and build a `.feeder` file."""
    text = Path(path).read_text(encoding="utf-8")
    return build(parse(text))


__all__ = [
    "Declaration",
    "FeederDocument",
    "FeederParseError",
    "FeederParser",
    "build",
    "feeder_parser",
    "load_feeder",
    "parse",
    "serialize",
]
