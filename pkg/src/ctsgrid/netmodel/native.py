"""Native line-oriented case format.

Layout::

    CASE <base_mva>
    BUS
    # id kind base_kv v_mag v_ang v_min v_max p_load q_load shunt_g shunt_b
    1 slack 138 1.06 0 0.9 1.1 0 0 0 0
    BRANCH
    # id from to r x b tap shift rate_a rate_c in_service switchable
    1 1 2 0.01938 0.05917 0.0528 1 0 120 150 1 1
    GEN
    # id bus p_out q_out p_min p_max q_min q_max v_set in_service
    1 1 232.4 -16.9 0 332.4 -10 10 1.06 1

Angles (``v_ang``, ``shift``) are in radians, impedances and shunts in p.u.
on ``base_mva``, powers in MW/MVAr/MVA. Anything after ``#`` is a comment.
"""

from __future__ import annotations

from .model import Branch, Bus, Generator, Network, NetworkError

BUS_FIELDS = ("id", "kind", "base_kv", "v_mag", "v_ang", "v_min", "v_max",
              "p_load", "q_load", "shunt_g", "shunt_b")
BRANCH_FIELDS = ("id", "from_bus", "to_bus", "r", "x", "b_charging", "tap_ratio",
                 "phase_shift", "rate_a", "rate_c", "in_service", "switchable")
GEN_FIELDS = ("id", "bus", "p_out", "q_out", "p_min", "p_max", "q_min", "q_max",
              "v_set", "in_service")

_SECTIONS = {
    "BUS": (Bus, BUS_FIELDS),
    "BRANCH": (Branch, BRANCH_FIELDS),
    "GEN": (Generator, GEN_FIELDS),
}
_INT_FIELDS = {"id", "from_bus", "to_bus", "bus"}
_BOOL_FIELDS = {"in_service", "switchable"}


class CaseFormatError(ValueError):
    """Syntax or semantic error in a case file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _convert(name: str, token: str, lineno: int):
    try:
        if name in _INT_FIELDS:
            return int(token)
        if name in _BOOL_FIELDS:
            if token not in ("0", "1"):
                raise ValueError(token)
            return token == "1"
        if name == "kind":
            return token.lower()
        return float(token)
    except ValueError:
        raise CaseFormatError(f"bad value {token!r} for field {name}", lineno) from None


def parse_case(text: str) -> Network:
    base_mva = None
    section = None
    records: dict[str, list] = {k: [] for k in _SECTIONS}
    first_line: dict[tuple[str, int], int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0].upper()
        if base_mva is None:
            if head != "CASE" or len(tokens) != 2:
                raise CaseFormatError("expected header 'CASE <base_mva>'", lineno)
            try:
                base_mva = float(tokens[1])
            except ValueError:
                raise CaseFormatError(f"bad base_mva {tokens[1]!r}", lineno) from None
            continue
        if head in _SECTIONS and len(tokens) == 1:
            section = head
            continue
        if section is None:
            raise CaseFormatError(f"record outside a section: {line!r}", lineno)
        cls, fields = _SECTIONS[section]
        if len(tokens) != len(fields):
            raise CaseFormatError(
                f"{section} record needs {len(fields)} fields, got {len(tokens)}", lineno
            )
        values = {f: _convert(f, t, lineno) for f, t in zip(fields, tokens)}
        key = (section, values["id"])
        if key in first_line:
            raise CaseFormatError(
                f"duplicate {section} id {values['id']} (first at line {first_line[key]})",
                lineno,
            )
        first_line[key] = lineno
        records[section].append((lineno, cls(**values)))

    if base_mva is None:
        raise CaseFormatError("empty case: missing 'CASE <base_mva>' header")
    try:
        return Network(
            base_mva,
            [r for _, r in records["BUS"]],
            [r for _, r in records["BRANCH"]],
            [r for _, r in records["GEN"]],
        )
    except NetworkError as exc:
        raise CaseFormatError(str(exc), _locate(exc, records)) from exc


def _locate(exc: NetworkError, records) -> int | None:
    # best effort: point at the record named in the message
    msg = str(exc)
    for section, prefix in (("BRANCH", "branch "), ("GEN", "generator "), ("BUS", "bus ")):
        for lineno, rec in records[section]:
            if msg.startswith(f"{prefix}{rec.id} ") or msg.startswith(f"{prefix}{rec.id}:"):
                return lineno
    return None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_case(net: Network) -> str:
    """Render ``net`` in the native format; ``parse_case`` inverts it exactly."""
    out = [f"CASE {net.base_mva!r}", "BUS", "# " + " ".join(BUS_FIELDS)]
    for bus in net.buses.values():
        out.append(" ".join(_fmt(getattr(bus, f)) for f in BUS_FIELDS))
    out += ["BRANCH", "# " + " ".join(BRANCH_FIELDS)]
    for br in net.branches.values():
        out.append(" ".join(_fmt(getattr(br, f)) for f in BRANCH_FIELDS))
    out += ["GEN", "# " + " ".join(GEN_FIELDS)]
    for gen in net.generators.values():
        out.append(" ".join(_fmt(getattr(gen, f)) for f in GEN_FIELDS))
    return "\n".join(out) + "\n"


def read_case(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read())
