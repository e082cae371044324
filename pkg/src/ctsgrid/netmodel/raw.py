"""Restricted PSS/E-style RAW importer.

Only the records needed for an AC power flow are read. The file is::

    0, <SBASE>[, ...]                 case identification
    <title line 1>
    <title line 2>
    bus block         I, 'NAME', BASKV, IDE, GL, BL, AREA, ZONE, VM, VA, OWNER[, VMAX, VMIN]
    load block        I, ID, STATUS, AREA, ZONE, PL, QL[, ...]
    generator block   I, ID, PG, QG, QT, QB, VS, IREG, MBASE, ZR, ZX, RT, XT, GTAP, STAT, RMPCT, PT, PB[, ...]
    branch block      I, J, CKT, R, X, B, RATEA, RATEB, RATEC, GI, BI, GJ, BJ, ST[, ...]
    transformer block four lines per two-winding transformer (CW = CZ = 1 only)
    ...               any further blocks are skipped with a RawImportWarning

Each block ends with a line whose first field is ``0`` (``Q`` ends the file).
GL/BL/PL/QL are MW/MVAr at 1 p.u. voltage and are normalised to ``SBASE``; VA
and transformer ANG1 are in degrees. Branch ids come from CKT and generator
ids from ID when those are unique integers; otherwise records are numbered in
file order.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict

from .model import Branch, Bus, Generator, Network, NetworkError
from .native import CaseFormatError

_IDE_KIND = {1: "pq", 2: "pv", 3: "slack"}
_KIND_IDE = {v: k for k, v in _IDE_KIND.items()}
_BLOCK_NAMES = ("bus", "load", "generator", "branch", "transformer")


class RawImportWarning(UserWarning):
    """An unsupported RAW block was skipped."""


def _is_terminator(fields: list[str]) -> bool:
    return fields[0] == "0"


def _split(line: str) -> list[str]:
    line = line.split("/", 1)[0]
    row = next(csv.reader([line], quotechar="'", skipinitialspace=True), [])
    return [f.strip() for f in row if f.strip()]


def _num(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise CaseFormatError(f"bad numeric value {tok!r} for {what}", lineno) from None


def _need(fields: list[str], n: int, lineno: int, what: str) -> None:
    if len(fields) < n:
        raise CaseFormatError(f"{what} record needs at least {n} fields, got {len(fields)}", lineno)


def _ids(keys: list[str]) -> list[int]:
    try:
        ids = [int(k) for k in keys]
    except ValueError:
        ids = []
    if len(ids) == len(keys) and len(set(ids)) == len(ids):
        return ids
    return list(range(1, len(keys) + 1))


def import_raw_subset(text: str) -> Network:
    lines = text.splitlines()
    if len(lines) < 3:
        raise CaseFormatError("RAW file needs an identification line and two title lines")
    header = _split(lines[0])
    _need(header, 2, 1, "case identification")
    sbase = _num(header[1], 1, "SBASE")

    blocks: list[list[tuple[int, list[str]]]] = [[]]
    for lineno, line in enumerate(lines[3:], start=4):
        fields = _split(line)
        if not fields:
            continue
        if fields[0] == "Q":
            break
        if _is_terminator(fields):
            blocks.append([])
            continue
        blocks[-1].append((lineno, fields))

    while len(blocks) < len(_BLOCK_NAMES):
        blocks.append([])
    for idx, extra in enumerate(blocks[len(_BLOCK_NAMES):], start=len(_BLOCK_NAMES)):
        if extra:
            warnings.warn(
                f"skipped unsupported RAW block #{idx + 1} ({len(extra)} records, "
                f"starting at line {extra[0][0]})",
                RawImportWarning,
                stacklevel=2,
            )

    bus_recs, load_recs, gen_recs, branch_recs, xf_recs = blocks[: len(_BLOCK_NAMES)]

    loads: dict[int, list[float]] = defaultdict(lambda: [0.0, 0.0])
    for ln, f in load_recs:
        _need(f, 7, ln, "load")
        if int(_num(f[2], ln, "STATUS")) == 1:
            acc = loads[int(_num(f[0], ln, "I"))]
            acc[0] += _num(f[5], ln, "PL")
            acc[1] += _num(f[6], ln, "QL")

    buses = []
    for ln, f in bus_recs:
        if len(f) not in (11, 13):
            raise CaseFormatError(f"bus record needs 11 or 13 fields, got {len(f)}", ln)
        bid = int(_num(f[0], ln, "I"))
        ide = int(_num(f[3], ln, "IDE"))
        if ide not in _IDE_KIND:
            raise CaseFormatError(f"unsupported bus type IDE={ide}", ln)
        extra = {}
        if len(f) == 13:
            extra = {"v_max": _num(f[11], ln, "VMAX"), "v_min": _num(f[12], ln, "VMIN")}
        p_load, q_load = loads.get(bid, (0.0, 0.0))
        buses.append(Bus(
            id=bid,
            kind=_IDE_KIND[ide],
            base_kv=_num(f[2], ln, "BASKV"),
            v_mag=_num(f[8], ln, "VM"),
            v_ang=math.radians(_num(f[9], ln, "VA")),
            p_load=p_load,
            q_load=q_load,
            shunt_g=_num(f[4], ln, "GL") / sbase,
            shunt_b=_num(f[5], ln, "BL") / sbase,
            **extra,
        ))

    for ln, f in gen_recs:
        _need(f, 18, ln, "generator")
    gen_ids = _ids([f[1] for _, f in gen_recs])
    gens = [
        Generator(
            id=gid,
            bus=int(_num(f[0], ln, "I")),
            p_out=_num(f[2], ln, "PG"),
            q_out=_num(f[3], ln, "QG"),
            q_max=_num(f[4], ln, "QT"),
            q_min=_num(f[5], ln, "QB"),
            v_set=_num(f[6], ln, "VS"),
            in_service=int(_num(f[14], ln, "STAT")) == 1,
            p_max=_num(f[16], ln, "PT"),
            p_min=_num(f[17], ln, "PB"),
        )
        for gid, (ln, f) in zip(gen_ids, gen_recs)
    ]

    proto: list[tuple[str, dict]] = []
    for ln, f in branch_recs:
        _need(f, 14, ln, "branch")
        proto.append((f[2], dict(
            from_bus=int(_num(f[0], ln, "I")),
            to_bus=abs(int(_num(f[1], ln, "J"))),
            r=_num(f[3], ln, "R"),
            x=_num(f[4], ln, "X"),
            b_charging=_num(f[5], ln, "B"),
            rate_a=_num(f[6], ln, "RATEA"),
            rate_c=_num(f[8], ln, "RATEC"),
            in_service=int(_num(f[13], ln, "ST")) == 1,
        )))
    proto.extend(_transformers(xf_recs))

    branch_ids = _ids([ckt for ckt, _ in proto])
    branches = [Branch(id=i, **kw) for i, (_, kw) in zip(branch_ids, proto)]
    try:
        return Network(sbase, buses, branches, gens)
    except NetworkError as exc:
        raise CaseFormatError(str(exc)) from exc


def _transformers(recs: list[tuple[int, list[str]]]) -> list[tuple[str, dict]]:
    out = []
    i = 0
    while i < len(recs):
        ln, f1 = recs[i]
        _need(f1, 12, ln, "transformer")
        if int(_num(f1[2], ln, "K")) != 0:
            raise CaseFormatError("three-winding transformers are not supported", ln)
        cw, cz = int(_num(f1[4], ln, "CW")), int(_num(f1[5], ln, "CZ"))
        if cw != 1 or cz != 1:
            raise CaseFormatError(
                f"transformer with CW={cw}, CZ={cz} not supported (only CW=CZ=1)", ln
            )
        if i + 3 >= len(recs):
            raise CaseFormatError("truncated two-winding transformer record", ln)
        (ln2, f2), (ln3, f3), (ln4, f4) = recs[i + 1: i + 4]
        _need(f2, 2, ln2, "transformer impedance")
        _need(f3, 6, ln3, "transformer winding 1")
        _need(f4, 1, ln4, "transformer winding 2")
        windv2 = _num(f4[0], ln4, "WINDV2")
        out.append((f1[3], dict(
            from_bus=int(_num(f1[0], ln, "I")),
            to_bus=int(_num(f1[1], ln, "J")),
            r=_num(f2[0], ln2, "R1-2"),
            x=_num(f2[1], ln2, "X1-2"),
            tap_ratio=_num(f3[0], ln3, "WINDV1") / windv2,
            phase_shift=math.radians(_num(f3[2], ln3, "ANG1")),
            rate_a=_num(f3[3], ln3, "RATA1"),
            rate_c=_num(f3[5], ln3, "RATC1"),
            in_service=int(_num(f1[11], ln, "STAT")) == 1,
        )))
        i += 4
    return out


def export_raw_subset(net: Network) -> str:
    """Write ``net`` in the subset accepted by :func:`import_raw_subset`.

    Switchability is not representable in RAW and is dropped (imported
    branches are switchable). Transformers must have zero line charging.
    """
    sb = net.base_mva
    out = [f"0, {sb!r}, 33, 0, 0, 60.0", "ctsgrid export", ""]
    for b in net.buses.values():
        out.append(
            f"{b.id}, 'B{b.id}', {b.base_kv!r}, {_KIND_IDE[b.kind]}, {b.shunt_g * sb!r}, "
            f"{b.shunt_b * sb!r}, 1, 1, {b.v_mag!r}, {math.degrees(b.v_ang)!r}, 1, "
            f"{b.v_max!r}, {b.v_min!r}"
        )
    out.append("0 / END OF BUS DATA, BEGIN LOAD DATA")
    for b in net.buses.values():
        if b.p_load or b.q_load:
            out.append(f"{b.id}, '1', 1, 1, 1, {b.p_load!r}, {b.q_load!r}, 0, 0, 0, 0, 1")
    out.append("0 / END OF LOAD DATA, BEGIN GENERATOR DATA")
    for g in net.generators.values():
        out.append(
            f"{g.bus}, '{g.id}', {g.p_out!r}, {g.q_out!r}, {g.q_max!r}, {g.q_min!r}, "
            f"{g.v_set!r}, 0, {sb!r}, 0, 1, 0, 0, 1, {int(g.in_service)}, 100, "
            f"{g.p_max!r}, {g.p_min!r}"
        )
    out.append("0 / END OF GENERATOR DATA, BEGIN BRANCH DATA")
    xfs = []
    for br in net.branches.values():
        if br.is_transformer:
            if br.b_charging:
                raise ValueError(f"branch {br.id}: transformer with line charging not exportable")
            xfs.append(br)
            continue
        out.append(
            f"{br.from_bus}, {br.to_bus}, '{br.id}', {br.r!r}, {br.x!r}, {br.b_charging!r}, "
            f"{br.rate_a!r}, {br.rate_a!r}, {br.rate_c!r}, 0, 0, 0, 0, {int(br.in_service)}"
        )
    out.append("0 / END OF BRANCH DATA, BEGIN TRANSFORMER DATA")
    for br in xfs:
        out.append(f"{br.from_bus}, {br.to_bus}, 0, '{br.id}', 1, 1, 1, 0, 0, 2, 'T{br.id}', "
                   f"{int(br.in_service)}")
        out.append(f"{br.r!r}, {br.x!r}, {sb!r}")
        out.append(f"{br.tap_ratio!r}, 0, {math.degrees(br.phase_shift)!r}, {br.rate_a!r}, "
                   f"{br.rate_a!r}, {br.rate_c!r}")
        out.append("1.0, 0")
    out.append("0 / END OF TRANSFORMER DATA")
    out.append("Q")
    return "\n".join(out) + "\n"
