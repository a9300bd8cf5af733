"""Parsing and serialization: mechanism files, run configs, CSV output.

The mechanism format is a sectioned line-oriented plain-text format
(documented in docs/format.md):

    format 1

    [species]
    # name  W  T_low T_mid T_high  a1..a7 (low)  a1..a7 (high)
    F  0.030  200 1000 6000  3.5 0 0 0 0 45000 10  3.5 0 0 0 0 45000 10

    [reactions]
    F + X => 2 X   1.0e8  0  8.0e4
    A <=> B        1.0e3  0.5  1.0e3  rev: 2.0e3 0.5 1.2e3
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np

from .kinetics import KineticsError, Mechanism, Reaction, Species

FORMAT_VERSION = 1
MASS_SUM_TOL = 1.0e-6


class MechIoError(ValueError):
    """Parse/validation diagnostic with an error code and source line."""

    def __init__(self, code, message, line=None):
        self.code = code
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{code}: {message}{where}")


def _fail(code, message, line=None):
    raise MechIoError(code, message, line)


def _parse_float(tok, line, what="number"):
    try:
        return float(tok)
    except ValueError:
        _fail("BadNumber", f"cannot parse {what} {tok!r}", line)


# Tokens that indicate unsupported pressure-dependent reaction syntax.
_UNSUPPORTED_RXN = re.compile(r"\(\+\s*\w+\s*\)|(?:^|\s)\+\s*M(?:\s|$)|\bLOW\b|\bTROE\b|\bPLOG\b")


def _iter_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_mechanism(text):
    """Parse mechanism text into a validated Mechanism."""
    species = []
    names = {}
    reactions = []
    section = None
    saw_version = False
    for lineno, line in _iter_lines(text):
        if line.lower().startswith("format"):
            toks = line.split()
            if len(toks) != 2 or toks[1] != str(FORMAT_VERSION):
                _fail("BadFormatVersion", f"unsupported format line {line!r}", lineno)
            saw_version = True
            continue
        if line.startswith("["):
            if line == "[species]":
                section = "species"
            elif line == "[reactions]":
                section = "reactions"
            else:
                _fail("UnknownSection", f"unknown section {line!r}", lineno)
            continue
        if not saw_version:
            _fail("BadFormatVersion", "missing 'format 1' header", lineno)
        if section == "species":
            sp = _parse_species_line(line, lineno)
            if sp.name in names:
                _fail("DuplicateSpecies", f"species {sp.name!r} already declared", lineno)
            names[sp.name] = len(species)
            species.append(sp)
        elif section == "reactions":
            reactions.append(_parse_reaction_line(line, lineno, names))
        else:
            _fail("UnknownSection", "content before any section header", lineno)
    if not species:
        _fail("NoSpecies", "mechanism declares no species")
    try:
        return Mechanism(species=tuple(species), reactions=tuple(r for r, _ in reactions))
    except KineticsError as exc:
        # Attribute mechanism-level failures to the offending reaction line.
        line = None
        m = re.match(r"reaction (\d+)", str(exc))
        if m:
            line = reactions[int(m.group(1))][1]
        code = "MassImbalance" if "mass balance" in str(exc) else "InvalidMechanism"
        _fail(code, str(exc), line)


def _parse_species_line(line, lineno):
    toks = line.split()
    if len(toks) != 19:
        _fail("BadSpecies",
              f"species line needs name + 18 numbers, got {len(toks)} tokens", lineno)
    name = toks[0]
    nums = [_parse_float(t, lineno) for t in toks[1:]]
    try:
        return Species(name=name, molar_mass=nums[0], t_low=nums[1],
                       t_mid=nums[2], t_high=nums[3],
                       coeffs_low=tuple(nums[4:11]), coeffs_high=tuple(nums[11:18]))
    except KineticsError as exc:
        _fail("BadSpecies", str(exc), lineno)


def _parse_stoich_side(side, lineno, names):
    stoich = {}
    for term in side.split("+"):
        term = term.strip()
        if not term:
            _fail("BadReaction", "empty stoichiometric term", lineno)
        parts = term.split()
        if len(parts) == 1:
            count, name = 1, parts[0]
        elif len(parts) == 2:
            try:
                count = int(parts[0])
            except ValueError:
                _fail("BadReaction", f"bad stoichiometric count {parts[0]!r}", lineno)
            name = parts[1]
        else:
            _fail("BadReaction", f"cannot parse term {term!r}", lineno)
        if count <= 0:
            _fail("BadReaction", f"stoichiometric count must be positive: {term!r}", lineno)
        if name not in names:
            _fail("UnknownSpecies", f"species {name!r} not declared", lineno)
        idx = names[name]
        stoich[idx] = stoich.get(idx, 0) + count
    return stoich


def _parse_reaction_line(line, lineno, names):
    if _UNSUPPORTED_RXN.search(line):
        _fail("UnsupportedReactionType",
              "third-body / falloff / pressure-dependent reactions are not supported",
              lineno)
    if "<=>" in line:
        reversible = True
        lhs, rest = line.split("<=>", 1)
    elif "=>" in line:
        reversible = False
        lhs, rest = line.split("=>", 1)
    else:
        _fail("BadReaction", "missing '=>' or '<=>'", lineno)
    explicit_reverse = None
    if "rev:" in rest:
        rest, rev_part = rest.split("rev:", 1)
        if not reversible:
            _fail("BadReaction", "'rev:' given for an irreversible reaction", lineno)
        rev_toks = rev_part.split()
        if len(rev_toks) != 3:
            _fail("BadArrhenius", "reverse Arrhenius needs exactly 3 numbers", lineno)
        explicit_reverse = tuple(_parse_float(t, lineno, "Arrhenius value")
                                 for t in rev_toks)
    rest_toks = rest.split()
    if len(rest_toks) < 4:
        _fail("BadArrhenius", "reaction needs products plus 3 Arrhenius numbers", lineno)
    arrhenius = tuple(_parse_float(t, lineno, "Arrhenius value") for t in rest_toks[-3:])
    rhs_text = " ".join(rest_toks[:-3])
    reactants = _parse_stoich_side(lhs, lineno, names)
    products = _parse_stoich_side(rhs_text, lineno, names)
    try:
        rxn = Reaction(reactants=reactants, products=products, arrhenius=arrhenius,
                       reversible=reversible, explicit_reverse=explicit_reverse)
    except KineticsError as exc:
        _fail("BadReaction", str(exc), lineno)
    return rxn, lineno


def serialize_mechanism(mech):
    """Render a Mechanism back to the text format (round-trips exactly)."""
    lines = [f"format {FORMAT_VERSION}", "", "[species]"]
    for s in mech.species:
        nums = [s.molar_mass, s.t_low, s.t_mid, s.t_high,
                *s.coeffs_low, *s.coeffs_high]
        lines.append(s.name + " " + " ".join(repr(float(v)) for v in nums))
    lines.append("")
    lines.append("[reactions]")
    for rxn in mech.reactions:
        def side(stoich):
            terms = []
            for idx in sorted(stoich):
                nu = stoich[idx]
                name = mech.species[idx].name
                terms.append(name if nu == 1 else f"{nu} {name}")
            return " + ".join(terms)
        arrow = "<=>" if rxn.reversible else "=>"
        line = f"{side(rxn.reactants)} {arrow} {side(rxn.products)} " + \
            " ".join(repr(float(v)) for v in rxn.arrhenius)
        if rxn.explicit_reverse is not None:
            line += " rev: " + " ".join(repr(float(v)) for v in rxn.explicit_reverse)
        lines.append(line)
    return "\n".join(lines) + "\n"


@dataclass
class RunConfig:
    """One reactor run: initial condition, tolerances and output settings."""

    mechanism_path: str
    T0: float
    pressure: float
    Y0: dict
    t_final: float
    atol: float = 1.0e-10
    rtol: float = 1.0e-8
    method: str = "epi3v"
    h0: float = None
    h_min: float = None
    safety: float = 0.9
    facmin: float = 0.1
    facmax: float = 5.0
    embedded_order: int = 2
    clamp_mode: str = "standard"
    reverse_rate_convention: str = "divide"
    output_dir: str = "."
    n_output_samples: int = 200
    sweep_points: list = field(default_factory=list)
    reference_tols: tuple = None

    def __post_init__(self):
        if not (self.atol > 0 and self.rtol > 0 and self.t_final > 0):
            raise MechIoError("BadConfigValue",
                              "atol, rtol and t_final must be positive")
        if self.method not in ("epi3v", "exp_euler"):
            raise MechIoError("BadConfigValue", f"unknown method {self.method!r}")
        total = sum(self.Y0.values())
        if abs(total - 1.0) > MASS_SUM_TOL:
            raise MechIoError("MassFractionSum",
                              f"initial mass fractions sum to {total}, not 1")
        self.Y0 = {k: v / total for k, v in self.Y0.items()}


_CONFIG_FLOAT_KEYS = {
    "T0", "pressure", "t_final", "atol", "rtol", "h0", "h_min", "safety",
    "facmin", "facmax",
}
_CONFIG_STR_KEYS = {"mechanism", "method", "clamp_mode",
                    "reverse_rate_convention", "output_dir"}
_CONFIG_INT_KEYS = {"embedded_order", "n_output_samples"}


def parse_config(text):
    """Parse run-config text (line-oriented 'key value...' records)."""
    values = {}
    Y0 = {}
    sweep = []
    reference = None
    for lineno, line in _iter_lines(text):
        toks = line.split()
        key = toks[0]
        if key == "Y":
            if len(toks) != 3:
                _fail("BadConfigValue", "Y lines are 'Y <species> <fraction>'", lineno)
            name = toks[1]
            if name in Y0:
                _fail("BadConfigValue", f"duplicate Y entry for {name!r}", lineno)
            Y0[name] = _parse_float(toks[2], lineno, "mass fraction")
        elif key == "sweep":
            if len(toks) != 3:
                _fail("BadConfigValue", "sweep lines are 'sweep <atol> <rtol>'", lineno)
            sweep.append((_parse_float(toks[1], lineno), _parse_float(toks[2], lineno)))
        elif key == "reference":
            if len(toks) != 3:
                _fail("BadConfigValue",
                      "reference lines are 'reference <atol> <rtol>'", lineno)
            reference = (_parse_float(toks[1], lineno), _parse_float(toks[2], lineno))
        elif key in _CONFIG_FLOAT_KEYS:
            if len(toks) != 2:
                _fail("BadConfigValue", f"{key} takes one value", lineno)
            values[key] = _parse_float(toks[1], lineno, key)
        elif key in _CONFIG_INT_KEYS:
            if len(toks) != 2:
                _fail("BadConfigValue", f"{key} takes one value", lineno)
            try:
                values[key] = int(toks[1])
            except ValueError:
                _fail("BadNumber", f"cannot parse integer {toks[1]!r}", lineno)
        elif key in _CONFIG_STR_KEYS:
            if len(toks) != 2:
                _fail("BadConfigValue", f"{key} takes one value", lineno)
            values[key] = toks[1]
        else:
            _fail("UnknownKey", f"unknown config key {key!r}", lineno)
    for required in ("mechanism", "T0", "pressure", "t_final"):
        if required not in values:
            _fail("MissingKey", f"config lacks required key {required!r}")
    if not Y0:
        _fail("MissingKey", "config declares no initial mass fractions")
    return RunConfig(
        mechanism_path=values.pop("mechanism"),
        T0=values.pop("T0"),
        pressure=values.pop("pressure"),
        Y0=Y0,
        t_final=values.pop("t_final"),
        sweep_points=sweep,
        reference_tols=reference,
        **values,
    )


def format_float(v):
    """Shortest decimal form that round-trips to the same float."""
    return repr(float(v))


def write_csv(path_or_buf, header, rows):
    """RFC-4180-style CSV with full round-trip float precision."""
    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, float) else v
                             for v in row])
    if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
        with open(path_or_buf, "w", newline="") as fh:
            emit(fh)
    else:
        emit(path_or_buf)


def read_csv(path):
    """Read back a CSV written by write_csv; numeric fields become floats."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for row in reader:
            parsed = []
            for cell in row:
                try:
                    parsed.append(float(cell))
                except ValueError:
                    parsed.append(cell)
            rows.append(parsed)
    return header, rows


def steps_csv_rows(records):
    """Rows for steps.csv, one per step attempt."""
    return [(float(r.t), float(r.h), int(r.accepted), float(r.err_scaled),
             int(r.krylov_dim), int(r.substeps), int(r.kiops_calls),
             int(r.cpu_ns))
            for r in records]

STEPS_CSV_HEADER = ("t", "h", "accepted", "err_est", "krylov_dim", "substeps",
                    "kiops_calls", "cpu_ns")
SOLUTION_CSV_HEADER_PREFIX = ("t", "T")
SWEEP_CSV_HEADER = ("atol", "rtol", "cpu_s", "err_2norm", "err_scaled", "failed")
SPECTRUM_CSV_HEADER = ("t", "alpha", "beta", "omega", "max_real",
                       "norm_step_cost")
