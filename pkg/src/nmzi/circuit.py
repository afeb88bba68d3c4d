"""Cascaded NMZI circuits: element unitaries, composition, and evolution.

Time order is left to right: ``spec.elements[0]`` acts on the input first,
so the cascade operator is ``U(e_N) ... U(e_2) U(e_1)``.  Each element is
its beam splitter followed by the linear and Kerr phase on Path A.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nmzi import kernels
from nmzi.fock import (
    ElementParams,
    FockCutoff,
    SectorUnitary,
    TwoModeState,
    apply,
    beam_splitter,
    bs_eigensystem,
    coherent_input,
    kerr_phase,
)

FORMAT_TAG = "nmzi-circuit/1"


@dataclass(frozen=True)
class CircuitSpec:
    elements: tuple

    def __post_init__(self):
        elements = tuple(
            e if isinstance(e, ElementParams) else ElementParams(*e) for e in self.elements
        )
        if not elements:
            raise ValueError("a circuit needs at least one element")
        object.__setattr__(self, "elements", elements)

    def __len__(self):
        return len(self.elements)

    @property
    def n_elements(self):
        return len(self.elements)

    @classmethod
    def from_arrays(cls, theta, linear_phi, kerr_phi):
        return cls(tuple(ElementParams(*t) for t in zip(theta, linear_phi, kerr_phi)))

    def arrays(self):
        """``(theta, linear_phi, kerr_phi)`` as float arrays of length N."""
        table = np.array([e.as_tuple() for e in self.elements], dtype=float)
        return (
            np.ascontiguousarray(table[:, 0]),
            np.ascontiguousarray(table[:, 1]),
            np.ascontiguousarray(table[:, 2]),
        )

    def inverse(self):
        """Spec whose cascade undoes this one.

        The inverse of ``K(phi, kappa) BS(theta)`` is ``BS(-theta) K(-phi, -kappa)``,
        which is not itself an element; it is expressed as a pure phase element
        followed by a pure beam-splitter element at each step.
        """
        out = []
        for e in reversed(self.elements):
            out.append(ElementParams(0.0, -e.linear_phi, -e.kerr_phi))
            out.append(ElementParams(-e.theta, 0.0, 0.0))
        return CircuitSpec(tuple(out))

    def with_identity_appended(self, k=1):
        return CircuitSpec(self.elements + (ElementParams(0.0, 0.0, 0.0),) * k)


@dataclass(frozen=True)
class SimpleNmziParams:
    """Two beam splitters around a phase + Kerr arm, in interferometer angles.

    ``theta1``/``theta2`` follow the closed-form convention where the
    amplitude reaching the Kerr arm from the coherent input is
    ``cos(theta1)`` and ``eta = tan(theta1) tan(theta2)``.  In terms of the
    ``exp(i theta (a^dag b + a b^dag))`` beam splitter this is the circuit
    ``[(pi/2 - theta1, linear_phi, kerr_phi), (-theta2, 0, 0)]``; the output
    then equals the closed form up to a phase ``i^p`` on ``|p>_A``.
    """

    theta1: float
    theta2: float
    linear_phi: float
    kerr_phi: float

    @property
    def eta(self):
        return math.tan(self.theta1) * math.tan(self.theta2)

    def to_circuit(self):
        return CircuitSpec(
            (
                ElementParams(math.pi / 2 - self.theta1, self.linear_phi, self.kerr_phi),
                ElementParams(-self.theta2, 0.0, 0.0),
            )
        )


def element_unitary(p, cutoff):
    """``K(linear_phi, kerr_phi) @ BS(theta)``: beam splitter first."""
    return kerr_phase(p.linear_phi, p.kerr_phi, cutoff) @ beam_splitter(p.theta, cutoff)


def cascade_unitary(spec, cutoff):
    u = element_unitary(spec.elements[0], cutoff)
    for e in spec.elements[1:]:
        u = element_unitary(e, cutoff) @ u
    return u


def run(spec, alpha, cutoff=None):
    """Evolve vacuum (A) x coherent ``alpha`` (B) through the cascade."""
    if cutoff is None:
        cutoff = FockCutoff.for_alpha(alpha)
    state = coherent_input(alpha, cutoff)
    vecs, vals = bs_eigensystem(cutoff)
    out = kernels.evolve(vecs, vals, state.padded(), *spec.arrays())
    return TwoModeState.from_padded(out, state.truncation_deficit)


def run_by_composition(spec, alpha, cutoff):
    """Reference path: fold :func:`apply` over explicit element unitaries."""
    state = coherent_input(alpha, cutoff)
    for e in spec.elements:
        state = apply(element_unitary(e, cutoff), state)
    return state


class Simulator:
    """Repeated evaluation of one input under many parameter sets.

    Holds the padded coherent input and the beam-splitter eigensystem so the
    per-call cost is a single kernel pass.
    """

    def __init__(self, alpha, cutoff=None):
        self.alpha = complex(alpha)
        self.cutoff = cutoff if cutoff is not None else FockCutoff.for_alpha(alpha)
        self.input_state = coherent_input(self.alpha, self.cutoff)
        self._x0 = np.ascontiguousarray(self.input_state.padded())
        self._vecs, self._vals = bs_eigensystem(self.cutoff)

    def evolve(self, theta, linear_phi, kerr_phi):
        return kernels.evolve(
            self._vecs,
            self._vals,
            self._x0,
            np.ascontiguousarray(theta, dtype=float),
            np.ascontiguousarray(linear_phi, dtype=float),
            np.ascontiguousarray(kerr_phi, dtype=float),
        )

    def density(self, theta, linear_phi, kerr_phi):
        """Path-A reduced density matrix after the cascade."""
        return kernels.mode_a_density(self.evolve(theta, linear_phi, kerr_phi))

    def density_for(self, spec):
        return self.density(*spec.arrays())


# -- serialization ---------------------------------------------------------


class SpecFormatError(ValueError):
    """Malformed circuit file; ``record`` and ``field`` locate the problem."""

    def __init__(self, message, record=None, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if record is not None:
            where.append(f"record {record}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.record = record
        self.field = field
        self.line = line


@dataclass(frozen=True)
class CircuitFile:
    """A circuit together with the input it was designed for."""

    spec: CircuitSpec
    alpha: complex
    n_max: int

    @property
    def cutoff(self):
        return FockCutoff(self.n_max)


_FIELDS = ("theta", "linear_phi", "kerr_phi")


def dumps(cf):
    """Serialize; floats use ``repr`` so parsing recovers them exactly."""
    alpha = complex(cf.alpha)
    lines = [
        f"format = {FORMAT_TAG}",
        f"alpha = {alpha.real!r} {alpha.imag!r}",
        f"n_max = {cf.n_max:d}",
        f"elements = {len(cf.spec):d}",
        "# " + " ".join(_FIELDS),
    ]
    for e in cf.spec.elements:
        lines.append(" ".join(repr(v) for v in e.as_tuple()))
    return "\n".join(lines) + "\n"


def _float(token, record=None, field=None, line=None):
    try:
        value = float(token)
    except ValueError:
        raise SpecFormatError(f"not a number: {token!r}", record, field, line) from None
    if not math.isfinite(value):
        raise SpecFormatError(f"not finite: {token!r}", record, field, line)
    return value


def loads(text):
    header = {}
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            key = key.strip()
            if records:
                raise SpecFormatError("header key after element records", field=key, line=lineno)
            if key in header:
                raise SpecFormatError("duplicate header key", field=key, line=lineno)
            header[key] = (value.strip(), lineno)
            continue
        tokens = line.split()
        index = len(records)
        if len(tokens) != 3:
            raise SpecFormatError(
                f"expected 3 fields {_FIELDS}, got {len(tokens)}", record=index, line=lineno
            )
        records.append(
            tuple(_float(t, index, f, lineno) for t, f in zip(tokens, _FIELDS))
        )

    for key in ("format", "alpha", "n_max", "elements"):
        if key not in header:
            raise SpecFormatError("missing header key", field=key)
    tag, lineno = header["format"]
    if tag != FORMAT_TAG:
        raise SpecFormatError(f"unsupported format {tag!r}", field="format", line=lineno)
    value, lineno = header["alpha"]
    parts = value.split()
    if len(parts) != 2:
        raise SpecFormatError("alpha needs real and imaginary parts", field="alpha", line=lineno)
    alpha = complex(_float(parts[0], field="alpha", line=lineno), _float(parts[1], field="alpha", line=lineno))
    value, lineno = header["n_max"]
    try:
        n_max = int(value)
    except ValueError:
        raise SpecFormatError(f"not an integer: {value!r}", field="n_max", line=lineno) from None
    if n_max < 1:
        raise SpecFormatError("must be >= 1", field="n_max", line=lineno)
    value, lineno = header["elements"]
    if value != str(len(records)):
        raise SpecFormatError(
            f"header declares {value} elements, file has {len(records)}", field="elements", line=lineno
        )
    if not records:
        raise SpecFormatError("no element records", field="elements", line=lineno)
    return CircuitFile(CircuitSpec(tuple(ElementParams(*r) for r in records)), alpha, n_max)


def save(cf, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(cf))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
