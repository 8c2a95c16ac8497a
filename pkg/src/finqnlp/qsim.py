"""Dense statevector simulation of small parameterized circuits.

Conventions
-----------
* Qubit 0 is the least significant bit of the basis index.
* ``RX(t) = exp(-i t X/2)``, ``RY(t) = exp(-i t Y/2)``, ``RZ(t) = exp(-i t Z/2)``.
* ``CRZ(t) = diag(1, 1, 1, exp(i t))`` on (control, target).
* ``CNOT`` targets are ``(control, target)``.

Gate parameters are either literal floats or :class:`Sym` references into a
:class:`ParamStore`.  A ``Sym`` carries a multiplicative ``scale`` so that
adjoint and transposed word circuits can reuse the forward parameter names
(``scale=-1`` negates the angle).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .exceptions import DegeneratePostselection, InvalidTarget, UnresolvedParam

ROTATIONS = frozenset({"RX", "RY", "RZ", "CRZ"})
GATE_ARITY = {"H": 1, "RX": 1, "RY": 1, "RZ": 1, "CNOT": 2, "CRZ": 2}

POSTSELECT_EPS = 1e-12
CRZ_FD_STEP = 1e-6


@dataclass(frozen=True)
class Sym:
    """Symbolic angle ``scale * params[name]``."""

    name: str
    scale: float = 1.0


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    param: float | Sym | None = None

    def __post_init__(self):
        if self.kind not in GATE_ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if len(self.targets) != GATE_ARITY[self.kind]:
            raise InvalidTarget(f"{self.kind} expects {GATE_ARITY[self.kind]} target(s), got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise InvalidTarget(f"repeated target in {self.kind}{self.targets}")
        if any(t < 0 for t in self.targets):
            raise InvalidTarget(f"negative target in {self.kind}{self.targets}")
        if self.kind in ROTATIONS:
            if self.param is None:
                raise ValueError(f"{self.kind} requires a parameter")
            if not isinstance(self.param, Sym):
                object.__setattr__(self, "param", float(self.param))
        elif self.param is not None:
            raise ValueError(f"{self.kind} takes no parameter")

    @property
    def is_symbolic(self):
        return isinstance(self.param, Sym)


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 0:
            raise ValueError("n_qubits must be non-negative")
        for gate in self.gates:
            self._check(gate)

    def _check(self, gate):
        if max(gate.targets) >= self.n_qubits:
            raise InvalidTarget(f"{gate.kind}{gate.targets} outside {self.n_qubits}-qubit circuit")

    def append(self, kind, targets, param=None):
        gate = Gate(kind, tuple(targets), param)
        self._check(gate)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[Gate]):
        for gate in gates:
            self._check(gate)
            self.gates.append(gate)
        return self

    def symbols(self):
        """Parameter names in order of first appearance."""
        seen = {}
        for gate in self.gates:
            if gate.is_symbolic:
                seen.setdefault(gate.param.name, None)
        return list(seen)

    # -- JSON interchange ----------------------------------------------------

    def to_dict(self):
        gates = []
        for g in self.gates:
            entry = {"kind": g.kind, "targets": list(g.targets)}
            if isinstance(g.param, Sym):
                entry["param"] = {"sym": g.param.name}
                if g.param.scale != 1.0:
                    entry["param"]["scale"] = g.param.scale
            elif g.param is not None:
                entry["param"] = {"lit": g.param}
            gates.append(entry)
        return {"n_qubits": self.n_qubits, "gates": gates}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data):
        gates = []
        for entry in data["gates"]:
            raw = entry.get("param")
            if raw is None:
                param = None
            elif "sym" in raw:
                param = Sym(raw["sym"], float(raw.get("scale", 1.0)))
            else:
                param = float(raw["lit"])
            gates.append(Gate(entry["kind"], tuple(entry["targets"]), param))
        return cls(int(data["n_qubits"]), gates)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class ParamStore(dict):
    """Mapping ``name -> angle`` (radians)."""

    def resolve(self, param):
        if isinstance(param, Sym):
            try:
                return param.scale * float(self[param.name])
            except KeyError:
                raise UnresolvedParam(param.name) from None
        return param


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    @classmethod
    def zeros(cls, n_qubits):
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def from_bits(cls, bits):
        """Basis state with ``bits[q]`` on qubit ``q``."""
        index = sum(int(b) << q for q, b in enumerate(bits))
        amps = np.zeros(2 ** len(bits), dtype=np.complex128)
        amps[index] = 1.0
        return cls(len(bits), amps)

    @property
    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def copy(self):
        return StateVector(self.n_qubits, self.amplitudes.copy())


# -- gate matrices ---------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)


def rx_matrix(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def ry_matrix(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rz_matrix(theta):
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=np.complex128)


def single_qubit_matrix(kind, theta=None):
    if kind == "H":
        return _H
    return {"RX": rx_matrix, "RY": ry_matrix, "RZ": rz_matrix}[kind](theta)


def _apply_1q(amps, n, q, mat):
    psi = amps.reshape(2 ** (n - 1 - q), 2, 2**q)
    return np.einsum("ij,ajb->aib", mat, psi).reshape(-1)


def _apply(amps, n, gate, angle):
    if gate.kind in ("H", "RX", "RY", "RZ"):
        return _apply_1q(amps, n, gate.targets[0], single_qubit_matrix(gate.kind, angle))
    c, t = gate.targets
    idx = np.arange(amps.size)
    if gate.kind == "CNOT":
        perm = np.where((idx >> c) & 1, idx ^ (1 << t), idx)
        return amps[perm]
    both = ((idx >> c) & 1) & ((idx >> t) & 1)
    return np.where(both == 1, amps * np.exp(1j * angle), amps)


def apply_gate(state: StateVector, gate: Gate, params: Mapping[str, float] | None = None) -> StateVector:
    """Return the state after ``gate``; the input is not modified."""
    if max(gate.targets) >= state.n_qubits:
        raise InvalidTarget(f"{gate.kind}{gate.targets} on {state.n_qubits}-qubit state")
    angle = _resolve(gate, params)
    return StateVector(state.n_qubits, _apply(state.amplitudes, state.n_qubits, gate, angle))


def _resolve(gate, params):
    if gate.param is None:
        return None
    if isinstance(gate.param, Sym):
        if params is None or gate.param.name not in params:
            raise UnresolvedParam(gate.param.name)
        return gate.param.scale * float(params[gate.param.name])
    return gate.param


def run_circuit(circuit: Circuit, params=None, initial: StateVector | None = None) -> StateVector:
    n = circuit.n_qubits
    if initial is None:
        initial = StateVector.zeros(n)
    elif initial.n_qubits != n:
        raise InvalidTarget(f"initial state has {initial.n_qubits} qubits, circuit has {n}")
    amps = initial.amplitudes
    for gate in circuit.gates:
        amps = _apply(amps, n, gate, _resolve(gate, params))
    return StateVector(n, amps if amps is not initial.amplitudes else amps.copy())


def expectation_z(state: StateVector, qubit: int) -> float:
    if not 0 <= qubit < state.n_qubits:
        raise InvalidTarget(f"qubit {qubit} outside {state.n_qubits}-qubit state")
    probs = state.probabilities
    bit = (np.arange(probs.size) >> qubit) & 1
    return float(probs[bit == 0].sum() - probs[bit == 1].sum())


def postselection_mask(n_qubits, pattern: Mapping[int, int]):
    idx = np.arange(2**n_qubits)
    mask = np.ones(idx.size, dtype=bool)
    for q, b in pattern.items():
        mask &= ((idx >> q) & 1) == b
    return mask


def postselect(state: StateVector, pattern: Mapping[int, int]):
    """Condition ``state`` on the qubits in ``pattern`` reading the given bits.

    Returns ``(success_prob, conditional)`` where ``conditional`` lives on the
    remaining qubits in increasing order of their original index.  Raises
    :class:`DegeneratePostselection` when the success probability is below
    ``1e-12``; the exception carries the probability.
    """
    n = state.n_qubits
    for q, b in pattern.items():
        if not 0 <= q < n:
            raise InvalidTarget(f"postselected qubit {q} outside {n}-qubit state")
        if b not in (0, 1):
            raise ValueError(f"postselection bit must be 0 or 1, got {b!r}")
    mask = postselection_mask(n, pattern)
    kept = state.amplitudes[mask]
    success = float(np.sum(np.abs(kept) ** 2))
    if success < POSTSELECT_EPS:
        raise DegeneratePostselection(success)
    # Boolean masking preserves index order, so the surviving amplitudes are
    # already laid out over the free qubits with the same LSB convention.
    return success, StateVector(n - len(pattern), kept / math.sqrt(success))


# -- gradients -------------------------------------------------------------

def param_shift_grad(circuit: Circuit, params, scalar_fn: Callable[[StateVector], float]):
    """Gradient of ``scalar_fn(run_circuit(circuit, params))``.

    Single-qubit rotations use the two-term shift rule with shifts of
    ``+-pi/2``; CRZ occurrences fall back to central differences with step
    ``1e-6``.  Shared parameters sum the per-occurrence contributions.
    ``scalar_fn`` may also return a numpy array, in which case every gradient
    entry is an array of the same shape.  Names present in ``params`` but not
    in the circuit get a zero gradient.
    """
    n = circuit.n_qubits
    gates = circuit.gates
    angles = [_resolve(g, params) for g in gates]

    # prefix[k] is the state before gate k
    prefix = [StateVector.zeros(n).amplitudes]
    for g, a in zip(gates, angles):
        prefix.append(_apply(prefix[-1], n, g, a))

    def tail(k, angle):
        amps = _apply(prefix[k], n, gates[k], angle)
        for g, a in zip(gates[k + 1:], angles[k + 1:]):
            amps = _apply(amps, n, g, a)
        return np.asarray(scalar_fn(StateVector(n, amps)), dtype=float)

    zero = np.zeros_like(np.asarray(scalar_fn(StateVector(n, prefix[-1])), dtype=float))
    grads = {name: zero.copy() for name in (params or {})}
    for k, g in enumerate(gates):
        if not g.is_symbolic:
            continue
        a = angles[k]
        if g.kind == "CRZ":
            d = (tail(k, a + CRZ_FD_STEP) - tail(k, a - CRZ_FD_STEP)) / (2 * CRZ_FD_STEP)
        else:
            d = 0.5 * (tail(k, a + math.pi / 2) - tail(k, a - math.pi / 2))
        grads[g.param.name] = grads.get(g.param.name, zero.copy()) + g.param.scale * d
    if zero.ndim == 0:
        return {name: float(v) for name, v in grads.items()}
    return grads


# -- circuit algebra -------------------------------------------------------

def _scaled(param, factor):
    if isinstance(param, Sym):
        return Sym(param.name, param.scale * factor)
    return param * factor


def dagger(gates: Iterable[Gate]) -> list[Gate]:
    """Gates of the inverse circuit (reverse order, negated angles)."""
    out = []
    for g in reversed(list(gates)):
        out.append(Gate(g.kind, g.targets, None if g.param is None else _scaled(g.param, -1.0)))
    return out


def transpose(gates: Iterable[Gate]) -> list[Gate]:
    """Gates of the transposed circuit.

    Every gate in the set is symmetric except RY, whose transpose is RY(-t).
    """
    out = []
    for g in reversed(list(gates)):
        param = _scaled(g.param, -1.0) if g.kind == "RY" else g.param
        out.append(Gate(g.kind, g.targets, param))
    return out


def shift_targets(gates: Iterable[Gate], mapping: Mapping[int, int] | Callable[[int], int]) -> list[Gate]:
    fn = mapping if callable(mapping) else mapping.__getitem__
    return [Gate(g.kind, tuple(fn(t) for t in g.targets), g.param) for g in gates]
