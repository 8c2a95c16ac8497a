"""DisCoCat diagrams and their compilation to post-selected circuits.

A derivation from :mod:`finqnlp.grammar` is turned into a :class:`Diagram`
(word states joined by cups, one open ``s`` wire).  :func:`bend_rewrite`
turns single-wire word states into effects on the wire they were cupped
with, and :func:`compile_diagram` produces a :class:`CompiledSentence` whose
conditional distribution on the sentence qubit is the model's output.

Word circuits
    1 qubit: ``RX(t0)``, ``RZ(t1)``, ``RX(t2)`` applied in that order.
    d > 1 qubits: d IQP layers, each an H on every qubit followed by
    ``CRZ`` on neighbouring pairs ``(i, i+1)`` with its own angle.

An effect box applies the *transpose* of the word circuit and postselects
its qubits on 0, which is exactly the contraction of the word state with the
partner wire through a cup.  Remaining cups compile to Bell effects:
``CNOT(left, right)``, ``H(left)``, postselect both on 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegeneratePostselection, MissingAnsatz
from .grammar import Derivation
from .qsim import (
    POSTSELECT_EPS,
    Circuit,
    Gate,
    ParamStore,
    Sym,
    param_shift_grad,
    postselect,
    postselection_mask,
    run_circuit,
    transpose,
)

P_CLAMP = 1e-7


@dataclass
class Box:
    word: str
    type: object
    kind: str  # "state" or "effect"
    wires: list  # wire positions owned by a state box
    target: int | None = None  # wire an effect box is applied to

    @property
    def key(self):
        return param_prefix(self.word, self.type)


@dataclass
class Diagram:
    simples: list  # SimpleType per wire position
    boxes: list
    cups: list
    open_wires: list

    def wire_owner(self):
        owner = {}
        for b, box in enumerate(self.boxes):
            for w in box.wires:
                owner[w] = b
        return owner

    def to_dict(self):
        return {
            "wires": [str(t) for t in self.simples],
            "boxes": [{"word": b.word, "type": str(b.type), "kind": b.kind, "wires": list(b.wires),
                       "target": b.target} for b in self.boxes],
            "cups": [list(c) for c in self.cups],
            "open_wires": list(self.open_wires),
        }


def param_prefix(word, typ):
    return f"{word}:{str(typ).replace(' ', '')}"


def build_diagram(derivation: Derivation) -> Diagram:
    boxes = [
        Box(word, typ, "state", list(span))
        for (word, typ), span in zip(derivation.typed_words, derivation.word_spans)
    ]
    return Diagram(list(derivation.simples), boxes, [tuple(c) for c in derivation.cups], list(derivation.residue))


def bend_rewrite(diagram: Diagram) -> Diagram:
    """Replace cupped single-wire states by effects on the partner wire.

    Boxes are visited left to right.  A box is bent only when its partner
    wire still belongs to a state box, so a cup between two single-wire
    states bends the left one and keeps the right one as a state.
    """
    boxes = [Box(b.word, b.type, b.kind, list(b.wires), b.target) for b in diagram.boxes]
    cups = list(diagram.cups)
    owner = diagram.wire_owner()
    for b, box in enumerate(boxes):
        if box.kind != "state" or len(box.wires) != 1:
            continue
        (w,) = box.wires
        cup = next((c for c in cups if w in c), None)
        if cup is None:
            continue
        partner = cup[1] if cup[0] == w else cup[0]
        if boxes[owner[partner]].kind != "state":
            continue
        boxes[b] = Box(box.word, box.type, "effect", [], partner)
        cups.remove(cup)
    return Diagram(list(diagram.simples), boxes, cups, list(diagram.open_wires))


@dataclass
class AnsatzConfig:
    qubits_per_atom: dict = field(default_factory=lambda: {"n": 1, "s": 1})
    n_layers: int | None = None  # None: d layers for a d-qubit box

    def __post_init__(self):
        if any(int(v) < 1 for v in self.qubits_per_atom.values()):
            raise ValueError("every atom needs at least one qubit")

    def width(self, simple):
        try:
            return int(self.qubits_per_atom[simple.atom])
        except KeyError:
            raise MissingAnsatz(simple.atom) from None

    def layers(self, d):
        return d if self.n_layers is None else self.n_layers


def word_gates(prefix, qubits, ansatz: AnsatzConfig) -> list:
    """State-preparation gates of one word box on ``qubits``."""
    if len(qubits) == 1:
        (q,) = qubits
        return [
            Gate("RX", (q,), Sym(f"{prefix}/0")),
            Gate("RZ", (q,), Sym(f"{prefix}/1")),
            Gate("RX", (q,), Sym(f"{prefix}/2")),
        ]
    gates, k = [], 0
    for _ in range(ansatz.layers(len(qubits))):
        gates += [Gate("H", (q,)) for q in qubits]
        for a, b in zip(qubits, qubits[1:]):
            gates.append(Gate("CRZ", (a, b), Sym(f"{prefix}/{k}")))
            k += 1
    return gates


@dataclass
class CompiledSentence:
    circuit: Circuit
    postselect_pattern: dict
    s_qubits: list
    param_names: list
    words: list = field(default_factory=list)

    def __post_init__(self):
        if set(self.s_qubits) & set(self.postselect_pattern):
            raise ValueError("sentence qubits overlap the postselection pattern")

    def sidecar(self):
        return {"postselect": {str(q): b for q, b in self.postselect_pattern.items()}, "s_qubits": list(self.s_qubits)}

    def to_dict(self):
        return {"circuit": self.circuit.to_dict(), **self.sidecar()}


def compile_diagram(diagram: Diagram, ansatz: AnsatzConfig | None = None, params: ParamStore | None = None,
                    rng=None) -> CompiledSentence:
    """Lower ``diagram`` to a circuit plus postselection pattern.

    Qubits are allocated to state-box wires left to right.  Gates appear as
    all word states first, then effects, then Bell effects for the remaining
    cups.  When ``params`` is given, any parameter it lacks is initialised
    uniformly in ``[0, 2 pi)`` from ``rng``.
    """
    ansatz = ansatz or AnsatzConfig()
    qubits_of = {}
    n = 0
    for box in diagram.boxes:
        if box.kind == "state":
            for w in box.wires:
                width = ansatz.width(diagram.simples[w])
                qubits_of[w] = list(range(n, n + width))
                n += width
    for box in diagram.boxes:
        if box.kind == "effect":
            ansatz.width(box.type[0])

    gates, pattern = [], {}
    for box in diagram.boxes:
        if box.kind == "state":
            qs = [q for w in box.wires for q in qubits_of[w]]
            gates += word_gates(box.key, qs, ansatz)
    for box in diagram.boxes:
        if box.kind == "effect":
            qs = qubits_of[box.target]
            gates += transpose(word_gates(box.key, qs, ansatz))
            pattern.update({q: 0 for q in qs})
    for a, b in diagram.cups:
        # qubit j of the left wire pairs with qubit j of the right wire
        for qa, qb in zip(qubits_of[a], qubits_of[b]):
            gates += [Gate("CNOT", (qa, qb)), Gate("H", (qa,))]
            pattern.update({qa: 0, qb: 0})

    circuit = Circuit(n, gates)
    s_qubits = [q for w in diagram.open_wires for q in qubits_of[w]]
    names = circuit.symbols()
    if params is not None:
        rng = np.random.default_rng(rng)
        for name in names:
            if name not in params:
                params[name] = float(rng.uniform(0, 2 * math.pi))
    return CompiledSentence(circuit, dict(sorted(pattern.items())), s_qubits, names,
                            [box.word for box in diagram.boxes])


def compile_derivation(derivation, ansatz=None, params=None, rng=None, rewrite=True):
    diagram = build_diagram(derivation)
    if rewrite:
        diagram = bend_rewrite(diagram)
    return compile_diagram(diagram, ansatz, params, rng)


# -- evaluation ------------------------------------------------------------

def _joint(compiled: CompiledSentence):
    """``state -> [P(postselect and s=1), P(postselect)]``."""
    n = compiled.circuit.n_qubits
    mask = postselection_mask(n, compiled.postselect_pattern)
    (sq,) = compiled.s_qubits
    s_one = ((np.arange(2**n) >> sq) & 1) == 1

    def fn(state):
        probs = state.probabilities
        return np.array([probs[mask & s_one].sum(), probs[mask].sum()])

    return fn


def sentiment_prob(compiled: CompiledSentence, params) -> tuple[float, float, bool]:
    """Return ``(success, p_positive, degenerate)``.

    ``p_positive`` is the probability that the sentence qubit reads 1 given
    the postselection succeeded; a degenerate postselection reports 0.5.
    """
    if len(compiled.s_qubits) != 1:
        raise ValueError("binary sentiment needs exactly one sentence qubit")
    state = run_circuit(compiled.circuit, params)
    try:
        success, cond = postselect(state, compiled.postselect_pattern)
    except DegeneratePostselection as exc:
        return exc.success_prob, 0.5, True
    (sq,) = compiled.s_qubits
    # index of the s qubit among the surviving qubits
    k = sq - sum(1 for q in compiled.postselect_pattern if q < sq)
    bit = (np.arange(2**cond.n_qubits) >> k) & 1
    p_pos = float(cond.probabilities[bit == 1].sum())
    return success, min(max(p_pos, 0.0), 1.0), False


def binary_cross_entropy(p, label):
    p = min(max(p, P_CLAMP), 1 - P_CLAMP)
    return -math.log(p) if label == 1 else -math.log(1 - p)


def discocat_loss(compiled, params, label):
    _, p, _ = sentiment_prob(compiled, params)
    return binary_cross_entropy(p, label)


def discocat_grad(compiled: CompiledSentence, params, label) -> tuple[float, dict]:
    """Binary cross-entropy and its gradient for one sentence.

    ``p = joint / success`` is differentiated with the quotient rule, where
    both numerator and denominator come from one pass of the simulator's
    shift-rule engine.  Returns ``(loss, grads)``; names in ``params`` that
    the sentence does not use get 0.
    """
    if label not in (0, 1):
        raise ValueError(f"binary label expected, got {label!r}")
    fn = _joint(compiled)
    joint, success = fn(run_circuit(compiled.circuit, params))
    grads = {name: 0.0 for name in params}
    if success < POSTSELECT_EPS:
        return binary_cross_entropy(0.5, label), grads
    p = joint / success
    loss = binary_cross_entropy(p, label)
    if not P_CLAMP < p < 1 - P_CLAMP:
        return loss, grads
    dloss_dp = -1 / p if label == 1 else 1 / (1 - p)
    sub = ParamStore({k: params[k] for k in compiled.param_names})
    for name, (dj, ds) in param_shift_grad(compiled.circuit, sub, fn).items():
        grads[name] = float(dloss_dp * (dj * success - joint * ds) / success**2)
    return loss, grads
