"""Quantum and classical LSTM sequence classifiers.

The QLSTM cell keeps the usual LSTM wiring but each gate network is a small
variational circuit read out through Pauli-Z expectations::

    v   = [h_{t-1}, x_t]
    u   = W_in v
    f   = sigmoid(P_f QNN_f(u))      i = sigmoid(P_i QNN_i(u))
    g   = tanh(P_g QNN_g(u))         o = sigmoid(P_o QNN_o(u))
    c_t = f * c_{t-1} + i * g
    m   = o * tanh(c_t)
    h_t = P_h QNN_h(W_m m)           y_t = P_y QNN_y(W_m m)

The ``P_*``, ``W_in`` and ``W_m`` affine maps adapt between the qubit count
and the hidden / class sizes.

Each QNN circuit on ``Q`` qubits: H on every qubit, ``RY(arctan x_i)``,
``RZ(arctan x_i^2)``; then per variational layer a ring of CNOTs
``q_i -> q_{(i+k) mod Q}`` for every offset ``k``, followed by one trainable
RY per qubit; output ``(<Z_0>, ..., <Z_{Q-1}>)``.

Two implementations of that circuit live here: :func:`qnn_forward` builds a
:class:`~finqnlp.qsim.Circuit` and runs it through the dense simulator, and
:class:`QnnLayer` is a batched torch version used for training (autograd
gives exact circuit gradients).  The test-suite checks one against the other.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .exceptions import DimensionMismatch, EmptySequence
from .qsim import Circuit, StateVector, expectation_z, run_circuit

DTYPE = torch.float64
CDTYPE = torch.complex128
GATES = ("f", "i", "g", "o", "h", "y")


@dataclass(frozen=True)
class QnnConfig:
    n_qubits: int = 4
    n_layers: int = 1
    cnot_offsets: tuple = (1, 2)

    def __post_init__(self):
        object.__setattr__(self, "cnot_offsets", tuple(int(k) for k in self.cnot_offsets))
        if self.n_qubits < 2:
            raise ValueError("a QNN needs at least two qubits")
        if self.n_layers < 0:
            raise ValueError("n_layers must be non-negative")
        if any(k % self.n_qubits == 0 for k in self.cnot_offsets):
            raise ValueError(f"CNOT offsets must be nonzero mod {self.n_qubits}")

    def cnot_pairs(self):
        n = self.n_qubits
        return [(i, (i + k) % n) for k in self.cnot_offsets for i in range(n)]

    def to_dict(self):
        return {**asdict(self), "cnot_offsets": list(self.cnot_offsets)}


# -- reference path through the dense simulator -----------------------------

def qnn_circuit(config: QnnConfig, angles, x) -> Circuit:
    angles = np.asarray(angles, dtype=float).reshape(config.n_layers, config.n_qubits)
    x = np.asarray(x, dtype=float)
    if x.shape != (config.n_qubits,):
        raise DimensionMismatch(f"QNN input must have length {config.n_qubits}, got shape {x.shape}")
    circ = Circuit(config.n_qubits)
    for q in range(config.n_qubits):
        circ.append("H", [q])
        circ.append("RY", [q], math.atan(x[q]))
        circ.append("RZ", [q], math.atan(x[q] ** 2))
    for layer in angles:
        for c, t in config.cnot_pairs():
            circ.append("CNOT", [c, t])
        for q, theta in enumerate(layer):
            circ.append("RY", [q], float(theta))
    return circ


def qnn_forward(config: QnnConfig, angles, x) -> np.ndarray:
    state = run_circuit(qnn_circuit(config, angles, x))
    return np.array([expectation_z(state, q) for q in range(config.n_qubits)])


# -- batched torch simulator -----------------------------------------------

class QnnLayer(nn.Module):
    """Batched exact simulation of the QNN circuit, ``(B, Q) -> (B, Q)``."""

    def __init__(self, config: QnnConfig, generator=None):
        super().__init__()
        self.config = config
        q = config.n_qubits
        self.weights = nn.Parameter(
            torch.rand(config.n_layers, q, generator=generator, dtype=DTYPE) * (2 * math.pi)
        )
        idx = torch.arange(2**q)
        perm = idx.clone()
        for c, t in config.cnot_pairs():
            step = torch.where((idx >> c) & 1 == 1, idx ^ (1 << t), idx)
            perm = perm[step]
        self.register_buffer("ring", perm, persistent=False)
        bits = torch.stack([(idx >> k) & 1 for k in range(q)])
        self.register_buffer("z_signs", (1 - 2 * bits).to(DTYPE), persistent=False)

    def encode(self, x):
        a = torch.atan(x) / 2
        b = torch.atan(x**2) / 2
        # RY(2a) H |0>, real
        v0 = (torch.cos(a) - torch.sin(a)) / math.sqrt(2)
        v1 = (torch.sin(a) + torch.cos(a)) / math.sqrt(2)
        phase = torch.polar(torch.ones_like(b), -b)
        amps = torch.stack([v0 * phase, v1 * phase.conj()], dim=-1)  # (B, Q, 2)
        psi = amps[:, -1]
        for k in range(self.config.n_qubits - 2, -1, -1):
            psi = (psi[:, :, None] * amps[:, k, None, :]).reshape(x.shape[0], -1)
        return psi

    def forward(self, x):
        q = self.config.n_qubits
        if x.shape[-1] != q:
            raise DimensionMismatch(f"QNN input must have {q} features, got {x.shape[-1]}")
        psi = self.encode(x)
        batch = psi.shape[0]
        for layer in self.weights:
            psi = psi[:, self.ring]
            for k in range(q):
                c, s = torch.cos(layer[k] / 2), torch.sin(layer[k] / 2)
                view = psi.reshape(batch, 2 ** (q - 1 - k), 2, 2**k)
                lo, hi = view[:, :, 0], view[:, :, 1]
                psi = torch.stack([c * lo - s * hi, s * lo + c * hi], dim=2).reshape(batch, -1)
        probs = psi.real**2 + psi.imag**2
        return probs @ self.z_signs.T


def _linear(fan_in, fan_out, generator):
    layer = nn.Linear(fan_in, fan_out, dtype=DTYPE)
    bound = 1 / math.sqrt(fan_in)
    with torch.no_grad():
        layer.weight.copy_((torch.rand(fan_out, fan_in, generator=generator, dtype=DTYPE) * 2 - 1) * bound)
        layer.bias.copy_((torch.rand(fan_out, generator=generator, dtype=DTYPE) * 2 - 1) * bound)
    return layer


class QLSTMCell(nn.Module):
    def __init__(self, input_size, hidden_size=4, n_classes=3, qnn=QnnConfig(), output_is_hidden=False,
                 generator=None):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.n_classes = n_classes
        self.output_is_hidden = output_is_hidden
        q = qnn.n_qubits
        names = GATES[:5] if output_is_hidden else GATES
        self.w_in = _linear(input_size + hidden_size, q, generator)
        self.w_m = _linear(hidden_size, q, generator)
        self.qnn = nn.ModuleDict({k: QnnLayer(qnn, generator) for k in names})
        self.proj = nn.ModuleDict({k: _linear(q, n_classes if k == "y" else hidden_size, generator) for k in names})

    def _net(self, name, u):
        return self.proj[name](self.qnn[name](u))

    def forward(self, x, state, overrides=None):
        """One time step; ``overrides`` may pin any of ``f, i, g, o`` to a value (test hook)."""
        h, c = state
        if x.shape[-1] != self.input_size:
            raise DimensionMismatch(f"expected input size {self.input_size}, got {x.shape[-1]}")
        overrides = overrides or {}
        u = self.w_in(torch.cat([h, x], dim=-1))

        def gate(name, act):
            if name in overrides:
                return torch.as_tensor(overrides[name], dtype=DTYPE).expand_as(h)
            return act(self._net(name, u))

        f = gate("f", torch.sigmoid)
        i = gate("i", torch.sigmoid)
        g = gate("g", torch.tanh)
        c_new = f * c + i * g
        o = gate("o", torch.sigmoid)
        m = self.w_m(o * torch.tanh(c_new))
        h_new = self._net("h", m)
        y = h_new if self.output_is_hidden else self._net("y", m)
        return (h_new, c_new), y


class LSTMCell(nn.Module):
    """Classical cell with the same wiring; affine maps replace the QNNs and ``y_t = h_t``."""

    def __init__(self, input_size, hidden_size, generator=None):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.gates = nn.ModuleDict({k: _linear(input_size + hidden_size, hidden_size, generator) for k in "figo"})

    def forward(self, x, state, overrides=None):
        h, c = state
        if x.shape[-1] != self.input_size:
            raise DimensionMismatch(f"expected input size {self.input_size}, got {x.shape[-1]}")
        overrides = overrides or {}
        v = torch.cat([h, x], dim=-1)

        def gate(name, act):
            if name in overrides:
                return torch.as_tensor(overrides[name], dtype=DTYPE).expand_as(h)
            return act(self.gates[name](v))

        f = gate("f", torch.sigmoid)
        i = gate("i", torch.sigmoid)
        g = gate("g", torch.tanh)
        c_new = f * c + i * g
        h_new = gate("o", torch.sigmoid) * torch.tanh(c_new)
        return (h_new, c_new), h_new


class SequenceNet(nn.Module):
    """Embedding, recurrent cell unrolled over the sequence, then a head on ``y_T``."""

    def __init__(self, vocab_size, embedding_dim, cell, head=None, generator=None):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, embedding_dim, dtype=DTYPE)
        with torch.no_grad():
            # a lookup is a linear map from one-hot vectors, so fan_in = vocab_size
            bound = 1 / math.sqrt(vocab_size)
            self.embedding.weight.copy_((torch.rand(vocab_size, embedding_dim, generator=generator, dtype=DTYPE) * 2 - 1) * bound)
        self.cell = cell
        self.head = head if head is not None else nn.Identity()

    @property
    def vocab_size(self):
        return self.embedding.num_embeddings

    def forward(self, ids, lengths, overrides=None):
        """``ids``: ``(B, T)`` padded token ids; ``lengths``: ``(B,)``."""
        if ids.shape[1] == 0 or bool((lengths < 1).any()):
            raise EmptySequence("every sequence needs at least one token")
        ids = torch.where(ids < self.vocab_size, ids, torch.zeros_like(ids))
        emb = self.embedding(ids)
        batch = ids.shape[0]
        h = torch.zeros(batch, self.cell.hidden_size, dtype=DTYPE)
        c = torch.zeros_like(h)
        y_last = None
        for t in range(ids.shape[1]):
            (h_new, c_new), y = self.cell(emb[:, t], (h, c), overrides)
            live = (t < lengths)[:, None]
            h = torch.where(live, h_new, h)
            c = torch.where(live, c_new, c)
            y_last = y if y_last is None else torch.where(live, y, y_last)
        return self.head(y_last)


def build_qlstm(vocab_size, embedding_dim=5, hidden_size=4, n_classes=3, qnn=QnnConfig(),
                output_is_hidden=False, seed=0):
    gen = torch.Generator().manual_seed(seed)
    cell = QLSTMCell(embedding_dim, hidden_size, n_classes, qnn, output_is_hidden, gen)
    head = _linear(hidden_size, n_classes, gen) if output_is_hidden else None
    return SequenceNet(vocab_size, embedding_dim, cell, head, gen)


def build_classical_lstm(vocab_size, embedding_dim=5, hidden_size=8, fc_size=8, dropout=0.0, n_classes=3, seed=0):
    gen = torch.Generator().manual_seed(seed)
    cell = LSTMCell(embedding_dim, hidden_size, gen)
    head = nn.Sequential(
        _linear(hidden_size, fc_size, gen),
        nn.ReLU(),
        nn.Dropout(dropout),
        _linear(fc_size, n_classes, gen),
    )
    return SequenceNet(vocab_size, embedding_dim, cell, head, gen)


def pad_batch(sequences):
    lengths = torch.tensor([len(s) for s in sequences], dtype=torch.long)
    width = int(lengths.max()) if len(sequences) else 0
    ids = torch.zeros(len(sequences), width, dtype=torch.long)
    for k, seq in enumerate(sequences):
        ids[k, : len(seq)] = torch.as_tensor(seq, dtype=torch.long)
    return ids, lengths


def sequence_forward(model: SequenceNet, token_ids) -> np.ndarray:
    """Class logits for one sentence given its token ids.

    Ids outside the vocabulary are read as the unknown-token id 0.
    """
    if len(token_ids) == 0:
        raise EmptySequence("empty token sequence")
    ids, lengths = pad_batch([list(token_ids)])
    with torch.no_grad():
        return model(ids, lengths)[0].numpy()


qlstm_sequence_forward = sequence_forward
classical_lstm_forward = sequence_forward


def qlstm_cell_step(cell, state, x_t, overrides=None):
    """Single-sample cell step on numpy inputs; returns ``((h, c), y)`` as arrays."""
    h, c = (torch.as_tensor(np.asarray(v, dtype=float))[None] for v in state)
    x = torch.as_tensor(np.asarray(x_t, dtype=float))[None]
    with torch.no_grad():
        (h, c), y = cell(x, (h, c), overrides)
    return (h[0].numpy(), c[0].numpy()), y[0].numpy()
