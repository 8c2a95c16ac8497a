"""scikit-learn compatible sentiment classifiers.

All three models take ``X`` as a sequence of sentences (raw strings or token
lists) and integer labels ``y``:

* :class:`LSTMClassifier` -- classical baseline, 3 classes.
* :class:`QLSTMClassifier` -- LSTM with variational-circuit gate networks.
* :class:`DisCoCatClassifier` -- grammar-compiled post-selected circuits,
  binary labels only.

``fit`` additionally accepts a validation split and a per-epoch callback;
the per-epoch metrics end up in ``history_``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.base import BaseEstimator, ClassifierMixin

from .data import build_vocab, encode
from .discocat import AnsatzConfig, compile_derivation, discocat_grad, sentiment_prob
from .exceptions import FinQNLPError, GrammarError, NonFiniteGradient
from .grammar import Lexicon, parse_sentence
from .qlstm import QnnConfig, build_classical_lstm, build_qlstm, pad_batch
from .qsim import ParamStore
from .train import AdamState, EpochRecord, adam_step, run_epochs
from .validation import check_is_fitted, check_labels, check_texts

CHECKPOINT_FORMAT = "finqnlp-checkpoint"
CHECKPOINT_VERSION = 1


class _TorchSequenceClassifier(ClassifierMixin, BaseEstimator):
    _kind = None

    def _build_net(self, vocab_size):
        raise NotImplementedError

    def _ids(self, tokens):
        return pad_batch([encode(t, self.vocab_) or [0] for t in tokens])

    def fit(self, X, y, X_val=None, y_val=None, callback=None, early_stop_patience=None):
        tokens = check_texts(X)
        y = check_labels(y, self.n_classes, len(tokens))
        val_tokens = check_texts(X_val) if X_val is not None else None
        if val_tokens is not None:
            y_val = check_labels(y_val, self.n_classes, len(val_tokens))
        self.classes_ = np.arange(self.n_classes)
        self.vocab_ = build_vocab(tokens, self.min_count)
        torch.manual_seed(self.random_state)
        self.net_ = self._build_net(len(self.vocab_) + 1)
        self.optimizer_ = torch.optim.Adam(self.net_.parameters(), lr=self.learning_rate,
                                           betas=(0.9, 0.999), eps=1e-8)
        self.history_ = run_epochs(self, tokens, y, val_tokens, y_val, self.epochs, self.batch_size,
                                   self.random_state, callback, early_stop_patience)
        return self

    def _train_batch(self, X, y):
        self.net_.train()
        ids, lengths = self._ids(X)
        loss = F.cross_entropy(self.net_(ids, lengths), torch.as_tensor(y, dtype=torch.long))
        self.optimizer_.zero_grad()
        loss.backward()
        for name, p in self.net_.named_parameters():
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise NonFiniteGradient(f"gradient for {name} is not finite")
        self.optimizer_.step()
        return loss.item()

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        tokens = check_texts(X)
        self.net_.eval()
        out = []
        with torch.no_grad():
            for lo in range(0, len(tokens), 512):
                ids, lengths = self._ids(tokens[lo:lo + 512])
                out.append(self.net_(ids, lengths).numpy())
        return np.concatenate(out) if out else np.zeros((0, self.n_classes))

    def predict_proba(self, X):
        logits = self.decision_function(X)
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.decision_function(X).argmax(axis=1)

    def _state(self):
        return {
            "vocab": self.vocab_,
            "tensors": {k: v.tolist() for k, v in self.net_.state_dict().items()},
        }

    def _restore(self, state):
        self.vocab_ = dict(state["vocab"])
        self.classes_ = np.arange(self.n_classes)
        self.net_ = self._build_net(len(self.vocab_) + 1)
        self.net_.load_state_dict({k: torch.tensor(v, dtype=torch.float64) for k, v in state["tensors"].items()})


class LSTMClassifier(_TorchSequenceClassifier):
    """Embedding, one LSTM layer, ReLU hidden layer, dropout, linear logits."""

    _kind = "lstm"

    def __init__(self, embedding_dim=5, hidden_size=8, fc_size=8, dropout=0.0, n_classes=3,
                 epochs=20, batch_size=16, learning_rate=0.005, min_count=1, random_state=0):
        self.embedding_dim = embedding_dim
        self.hidden_size = hidden_size
        self.fc_size = fc_size
        self.dropout = dropout
        self.n_classes = n_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.min_count = min_count
        self.random_state = random_state

    def _build_net(self, vocab_size):
        return build_classical_lstm(vocab_size, self.embedding_dim, self.hidden_size, self.fc_size,
                                    self.dropout, self.n_classes, self.random_state)


class QLSTMClassifier(_TorchSequenceClassifier):
    """LSTM whose six gate networks are 4-qubit variational circuits by default."""

    _kind = "qlstm"

    def __init__(self, embedding_dim=5, hidden_size=4, n_qubits=4, n_layers=1, cnot_offsets=(1, 2),
                 output_is_hidden=False, n_classes=3, epochs=20, batch_size=16, learning_rate=0.01,
                 min_count=1, random_state=0):
        self.embedding_dim = embedding_dim
        self.hidden_size = hidden_size
        self.n_qubits = n_qubits
        self.n_layers = n_layers
        self.cnot_offsets = cnot_offsets
        self.output_is_hidden = output_is_hidden
        self.n_classes = n_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.min_count = min_count
        self.random_state = random_state

    @property
    def qnn_config(self):
        return QnnConfig(self.n_qubits, self.n_layers, tuple(self.cnot_offsets))

    def _build_net(self, vocab_size):
        return build_qlstm(vocab_size, self.embedding_dim, self.hidden_size, self.n_classes,
                           self.qnn_config, self.output_is_hidden, self.random_state)


class DisCoCatClassifier(ClassifierMixin, BaseEstimator):
    """Binary sentiment from grammar-compiled, post-selected circuits.

    Sentences the grammar cannot reduce to ``s`` are skipped during ``fit``
    (counted in ``n_skipped_``) and abstained on (``predict`` returns -1,
    probability 0.5) at prediction time; so are sentences whose
    postselection has vanishing probability.  Words never seen in training
    get all-zero angles at prediction time.
    """

    def __init__(self, qubits_noun=1, qubits_sentence=1, n_layers=None, rewrite=True, lexicon=None,
                 fallback=True, epochs=20, batch_size=16, learning_rate=0.01, random_state=0):
        self.qubits_noun = qubits_noun
        self.qubits_sentence = qubits_sentence
        self.n_layers = n_layers
        self.rewrite = rewrite
        self.lexicon = lexicon
        self.fallback = fallback
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    @property
    def ansatz(self):
        return AnsatzConfig({"n": self.qubits_noun, "s": self.qubits_sentence}, self.n_layers)

    @staticmethod
    def _lexicon(lexicon):
        if lexicon is None or isinstance(lexicon, Lexicon):
            return lexicon
        return Lexicon.load(lexicon)

    @classmethod
    def parseable(cls, dataset, lexicon=None, fallback=True):
        """Indices of sentences the grammar can reduce, plus the skipped texts."""
        lex = cls._lexicon(lexicon)
        keep, skipped = [], []
        for k, sent in enumerate(dataset):
            try:
                parse_sentence(list(sent.tokens), lex, fallback)
                keep.append(k)
            except GrammarError:
                skipped.append(sent.text)
        return keep, skipped

    def _compile(self, tokens, params=None, rng=None):
        key = tuple(tokens)
        if key not in self._cache:
            try:
                deriv = parse_sentence(tokens, self._lex, self.fallback)
                self._cache[key] = compile_derivation(deriv, self.ansatz, params, rng, self.rewrite)
            except GrammarError:
                self._cache[key] = None
        return self._cache[key]

    def _setup(self):
        self._lex = self._lexicon(self.lexicon)
        self._cache = {}

    def fit(self, X, y, X_val=None, y_val=None, callback=None, early_stop_patience=None):
        tokens = check_texts(X)
        y = check_labels(y, 2, len(tokens))
        val_tokens = check_texts(X_val) if X_val is not None else None
        if val_tokens is not None:
            y_val = check_labels(y_val, 2, len(val_tokens))
        self._setup()
        self.classes_ = np.array([0, 1])
        self.params_ = ParamStore()
        rng = np.random.default_rng(self.random_state)
        compiled = [self._compile(t, self.params_, rng) for t in tokens]
        self.n_skipped_ = sum(c is None for c in compiled)
        self.adam_ = AdamState()
        self.history_ = run_epochs(self, tokens, y, val_tokens, y_val, self.epochs, self.batch_size,
                                   self.random_state, callback, early_stop_patience)
        return self

    def _train_batch(self, X, y):
        grads = {name: 0.0 for name in self.params_}
        used, total = 0, 0.0
        for tokens, label in zip(X, y):
            comp = self._compile(tokens)
            if comp is None:
                continue
            loss, g = discocat_grad(comp, self.params_, int(label))
            for name in comp.param_names:
                grads[name] += g[name]
            total += loss
            used += 1
        if used:
            grads = {k: v / used for k, v in grads.items()}
            adam_step(self.adam_, self.params_, grads, self.learning_rate)
        return total / max(used, 1)

    def _details(self, X):
        check_is_fitted(self, "params_")
        if not hasattr(self, "_cache"):
            self._setup()
        p = np.full(len(X), 0.5)
        abstain = np.zeros(len(X), dtype=bool)
        for k, tokens in enumerate(check_texts(X)):
            comp = self._compile(tokens)
            if comp is None:
                abstain[k] = True
                continue
            missing = [n for n in comp.param_names if n not in self.params_]
            params = self.params_ if not missing else ParamStore({**self.params_, **dict.fromkeys(missing, 0.0)})
            _, p[k], abstain[k] = sentiment_prob(comp, params)
        return p, abstain

    def predict_proba(self, X):
        p, _ = self._details(X)
        return np.column_stack([1 - p, p])

    def predict(self, X):
        p, abstain = self._details(X)
        return np.where(abstain, -1, (p > 0.5).astype(int))

    def _state(self):
        lex = self._lexicon(self.lexicon)
        return {"params": dict(self.params_), "lexicon": lex.to_tsv() if lex is not None else None}

    def _restore(self, state):
        self.params_ = ParamStore(state["params"])
        self.classes_ = np.array([0, 1])
        if state.get("lexicon") is not None:
            self.lexicon = Lexicon.from_tsv(state["lexicon"])
        self._setup()


KINDS = {"lstm": LSTMClassifier, "qlstm": QLSTMClassifier, "discocat": DisCoCatClassifier}


def _kind_of(model):
    for kind, cls in KINDS.items():
        if type(model) is cls:
            return kind
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def save_checkpoint(model, path):
    """Write config and every fitted parameter as JSON (floats round-trip exactly)."""
    params = model.get_params()
    if isinstance(params.get("lexicon"), Lexicon):
        params["lexicon"] = None
    elif params.get("lexicon") is not None:
        params["lexicon"] = str(params["lexicon"])
    if "cnot_offsets" in params:
        params["cnot_offsets"] = list(params["cnot_offsets"])
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": _kind_of(model),
        "params": params,
        "history": [asdict(r) for r in getattr(model, "history_", [])],
        "state": model._state(),
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload))
    os.replace(tmp, path)


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise FinQNLPError(f"{path} is not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise FinQNLPError(f"unsupported checkpoint version {payload.get('version')}")
    params = dict(payload["params"])
    if "cnot_offsets" in params:
        params["cnot_offsets"] = tuple(params["cnot_offsets"])
    if params.get("lexicon") is not None and not Path(params["lexicon"]).exists():
        params["lexicon"] = None  # the embedded copy below is authoritative
    model = KINDS[payload["kind"]](**params)
    model._restore(payload["state"])
    model.history_ = [EpochRecord(**r) for r in payload["history"]]
    return model
