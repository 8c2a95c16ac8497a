"""Sentiment classification of financial sentences with exactly simulated quantum models.

Submodules: ``qsim`` (statevector simulator), ``grammar`` (pregroup parsing),
``discocat`` (sentence circuits), ``qlstm`` (quantum and classical LSTM
networks), ``train``, ``data`` and ``cli``.  The estimators below follow the
scikit-learn conventions.
"""

from .estimators import DisCoCatClassifier, LSTMClassifier, QLSTMClassifier, load_checkpoint, save_checkpoint
from .exceptions import FinQNLPError

__all__ = [
    "DisCoCatClassifier",
    "FinQNLPError",
    "LSTMClassifier",
    "QLSTMClassifier",
    "load_checkpoint",
    "save_checkpoint",
]
__version__ = "0.1.0"
