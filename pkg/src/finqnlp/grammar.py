"""Pregroup types, lexicon lookup and contraction-based reduction.

Types are written as ``atom[.l|.r]*`` terms joined by ``@``; for example a
transitive verb is ``n.r @ s @ n.l``.  Adjoint order is stored as an integer
``z``: ``-1`` for a left adjoint, ``+1`` for a right adjoint, and so on.  Two
adjacent simple types ``(a, z)`` and ``(a, z + 1)`` contract to the unit, which
covers both ``a.l @ a -> 1`` and ``a @ a.r -> 1``.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .exceptions import NotASentence, TypeSyntaxError, UnknownWord

ATOMS = ("n", "s")
MAX_ADJOINT = 2


@dataclass(frozen=True, order=True)
class SimpleType:
    atom: str
    z: int = 0

    def __post_init__(self):
        if self.atom not in ATOMS:
            raise ValueError(f"unknown atom {self.atom!r}; expected one of {ATOMS}")
        if abs(self.z) > MAX_ADJOINT:
            raise ValueError(f"adjoint order {self.z} outside [-{MAX_ADJOINT}, {MAX_ADJOINT}]")

    @property
    def l(self):
        return SimpleType(self.atom, self.z - 1)

    @property
    def r(self):
        return SimpleType(self.atom, self.z + 1)

    def contracts_with(self, right: SimpleType) -> bool:
        return self.atom == right.atom and right.z == self.z + 1

    def __str__(self):
        suffix = ".l" * -self.z if self.z < 0 else ".r" * self.z
        return self.atom + suffix


@dataclass(frozen=True)
class PregroupType:
    simples: tuple[SimpleType, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "simples", tuple(self.simples))

    def __matmul__(self, other):
        return PregroupType(self.simples + other.simples)

    def __len__(self):
        return len(self.simples)

    def __iter__(self):
        return iter(self.simples)

    def __getitem__(self, i):
        return self.simples[i]

    def __str__(self):
        return " @ ".join(map(str, self.simples)) if self.simples else "1"

    @property
    def is_sentence(self):
        return self.simples == (SimpleType("s"),)


N = SimpleType("n")
S = SimpleType("s")

NOUN = PregroupType((N,))
ADJECTIVE = PregroupType((N, N.l))
DETERMINER = ADJECTIVE
TRANSITIVE_VERB = PregroupType((N.r, S, N.l))
INTRANSITIVE_VERB = PregroupType((N.r, S))
ADVERB = PregroupType((S.r, S))


def parse_type(text: str) -> PregroupType:
    """Parse ``"n.r @ s @ n.l"`` style type expressions.

    ``"1"`` denotes the empty (unit) type.  Raises :class:`TypeSyntaxError`
    with a 1-based column on malformed input.
    """
    stripped = text.strip()
    if stripped == "1":
        return PregroupType()
    simples = []
    col = 0
    for part in text.split("@"):
        lead = len(part) - len(part.lstrip())
        term = "".join(part.split())
        start = col + lead + 1
        col += len(part) + 1
        if not term:
            raise TypeSyntaxError("empty type term", text, start)
        atom, *suffixes = term.split(".")
        if atom not in ATOMS:
            raise TypeSyntaxError(f"unknown atom {atom!r}", text, start)
        z = 0
        for suf in suffixes:
            if suf == "l":
                z -= 1
            elif suf == "r":
                z += 1
            else:
                raise TypeSyntaxError(f"bad adjoint marker {suf!r}", text, start)
        if (z < 0 and "r" in suffixes) or (z > 0 and "l" in suffixes) or ("l" in suffixes and "r" in suffixes):
            raise TypeSyntaxError("mixed .l/.r adjoints", text, start)
        if abs(z) > MAX_ADJOINT:
            raise TypeSyntaxError(f"adjoint order beyond {MAX_ADJOINT}", text, start)
        simples.append(SimpleType(atom, z))
    return PregroupType(tuple(simples))


# -- lexicon ---------------------------------------------------------------

@dataclass(frozen=True)
class Lexicon:
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        for word, typ in self.entries.items():
            if not len(typ):
                raise ValueError(f"empty type for {word!r}")

    def __contains__(self, word):
        return word in self.entries

    def __getitem__(self, word):
        return self.entries[word]

    def get(self, word, default=None):
        return self.entries.get(word, default)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_tsv(cls, text: str):
        entries = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                word, expr = line.split("\t")
            except ValueError:
                raise ValueError(f"lexicon line {lineno}: expected 'word<TAB>type'") from None
            entries[word.strip().lower()] = parse_type(expr)
        return cls(entries)

    @classmethod
    def load(cls, path):
        return cls.from_tsv(Path(path).read_text(encoding="utf-8"))

    def to_tsv(self):
        return "".join(f"{w}\t{t}\n" for w, t in self.entries.items())


_DEFAULT_LEXICON = None


def default_lexicon() -> Lexicon:
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        text = resources.files("finqnlp").joinpath("resources/default_lexicon.tsv").read_text(encoding="utf-8")
        _DEFAULT_LEXICON = Lexicon.from_tsv(text)
    return _DEFAULT_LEXICON


# -- tokenization & typing -------------------------------------------------

def _is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return tokens


def _is_verb(typ):
    return typ is not None and any(t == S for t in typ) and any(t == N.r for t in typ)


def _is_modifier(typ):
    return typ == ADJECTIVE


def assign_types(tokens, lexicon: Lexicon | None = None, fallback=True):
    """Map every token to its pregroup type.

    Out-of-lexicon words go through a positional tagger when ``fallback`` is
    on: a word right before a known verb, or in final position, is a noun; a
    word at the start or after a determiner/adjective and right before a noun
    is an adjective.  Anything else raises :class:`UnknownWord`.
    """
    lexicon = default_lexicon() if lexicon is None else lexicon
    known = [lexicon.get(t) for t in tokens]
    # right to left, so a guessed noun can license an adjective before it
    for i in reversed(range(len(tokens))):
        if known[i] is not None:
            continue
        if not fallback:
            raise UnknownWord(tokens[i])
        known[i] = _guess(i, known)
        if known[i] is None:
            raise UnknownWord(tokens[i])
    return list(zip(tokens, known))


def _guess(i, known):
    nxt = known[i + 1] if i + 1 < len(known) else None
    if i == len(known) - 1 or _is_verb(nxt):
        return NOUN
    prev = known[i - 1] if i > 0 else None
    if (i == 0 or _is_modifier(prev)) and nxt == NOUN:
        return ADJECTIVE
    return None


# -- reduction -------------------------------------------------------------

@dataclass
class Derivation:
    typed_words: list
    cups: list
    residue: list

    @property
    def simples(self):
        return [s for _, typ in self.typed_words for s in typ]

    @property
    def word_spans(self):
        spans, pos = [], 0
        for _, typ in self.typed_words:
            spans.append(range(pos, pos + len(typ)))
            pos += len(typ)
        return spans

    def to_dict(self):
        return {
            "words": [w for w, _ in self.typed_words],
            "types": [str(t) for _, t in self.typed_words],
            "cups": [list(c) for c in self.cups],
            "residue": list(self.residue),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def reduce(typed) -> Derivation:
    """Find a planar contraction of ``typed`` down to a single ``s``.

    Depth-first search that always tries the leftmost contractible adjacent
    pair first and backtracks on dead ends.  Failed configurations are
    memoised, so the search is polynomial in practice for short sentences.
    """
    typed = list(typed)
    if not typed:
        raise ValueError("cannot reduce an empty type sequence")
    simples = [s for _, typ in typed for s in typ]
    failed = set()
    best = [list(range(len(simples)))]

    def search(alive):
        key = tuple(alive)
        if key in failed:
            return None
        if len(alive) < len(best[0]):
            best[0] = list(alive)
        moved = False
        for k in range(len(alive) - 1):
            a, b = alive[k], alive[k + 1]
            if simples[a].contracts_with(simples[b]):
                moved = True
                found = search(alive[:k] + alive[k + 2:])
                if found is not None:
                    return [(a, b)] + found
        if not moved and len(alive) == 1 and simples[alive[0]] == S:
            return []
        failed.add(key)
        return None

    cups = search(list(range(len(simples))))
    if cups is None:
        residue = " @ ".join(str(simples[i]) for i in best[0]) or "1"
        raise NotASentence([w for w, _ in typed], residue)
    used = {p for c in cups for p in c}
    residue = [i for i in range(len(simples)) if i not in used]
    return Derivation(typed, sorted(cups), residue)


def parse_sentence(text_or_tokens, lexicon=None, fallback=True) -> Derivation:
    tokens = tokenize(text_or_tokens) if isinstance(text_or_tokens, str) else list(text_or_tokens)
    return reduce(assign_types(tokens, lexicon, fallback))


def check_derivation(derivation: Derivation) -> bool:
    """Replay the cups on the flattened type sequence.

    Each cup must join two simples that are adjacent once everything strictly
    between them has already been contracted, and the pair must be
    contractible.  Returns True when the replay leaves exactly the recorded
    residue and that residue is a single ``s``.
    """
    simples = derivation.simples
    used = set()
    for a, b in sorted(derivation.cups, key=lambda c: c[1] - c[0]):
        if a >= b or a in used or b in used:
            return False
        if any(i not in used for i in range(a + 1, b)):
            return False
        if not simples[a].contracts_with(simples[b]):
            return False
        used.update((a, b))
    residue = [i for i in range(len(simples)) if i not in used]
    return residue == list(derivation.residue) and [simples[i] for i in residue] == [S]
