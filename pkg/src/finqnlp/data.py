"""Sentiment datasets: loading, synthetic generation, LLM generation, stats.

Labels follow the three-way scheme ``0 = negative``, ``1 = neutral``,
``2 = positive``.  :func:`binarize` drops neutral records and maps the rest to
``0 = negative`` / ``1 = positive``.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import (
    AllRecordsInvalid,
    AuthError,
    EmptyDataset,
    InvalidConfig,
    NetworkError,
    NoParsableLines,
)
from .grammar import tokenize

logger = logging.getLogger(__name__)

LABEL_NAMES = ("negative", "neutral", "positive")
UNK = 0


@dataclass(frozen=True)
class Sentence:
    text: str
    label: int
    tokens: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.label not in (0, 1, 2):
            raise ValueError(f"label must be 0, 1 or 2, got {self.label!r}")
        if not self.tokens:
            object.__setattr__(self, "tokens", tuple(tokenize(self.text)))


@dataclass
class Dataset:
    sentences: list
    report: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.sentences[i])
        return self.sentences[i]

    @property
    def texts(self):
        return [s.text for s in self.sentences]

    @property
    def labels(self):
        return [s.label for s in self.sentences]

    def subset(self, indices):
        return Dataset([self.sentences[i] for i in indices])


# -- JSONL -----------------------------------------------------------------

def load_jsonl(path) -> Dataset:
    """Read ``{"text": ..., "label": 0|1|2}`` lines.

    Malformed lines and records with no tokens are skipped; their line
    numbers land in ``dataset.report``.
    """
    path = Path(path)
    sentences, malformed, empty = [], [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                text, label = rec["text"], rec["label"]
                if not isinstance(text, str) or type(label) is not int or label not in (0, 1, 2):
                    raise ValueError(f"bad record {rec!r}")
            except (ValueError, KeyError, TypeError) as exc:
                malformed.append({"line": lineno, "error": str(exc)})
                continue
            sent = Sentence(text, label)
            if not sent.tokens:
                empty.append(lineno)
                continue
            sentences.append(sent)
    if not sentences:
        raise AllRecordsInvalid(f"{path}: no usable records")
    for m in malformed:
        logger.warning("%s:%d: %s", path, m["line"], m["error"])
    return Dataset(sentences, {"malformed": malformed, "empty": empty})


def save_jsonl(dataset, path):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for s in dataset:
            fh.write(json.dumps({"text": s.text, "label": s.label}, ensure_ascii=False) + "\n")
    os.replace(tmp, path)


# -- synthetic generation --------------------------------------------------

NOUNS = (
    "stocks", "shares", "markets", "investors", "banks", "profits", "earnings",
    "revenue", "rates", "bonds", "prices", "dividends", "oil", "gold", "apple",
    "tesla", "amazon", "nvidia", "analysts", "traders", "economy", "sales",
    "exports", "fed", "startups", "retailers", "lenders", "funds", "yields",
    "bitcoin", "margins", "forecasts", "costs", "wages", "demand", "nasdaq",
    "automakers", "insurers", "miners", "airlines",
)
ADJECTIVES = (
    "quarterly", "global", "european", "asian", "major", "regional", "corporate",
    "annual", "emerging", "domestic", "foreign", "federal", "tech", "energy",
    "retail", "mortgage",
)
DETERMINERS = ("the",)
ADVERBS = ("today", "again", "overnight", "quietly", "locally", "midday")

# sentiment-bearing verbs, indexed by label
TRANSITIVE = {
    0: ("hurt", "miss", "slash", "weaken"),
    1: ("hold", "match", "track", "review"),
    2: ("beat", "boost", "lift", "exceed"),
}
INTRANSITIVE = {
    0: ("plunge", "crash", "slump", "tumble"),
    1: ("stabilize", "hover", "pause", "consolidate"),
    2: ("rally", "soar", "surge", "climb"),
}

# label-consistent modifiers, drawn for an A or R slot with probability CUE_RATE
CUE_ADJECTIVES = {
    0: ("weak", "poor", "shaky", "gloomy"),
    1: ("steady", "stable", "flat", "mixed"),
    2: ("strong", "record", "robust", "solid"),
}
CUE_ADVERBS = {
    0: ("lower", "sharply", "badly", "weakly"),
    1: ("steadily", "calmly", "sideways", "unchanged"),
    2: ("higher", "strongly", "briskly", "upward"),
}
CUE_RATE = 0.5

# (slot pattern, weight); V = intransitive, T = transitive
LOW_TEMPLATES = (
    ("N V", 2),
    ("A N V", 5),
    ("N V R", 4),
    ("N T N", 5),
    ("A N V R", 8),
    ("A N T N", 10),
    ("N T A N", 8),
    ("N T N R", 6),
    ("A N T A N", 20),
    ("D N T A N", 10),
    ("D A N V R", 10),
    ("A N T N R", 12),
)

MODERATE_CLAUSES = (
    "{D} {A} {N} {V} {R} as {A} {N} {T} {N} while {A} {N} {NEUTRAL_T} the {A} {N} in {A} {N}",
    "{D} {N} {T} {A} {N} while {N} {NEUTRAL_V} {R} after {D} {A} {N} {NEUTRAL_T} {A} {N} for {N}",
    "according to {A} {N} the {A} {N} {T} {A} {N} this quarter despite {A} {N} and {A} {N}",
    "{D} {A} {N} {V} {R} because {A} {N} {NEUTRAL_T} {D} {A} {N} amid {A} {N} and {N}",
    "{A} {N} {T} {D} {N} and {A} {N} {NEUTRAL_V} {R} while {A} {N} {NEUTRAL_T} the {A} {N}",
    "in {A} {N} the {A} {N} {T} {A} {N} as {N} {NEUTRAL_T} {A} {N} ahead of {A} {N} {N}",
)


@dataclass
class GenConfig:
    n_sentences: int = 1000
    complexity: str = "low"
    target_shares: tuple = (0.34, 0.18, 0.48)
    seed: int = 0

    def validate(self):
        if self.n_sentences < 0:
            raise InvalidConfig("n_sentences must be >= 0")
        if self.complexity not in ("low", "moderate"):
            raise InvalidConfig(f"complexity must be 'low' or 'moderate', got {self.complexity!r}")
        shares = tuple(float(x) for x in self.target_shares)
        if len(shares) != 3 or any(x < 0 for x in shares) or abs(sum(shares) - 1) > 1e-9:
            raise InvalidConfig(f"target_shares must be three non-negative fractions summing to 1, got {shares}")


def _quotas(n, shares):
    """Largest-remainder apportionment of ``n`` items to the target shares."""
    raw = [n * s for s in shares]
    counts = [int(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda k: (counts[k] - raw[k], k))
    for k in order[: n - sum(counts)]:
        counts[k] += 1
    return counts


def _fill(pattern, label, rng):
    words = []
    for slot in pattern.split():
        if slot == "N":
            words.append(rng.choice(NOUNS))
        elif slot == "A":
            words.append(rng.choice(CUE_ADJECTIVES[label] if rng.random() < CUE_RATE else ADJECTIVES))
        elif slot == "D":
            words.append(rng.choice(DETERMINERS))
        elif slot == "R":
            words.append(rng.choice(CUE_ADVERBS[label] if rng.random() < CUE_RATE else ADVERBS))
        elif slot == "V":
            words.append(rng.choice(INTRANSITIVE[label]))
        elif slot == "T":
            words.append(rng.choice(TRANSITIVE[label]))
    return words


def _moderate(label, rng):
    template = rng.choice(MODERATE_CLAUSES)
    out = []
    for tok in template.split():
        if tok.startswith("{"):
            slot = tok.strip("{}")
            if slot == "NEUTRAL_V":
                out.append(rng.choice(INTRANSITIVE[1]))
            elif slot == "NEUTRAL_T":
                out.append(rng.choice(TRANSITIVE[1]))
            else:
                out.extend(_fill(slot, label, rng))
        else:
            out.append(tok)
    return out


def generate_synthetic(config: GenConfig) -> Dataset:
    """Template-based finance sentences with exact class quotas.

    The label of each low-complexity sentence is carried by its verb; every
    other slot is drawn from sentiment-neutral vocabulary.  The class order is
    shuffled with the same seeded generator, so equal configs give identical
    datasets.
    """
    config.validate()
    rng = random.Random(config.seed)
    counts = _quotas(config.n_sentences, config.target_shares)
    labels = [lab for lab, c in enumerate(counts) for _ in range(c)]
    rng.shuffle(labels)
    patterns = [p for p, _ in LOW_TEMPLATES]
    weights = [w for _, w in LOW_TEMPLATES]
    sentences = []
    for label in labels:
        if config.complexity == "low":
            words = _fill(rng.choices(patterns, weights)[0], label, rng)
        else:
            words = _moderate(label, rng)
        text = " ".join(words)
        sentences.append(Sentence(text[0].upper() + text[1:], label))
    return Dataset(sentences, {"generator": {"n": config.n_sentences, "complexity": config.complexity,
                                             "seed": config.seed, "quotas": counts}})


def generator_lexicon_tsv():
    """Lexicon lines covering the low-complexity generator vocabulary."""
    lines = [f"{w}\tn" for w in NOUNS]
    cue_adjectives = tuple(w for ws in CUE_ADJECTIVES.values() for w in ws)
    lines += [f"{w}\tn @ n.l" for w in ADJECTIVES + cue_adjectives + DETERMINERS]
    lines += [f"{w}\tn.r @ s @ n.l" for ws in TRANSITIVE.values() for w in ws]
    lines += [f"{w}\tn.r @ s" for ws in INTRANSITIVE.values() for w in ws]
    lines += [f"{w}\ts.r @ s" for w in ADVERBS + tuple(w for ws in CUE_ADVERBS.values() for w in ws)]
    return "\n".join(lines) + "\n"


# -- LLM generation ---------------------------------------------------------

PROMPTS = {
    "low": (
        "Generate sentences with a maximum length of five words discussing financial topics or "
        "stocks in a positive, neutral or negative way. At the end of each sentence, mention its "
        "respective label with negative being 0, neutral being 1 and positive being 2."
    ),
    "moderate": (
        "Generate detailed sentences discussing financial topics or stocks in a positive, neutral "
        "or negative way. At the end of each sentence, mention its respective label with negative "
        "being 0, neutral being 1 and positive being 2."
    ),
}

_LABEL_RE = re.compile(r"^\s*(?:\d+[.)]\s*)?(?P<text>.*?)\s*\(\s*(?P<word>[A-Za-z]+)\s*-\s*(?P<digit>[0-2])\s*\)\s*\.?\s*$")
_WORD_TO_LABEL = {"negative": 0, "neutral": 1, "positive": 2}


def parse_llm_reply(reply: str):
    """Split a reply into labelled sentences and unparseable lines.

    Lines look like ``"Interest rates stay steady (Neutral - 1)"``; an optional
    list number prefix is tolerated.  When the word and digit disagree the
    line is rejected.
    """
    sentences, rejected = [], []
    for line in reply.splitlines():
        if not line.strip():
            continue
        m = _LABEL_RE.match(line)
        if m is None or not m.group("text"):
            rejected.append(line)
            continue
        digit = int(m.group("digit"))
        word = m.group("word").lower()
        if _WORD_TO_LABEL.get(word, digit) != digit:
            rejected.append(line)
            continue
        text = m.group("text").strip()
        if not tokenize(text):
            rejected.append(line)
            continue
        sentences.append(Sentence(text, digit))
    return sentences, rejected


@dataclass
class LLMConfig:
    """Chat-completion endpoint settings; the token comes from the environment."""

    endpoint: str | None = None
    model: str = "gpt-3.5-turbo"
    token_env: str = "FINQNLP_LLM_TOKEN"
    endpoint_env: str = "FINQNLP_LLM_ENDPOINT"
    timeout: float = 60.0

    def resolve(self):
        endpoint = self.endpoint or os.environ.get(self.endpoint_env)
        token = os.environ.get(self.token_env)
        if not endpoint:
            raise AuthError(f"no LLM endpoint: pass one or set ${self.endpoint_env}")
        if not token:
            raise AuthError(f"no LLM credentials: set ${self.token_env}")
        return endpoint, token


class ChatClient:
    """Minimal OpenAI-style ``/chat/completions`` client."""

    def __init__(self, config: LLMConfig, transport=None):
        import httpx

        self.config = config
        self.endpoint, token = config.resolve()
        self._http = httpx.Client(
            timeout=config.timeout,
            headers={"Authorization": f"Bearer {token}"},
            transport=transport,
        )

    def complete(self, prompt: str) -> str:
        import httpx

        body = {"model": self.config.model, "messages": [{"role": "user", "content": prompt}]}
        try:
            resp = self._http.post(self.endpoint, json=body)
        except httpx.HTTPError as exc:
            raise NetworkError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
        if resp.status_code >= 400:
            raise NetworkError(f"endpoint returned HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise NetworkError(f"unexpected response payload: {exc}") from exc


def llm_generate(client, complexity="low", rounds=1, archive_dir=None):
    """Query ``client`` ``rounds`` times with the generation prompt.

    Returns ``(raw_replies, dataset)``.  Raw replies are written to
    ``archive_dir`` (one file per round) when given.
    """
    prompt = PROMPTS[complexity]
    raw, sentences, rejected = [], [], []
    for k in range(rounds):
        reply = client.complete(prompt)
        raw.append(reply)
        if archive_dir is not None:
            archive = Path(archive_dir)
            archive.mkdir(parents=True, exist_ok=True)
            (archive / f"llm_reply_{k:03d}.json").write_text(
                json.dumps({"prompt": prompt, "reply": reply}, ensure_ascii=False, indent=2), encoding="utf-8"
            )
        ok, bad = parse_llm_reply(reply)
        sentences.extend(ok)
        rejected.extend(bad)
    if not sentences:
        raise NoParsableLines(f"{len(rejected)} reply lines, none with a '(Label - digit)' suffix")
    return raw, Dataset(sentences, {"unparseable": rejected})


# -- statistics & transforms -----------------------------------------------

@dataclass(frozen=True)
class DistributionStats:
    class_shares: tuple
    mean_word_count: float
    vocab_size: int
    n: int

    def table(self, title="dataset"):
        neg, neu, pos = (f"{100 * s:.0f}%" for s in self.class_shares)
        head = f"{'':<12}| {'-':>5} | {'o':>5} | {'+':>5} | {'avg words':>9} | {'vocab':>6}"
        row = f"{title:<12}| {neg:>5} | {neu:>5} | {pos:>5} | {self.mean_word_count:>9.1f} | {self.vocab_size:>6}"
        return f"{head}\n{'-' * len(head)}\n{row}"


def stats(dataset) -> DistributionStats:
    sentences = list(dataset)
    if not sentences:
        raise EmptyDataset("cannot compute statistics of an empty dataset")
    counts = Counter(s.label for s in sentences)
    n = len(sentences)
    n_classes = 3 if all(s.label in (0, 1, 2) for s in sentences) else max(counts) + 1
    shares = tuple(counts.get(k, 0) / n for k in range(n_classes))
    vocab = {t for s in sentences for t in s.tokens}
    mean_len = sum(len(s.tokens) for s in sentences) / n
    return DistributionStats(shares, mean_len, len(vocab), n)


def binarize(dataset) -> Dataset:
    """Drop neutral records; negative -> 0, positive -> 1.

    The original label survives in ``meta["orig_label"]``.  Already-binarized
    datasets (marked by that key) pass through unchanged.
    """
    out = []
    for s in dataset:
        if "orig_label" in s.meta:
            out.append(s)
        elif s.label != 1:
            out.append(Sentence(s.text, 0 if s.label == 0 else 1, s.tokens, {**s.meta, "orig_label": s.label}))
    report = {"dropped_neutral": sum(1 for s in dataset if s.label == 1 and "orig_label" not in s.meta)}
    return Dataset(out, report)


def build_vocab(dataset_or_tokens, min_count=1) -> dict:
    """Token -> id, with 0 reserved for unknown tokens.

    Ids are assigned by descending frequency, ties broken lexicographically;
    tokens seen fewer than ``min_count`` times are left out (and so map to 0).
    """
    counts = Counter()
    for item in dataset_or_tokens:
        counts.update(item.tokens if isinstance(item, Sentence) else item)
    if not counts:
        raise EmptyDataset("cannot build a vocabulary from no tokens")
    ranked = sorted((tok for tok, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return {tok: i for i, tok in enumerate(ranked, start=1)}


def encode(tokens, vocab) -> list:
    return [vocab.get(t, UNK) for t in tokens]
