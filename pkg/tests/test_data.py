import json
from collections import Counter

import httpx
import pytest

from finqnlp import data
from finqnlp.data import Dataset, GenConfig, Sentence
from finqnlp.exceptions import AllRecordsInvalid, AuthError, EmptyDataset, InvalidConfig, NoParsableLines
from finqnlp.grammar import default_lexicon, parse_sentence


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


class TestJsonl:
    def test_sample_record(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", ['{"text":"Apple reports record profits","label":2}'])
        ds = data.load_jsonl(path)
        assert len(ds) == 1 and ds[0].label == 2
        assert ds[0].tokens == ("apple", "reports", "record", "profits")

    def test_empty_file(self, tmp_path):
        with pytest.raises(AllRecordsInvalid):
            data.load_jsonl(write_lines(tmp_path / "d.jsonl", []))

    def test_bad_label_reported(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [
            '{"text":"stocks rally","label":2}',
            '{"text":"stocks rally","label":7}',
            "not json",
            '{"text":"!!!","label":1}',
        ])
        ds = data.load_jsonl(path)
        assert len(ds) == 1
        assert [m["line"] for m in ds.report["malformed"]] == [2, 3]
        assert ds.report["empty"] == [4]

    def test_round_trip(self, tmp_path):
        ds = data.generate_synthetic(GenConfig(50, "low", seed=2))
        data.save_jsonl(ds, tmp_path / "d.jsonl")
        back = data.load_jsonl(tmp_path / "d.jsonl")
        assert back.texts == ds.texts and back.labels == ds.labels


class TestGenerator:
    def test_shares_and_length(self):
        ds = data.generate_synthetic(GenConfig(1000, "low", seed=0))
        st = data.stats(ds)
        for got, want in zip(st.class_shares, (0.34, 0.18, 0.48)):
            assert abs(got - want) <= 0.03
        assert 4.0 <= st.mean_word_count <= 5.0
        assert all(len(s.tokens) <= 5 for s in ds)

    def test_every_low_sentence_parses(self):
        for sent in data.generate_synthetic(GenConfig(300, "low", seed=4)):
            parse_sentence(list(sent.tokens))

    def test_label_follows_verb(self):
        verb_label = {v: k for table in (data.TRANSITIVE, data.INTRANSITIVE) for k, vs in table.items() for v in vs}
        for sent in data.generate_synthetic(GenConfig(200, "low", seed=1)):
            labels = {verb_label[t] for t in sent.tokens if t in verb_label}
            assert labels == {sent.label}

    def test_modifier_cues_agree_with_label(self):
        cue_label = {w: k for table in (data.CUE_ADJECTIVES, data.CUE_ADVERBS) for k, ws in table.items() for w in ws}
        seen = 0
        for sent in data.generate_synthetic(GenConfig(300, "low", seed=2)):
            cues = {cue_label[t] for t in sent.tokens if t in cue_label}
            assert cues <= {sent.label}
            seen += bool(cues)
        assert seen > 50

    def test_lexicon_covers_generator(self):
        lexicon = default_lexicon()
        for sent in data.generate_synthetic(GenConfig(300, "low", seed=6)):
            assert all(lexicon.get(t) is not None for t in sent.tokens)

    def test_deterministic(self):
        a = data.generate_synthetic(GenConfig(100, "low", seed=9))
        b = data.generate_synthetic(GenConfig(100, "low", seed=9))
        assert a.texts == b.texts and a.labels == b.labels
        assert data.generate_synthetic(GenConfig(100, "low", seed=10)).texts != a.texts

    def test_zero(self):
        assert len(data.generate_synthetic(GenConfig(0))) == 0

    def test_moderate_length(self):
        st = data.stats(data.generate_synthetic(GenConfig(300, "moderate", seed=0)))
        assert 15 <= st.mean_word_count <= 21

    @pytest.mark.parametrize("config", [
        GenConfig(10, "high"),
        GenConfig(10, "low", target_shares=(0.5, 0.5, 0.5)),
        GenConfig(-1),
    ])
    def test_invalid(self, config):
        with pytest.raises(InvalidConfig):
            data.generate_synthetic(config)


class TestLLM:
    @pytest.mark.parametrize("line, label, text", [
        ("Interest rates stay steady (Neutral - 1)", 1, "Interest rates stay steady"),
        ("Inflation fears rattle markets (Negative - 0)", 0, "Inflation fears rattle markets"),
        ("3. Apple posts record profits (positive-2).", 2, "Apple posts record profits"),
    ])
    def test_parse_line(self, line, label, text):
        (sent,), rejected = data.parse_llm_reply(line)
        assert (sent.label, sent.text) == (label, text) and rejected == []

    def test_unlabelled_and_contradictory(self):
        ok, rejected = data.parse_llm_reply("Markets are open\nStocks fall (Positive - 0)\n\n")
        assert ok == [] and rejected == ["Markets are open", "Stocks fall (Positive - 0)"]

    def test_missing_credentials(self, monkeypatch):
        monkeypatch.delenv("FINQNLP_LLM_TOKEN", raising=False)
        with pytest.raises(AuthError):
            data.LLMConfig(endpoint="http://example.invalid").resolve()

    def _client(self, monkeypatch, handler):
        monkeypatch.setenv("FINQNLP_LLM_TOKEN", "secret")
        return data.ChatClient(data.LLMConfig(endpoint="http://llm.test/v1/chat/completions"),
                               transport=httpx.MockTransport(handler))

    def test_round_trip_through_mock_endpoint(self, monkeypatch, tmp_path):
        seen = []

        def handler(request):
            seen.append(request)
            reply = "Stocks rally (Positive - 2)\nGarbage line\nBanks stall (Neutral - 1)"
            return httpx.Response(200, json={"choices": [{"message": {"content": reply}}]})

        client = self._client(monkeypatch, handler)
        raw, ds = data.llm_generate(client, "low", rounds=2, archive_dir=tmp_path)
        assert len(raw) == 2 and ds.labels == [2, 1, 2, 1]
        assert ds.report["unparseable"] == ["Garbage line", "Garbage line"]
        assert seen[0].headers["authorization"] == "Bearer secret"
        body = json.loads(seen[0].content)
        assert body["messages"][0]["content"] == data.PROMPTS["low"]
        archived = json.loads((tmp_path / "llm_reply_000.json").read_text())
        assert archived["reply"].startswith("Stocks rally")

    def test_rejected_credentials(self, monkeypatch):
        client = self._client(monkeypatch, lambda r: httpx.Response(401))
        with pytest.raises(AuthError):
            client.complete("hi")

    def test_nothing_parsable(self, monkeypatch):
        client = self._client(monkeypatch, lambda r: httpx.Response(
            200, json={"choices": [{"message": {"content": "no labels here"}}]}))
        with pytest.raises(NoParsableLines):
            data.llm_generate(client)


class TestStats:
    def test_hand_countable(self):
        ds = Dataset([Sentence("a b c", 0), Sentence("d e f g", 1), Sentence("h i j k l", 2)])
        st = data.stats(ds)
        assert st.class_shares == pytest.approx((1 / 3,) * 3)
        assert st.mean_word_count == 4.0 and st.vocab_size == 12

    def test_duplication_invariance(self):
        ds = data.generate_synthetic(GenConfig(60, seed=3))
        a, b = data.stats(ds), data.stats(Dataset(ds.sentences * 2))
        assert a.class_shares == pytest.approx(b.class_shares)
        assert (a.mean_word_count, a.vocab_size) == pytest.approx((b.mean_word_count, b.vocab_size))

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            data.stats(Dataset([]))

    def test_table_mentions_counts(self):
        table = data.stats(Dataset([Sentence("a b c", 0), Sentence("d e f g", 2)])).table("low")
        assert "50%" in table and "3.5" in table


class TestBinarize:
    def test_shares(self):
        ds = Dataset([Sentence("x y", 0)] * 34 + [Sentence("x y", 1)] * 18 + [Sentence("x y", 2)] * 48)
        binary = data.binarize(ds)
        assert data.stats(binary).class_shares[:2] == pytest.approx((34 / 82, 48 / 82), abs=1e-9)
        assert binary.report["dropped_neutral"] == 18
        assert Counter(s.meta["orig_label"] for s in binary) == {0: 34, 2: 48}

    def test_all_neutral(self):
        assert len(data.binarize(Dataset([Sentence("x", 1)] * 3))) == 0

    def test_idempotent(self):
        once = data.binarize(data.generate_synthetic(GenConfig(80, seed=1)))
        twice = data.binarize(once)
        assert twice.texts == once.texts and twice.labels == once.labels


class TestVocab:
    def test_frequency_then_lexicographic(self):
        vocab = data.build_vocab([["b", "a", "c"], ["a", "b"], ["b", "a"]], min_count=2)
        assert vocab == {"a": 1, "b": 2}
        assert data.encode(["a", "b", "c"], vocab) == [1, 2, data.UNK]

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            data.build_vocab([])

    def test_from_sentences(self):
        vocab = data.build_vocab(Dataset([Sentence("up up down", 2)]))
        assert vocab == {"up": 1, "down": 2}
