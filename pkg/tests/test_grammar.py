import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from finqnlp import data
from finqnlp.exceptions import NotASentence, TypeSyntaxError, UnknownWord
from finqnlp.grammar import (
    ADJECTIVE,
    INTRANSITIVE_VERB,
    NOUN,
    TRANSITIVE_VERB,
    Derivation,
    Lexicon,
    PregroupType,
    SimpleType,
    assign_types,
    check_derivation,
    default_lexicon,
    parse_sentence,
    parse_type,
    reduce,
    tokenize,
)

n, s = SimpleType("n"), SimpleType("s")


class TestParseType:
    def test_atom(self):
        assert parse_type("n") == PregroupType((n,))

    def test_verb(self):
        assert parse_type("n.r @ s @ n.l").simples == (SimpleType("n", 1), s, SimpleType("n", -1))

    def test_iterated_adjoint(self):
        assert parse_type("n.l.l") == PregroupType((SimpleType("n", -2),))

    def test_whitespace_insensitive(self):
        assert parse_type("  n . r@s  @n.l ") == parse_type("n.r @ s @ n.l")

    def test_unit(self):
        assert parse_type("1") == PregroupType()

    @pytest.mark.parametrize("bad,col", [("n @ x", 5), ("n @@ s", 4), ("n.q", 1), ("n.l.r", 1), ("n.l.l.l", 1)])
    def test_errors_report_column(self, bad, col):
        with pytest.raises(TypeSyntaxError) as info:
            parse_type(bad)
        assert info.value.column == col

    @given(st.lists(st.tuples(st.sampled_from("ns"), st.integers(-2, 2)), min_size=1, max_size=8))
    def test_round_trip(self, raw):
        typ = PregroupType(tuple(SimpleType(a, z) for a, z in raw))
        assert parse_type(str(typ)) == typ
        assert str(parse_type(str(typ))) == str(typ)


class TestTokenize:
    def test_sample(self):
        assert tokenize("Apple reports record profits.") == ["apple", "reports", "record", "profits"]

    def test_empty(self):
        assert tokenize("") == []

    def test_interior_periods_and_dashes(self):
        assert tokenize("U.S. markets \u2014 rally!") == ["u.s", "markets", "rally"]


class TestAssignTypes:
    def test_alice_loves_bob(self):
        typed = assign_types(["alice", "loves", "bob"])
        assert [t for _, t in typed] == [NOUN, TRANSITIVE_VERB, NOUN]

    def test_intransitive(self):
        typed = assign_types(["markets", "rally"])
        assert [t for _, t in typed] == [NOUN, INTRANSITIVE_VERB]
        assert reduce(typed).residue == [2]

    def test_unknown_without_fallback(self):
        with pytest.raises(UnknownWord):
            assign_types(["zzzq"], fallback=False)

    def test_fallback_noun_before_verb(self):
        typed = assign_types(["brokers", "rally"])
        assert typed[0][1] == NOUN

    def test_fallback_adjective_noun(self):
        typed = assign_types(["shiny", "widgets", "rally"])
        assert [t for _, t in typed] == [ADJECTIVE, NOUN, INTRANSITIVE_VERB]

    def test_fallback_final_noun(self):
        typed = assign_types(["banks", "beat", "rivals"])
        assert typed[2][1] == NOUN

    def test_fallback_gives_up(self):
        with pytest.raises(UnknownWord):
            assign_types(["banks", "zzq", "rivals"])

    def test_custom_lexicon(self):
        lex = Lexicon.from_tsv("# comment\nfoo\tn\nbar\tn.r @ s\n")
        assert [t for _, t in assign_types(["foo", "bar"], lex)] == [NOUN, INTRANSITIVE_VERB]
        assert Lexicon.from_tsv(lex.to_tsv()) == lex


class TestReduce:
    def test_alice_loves_bob(self):
        d = reduce(assign_types(["alice", "loves", "bob"]))
        assert sorted(d.cups) == [(0, 1), (3, 4)]
        assert d.residue == [2]
        assert check_derivation(d)

    def test_single_s(self):
        d = reduce([("yes", PregroupType((s,)))])
        assert d.cups == [] and d.residue == [0]

    def test_two_nouns(self):
        with pytest.raises(NotASentence):
            reduce([("alice", NOUN), ("bob", NOUN)])

    def test_backtracking_needed(self):
        # leftmost-first contracts (n.l, n) at 1-2 and strands "s n.r n";
        # the search must undo it and contract (n, n.r) at 2-3 first.
        typed = [("a", parse_type("s @ n.l")), ("b", NOUN), ("c", parse_type("n.r")), ("d", NOUN)]
        d = reduce(typed)
        assert sorted(d.cups) == [(1, 4), (2, 3)]
        assert d.residue == [0]
        assert check_derivation(d)

    def test_adverb(self):
        d = parse_sentence("stocks plunge today")
        assert sorted(d.cups) == [(0, 1), (2, 3)] and d.residue == [4]

    def test_json_dump(self):
        dump = parse_sentence("alice loves bob").to_dict()
        assert dump["types"] == ["n", "n.r @ s @ n.l", "n"]
        assert dump["cups"] == [[0, 1], [3, 4]]

    def test_not_a_sentence_reports_residue(self):
        with pytest.raises(NotASentence) as info:
            parse_sentence("alice bob")
        assert info.value.residue == "n @ n"


def brute_force_reducible(simples):
    """Exhaustive search over all contraction orders, no memo, no ordering."""
    if len(simples) == 1:
        return simples[0] == s
    for k in range(len(simples) - 1):
        if simples[k].contracts_with(simples[k + 1]):
            if brute_force_reducible(simples[:k] + simples[k + 2:]):
                return True
    return False


class TestReductionProperties:
    @given(st.lists(st.sampled_from(["n", "n @ n.l", "n.r @ s @ n.l", "n.r @ s", "s.r @ s", "s", "n.l @ s"]),
                    min_size=1, max_size=6))
    def test_sound_and_complete_against_brute_force(self, exprs):
        typed = [(f"w{i}", parse_type(e)) for i, e in enumerate(exprs)]
        simples = [x for _, t in typed for x in t]
        expected = brute_force_reducible(simples)
        try:
            d = reduce(typed)
        except NotASentence:
            assert not expected
            return
        assert expected
        assert check_derivation(d)
        for (a, b), (c, e) in itertools.permutations(d.cups, 2):
            assert not a < c < b < e  # planarity

    def test_replay_checker_rejects_bad_cups(self):
        typed = assign_types(["alice", "loves", "bob"])
        assert not check_derivation(Derivation(typed, [(0, 3), (1, 4)], [2]))
        assert not check_derivation(Derivation(typed, [(0, 1)], [2, 3, 4]))

    def test_generated_corpus_reduces(self):
        corpus = data.generate_synthetic(data.GenConfig(500, "low", seed=123))
        for sent in corpus:
            d = parse_sentence(sent.tokens, fallback=False)
            assert check_derivation(d)

    def test_default_lexicon_covers_generator(self):
        lex = default_lexicon()
        vocab = set(data.NOUNS + data.ADJECTIVES + data.DETERMINERS + data.ADVERBS)
        for group in (data.TRANSITIVE, data.INTRANSITIVE):
            for words in group.values():
                vocab.update(words)
        assert vocab <= set(lex.entries)
