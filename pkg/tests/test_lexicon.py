from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2plstm.lexicon import (
    LexiconEntry,
    LexiconParseError,
    PartitionConflictError,
    SymbolTable,
    VocabularyError,
    build_symbol_tables,
    load_split,
    parse_lexicon,
    read_lexicon,
    serialize_lexicon,
)

DATA = Path(__file__).parent / "data"


class TestParseCmudict:
    def test_basic_line(self):
        (entry,) = parse_lexicon(["ABLE  EY1 B AH0 L"])
        assert entry == LexiconEntry("ABLE", (("EY", "B", "AH", "L"),))

    def test_keep_stress(self):
        (entry,) = parse_lexicon(["ABLE  EY1 B AH0 L"], strip_stress=False)
        assert entry.pronunciations == (("EY1", "B", "AH0", "L"),)

    def test_variants_merge_in_order(self):
        entries = parse_lexicon(["READ  R IY1 D", "READ(2)  R EH1 D"])
        assert entries == [LexiconEntry("READ", (("R", "IY", "D"), ("R", "EH", "D")))]

    def test_identical_after_stripping_collapse(self):
        (entry,) = parse_lexicon(["A  AH0", "A(2)  AH1"])
        assert entry.pronunciations == (("AH",),)

    def test_comments_and_blanks(self):
        lines = [";;; header", "", "   ", "CAT  K AE1 T  # trailing note"]
        assert parse_lexicon(lines) == [LexiconEntry("CAT", (("K", "AE", "T"),))]

    def test_lowercase_headword_uppercased(self):
        (entry,) = parse_lexicon(["cat  K AE1 T"])
        assert entry.word == "CAT"

    @pytest.mark.parametrize(
        "line, fragment",
        [
            ("CAT  K AE1 T", None),
            ("CAT  K A*E T", "malformed phoneme"),
            ("CAT(x)  K AE T", "malformed variant"),
            ("CAT", "empty pronunciation"),
        ],
    )
    def test_malformed(self, line, fragment):
        lines = ["DOG  D AO1 G"] * 41 + [line]
        if fragment is None:
            parse_lexicon(lines)
            return
        with pytest.raises(LexiconParseError) as info:
            parse_lexicon(lines)
        assert info.value.lineno == 42
        assert fragment in str(info.value)
        assert "42" in str(info.value)

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            parse_lexicon([], format="xml")


class TestParseTabular:
    def test_basic(self):
        entries = parse_lexicon(["TANGLE\tT AE NG G AH L"], format="tabular")
        assert entries[0].pronunciations == (("T", "AE", "NG", "G", "AH", "L"),)

    def test_needs_single_tab(self):
        with pytest.raises(LexiconParseError):
            parse_lexicon(["TANGLE T AE NG"], format="tabular")

    @settings(max_examples=60, deadline=None)
    @given(
        st.dictionaries(
            st.text("ABCDEFGHIJ", min_size=1, max_size=8),
            st.lists(st.lists(st.sampled_from(["AA", "B", "K", "NG", "SH"]), min_size=1, max_size=6).map(tuple),
                     min_size=1, max_size=3, unique=True).map(tuple),
            min_size=1,
            max_size=10,
        )
    )
    def test_serialize_round_trip(self, lex):
        entries = [LexiconEntry(w, p) for w, p in lex.items()]
        parsed = parse_lexicon(serialize_lexicon(entries), format="tabular", strip_stress=False)
        assert parsed == entries


class TestToyLexicon:
    def test_counts(self):
        entries = read_lexicon(DATA / "toy_cmudict.txt")
        assert len(entries) == 50
        by_word = {e.word: e for e in entries}
        assert len(by_word["READ"].pronunciations) == 2
        assert by_word["TANGLE"].pronunciations == (("T", "AE", "NG", "G", "AH", "L"),)

    def test_error_names_file(self, tmp_path):
        bad = tmp_path / "bad.dict"
        bad.write_text("CAT  K AE1 T\nDOG  D*G\n", encoding="utf-8")
        with pytest.raises(LexiconParseError, match=r"bad\.dict:2"):
            read_lexicon(bad)


class TestSymbolTable:
    def test_reserved_then_sorted(self):
        letters, phones = build_symbol_tables([LexiconEntry("CAB", (("K", "AE", "B"),))])
        assert letters.symbols == ("<s>", "</s>", "A", "B", "C")
        assert phones.symbols == ("<os>", "</os>", "∅", "AE", "B", "K")

    def test_encode_decode(self):
        table = SymbolTable.from_observed("letter", "ABC")
        assert table.encode("CAB") == [4, 2, 3]
        assert table.decode([4, 2, 3]) == ["C", "A", "B"]

    def test_unknown_symbol(self):
        table = SymbolTable.from_observed("letter", "AB")
        with pytest.raises(VocabularyError, match="'Z'"):
            table.index_of("Z")

    def test_extended_keeps_indices(self):
        table = SymbolTable.from_observed("phoneme", ["K", "AE"])
        ext = table.extended(["AH:L", "K", "AA:B"])
        assert ext.symbols[: len(table)] == table.symbols
        assert ext.symbols[len(table):] == ("AA:B", "AH:L")

    def test_bad_reserved_prefix(self):
        with pytest.raises(ValueError):
            SymbolTable("letter", ["A", "<s>", "</s>"])

    def test_save_load(self, tmp_path):
        table = SymbolTable.from_observed("phoneme", ["K", "AE", "AH:L"])
        table.save(tmp_path / "p.txt")
        assert SymbolTable.load(tmp_path / "p.txt", "phoneme") == table

    def test_empty_lexicon(self):
        with pytest.raises(ValueError):
            build_symbol_tables([])


class TestSplit:
    entries = [LexiconEntry(w, (("X",),)) for w in ("A", "B", "C", "D")]

    def test_routing(self):
        split, report = load_split(self.entries, train=["a", "B"], validation=["C"], test=["E"])
        assert [e.word for e in split.train] == ["A", "B"]
        assert [e.word for e in split.validation] == ["C"]
        assert split.test == []
        assert report.counts == {"train": 2, "validation": 1, "test": 0}
        assert report.unlisted == ["D"]
        assert report.missing == {"test": ["E"]}

    def test_conflict(self):
        with pytest.raises(PartitionConflictError, match="'B'"):
            load_split(self.entries, train=["B"], test=["B"])
