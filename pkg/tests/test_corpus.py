import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from medvec.corpus import (
    CorpusEntry,
    DatasetManifest,
    GenerationProfile,
    SplitConfig,
    approx_token_count,
    load_template,
    parse_list_items,
    read_jsonl,
    render_prompt,
    select,
    split_list_response,
    stride_of,
    subsample,
    validate_corpus,
    write_jsonl,
)
from medvec.errors import CorpusFormatError, EmptyResponse, InvalidFraction, UnknownTemplate, UsageError

AILMENTS = ["glaucoma", "jaundice", "cyanosis", "psoriasis", "conjunctivitis", "scoliosis", "skin cancer", "gingivitis"]

# reference prompt texts, placeholder marked {X}
TRUTH_TEXT = (
    "What notes would a doctor have when observing a patient with a {X}? Include test results. "
    "Do not include the patient's name, age, gender, or any patient specific details including date of observation. "
    "Do not tell me that the notes are not comprehensive, I already know this. "
    "Do not tell me about anything that requires further investigation."
)
QUERY_TEXT = (
    "What notes would a doctor have when observing a patient with {X}? Make notes short and concise. "
    "Laboratory test results are optional. "
    "Do not include the patient's name, age, gender, or any patient specific details including date of observation. "
    "Do not tell me that the notes are not comprehensive, I already know this. "
    "Do not tell me about anything that requires further investigation. "
    "Do not tell me what ailment the patient is presented with."
)
FLAN_TEXT = "What are observable symptoms of {X}? List them out to be technical."


def manifest(**kw):
    return DatasetManifest(AILMENTS, ["gpt-3.5-turbo"], **kw)


class TestTemplates:
    @pytest.mark.parametrize(
        "tid,text",
        [("truth_conversational", TRUTH_TEXT), ("query_conversational", QUERY_TEXT), ("query_flan_style", FLAN_TEXT)],
    )
    def test_byte_for_byte(self, tid, text):
        assert load_template(tid).encode("utf-8") == text.replace("{X}", "{ailment}").encode("utf-8")
        assert render_prompt(tid, "scoliosis") == text.replace("{X}", "scoliosis")

    def test_flan_glaucoma(self):
        assert render_prompt("query_flan_style", "glaucoma") == (
            "What are observable symptoms of glaucoma? List them out to be technical."
        )

    def test_truth_jaundice(self):
        p = render_prompt("truth_conversational", "jaundice")
        assert p.startswith("What notes would a doctor have when observing a patient with a jaundice?")
        assert "Include test results." in p

    @given(st.sampled_from(["truth_conversational", "query_conversational", "query_flan_style"]),
           st.sampled_from(AILMENTS), st.sampled_from(AILMENTS))
    def test_differs_only_in_label(self, tid, a, b):
        pa, pb = render_prompt(tid, a), render_prompt(tid, b)
        assert pa.replace(a, "\0") == pb.replace(b, "\0")

    def test_unknown_template(self):
        with pytest.raises(UnknownTemplate):
            render_prompt("truth_flan", "glaucoma")
        with pytest.raises(UnknownTemplate):
            GenerationProfile("truth", "nope")

    def test_empty_ailment(self):
        with pytest.raises(UsageError):
            render_prompt("query_flan_style", "")

    def test_generation_profile_caps(self):
        assert GenerationProfile("truth", "truth_conversational").max_tokens == 500
        assert GenerationProfile("query", "query_conversational").max_tokens == 50
        assert GenerationProfile("query", "query_flan_style").temperature == 1.5


def numbered(items):
    return "\n".join(f"{i}. {x}" for i, x in enumerate(items, start=1))


class TestSplit:
    def test_ten_items(self):
        out = split_list_response(numbered([f"item {i}" for i in range(10)]), SplitConfig(3, True))
        assert [len(q.split("\n")) for q in out] == [3, 3, 3, 1]

    def test_three_items(self):
        assert split_list_response("- a\n- b\n- c") == ["a\nb\nc"]

    def test_drop_tail(self):
        text = "1. redness\n2. itching\n3. tearing\n4. discharge"
        assert split_list_response(text, SplitConfig(3, keep_partial_tail=False)) == ["redness\nitching\ntearing"]

    def test_markers(self):
        text = "Notes:\n* dry eyes\n2) halos\n-  blurred vision  \n10. pain"
        assert parse_list_items(text) == ["dry eyes", "halos", "blurred vision", "pain"]

    def test_plain_lines(self):
        assert parse_list_items("yellow skin\n\ndark urine\n") == ["yellow skin", "dark urine"]

    def test_nested_and_continuation(self):
        text = "1. Vital signs\n   - BP 120/80\n   - HR 72\n2. Skin\nyellow tint\n\nClosing remark."
        assert parse_list_items(text) == ["Vital signs BP 120/80 HR 72", "Skin yellow tint"]

    def test_empty(self):
        with pytest.raises(EmptyResponse):
            split_list_response("  \n\n ")

    def test_drop_tail_can_leave_nothing(self):
        assert split_list_response("- a\n- b", SplitConfig(3, keep_partial_tail=False)) == []

    @given(st.lists(st.text(alphabet="abcxyz ", min_size=1).map(str.strip).filter(bool), min_size=1, max_size=40),
           st.integers(1, 6))
    def test_conservation(self, items, size):
        chunks = split_list_response(numbered(items), SplitConfig(size, True))
        flat = [line for c in chunks for line in c.split("\n")]
        assert flat == items
        assert len(chunks) == -(-len(items) // size)


def group(n, ailment="glaucoma", source="gpt-3.5-turbo"):
    return [CorpusEntry(ailment, f"q{i}", source, "query") for i in range(n)]


class TestSubsample:
    def test_third_of_135(self):
        entries = group(135)
        out = subsample(entries, "third")
        assert len(out) == 45
        assert [e.text for e in out] == [f"q{i}" for i in range(0, 135, 3)]

    def test_fifth_of_200(self):
        assert len(subsample(group(200, source="flan-t5-xl"), "fifth")) == 40

    def test_all_is_identity(self):
        entries = group(17)
        assert subsample(entries, "all") == entries

    def test_per_group(self):
        entries = []
        for i in range(10):
            entries += [CorpusEntry("glaucoma", f"g{i}", "s", "query"), CorpusEntry("jaundice", f"j{i}", "s", "query")]
        out = subsample(entries, "third")
        assert [e.text for e in out] == ["g0", "j0", "g3", "j3", "g6", "j6", "g9", "j9"]

    def test_fraction_spellings(self):
        from fractions import Fraction

        assert stride_of("1/3") == stride_of(Fraction(1, 3)) == stride_of(3) == 3
        for bad in ["1/0", "2/3", "half", Fraction(2, 5), 0]:
            with pytest.raises(InvalidFraction):
                stride_of(bad)

    def test_random_mode(self):
        entries = group(50)
        a = subsample(entries, "fifth", mode="random", seed=4)
        assert a == subsample(entries, "fifth", mode="random", seed=4)
        assert len(a) == 10
        idx = [entries.index(e) for e in a]
        assert idx == sorted(idx)

    @given(st.integers(0, 300), st.sampled_from([1, 2, 3, 5, 7]))
    def test_size_and_determinism(self, n, s):
        entries = group(n)
        out = subsample(entries, f"1/{s}")
        assert len(out) == -(-n // s)
        assert out == subsample(entries, f"1/{s}")


class TestTokens:
    def test_counts(self):
        assert approx_token_count("") == 0
        assert approx_token_count("x" * 200) == 50
        assert approx_token_count("x" * 2000) == 500
        assert approx_token_count("abcde") == 2

    def test_entry_fills_count(self):
        assert CorpusEntry("glaucoma", "x" * 9, "s", "query").approx_tokens == 3


class TestValidate:
    def entries(self):
        out = [CorpusEntry(a, f"truth about {a}", "gpt-3.5-turbo", "truth") for a in AILMENTS]
        out += [CorpusEntry(a, f"query {a}", "gpt-3.5-turbo", "query") for a in AILMENTS]
        return out

    def test_clean(self):
        counts = {"gpt-3.5-turbo": {a: 1 for a in AILMENTS}}
        report = validate_corpus(self.entries(), manifest(per_source_counts=counts), check_counts=True)
        assert report.ok
        assert report.checked == 16

    def test_unknown_label(self):
        entries = self.entries() + [CorpusEntry("rickets", "bowed legs", "gpt-3.5-turbo", "query")]
        report = validate_corpus(entries, manifest())
        assert len(report.violations) == 1
        assert report.violations[0].index == 16
        assert "rickets" in report.violations[0].message

    def test_truth_cap(self):
        entries = [CorpusEntry("glaucoma", "x" * 2400, "gpt-3.5-turbo", "truth")]
        (v,) = validate_corpus(entries, manifest()).violations
        assert "500" in v.message and v.index == 0

    def test_query_cap_and_empty(self):
        entries = [CorpusEntry("glaucoma", "x" * 201, "s", "query"), CorpusEntry("glaucoma", " ", "s", "query")]
        report = validate_corpus(entries, manifest())
        assert [v.index for v in report.violations] == [0, 1]

    def test_count_mismatch(self):
        counts = {"gpt-3.5-turbo": {a: 2 for a in AILMENTS}}
        report = validate_corpus(self.entries(), manifest(per_source_counts=counts), check_counts=True)
        assert len(report.violations) == 8
        assert all(v.index is None for v in report.violations)


class TestManifestAndIO:
    def test_manifest_rules(self):
        with pytest.raises(UsageError):
            DatasetManifest(["glaucoma"], [])
        with pytest.raises(UsageError):
            DatasetManifest(["a", "a"], [])
        with pytest.raises(UsageError):
            DatasetManifest(["a", "b"], ["s"], {"s": {"a": -1}})

    def test_manifest_round_trip(self, tmp_path):
        m = manifest(per_source_counts={"gpt-3.5-turbo": {"glaucoma": 135}}, styles={"gpt-3.5-turbo": "conversational"})
        m.save(tmp_path / "m.json")
        assert DatasetManifest.load(tmp_path / "m.json") == m

    def test_jsonl_round_trip(self, tmp_path):
        entries = [CorpusEntry("skin cancer", "irregular border – évolving", "llama-2-70b-chat", "query")]
        write_jsonl(entries, tmp_path / "c.jsonl")
        assert read_jsonl(tmp_path / "c.jsonl") == entries

    def test_jsonl_bad_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps({"ailment": "glaucoma", "text": "x", "source_model": "s", "kind": "truth"})
                        + "\n{broken\n")
        with pytest.raises(CorpusFormatError, match=":2:"):
            read_jsonl(path)

    def test_select_keeps_order(self):
        entries = group(3) + group(2, source="other") + group(2)
        assert select(entries, "gpt-3.5-turbo", "query") == group(3) + group(2)
