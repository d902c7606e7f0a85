import pytest

from cnextract.corpus import build_bag, build_bags, read_corpus
from cnextract.models import HashTextModel


@pytest.fixture
def model():
    return HashTextModel(hidden_size=8)


SENTENCES = [
    "the house finch sang at dawn",
    "a finch landed on the feeder",
    "finches are small birds",            # no word-boundary match for "finch"
    "the finch, startled, flew away",
    "this sentence never mentions the bird",
    "finch " * 40,                        # mentions it but far too long
]


class TestBuildBag:
    def test_only_mentioning_sentences_kept(self, model):
        bag = build_bag(SENTENCES, "finch", model, t_max=64, m=10, seed=0)
        assert bag.available == 3
        for s in bag.sentences:
            assert "finch" in s.lower()

    def test_word_boundary_matching(self, model):
        bag = build_bag(["finches everywhere"], "finch", model, t_max=64, m=5, seed=0)
        assert bag.available == 0

    def test_tmax_filters_long_sentences(self, model):
        bag = build_bag(SENTENCES, "finch", model, t_max=64, m=10, seed=0)
        for s in bag.sentences:
            assert len(model.tokenize(s)) <= 64
        tight = build_bag(SENTENCES, "finch", model, t_max=6, m=10, seed=0)
        assert tight.available < bag.available

    def test_sampling_caps_at_m(self, model):
        lines = [f"a finch numbered {i}" for i in range(50)]
        bag = build_bag(lines, "finch", model, t_max=64, m=10, seed=3)
        assert len(bag.sentences) == 10
        assert bag.available == 50

    def test_sampling_deterministic(self, model):
        lines = [f"a finch numbered {i}" for i in range(50)]
        one = build_bag(lines, "finch", model, t_max=64, m=10, seed=3)
        two = build_bag(lines, "finch", model, t_max=64, m=10, seed=3)
        assert one.sentences == two.sentences
        other = build_bag(lines, "finch", model, t_max=64, m=10, seed=4)
        assert one.sentences != other.sentences

    def test_shortfall_keeps_all_and_records_count(self, model):
        bag = build_bag(SENTENCES, "finch", model, t_max=64, m=1000, seed=0)
        assert len(bag.sentences) == bag.available == 3

    def test_multiword_name(self, model):
        bag = build_bag(SENTENCES, "house finch", model, t_max=64, m=10, seed=0)
        assert bag.available == 1


class TestBuildBags:
    def test_one_bag_per_synonym(self, model):
        bags = build_bags(SENTENCES, {"bird": ["finch", "house finch"]}, model,
                          t_max=64, m=10, seed=0)
        assert [b.name for b in bags["bird"]] == ["finch", "house finch"]


class TestReadCorpus:
    def test_skips_blank_lines(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("one\n\n  \ntwo\n", encoding="utf-8")
        assert read_corpus(p) == ["one", "two"]
