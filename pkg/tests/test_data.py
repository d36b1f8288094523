import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtkd.data import (CORPUS_COUNTS, Dataset, batch_indices, desk_spec, generate_dataset, load_jsonl, make_batches,
                       make_generator_spec, manifest_path_for, n_splits, random_orthogonal, select_split,
                       table1_counts, write_jsonl)
from mtkd.errors import DataError, InvalidArgument, ParseError
from mtkd.rng import SplitMix64


def tiny(seed=0, **kw):
    kw.setdefault("n_train", 6)
    kw.setdefault("n_test", 2)
    kw.setdefault("dim", 5)
    return generate_dataset(desk_spec(seed=seed, **kw))


class TestGenerator:
    def test_same_spec_byte_identical(self, tmp_path):
        a = write_jsonl(tiny(4), tmp_path / "a.jsonl")
        b = write_jsonl(tiny(4), tmp_path / "b.jsonl")
        assert a.read_bytes() == b.read_bytes()
        assert manifest_path_for(a).read_bytes() == manifest_path_for(b).read_bytes()

    def test_seed_changes_output(self):
        assert not tiny(1).equals(tiny(2))

    def test_sigma_zero_gives_transformed_means(self):
        spec = desk_spec(seed=2, n_train=3, n_test=1, dim=5, sigma=0.0)
        ds = generate_dataset(spec)
        for i in range(len(ds)):
            lang, c = ds.languages[i], ds.labels[i]
            expected = spec.rotations[lang] @ spec.class_means[c] + spec.shifts[lang]
            np.testing.assert_allclose(ds.features[i], expected, atol=1e-12)

    def test_desk_counts(self):
        ds = generate_dataset(desk_spec(seed=0))
        m = ds.manifest
        assert (m.n_classes, m.dim, m.languages) == (4, 16, ["en", "fi", "fr"])
        assert m.counts == {lang: {"0": 800, "1": 200} for lang in ("en", "fi", "fr")}
        for lang in m.languages:
            mask = ds.language_mask(lang)
            for split, per_class in ((0, 200), (1, 50)):
                sel = mask & (ds.splits == split)
                assert np.bincount(ds.labels[sel], minlength=4).tolist() == [per_class] * 4

    def test_language_geometry(self):
        spec = desk_spec(seed=5, n_train=400, n_test=1, dim=6)
        ds = generate_dataset(spec)
        sel = ds.language_mask("fi") & (ds.labels == 2)
        centre = spec.rotations["fi"] @ spec.class_means[2] + spec.shifts["fi"]
        np.testing.assert_allclose(ds.features[sel].mean(axis=0), centre, atol=0.25)
        assert np.linalg.norm(spec.shifts["fi"]) == pytest.approx(3.0)

    def test_orthogonal(self):
        q = random_orthogonal(8, SplitMix64(3))
        np.testing.assert_allclose(q.T @ q, np.eye(8), atol=1e-12)

    @pytest.mark.parametrize("kw", [{"sigma": -1.0}, {"n_train": 0}, {"n_test": 0}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidArgument):
            generate_dataset(desk_spec(**kw))

    def test_dim_below_classes(self):
        with pytest.raises(InvalidArgument):
            desk_spec(dim=3)


class TestCorpusPreset:
    def test_full_scale(self):
        counts, splits = table1_counts(1.0)
        assert splits == {"en": 5, "fi": 9, "fr": 1}
        assert counts["fr"] == {0: 105, 1: 21}
        for lang in ("en", "fi"):
            total = 4 * sum(counts[lang].values())
            assert abs(total - CORPUS_COUNTS[lang]["train"] - CORPUS_COUNTS[lang]["test"]) <= 2
            folds = list(counts[lang].values())
            assert max(folds) - min(folds) <= 1

    def test_scaled(self):
        counts, _ = table1_counts(0.1)
        assert 4 * sum(counts["en"].values()) == pytest.approx(574.9, abs=2)
        assert counts["fr"] == {0: 10, 1: 2}

    def test_bad_scale(self):
        with pytest.raises(InvalidArgument):
            table1_counts(0)


class TestJsonl:
    def test_round_trip(self, tmp_path):
        ds = tiny(3)
        back = load_jsonl(write_jsonl(ds, tmp_path / "d.jsonl"))
        assert back.equals(ds)
        assert back.manifest.to_json() == ds.manifest.to_json()
        assert np.array_equal(back.features, ds.features)

    def test_round_trip_without_manifest(self, tmp_path):
        ds = tiny(3)
        path = write_jsonl(ds, tmp_path / "d.jsonl")
        manifest_path_for(path).unlink()
        back = load_jsonl(path)
        assert back.equals(ds)
        assert back.manifest.dim == 5 and back.manifest.languages == ["en", "fi", "fr"]

    def test_line_format(self, tmp_path):
        path = write_jsonl(tiny(0), tmp_path / "d.jsonl")
        row = json.loads(path.read_text().splitlines()[0])
        assert set(row) == {"features", "label", "language", "split"}
        assert row["label"] in ("angry", "happy", "neutral", "sad")

    def _write(self, path, rows, dim=16):
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        return path

    def test_short_feature_row_names_line(self, tmp_path):
        good = {"features": [0.0] * 16, "label": "sad", "language": "en", "split": 0}
        bad = dict(good, features=[0.0] * 15)
        path = self._write(tmp_path / "d.jsonl", [good, good, bad])
        with pytest.raises(ParseError, match="line 3"):
            load_jsonl(path)

    def test_manifest_dim_enforced(self, tmp_path):
        ds = generate_dataset(desk_spec(n_train=1, n_test=1))
        path = write_jsonl(ds, tmp_path / "d.jsonl")
        lines = path.read_text().splitlines()
        row = json.loads(lines[0])
        row["features"] = row["features"][:15]
        lines[0] = json.dumps(row)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError, match="line 1: expected 16 features, got 15"):
            load_jsonl(path)

    @pytest.mark.parametrize("row, msg", [({"label": "sad", "language": "en", "split": 0}, "features"),
                                          ({"features": [1.0, 2.0], "label": "joy", "language": "en", "split": 0},
                                           "unknown class"),
                                          ({"features": [1.0, 2.0], "label": "sad", "language": "en", "split": -1},
                                           "split")])
    def test_bad_rows(self, tmp_path, row, msg):
        with pytest.raises(ParseError, match=msg):
            load_jsonl(self._write(tmp_path / "d.jsonl", [row]))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("{not json\n")
        with pytest.raises(ParseError, match="line 1"):
            load_jsonl(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("")
        with pytest.raises(DataError, match="no samples"):
            load_jsonl(path)

    def test_undeclared_language(self, tmp_path):
        ds = tiny(0)
        path = write_jsonl(ds, tmp_path / "d.jsonl")
        with open(path, "a") as fh:
            fh.write(json.dumps({"features": [0.0] * 5, "label": "sad", "language": "de", "split": 0}) + "\n")
        with pytest.raises(DataError, match="de"):
            load_jsonl(path)


def check_partition(ds: Dataset) -> None:
    m = ds.manifest
    for lang in m.languages:
        lang_ids = set(ds.ids[ds.language_mask(lang)].tolist())
        n = m.splits_per_language[lang]
        tests = []
        for k in range(n_splits(m, [lang])):
            tr = set(select_split(ds, k, "train", lang).ids.tolist())
            te = set(select_split(ds, k, "test", lang).ids.tolist())
            assert not tr & te
            assert tr | te == lang_ids
            tests.append(te)
        if n > 1:
            assert set().union(*tests) == lang_ids
            assert sum(len(t) for t in tests) == len(lang_ids)


class TestSplits:
    def test_single_split_language_fixed(self):
        ds = tiny(0)
        te = select_split(ds, 0, "test", "fr")
        assert len(te) == 8 and set(te.splits.tolist()) == {1}
        assert te.equals(select_split(ds, 3, "test", "fr"))

    def test_multilingual_union(self):
        ds = tiny(0)
        assert len(select_split(ds, 0, "train")) == 3 * 24
        assert len(select_split(ds, 0, "test")) == 3 * 8

    def test_bad_arguments(self):
        ds = tiny(0)
        with pytest.raises(InvalidArgument):
            select_split(ds, 0, "validation")
        with pytest.raises(InvalidArgument):
            select_split(ds, 0, "test", "de")
        with pytest.raises(InvalidArgument):
            select_split(ds, -1, "test")

    def test_out_of_range_split(self):
        counts, splits = {"en": {0: 2, 1: 2, 2: 2}}, {"en": 3}
        ds = generate_dataset(make_generator_spec(0, counts, splits, dim=4))
        with pytest.raises(InvalidArgument):
            select_split(ds, 3, "test", "en")

    def test_n_splits(self):
        counts, splits = table1_counts(0.02)
        assert n_splits(generate_dataset(make_generator_spec(0, counts, splits, dim=4)).manifest) == 5

    @settings(max_examples=200, deadline=None)
    @given(st.dictionaries(st.sampled_from(["en", "fi", "fr", "de"]),
                           st.lists(st.integers(1, 3), min_size=1, max_size=6), min_size=1, max_size=3),
           st.integers(0, 2 ** 32))
    def test_partition_property(self, layout, seed):
        counts = {lang: dict(enumerate(per)) if len(per) > 1 else {0: per[0], 1: per[0]}
                  for lang, per in layout.items()}
        splits = {lang: len(per) for lang, per in layout.items()}
        check_partition(generate_dataset(make_generator_spec(seed, counts, splits, dim=4)))


class TestBatching:
    def test_sizes(self):
        assert [len(b) for b in batch_indices(100, 32, 0, 0)] == [32, 32, 32, 4]

    def test_permutation_and_determinism(self):
        a = batch_indices(100, 32, 7, 3)
        assert sorted(np.concatenate(a).tolist()) == list(range(100))
        assert all(np.array_equal(x, y) for x, y in zip(a, batch_indices(100, 32, 7, 3)))
        assert not np.array_equal(np.concatenate(a), np.concatenate(batch_indices(100, 32, 7, 4)))

    def test_make_batches(self):
        ds = tiny(0)
        batches = make_batches(ds, 10, 1, 0)
        assert sum(len(b) for b in batches) == len(ds)
        assert sorted(np.concatenate([b.ids for b in batches]).tolist()) == list(range(len(ds)))

    def test_bad_batch_size(self):
        with pytest.raises(InvalidArgument):
            batch_indices(10, 0, 0, 0)
