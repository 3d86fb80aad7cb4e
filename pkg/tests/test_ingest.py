import io

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scoreloss.ingest import (
    CATEGORICAL,
    NUMERIC,
    DataError,
    PreprocessPlan,
    Standardizer,
    TabularDataset,
    WindowPlan,
    clean_and_encode,
    encode_features,
    label_by_future_level,
    make_windows,
    read_csv,
)
from scoreloss.synthetic import POLLUTION_POSITIVE_RATE, adult_like_csv, adult_like_plan, pollution_like

from conftest import DATA_DIR


def parse(text, **kw):
    return read_csv(io.StringIO(text), **kw)


class TestReadCsv:
    def test_kinds_and_missing(self):
        ds = parse("a,b,c\n1, x ,?\n2,y,3.5\n")
        assert ds.kinds == {"a": NUMERIC, "b": CATEGORICAL, "c": NUMERIC}
        assert ds.frame["b"].tolist() == ["x", "y"]
        assert np.isnan(ds.frame["c"].iloc[0])

    def test_quoted_commas(self):
        ds = parse('name,v\n"Smith, J",1\n"O""Neil",2\n')
        assert ds.frame["name"].tolist() == ["Smith, J", 'O"Neil']

    def test_custom_missing_tokens(self):
        ds = parse("a\nNA\n1\n", missing_tokens=("NA",))
        assert ds.frame["a"].isna().tolist() == [True, False]

    def test_forced_numeric_bad_cell(self):
        with pytest.raises(DataError, match="row 3"):
            parse("a\n1\nfoo\n", kinds={"a": NUMERIC})

    def test_duplicate_header(self):
        with pytest.raises(DataError):
            parse("a,a\n1,2\n")

    def test_empty_input(self):
        with pytest.raises(DataError):
            parse("")

    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
    def test_float_round_trip(self, values):
        frame = pd.DataFrame({"v": values, "y": [0] * len(values)})
        ds = TabularDataset(frame, {"v": NUMERIC, "y": NUMERIC})
        back = parse(ds.to_csv())
        assert back.frame["v"].tolist() == [float(v) for v in values]


class TestEncode:
    def test_indicator_mapping(self):
        ds = parse("country,y\nUS,1\nother,0\nUS,0\n")
        enc = clean_and_encode(ds, PreprocessPlan(label="y", indicators={"country": "US"}, standardize="none"))
        assert enc.frame["country"].tolist() == [1.0, 0.0, 1.0]

    def test_one_hot_rows_sum_to_one(self):
        ds = parse("c,y\nr,1\ng,0\nb,0\ng,1\n")
        enc = clean_and_encode(ds, PreprocessPlan(label="y", standardize="none"))
        cols = ["c=b", "c=g", "c=r"]
        assert enc.feature_columns() == cols
        assert np.array_equal(enc.frame[cols].sum(axis=1).to_numpy(), np.ones(4))
        assert enc.frame["c=g"].tolist() == [0.0, 1.0, 0.0, 1.0]

    def test_standardize_values(self):
        ds = parse("a,y\n1,0\n2,1\n3,0\n")
        enc = clean_and_encode(ds, PreprocessPlan(label="y"))
        s = np.sqrt(1.5)
        assert np.allclose(enc.frame["a"], [-s, 0.0, s], atol=1e-12)

    def test_standardize_numeric_only(self):
        ds = parse("a,c,y\n1,u,0\n3,v,1\n")
        enc, to_scale = encode_features(ds, PreprocessPlan(label="y", standardize="numeric"))
        assert to_scale == ["a"]

    def test_constant_column_centered(self):
        enc = clean_and_encode(parse("a,y\n5,0\n5,1\n"), PreprocessPlan(label="y"))
        assert enc.frame["a"].tolist() == [0.0, 0.0]

    def test_fit_rows_only(self):
        ds = parse("a,y\n0,0\n2,1\n100,0\n")
        enc = clean_and_encode(ds, PreprocessPlan(label="y"), fit_rows=slice(0, 2))
        assert enc.frame["a"].tolist() == [-1.0, 1.0, 99.0]

    def test_missing_rows_dropped(self):
        enc = clean_and_encode(parse("a,b,y\n1,?,0\n2,x,1\n3,y,0\n"), PreprocessPlan(label="y", standardize="none"))
        assert enc.n_rows == 2
        assert enc.frame["a"].tolist() == [2.0, 3.0]

    def test_missing_without_drop(self):
        with pytest.raises(DataError, match="missing"):
            encode_features(parse("a,y\n?,0\n1,1\n"), PreprocessPlan(label="y", drop_missing=False))

    def test_all_rows_missing(self):
        with pytest.raises(DataError, match="no rows"):
            encode_features(parse("a,y\n?,0\n?,1\n"), PreprocessPlan(label="y"))

    def test_unknown_column(self):
        with pytest.raises(DataError, match="zzz"):
            encode_features(parse("a,y\n1,0\n"), PreprocessPlan(label="y", drop_columns=("zzz",)))

    def test_label_not_binary(self):
        with pytest.raises(DataError, match="label_positive"):
            encode_features(parse("a,y\n1,0\n2,2\n"), PreprocessPlan(label="y"))

    def test_label_positive(self):
        enc, _ = encode_features(parse("a,y\n1,>50K\n2,<=50K\n"), PreprocessPlan(label="y", label_positive=">50K"))
        assert enc.labels().tolist() == [1, 0]

    def test_bad_standardize_option(self):
        with pytest.raises(ValueError):
            PreprocessPlan(standardize="some")

    def test_plan_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            PreprocessPlan.from_config({"lable": "y"})

    def test_idempotent_on_own_output(self):
        raw = parse(adult_like_csv(300, seed=2))
        once = clean_and_encode(raw, adult_like_plan())
        twice = clean_and_encode(parse(once.to_csv()), PreprocessPlan(label="income"))
        assert twice.columns == once.columns
        assert np.allclose(twice.frame.to_numpy(float), once.frame.to_numpy(float), atol=1e-12)

    def test_fixture_feature_count(self):
        raw = read_csv(DATA_DIR / "mini_adult.csv")
        enc = clean_and_encode(raw, adult_like_plan())
        card = raw.cardinalities()
        numeric = [c for c in raw.columns if raw.kinds[c] == NUMERIC]
        expected = len(numeric) + 1 + sum(card[c] for c in card if c not in ("education", "native-country", "income"))
        assert len(enc.feature_columns()) == expected == 13


class TestStandardizer:
    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
    def test_zero_mean_unit_std(self, values):
        frame = pd.DataFrame({"a": values})
        out = Standardizer.fit(frame, ["a"]).transform(frame)["a"].to_numpy()
        assert abs(out.mean()) < 1e-9
        if len(set(values)) == 1:
            assert np.all(np.abs(out) < 1e-12)
        elif np.ptp(values) > 1e-6:
            assert out.std() == pytest.approx(1.0, abs=1e-9)

    def test_repeated_inexact_value_is_constant(self):
        frame = pd.DataFrame({"a": [1.9, 1.9, 1.9]})
        assert np.all(np.abs(Standardizer.fit(frame, ["a"]).transform(frame)["a"]) < 1e-15)

    def test_zero_rows(self):
        with pytest.raises(DataError):
            Standardizer.fit(pd.DataFrame({"a": []}), ["a"])


class TestFutureLabels:
    def test_small(self):
        assert label_by_future_level([100, 500, 300], 400).tolist() == [1, 0]

    def test_scan_oracle(self, rng):
        s = rng.random(30) * 10
        expected = [1 if s[t + 1] > 5 else 0 for t in range(29)]
        assert label_by_future_level(s, 5).tolist() == expected

    def test_equal_level_is_negative(self):
        assert label_by_future_level([1.0, 2.0], 2.0).tolist() == [0]

    def test_too_short(self):
        with pytest.raises(DataError):
            label_by_future_level([1.0], 0.0)

    def test_missing_values(self):
        with pytest.raises(DataError):
            label_by_future_level([1.0, np.nan, 2.0], 0.0)


class TestWindows:
    def test_starts(self):
        wins = make_windows(100, WindowPlan(50, 20, 10, 3))
        assert [(tr.start, tr.stop, te.start, te.stop) for tr, te in wins] == [
            (0, 50, 50, 70), (10, 60, 60, 80), (20, 70, 70, 90),
        ]

    def test_large_plan(self):
        wins = make_windows(20000, WindowPlan(13104, 4320, 120, 20))
        assert wins[-1][0].start == 19 * 120
        assert wins[-1][1].stop == 19 * 120 + 13104 + 4320

    def test_overflow(self):
        with pytest.raises(DataError, match="needs"):
            make_windows(80, WindowPlan(50, 20, 10, 3))

    @given(
        st.integers(1, 40), st.integers(1, 20), st.integers(0, 15), st.integers(1, 6)
    )
    def test_no_leakage(self, train, test, shift, repeats):
        plan = WindowPlan(train, test, shift, repeats)
        for tr, te in make_windows(plan.span, plan):
            assert tr.stop == te.start
            assert tr.stop - tr.start == train and te.stop - te.start == test

    @pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, 0, 1, 1), (1, 1, -1, 1), (1, 1, 1, 0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            WindowPlan(*args)


class TestSynthetic:
    def test_adult_deterministic(self):
        assert adult_like_csv(100, seed=4) == adult_like_csv(100, seed=4)
        assert adult_like_csv(100, seed=4) != adult_like_csv(100, seed=5)

    def test_adult_positive_rate(self):
        enc = clean_and_encode(parse(adult_like_csv(2000, seed=0)), adult_like_plan())
        assert 0.2 < enc.labels().mean() < 0.3

    def test_pollution_rate_and_shape(self):
        ds = pollution_like(2800, seed=0)
        y = ds.labels()
        assert ds.n_rows == 2799
        assert abs(y.mean() - POLLUTION_POSITIVE_RATE) < 0.003
        assert ds.kinds["wind_dir"] == CATEGORICAL

    def test_pollution_label_is_future_exceedance(self):
        ds = pollution_like(500, seed=1, positive_rate=0.1)
        pm = ds.frame["pm2.5"].to_numpy()
        y = ds.labels()
        # label t looks at pm at t + 1, which is the next row's current value
        level_lo = pm[1:][y[:-1] == 0].max()
        level_hi = pm[1:][y[:-1] == 1].min()
        assert level_lo < level_hi

    def test_pollution_bad_rate(self):
        with pytest.raises(ValueError):
            pollution_like(100, positive_rate=0.6)
