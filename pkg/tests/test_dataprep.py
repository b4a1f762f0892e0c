#!/usr/bin/env python3
"""
Data handling tests
Cleansing, imputation, merging, scaling, windowing and splitting
"""

import os
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

os.environ['FORECAST_ENV'] = 'test'

from data_handler import (DataSchemaError, RawTable, ScaleParams, apply_scale, cleanse_table,
                          fit_minmax_scale, fit_robust_scale, impute, invert_scale, invert_values,
                          load_merged_table, make_windows, merge_on_year, parse_value, read_raw_table, split)
from engines.numkernel import quantile
from model_constants import TABLE_HEADERS, TableNames
from tests.synthetic_data import build_columns, write_dft_csvs


class TestParseValue(unittest.TestCase):
    """Text to float conversion"""

    def test_examples(self):
        """Separators stripped, garbage becomes zero"""
        self.assertEqual(parse_value(" 1,474 "), 1474.0)
        self.assertEqual(parse_value("abc"), 0.0)
        self.assertEqual(parse_value(""), 0.0)
        self.assertEqual(parse_value("-3.25"), -3.25)

    def test_idempotent_on_own_output(self):
        """Parsing the rendered result gives the same value"""
        for text in (" 1,474 ", "abc", "2.5e3", "7", "1,234,567.5"):
            value = parse_value(text)
            self.assertEqual(parse_value(str(value)), value)


class TestCleanseTable(unittest.TestCase):
    """Row skipping, renaming and annotation stripping"""

    def test_bracket_annotation_stripped(self):
        """'1391 [note]' becomes 1391.0"""
        raw = RawTable(cells=[["title"], ["2001", "1391 [note]"], ["2002", "1,200"]], source_name="t")
        df = cleanse_table(raw, 1, ["year", "value"])
        self.assertEqual(df["value"].tolist(), [1391.0, 1200.0])
        self.assertEqual(df["year"].tolist(), [2001, 2002])
        self.assertEqual(df["year"].dtype, np.int64)

    def test_clean_table_unchanged(self):
        """skip_rows = 0 on clean numeric text keeps values"""
        raw = RawTable(cells=[["2000", "1.5", "2"], ["2001", "3", "4.25"]], source_name="t")
        df = cleanse_table(raw, 0, ["year", "a", "b"])
        self.assertEqual(df["a"].tolist(), [1.5, 3.0])
        self.assertEqual(df["b"].tolist(), [2.0, 4.25])

    def test_extra_columns_dropped(self):
        """Only the leading header-count columns are kept"""
        raw = RawTable(cells=[["2000", "1", "9", "junk"]], source_name="t")
        df = cleanse_table(raw, 0, ["year", "a"])
        self.assertEqual(list(df.columns), ["year", "a"])

    def test_too_few_columns(self):
        """Missing columns are named in the error"""
        raw = RawTable(cells=[["2000", "1"]], source_name="t")
        with self.assertRaises(DataSchemaError) as ctx:
            cleanse_table(raw, 0, ["year", "a", "b", "c"])
        self.assertIn("['b', 'c']", str(ctx.exception))

    def test_empty_result(self):
        """No data rows after skipping raises"""
        with self.assertRaises(DataSchemaError):
            cleanse_table(RawTable(cells=[["x"], ["y"]], source_name="t"), 2, ["year"])
        with self.assertRaises(DataSchemaError):
            cleanse_table(RawTable(cells=[["x"], ["note", "1"]], source_name="t"), 1, ["year", "a"])

    def test_footer_and_duplicate_years_dropped(self):
        """Non-year rows vanish and the first duplicate year wins"""
        raw = RawTable(cells=[["2000", "1"], ["2000", "2"], ["2001", "3"], ["Source: DfT"]], source_name="t")
        with self.assertLogs("data_handler", level="WARNING"):
            df = cleanse_table(raw, 0, ["year", "a"])
        self.assertEqual(df["year"].tolist(), [2000, 2001])
        self.assertEqual(df["a"].tolist(), [1.0, 3.0])


class TestSyntheticExports(unittest.TestCase):
    """Reading the exported sheets from disk"""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.paths = write_dft_csvs(self.temp_dir)

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_casualties_sheet(self):
        """Seven skipped rows and eight headers put year first"""
        df = cleanse_table(read_raw_table(self.paths[TableNames.CASUALTIES]), 7,
                           TABLE_HEADERS[TableNames.CASUALTIES])
        self.assertEqual(list(df.columns), TABLE_HEADERS[TableNames.CASUALTIES])
        self.assertEqual(df["year"].iloc[0], 1950)
        self.assertEqual(len(df), 73)
        expected = build_columns()["all_road_users_killed"]
        np.testing.assert_array_equal(df["all_road_users_killed"].to_numpy(), expected)

    def test_merged_table_shape(self):
        """Every sheet column once, plus year"""
        merged = load_merged_table(self.paths)
        self.assertEqual(len(merged.columns), 1 + sum(len(h) - 1 for h in TABLE_HEADERS.values()))
        self.assertEqual(len(merged), 73)
        self.assertTrue(np.all(np.isfinite(merged.drop(columns="year").to_numpy())))

    def test_raw_rows_keep_quoted_and_blank_cells(self):
        """Quoted separators survive, short rows are padded and empty trailing columns dropped"""
        path = Path(self.temp_dir) / "ragged.csv"
        path.write_text('Title line\nYear,Killed,\n"1,234 [note 1]",5,\n\n2001,6\n', encoding="utf-8")
        raw = read_raw_table(path)
        self.assertEqual(raw.cells, [["Title line", ""], ["Year", "Killed"], ["1,234 [note 1]", "5"],
                                     ["", ""], ["2001", "6"]])

    def test_missing_file(self):
        """The error names the missing path"""
        missing = str(Path(self.temp_dir) / "nope.csv")
        with self.assertRaises(DataSchemaError) as ctx:
            read_raw_table(missing)
        self.assertIn(missing, str(ctx.exception))


class TestImputeAndMerge(unittest.TestCase):
    """Median imputation and the year-keyed outer join"""

    def test_impute_examples(self):
        """Gaps and infinities take the column median"""
        df = pd.DataFrame({"year": [1, 2, 3], "a": [1.0, np.nan, 3.0], "b": [np.inf, 4.0, 6.0],
                           "c": [7.0, 8.0, 9.0]})
        out = impute(df)
        self.assertEqual(out["a"].tolist(), [1.0, 2.0, 3.0])
        self.assertEqual(out["b"].tolist(), [5.0, 4.0, 6.0])
        self.assertEqual(out["c"].tolist(), [7.0, 8.0, 9.0])

    def test_all_missing_column(self):
        """The error names the column"""
        df = pd.DataFrame({"year": [1, 2], "empty": [np.nan, np.inf]})
        with self.assertRaises(DataSchemaError) as ctx:
            impute(df)
        self.assertIn("empty", str(ctx.exception))

    def test_merge_union_of_years(self):
        """{2000,2001} and {2001,2002} give three rows with imputed gaps"""
        a = pd.DataFrame({"year": [2000, 2001], "a": [1.0, 3.0]})
        b = pd.DataFrame({"year": [2001, 2002], "b": [10.0, 20.0]})
        c = pd.DataFrame({"year": [2000, 2001, 2002], "c": [5.0, 6.0, 7.0]})
        merged = merge_on_year(a, b, c)
        self.assertEqual(merged["year"].tolist(), [2000, 2001, 2002])
        self.assertEqual(merged["a"].tolist(), [1.0, 3.0, 2.0])
        self.assertEqual(merged["b"].tolist(), [15.0, 10.0, 20.0])

    def test_merge_identical_years(self):
        """Identical ranges keep the row count"""
        t = [pd.DataFrame({"year": [2000, 2001], name: [1.0, 2.0]}) for name in ("a", "b", "c")]
        self.assertEqual(len(merge_on_year(*t)), 2)

    def test_duplicate_columns(self):
        """Shared non-year columns are rejected"""
        a = pd.DataFrame({"year": [2000], "x": [1.0]})
        b = pd.DataFrame({"year": [2000], "x": [2.0]})
        c = pd.DataFrame({"year": [2000], "y": [3.0]})
        with self.assertRaises(DataSchemaError):
            merge_on_year(a, b, c)


class TestScaling(unittest.TestCase):
    """Robust and min-max scaling"""

    def test_robust_example(self):
        """[1..5] scales to [-1, -0.5, 0, 0.5, 1]"""
        df = pd.DataFrame({"year": range(5), "a": [1.0, 2.0, 3.0, 4.0, 5.0]})
        params = fit_robust_scale(df, ["a"])
        self.assertEqual(params.center["a"], 3.0)
        self.assertEqual(params.scale["a"], 2.0)
        self.assertEqual(apply_scale(df, params)["a"].tolist(), [-1.0, -0.5, 0.0, 0.5, 1.0])

    def test_constant_column(self):
        """Zero IQR falls back to scale 1 and centers to zeros"""
        df = pd.DataFrame({"year": range(3), "a": [5.0, 5.0, 5.0]})
        params = fit_robust_scale(df, ["a"])
        self.assertEqual(params.scale["a"], 1.0)
        self.assertEqual(apply_scale(df, params)["a"].tolist(), [0.0, 0.0, 0.0])

    def test_random_tables(self):
        """Scaled median 0, IQR 1 and exact round trips"""
        rng = np.random.default_rng(12)
        for trial in range(20):
            n = int(rng.integers(5, 60))
            df = pd.DataFrame({"year": np.arange(n), "a": rng.normal(100, 30, n), "b": rng.exponential(5, n),
                               "flat": np.full(n, 3.0)})
            params = fit_robust_scale(df, ["a", "b", "flat"])
            scaled = apply_scale(df, params)
            for col in ("a", "b"):
                values = scaled[col].to_numpy()
                self.assertLess(abs(quantile(values, 0.5)), 1e-9)
                self.assertLess(abs(quantile(values, 0.75) - quantile(values, 0.25) - 1.0), 1e-9)
            self.assertTrue(np.all(scaled["flat"].to_numpy() == 0.0))
            restored = invert_scale(scaled, params)
            for col in ("a", "b", "flat"):
                np.testing.assert_allclose(restored[col], df[col], atol=1e-9, rtol=0)

    def test_outlier_stability(self):
        """The center is the median of the augmented data"""
        values = np.arange(1.0, 10.0)
        df = pd.DataFrame({"year": range(10), "a": np.append(values, 1e9)})
        params = fit_robust_scale(df, ["a"])
        self.assertEqual(params.center["a"], float(np.median(df["a"])))
        self.assertLessEqual(abs(params.center["a"] - 5.0), 1.0)

    def test_minmax(self):
        """Min-max maps the range onto [0, 1]"""
        df = pd.DataFrame({"year": range(3), "a": [2.0, 4.0, 6.0]})
        params = fit_minmax_scale(df, ["a"])
        self.assertEqual(params.kind, "minmax")
        self.assertEqual(apply_scale(df, params)["a"].tolist(), [0.0, 0.5, 1.0])
        np.testing.assert_allclose(invert_values([0.25], params, "a"), [3.0])

    def test_unknown_column(self):
        """Scaling an absent column raises"""
        df = pd.DataFrame({"year": range(3), "a": [1.0, 2.0, 3.0]})
        with self.assertRaises(DataSchemaError):
            fit_robust_scale(df, ["missing"])
        params = ScaleParams(kind="robust", center={"missing": 0.0}, scale={"missing": 1.0})
        with self.assertRaises(DataSchemaError):
            apply_scale(df, params)

    def test_params_document(self):
        """Params survive their dict form"""
        params = ScaleParams(kind="robust", center={"a": 1.5}, scale={"a": 0.25})
        restored = ScaleParams.from_dict(params.to_dict())
        self.assertEqual(restored, params)


class TestWindowsAndSplit(unittest.TestCase):
    """Supervised framing and train/test partitions"""

    def setUp(self):
        self.df = pd.DataFrame({"year": np.arange(1990, 2000), "x": np.arange(10.0), "y": np.arange(10.0) * 2})

    def test_window_counts(self):
        """N - L samples, target year at row L"""
        d = make_windows(self.df, ["x"], "y", 3)
        self.assertEqual(len(d), 7)
        self.assertEqual(d.windows.shape, (7, 3, 1))
        self.assertEqual(int(d.target_years[0]), 1993)
        np.testing.assert_array_equal(d.windows[0, :, 0], [0.0, 1.0, 2.0])
        self.assertEqual(d.samples[0][1], 6.0)

    def test_single_year_windows(self):
        """L = 1 gives one prior year per sample"""
        d = make_windows(self.df, ["x", "y"], "y", 1)
        self.assertEqual(d.windows.shape, (9, 1, 2))

    def test_targets_reproduce_column(self):
        """Concatenated targets equal rows L..N-1"""
        d = make_windows(self.df, ["x"], "y", 4)
        np.testing.assert_array_equal(d.targets, self.df["y"].to_numpy()[4:])

    def test_change_targets_add_back_to_levels(self):
        """Steps plus anchors give the level targets"""
        level = make_windows(self.df, ["x"], "y", 3)
        change = make_windows(self.df, ["x"], "y", 3, "change")
        np.testing.assert_array_equal(change.targets, np.full(7, 2.0))
        np.testing.assert_array_equal(change.anchors, self.df["y"].to_numpy()[2:-1])
        np.testing.assert_array_equal(change.levels(change.targets), level.targets)
        np.testing.assert_array_equal(level.levels(level.targets), level.targets)
        test = split(change, 0.5)[1]
        np.testing.assert_array_equal(test.levels(test.targets), split(level, 0.5)[1].targets)
        with self.assertRaises(DataSchemaError):
            change.levels(np.zeros(3))

    def test_unknown_target_mode(self):
        """Only level and change targets exist"""
        with self.assertRaises(DataSchemaError):
            make_windows(self.df, ["x"], "y", 3, "ratio")

    def test_lookback_too_long(self):
        """L >= N raises"""
        with self.assertRaises(DataSchemaError):
            make_windows(self.df, ["x"], "y", 10)

    def test_year_gap_warns(self):
        """Gaps are reported, windows still use adjacency"""
        gapped = self.df.drop(index=4).reset_index(drop=True)
        with self.assertLogs("data_handler", level="WARNING"):
            d = make_windows(gapped, ["x"], "y", 2)
        self.assertEqual(len(d), 7)

    def test_chronological_split(self):
        """92 samples at 0.8 give 73 / 19 with earliest first"""
        df = pd.DataFrame({"year": np.arange(1900, 1997), "x": np.arange(97.0)})
        d = make_windows(df, ["x"], "x", 5)
        self.assertEqual(len(d), 92)
        train, test = split(d, 0.8)
        self.assertEqual((len(train), len(test)), (73, 19))
        self.assertLess(train.target_years.max(), test.target_years.min())

    def test_equal_halves(self):
        """Fraction 0.5 on an even count halves it"""
        d = make_windows(self.df, ["x"], "y", 2)
        train, test = split(d, 0.5)
        self.assertEqual((len(train), len(test)), (4, 4))

    def test_shuffled_split_deterministic(self):
        """Same seed gives identical partitions"""
        d = make_windows(self.df, ["x"], "y", 2)
        a_train, a_test = split(d, 0.75, "shuffled", seed=4)
        b_train, b_test = split(d, 0.75, "shuffled", seed=4)
        np.testing.assert_array_equal(a_train.target_years, b_train.target_years)
        np.testing.assert_array_equal(a_test.target_years, b_test.target_years)

    def test_shuffled_partitions_stay_chronological(self):
        """Each shuffled partition lists its years in increasing order"""
        df = pd.DataFrame({"year": np.arange(1950, 1990), "x": np.arange(40.0)})
        d = make_windows(df, ["x"], "x", 2)
        interleaved = False
        for seed in range(10):
            train, test = split(d, 0.75, "shuffled", seed=seed)
            self.assertTrue(np.all(np.diff(train.target_years) > 0))
            self.assertTrue(np.all(np.diff(test.target_years) > 0))
            np.testing.assert_array_equal(train.targets, train.target_years - 1950.0)
            interleaved = interleaved or train.target_years.max() > test.target_years.min()
        self.assertTrue(interleaved)

    def test_partitions_disjoint_and_exhaustive(self):
        """Fuzzed sizes and fractions cover every sample exactly once"""
        rng = np.random.default_rng(0)
        for _ in range(40):
            n = int(rng.integers(4, 60))
            df = pd.DataFrame({"year": np.arange(n), "x": rng.normal(size=n)})
            d = make_windows(df, ["x"], "x", 1)
            fraction = float(rng.uniform(0.2, 0.8))
            for mode in ("chrono", "shuffled"):
                try:
                    train, test = split(d, fraction, mode, seed=int(rng.integers(1000)))
                except DataSchemaError:
                    continue
                years = np.concatenate([train.target_years, test.target_years])
                self.assertEqual(sorted(years.tolist()), d.target_years.tolist())
                self.assertEqual(len(train), int(np.floor(fraction * len(d))))

    def test_empty_side(self):
        """A fraction leaving no test samples raises"""
        d = make_windows(self.df.iloc[:3], ["x"], "y", 1)
        with self.assertRaises(DataSchemaError):
            split(d, 0.4)
        with self.assertRaises(DataSchemaError):
            split(d, 1.0)


if __name__ == '__main__':
    unittest.main()
