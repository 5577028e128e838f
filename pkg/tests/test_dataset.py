import io

import numpy as np
import pytest

from ritypology import dataset as ds
from ritypology.synth import generate, marginal_config

HEADER = "id,name,esfri_area,pan_european,in_operation,resource_ri,facility_ri,distributed_ri,e_ri\n"


def test_bundled_corpus_has_49_unique_records(records):
    assert len(records) == 49
    assert len({r.id for r in records}) == 49
    assert {"ESS-SPALLATION", "ESS-SURVEY"} <= {r.id for r in records}


def test_eccsel_row(records):
    rec = next(r for r in records if r.id == "ECCSEL")
    assert rec.esfri_area == ds.EsfriArea.ENERGY
    assert rec.flags() == (1, 1, 0, 1, 1, 0)


def test_header_only_gives_empty_list():
    assert ds.load_institutions(io.StringIO(HEADER)) == []


def test_duplicate_id_rejected():
    text = HEADER + "A,x,1,1,1,0,1,1,0\nA,y,2,1,1,0,1,1,0\n"
    with pytest.raises(ds.DatasetError, match="'A'"):
        ds.load_institutions(io.StringIO(text))


@pytest.mark.parametrize("row, where", [
    ("A,x,1,2,1,0,1,1,0", "line 2, column pan_european"),
    ("A,x,7,1,1,0,1,1,0", "line 2, column esfri_area"),
    ("A,x,1,1,1,0,1,1", "line 2"),
])
def test_malformed_rows_name_line_and_column(row, where):
    with pytest.raises(ds.DatasetError, match=where):
        ds.load_institutions(io.StringIO(HEADER + row + "\n"))


def test_quoted_names_follow_rfc4180():
    text = HEADER + '"X1","Name, with comma",3,1,0,1,0,1,0\n'
    (rec,) = ds.load_institutions(io.StringIO(text))
    assert rec.name == "Name, with comma"


def test_encode_eccsel(records):
    X = ds.encode_attributes([r for r in records if r.id == "ECCSEL"])
    assert X.values.tolist() == [[1, 0, 0, 0, 0, 0, 1, 1, 0, 1, 1, 0]]


def test_encoded_column_sums_match_table2(attributes):
    assert attributes.values.sum(axis=0).tolist() == [3, 10, 10, 17, 7, 2, 39, 37, 25, 35, 34, 2]


def test_exactly_one_area_dummy_per_row(attributes):
    assert (attributes.values[:, :6].sum(axis=1) == 1).all()


def test_single_record_row_sum(records):
    rec = records[10]
    X = ds.encode_attributes([rec])
    assert X.values.sum() == 1 + sum(rec.flags())


def test_encode_empty_rejected():
    with pytest.raises(ds.DatasetError):
        ds.encode_attributes([])


def test_attribute_round_trip(records, tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    ds.save_institutions(records, p1)
    again = ds.load_institutions(p1)
    assert again == records
    ds.save_institutions(again, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_registry_has_19_entries_without_7_and_21(registry):
    assert len(registry) == 19
    assert registry.numbers == (1, 2, 3, 4, 5, 6, *range(8, 21))
    assert registry.label(4) == "Number of publications"


def _rating_csv(registry, rows):
    head = "id," + ",".join(registry.columns) + "\n"
    return head + "".join(f"{rid}," + ",".join(cells) + "\n" for rid, cells in rows)


def test_constant_rating_row(registry):
    text = _rating_csv(registry, [("A", ["4"] * 19)])
    X = ds.load_ratings(io.StringIO(text), registry)
    assert X.shape == (1, 19)
    assert (X.values == 4.0).all()


def test_off_scale_rating_rejected(registry):
    text = _rating_csv(registry, [("A", ["3.7"] + ["4"] * 18)])
    with pytest.raises(ds.DatasetError, match="rating not on half-point scale"):
        ds.load_ratings(io.StringIO(text), registry)


def test_unknown_indicator_column_rejected(registry):
    text = "id," + ",".join(registry.columns[:-1]) + ",ind_21\nA," + ",".join(["4"] * 19) + "\n"
    with pytest.raises(ds.DatasetError, match="unknown indicator column 'ind_21'"):
        ds.load_ratings(io.StringIO(text), registry)


def test_columns_reordered_to_registry_order(registry):
    cols = list(registry.columns)[::-1]
    text = "id," + ",".join(cols) + "\nA," + ",".join(str(1 + (i % 4)) for i in range(19)) + "\n"
    X = ds.load_ratings(io.StringIO(text), registry)
    assert X.col_labels == registry.columns
    assert X.values[0, -1] == 1.0 and X.values[0, 0] == 1 + (18 % 4)


def test_missing_cell_rejected_unless_imputing(registry):
    text = _rating_csv(registry, [("A", [""] + ["4"] * 18), ("B", ["2"] + ["4"] * 18),
                                  ("C", ["3"] + ["4"] * 18)])
    with pytest.raises(ds.DatasetError, match="line 2, column ind_1: missing rating"):
        ds.load_ratings(io.StringIO(text), registry)
    X = ds.load_ratings(io.StringIO(text), registry, impute=True)
    assert X.values[0, 0] == 2.5
    assert X.imputed == (("A", "ind_1"),)


def test_synthetic_ratings_round_trip(counts, reference5, tmp_path):
    X, _ = generate(marginal_config(counts, reference5, 0.5, seed=7))
    p1, p2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    ds.save_ratings(X, p1)
    Y = ds.load_ratings(p1)
    assert Y.row_ids == X.row_ids
    np.testing.assert_array_equal(Y.values, X.values)
    ds.save_ratings(Y, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_expand_indicator_2(counts):
    col = ds.expand_counts(counts).values[:, 1]
    assert col.tolist() == [2.0] * 5 + [3.0] * 7 + [4.0] * 37


def test_expand_point_mass():
    table = ds.RatingCountTable((1,), np.array([[6, 0, 0, 0, 0, 0, 0]]))
    assert ds.expand_counts(table).values.ravel().tolist() == [1.0] * 6


def test_expand_column_sums_match_weighted_counts(counts):
    E = ds.expand_counts(counts)
    assert E.shape == (49, 19)
    # arithmetic oracle: sum over levels of level * count
    for j, row in enumerate(counts.counts):
        expected = sum(level * c for level, c in zip(ds.RATING_LEVELS, row))
        assert E.values[:, j].sum() == pytest.approx(expected, abs=1e-12)


def test_expand_histogram_equals_counts(counts):
    again = ds.counts_from_matrix(ds.expand_counts(counts))
    np.testing.assert_array_equal(again.counts, counts.counts)


def test_expand_mismatched_totals():
    table = ds.RatingCountTable((1, 2), np.array([[1, 0, 0, 0, 0, 0, 0], [2, 0, 0, 0, 0, 0, 0]]))
    with pytest.raises(ds.DatasetError, match="totals differ"):
        ds.expand_counts(table)


def test_bundled_counts_sum_to_49(counts):
    assert counts.totals.tolist() == [49] * 19


def test_count_table_round_trip(counts, tmp_path):
    p = tmp_path / "c.csv"
    ds.save_counts(counts, p)
    np.testing.assert_array_equal(ds.load_counts(p).counts, counts.counts)
