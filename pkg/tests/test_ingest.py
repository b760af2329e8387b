import numpy as np
import pytest

from rmtdetect import DataSource, RegionPartition, WindowSpec, load_csv, load_partition, window_at, write_csv
from rmtdetect.errors import (
    AspectRatioError,
    ContractError,
    InsufficientHistoryError,
    MalformedInputError,
    ParameterError,
    UnrecoverableRowError,
)

CSV_3x4 = "node_id,0,1,2,3\na,1.0,2.0,3.0,4.0\nb,5,6,7,8\nc,-1,0.5,2e-1,9\n"


def test_load_csv_parses_finite_matrix(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(CSV_3x4)
    src = load_csv(p)
    assert src.n == 3 and src.t == 4
    assert src.node_ids == ("a", "b", "c")
    assert src.timestamps == (0, 1, 2, 3)
    assert src.values[2, 2] == pytest.approx(0.2)


def test_forward_fill_takes_left_neighbor(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("node_id,0,1,2\na,1.0,,3.0\nb,4,5,6\n")
    src = load_csv(p, policy="forward-fill")
    assert src.values[0, 1] == 1.0


def test_row_mean_policy(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("node_id,0,1,2\na,1.0,,3.0\nb,4,5,6\n")
    src = load_csv(p, policy="row-mean")
    assert src.values[0, 1] == pytest.approx(2.0)


def test_missing_cell_under_error_policy_names_location(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("node_id,0,1,2\na,1.0,,3.0\nb,4,5,6\n")
    with pytest.raises(MalformedInputError, match="row 2.*column 3"):
        load_csv(p, policy="error")


def test_blank_node_id_is_malformed(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("node_id,0,1\n,1.0,2.0\nb,3,4\n")
    with pytest.raises(MalformedInputError, match="blank node id"):
        load_csv(p, policy="error")


@pytest.mark.parametrize("policy", ["error", "forward-fill", "row-mean"])
def test_all_missing_row_unrecoverable(tmp_path, policy):
    p = tmp_path / "d.csv"
    p.write_text("node_id,0,1\na,,\nb,3,4\n")
    with pytest.raises(UnrecoverableRowError):
        load_csv(p, policy=policy)


def test_leading_missing_cell_cannot_forward_fill(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("node_id,0,1\na,,2.0\nb,3,4\n")
    with pytest.raises(MalformedInputError, match="leading"):
        load_csv(p, policy="forward-fill")


def test_non_numeric_cell(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("node_id,0,1\na,1.0,oops\nb,3,4\n")
    with pytest.raises(MalformedInputError):
        load_csv(p)


def test_missing_file():
    with pytest.raises(MalformedInputError, match="no such file"):
        load_csv("/nonexistent/data.csv")


def test_unknown_policy(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(CSV_3x4)
    with pytest.raises(ParameterError):
        load_csv(p, policy="interpolate")


def test_csv_roundtrip(tmp_path, gaussian_source):
    p = tmp_path / "out.csv"
    write_csv(gaussian_source, p)
    back = load_csv(p)
    assert back.node_ids == gaussian_source.node_ids
    assert back.timestamps == gaussian_source.timestamps
    np.testing.assert_array_equal(back.values, gaussian_source.values)


def test_datasource_rejects_duplicates_and_tiny_shapes():
    with pytest.raises(ContractError, match="unique"):
        DataSource(np.ones((2, 3)), ("a", "a"), (0, 1, 2))
    with pytest.raises(ParameterError):
        DataSource(np.ones((1, 5)), ("a",), tuple(range(5)))


def test_datasource_is_immutable(gaussian_source):
    with pytest.raises(ValueError):
        gaussian_source.values[0, 0] = 99.0


# --- windowing -------------------------------------------------------------


def test_window_at_returns_trailing_block():
    rng = np.random.default_rng(7)
    src = DataSource(rng.standard_normal((5, 1500)), tuple("abcde"), tuple(range(1500)))
    w = window_at(src, WindowSpec(T=240), 599)
    assert w.timestamps[0] == 360 and w.timestamps[-1] == 599
    np.testing.assert_array_equal(w.values, src.values[:, 360:600])


def test_window_full_span(gaussian_source):
    w = window_at(gaussian_source, WindowSpec(T=gaussian_source.t), gaussian_source.t - 1)
    np.testing.assert_array_equal(w.values, gaussian_source.values)


def test_window_insufficient_history(gaussian_source):
    with pytest.raises(InsufficientHistoryError):
        window_at(gaussian_source, WindowSpec(T=20), 18)
    with pytest.raises(InsufficientHistoryError):
        window_at(gaussian_source, WindowSpec(T=20), gaussian_source.t)


def test_window_aspect_ratio(gaussian_source):
    with pytest.raises(AspectRatioError):
        window_at(gaussian_source, WindowSpec(T=8), 30)  # 12 nodes > T=8


def test_window_is_pure(gaussian_source):
    spec = WindowSpec(T=16)
    a = window_at(gaussian_source, spec, 40)
    b = window_at(gaussian_source, spec, 40)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.timestamps == b.timestamps


def test_consecutive_windows_share_columns(gaussian_source):
    spec = WindowSpec(T=16)
    a = window_at(gaussian_source, spec, 40)
    b = window_at(gaussian_source, spec, 41)
    np.testing.assert_array_equal(a.values[:, 1:], b.values[:, :-1])


def test_subset_then_window_equals_window_then_select(gaussian_source):
    subset = ("n03", "n07", "n09")
    spec = WindowSpec(T=16, node_subset=subset)
    direct = window_at(gaussian_source, spec, 50)
    rows = [gaussian_source.node_ids.index(s) for s in subset]
    full = window_at(gaussian_source, WindowSpec(T=16), 50)
    np.testing.assert_array_equal(direct.values, full.values[rows])


def test_unknown_subset_node(gaussian_source):
    with pytest.raises(ContractError, match="unknown node"):
        window_at(gaussian_source, WindowSpec(T=16, node_subset=("nope",)), 50)


def test_windowspec_validation():
    with pytest.raises(ParameterError):
        WindowSpec(T=0)
    with pytest.raises(ParameterError):
        WindowSpec(T=10, stride=0)
    with pytest.raises(ParameterError):
        WindowSpec(T=10, L=0)


# --- partitions ------------------------------------------------------------


def test_load_partition(tmp_path):
    p = tmp_path / "regions.json"
    p.write_text('{"A": ["a", "b"], "B": ["c"], "layout": {"a": [0, 0], "b": [1, 0], "c": [0, 1]}}')
    part = load_partition(p)
    assert part.regions["A"] == ("a", "b")
    assert part.layout["c"] == (0.0, 1.0)
    assert part.region_of("c") == "B"
    assert part.region_of("zz") is None


def test_partition_rejects_overlap():
    with pytest.raises(ContractError, match="appears in regions"):
        RegionPartition({"A": ("a",), "B": ("a",)})


def test_partition_rejects_empty_region():
    with pytest.raises(ContractError, match="empty"):
        RegionPartition({"A": ()})


def test_partition_layout_must_cover_nodes():
    with pytest.raises(ContractError, match="layout missing"):
        RegionPartition({"A": ("a", "b")}, layout={"a": (0, 0)})


def test_partition_bad_json(tmp_path):
    p = tmp_path / "regions.json"
    p.write_text("not json")
    with pytest.raises(MalformedInputError):
        load_partition(p)
