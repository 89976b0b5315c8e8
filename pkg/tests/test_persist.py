import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gfa_incomplete import persist
from gfa_incomplete.analysis import predict_modality


def test_fit_round_trip_is_exact(small_fit, tmp_path):
    data, result = small_fit
    persist.save_fit(result, tmp_path, ["a", "b"])
    loaded, names = persist.load_fit(tmp_path)
    assert names == ["a", "b"]
    s, t = result.state, loaded.state
    for x, y in [(s.mu_z, t.mu_z), (s.sigma_z, t.sigma_z), *zip(s.mu_w, t.mu_w), *zip(s.sigma_w, t.sigma_w),
                 *zip(s.tau_b, t.tau_b), *zip(s.alpha_b, t.alpha_b)]:
        np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(result.elbo_trace, loaded.elbo_trace)
    assert (loaded.seed, loaded.converged, loaded.iterations, loaded.hp) == (result.seed, result.converged, result.iterations, result.hp)
    np.testing.assert_allclose(t.logdet_z, s.logdet_z, atol=1e-10)
    np.testing.assert_array_equal(predict_modality(s, data, 1).values, predict_modality(t, data, 1).values)


def test_table_cells(tmp_path):
    p = persist.write_table([{"a": 1.0, "b": True}, {"a": float("nan"), "c": None}], tmp_path / "t.csv")
    assert p.read_text() == "a,b,c\n1.0,true,\nnan,,\n"
    assert persist.read_table(p)[1] == {"a": "nan", "b": "", "c": ""}


def test_matrix_round_trip(rng, tmp_path):
    a = rng.standard_normal((3, 4)) * 1e-7
    np.testing.assert_array_equal(persist.read_matrix(persist.write_matrix(a, tmp_path / "m.csv")), a)
    persist.write_matrix(a[:, :2], tmp_path / "h.csv", ["x", "y"])
    np.testing.assert_array_equal(persist.read_matrix(tmp_path / "h.csv", header=True), a[:, :2])


def test_clean_replaces_non_finite():
    out = persist.clean({"x": np.array([1.0, np.nan]), 2: (np.int64(3), np.bool_(True), math.inf)})
    assert out == {"x": [1.0, None], "2": [3, True, None]}


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-(2**53), 2**53) | st.floats(allow_nan=True) | st.text(max_size=5),
    lambda inner: st.lists(inner, max_size=3) | st.dictionaries(st.text(max_size=4), inner, max_size=3),
    max_leaves=10,
)


@given(
    st.sampled_from(["ok", "not-converged", "failed"]),
    st.dictionaries(st.text(max_size=6), json_values, max_size=4),
    st.lists(st.dictionaries(st.text(max_size=4), json_values, max_size=3), max_size=3),
)
def test_manifest_parse_inverts_serialize(status, config, restarts):
    m = persist.RunManifest(kind="synth-complete", config=config, version="1", status=status, restarts=restarts,
                            summary={"mse": {"mean": float("nan")}})
    assert persist.RunManifest.parse(m.serialize()) == m


def test_manifest_lists_missing_files(tmp_path):
    (tmp_path / "metrics.csv").write_text("")
    m = persist.RunManifest("report", {}, "1", tables={"metrics": "metrics.csv", "x": "x.csv"})
    assert m.missing_files(tmp_path) == ["x.csv"]
    m.save(tmp_path / "manifest.json")
    assert persist.RunManifest.load(tmp_path / "manifest.json") == m
