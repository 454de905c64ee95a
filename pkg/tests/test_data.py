"""Dataset construction, delimited-text I/O, power transform and synthetic scenarios."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from distforest import data
from distforest.data import CATEGORICAL, NUMERIC, Dataset, Schema
from distforest.exceptions import DataError, SchemaError


def test_power_transform_example():
    assert data.power_transform(2.5) == pytest.approx(1.7730, abs=1e-4)
    assert data.power_transform(2.5) == pytest.approx(2.5 ** (1 / 1.6), rel=1e-15)
    assert np.isnan(data.power_transform(np.nan))
    with pytest.raises(DataError):
        data.power_transform(-1.0)
    with pytest.raises(ValueError):
        data.power_transform(1.0, exponent=0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=2, max_size=50))
def test_power_transform_preserves_order(values):
    v = np.array(values)
    t = data.power_transform(v)
    assert np.array_equal(np.argsort(v, kind="stable"), np.argsort(t, kind="stable"))
    assert np.all(np.diff(t[np.argsort(v)]) >= 0)


def test_dataset_is_immutable_copy():
    y = np.array([0.0, 1.0, 2.0])
    X = np.arange(6.0).reshape(3, 2)
    ds = Dataset(y, X, ("a", "b"))
    y[0] = 99.0
    assert ds.y[0] == 0.0
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5.0
    assert ds.kinds == (NUMERIC, NUMERIC)
    assert np.all(ds.weights == 1)


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    n = 50
    y = np.maximum(0, rng.normal(0.3, 1, n))
    num = rng.normal(size=n) * 1e-7 + np.pi
    num[3] = np.nan
    cat = rng.integers(0, 3, n).astype(float)
    cat[5] = np.nan
    ds = Dataset(y, np.column_stack([num, cat]), ("num", "cat"), (NUMERIC, CATEGORICAL),
                 (None, ("low", "mid", "high")), groups=np.arange(n) % 4)
    path = tmp_path / "d.csv"
    data.save(ds, path)
    back = data.load(path, data.schema_for(ds))
    assert np.array_equal(back.y, ds.y)
    assert np.array_equal(back.X, ds.X, equal_nan=True)
    assert back.levels == ds.levels and back.kinds == ds.kinds
    assert np.array_equal(back.groups, ds.groups.astype(str))


def test_load_with_schema(tmp_path):
    path = tmp_path / "obs.txt"
    path.write_text("rain;ens;station;year\n2.5;1.0;A;1990\n0;NA;B;1991\n1;0.5;A;1990\n",
                    encoding="utf-8")
    schema = Schema(response="rain", covariates={"ens": "numeric", "station": "categorical"},
                    group="year", delimiter=";", transform=("rain", "ens"))
    ds = data.load(path, schema)
    assert ds.y[0] == pytest.approx(1.7730, abs=1e-4)
    assert ds.y[1] == 0.0
    assert np.isnan(ds.X[1, 0])
    assert ds.levels[1] == ("A", "B")
    assert list(ds.X[:, 1]) == [0.0, 1.0, 0.0]
    assert list(ds.groups) == ["1990", "1991", "1990"]


def test_load_errors_are_located(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,x\n1.0,2.0\n0.5,oops\n", encoding="utf-8")
    schema = Schema(response="y", covariates={"x": "numeric"})
    with pytest.raises(DataError, match=r"bad.csv:3, column 'x'"):
        data.load(path, schema)
    with pytest.raises(DataError, match="missing from header"):
        data.load(path, Schema(response="y", covariates={"z": "numeric"}))
    with pytest.raises(DataError):
        data.load(tmp_path / "absent.csv", schema)


def test_unknown_category_rejected(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("y,c\n1,a\n2,z\n", encoding="utf-8")
    with pytest.raises(DataError, match="unknown category"):
        data.load(path, Schema(response="y", covariates={"c": ["a", "b"]}))


def test_prediction_files_may_lack_response(tmp_path):
    path = tmp_path / "new.csv"
    path.write_text("x\n0.1\n0.9\n", encoding="utf-8")
    schema = Schema(response="y", covariates={"x": "numeric"})
    ds = data.load(path, schema, require_response=False)
    assert ds.n == 2 and np.all(np.isnan(ds.y))
    with pytest.raises(DataError):
        data.load(path, schema)


def test_schema_validation():
    with pytest.raises(SchemaError):
        Schema(response="y", covariates={"y": "numeric"})
    sch = Schema.from_dict({"response": "y", "covariates": {"x": "numeric"}, "transform": ["y"]})
    assert Schema.from_dict(sch.to_dict()) == sch


def test_schema_signature_check():
    a = Dataset([0.0, 1.0], [[1.0], [2.0]], ("x",))
    b = Dataset([0.0, 1.0], [[1.0], [2.0]], ("z",))
    a.check_schema(a.schema_signature())
    with pytest.raises(SchemaError):
        b.check_schema(a.schema_signature())


def test_null_scenario_censoring_fraction():
    ds, truth = data.generate(data.SyntheticScenario("null", n=4000, params={"mu": 0.5}, seed=1))
    p = float(np.mean(data.censoring_probability(truth)))
    assert p == pytest.approx(stats.norm.cdf(-0.5))
    frac = np.mean(ds.y == 0)
    assert abs(frac - p) < 2 * np.sqrt(p * (1 - p) / ds.n)


def test_step_location_jump():
    ds, _ = data.generate(data.SyntheticScenario("step-location", n=4000, seed=2,
                                                 params={"base": 5.0, "jump": 2.0}))
    left, right = ds.y[ds.X[:, 0] <= 0.5], ds.y[ds.X[:, 0] > 0.5]
    diff = right.mean() - left.mean()
    se = np.sqrt(left.var() / left.size + right.var() / right.size)
    assert abs(diff - 2.0) < 3 * se


def test_noise_columns_and_names():
    ds, _ = data.generate(data.SyntheticScenario("smooth", n=10, m_noise=0, seed=0))
    assert ds.m == 2
    ds, _ = data.generate(data.SyntheticScenario("interaction", n=10, m_noise=15, seed=0))
    assert ds.m == 20 and ds.names[-1] == "noise15"
    ds, _ = data.generate(data.SyntheticScenario("null", n=10, seed=0))
    assert ds.m == 0


def test_generation_is_seeded():
    a, _ = data.generate(data.SyntheticScenario("emos-linear", n=50, seed=3))
    b, _ = data.generate(data.SyntheticScenario("emos-linear", n=50, seed=3))
    assert np.array_equal(a.y, b.y) and np.array_equal(a.X, b.X)


def test_scenario_file(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("# step benchmark\nkind = step-location\nn = 120\n\nm_noise = 2  # extra\n"
                    "seed = 4\njump = 2.5\ngroups = 6\n", encoding="utf-8")
    sc = data.read_scenario(path)
    assert sc.kind == "step-location" and sc.n == 120 and sc.m_noise == 2 and sc.seed == 4
    assert sc.params == {"jump": 2.5, "groups": 6}
    ds, _ = data.generate(sc)
    assert len(np.unique(ds.groups)) == 6
    path.write_text("kind step\n", encoding="utf-8")
    with pytest.raises(DataError):
        data.read_scenario(path)


def test_unknown_scenario():
    with pytest.raises(ValueError):
        data.SyntheticScenario("sawtooth")
