import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynpanel.dgp import design, simulate
from dynpanel.errors import (
    InvalidSpec,
    MissingPeriod,
    NonBinaryOutcome,
    PanelTooShort,
    ParseError,
    RaggedPanel,
)
from dynpanel.panel_data import ModelParams, PanelDataset, load_csv, save_csv, switcher_counts


def write(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def long_rows(ids, t_max, k, y_of=lambda i, t: (i + t) % 2):
    rows = ["id,t,y," + ",".join(f"x{j + 1}" for j in range(k))]
    for i in ids:
        for t in range(t_max + 1):
            xs = ",".join("" if t == 0 else f"{0.1 * (t + j) + i}" for j in range(k))
            rows.append(f"{i},{t},{y_of(i, t)},{xs}")
    return "\n".join(rows) + "\n"


def test_load_well_formed(tmp_path):
    d = load_csv(write(tmp_path, long_rows([1, 2], 4, 2)))
    assert (d.n, d.t_max, d.k) == (2, 4, 2)
    assert d.ids == ("1", "2")
    assert d.x[1, 0, 1] == pytest.approx(0.2 + 2)


def test_period_zero_regressors_optional(tmp_path):
    text = long_rows([1], 4, 1).replace("1,0,1,\n", "1,0,1,5.5\n")
    d = load_csv(write(tmp_path, text))
    assert d.x.shape == (1, 4, 1)


def test_non_binary_outcome(tmp_path):
    text = long_rows([7, 8], 4, 2, y_of=lambda i, t: 2 if (i, t) == (7, 3) else 0)
    with pytest.raises(NonBinaryOutcome):
        load_csv(write(tmp_path, text))


def test_ragged_periods(tmp_path):
    a = long_rows([1], 4, 2)
    b = long_rows([2], 3, 2).split("\n", 1)[1]
    with pytest.raises(RaggedPanel):
        load_csv(write(tmp_path, a + b))


def test_missing_period(tmp_path):
    lines = long_rows([1, 2], 4, 1).splitlines()
    del lines[3]  # id 1, t = 2
    with pytest.raises(MissingPeriod):
        load_csv(write(tmp_path, "\n".join(lines) + "\n"))


@pytest.mark.parametrize("mutate", [
    lambda s: s.replace("id,t,y", "idx,t,y"),
    lambda s: s + "1,4,0,1.0,2.0\n",  # duplicate row
    lambda s: s.replace("2,3,1,2.3,2.4", "2,3,1,nan,2.4"),
    lambda s: s.replace("2,3,1,2.3,2.4", "2,3,1,,"),
    lambda s: s.replace("2,3,1,2.3,2.4", "2,3,1,abc,2.4"),
])
def test_parse_errors(tmp_path, mutate):
    text = mutate(long_rows([1, 2], 4, 2))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_csv(tmp_path / "absent.csv")


def test_round_trip(tmp_path):
    data, _ = simulate(design(3), 57, seed=3)
    path = tmp_path / "rt.csv"
    save_csv(data, path)
    back = load_csv(path)
    assert np.array_equal(back.y, data.y)
    assert np.max(np.abs(back.x - data.x)) <= 1e-15
    assert back.ids == data.ids


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 5), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_round_trip_property(tmp_path_factory, n, t_max, k, seed):
    rng = np.random.default_rng(seed)
    data = PanelDataset(rng.integers(0, 2, (n, t_max + 1)), rng.standard_normal((n, t_max, k)) * 1e3)
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    save_csv(data, path)
    back = load_csv(path)
    assert np.array_equal(back.y, data.y) and np.array_equal(back.x, data.x)


def test_dataset_is_read_only():
    d = PanelDataset(np.zeros((2, 5)), np.zeros((2, 4, 2)))
    with pytest.raises(ValueError):
        d.y[0, 0] = 1


def test_dataset_shape_checks():
    with pytest.raises(RaggedPanel):
        PanelDataset(np.zeros((2, 5)), np.zeros((2, 5, 2)))
    with pytest.raises(NonBinaryOutcome):
        PanelDataset(np.full((1, 5), 3), np.zeros((1, 4, 1)))


def test_switcher_counts_constant_y():
    d = PanelDataset(np.ones((6, 5)), np.zeros((6, 4, 2)))
    assert switcher_counts(d) == (0, 0)


@pytest.mark.parametrize("y, expected", [
    # y0=y2=y4 but y1 = y3: not a beta switcher; y1 != y2 and y0 != y3: a gamma switcher
    ((1, 0, 1, 0, 1), (0, 1)),
    ((1, 0, 1, 1, 1), (1, 0)),
    ((0, 1, 0, 0, 0), (1, 0)),
    ((0, 1, 0, 1, 1), (0, 1)),
    ((0, 0, 1, 1, 0), (0, 1)),
])
def test_switcher_counts_hand(y, expected):
    d = PanelDataset(np.array([y]), np.zeros((1, 4, 2)))
    assert switcher_counts(d) == expected


def test_switcher_counts_permutation_invariant():
    data, _ = simulate(design(1), 500, seed=9)
    perm = np.random.default_rng(0).permutation(500)
    assert switcher_counts(data) == switcher_counts(data.subset(perm))


def test_switcher_fractions_design1():
    data, _ = simulate(design(1), 100000, seed=21)
    nb, ng = switcher_counts(data)
    assert 0.12 <= nb / data.n <= 0.16
    assert 0.36 <= ng / data.n <= 0.42


def test_panel_too_short():
    d = PanelDataset(np.zeros((3, 4)), np.zeros((3, 3, 2)))
    with pytest.raises(PanelTooShort):
        switcher_counts(d)


def test_model_params_norm():
    ModelParams(np.array([0.6, 0.8]), -1.0)
    with pytest.raises(InvalidSpec):
        ModelParams(np.array([1.0, 1.0]), 0.0)
    with pytest.raises(InvalidSpec):
        ModelParams(np.array([1.0, 0.0]), 5.0).check_gamma_bounds(-3, 3)
