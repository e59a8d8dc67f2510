import json

import numpy as np
import pytest

from dynpanel.dgp import design, simulate
from dynpanel.errors import InvalidSpec, TooManyFailures
from dynpanel.estimator import EstimationConfig, estimate
from dynpanel.inference import BootstrapConfig
from dynpanel.mc_harness import (
    C_SWEEP_TABLES,
    McPlan,
    emit_table,
    parse_csv_table,
    replication_seeds,
    run_monte_carlo,
)


def test_single_replication_statistics():
    plan = McPlan(design(1), 2000, 1, seed=3)
    s = run_monte_carlo(plan)
    sim_seed, _ = replication_seeds(3, 1)
    data, tp = simulate(design(1), 2000, sim_seed)
    est = estimate(data)
    b2 = s.param("beta2")
    assert b2.mean == est.params.beta[1]
    assert b2.mad == pytest.approx(abs(est.params.beta[1] - tp.beta_normalized[1]), abs=1e-15)
    assert b2.rmse == pytest.approx(b2.mad, abs=1e-15)
    g = s.param("gamma")
    assert g.mean == est.params.gamma and g.rmse == pytest.approx(g.mad, abs=1e-15)


def test_variance_decomposition_and_coverage_bounds():
    plan = McPlan(design(1), 1500, 12, bootstrap=BootstrapConfig(b_draws=19),
                  methods=("numerical",), c_sweep=(0.8, 1.2), seed=1)
    s = run_monte_carlo(plan)
    for p in s.params:
        assert p.rmse**2 >= p.bias**2 - 1e-12
    for c in s.inference:
        assert 0.0 <= c.coverage <= 1.0 and c.length > 0
    assert {c.c for c in s.inference} == {0.8, 1.2}


def test_worker_invariance():
    plan = McPlan(design(1), 800, 6, bootstrap=BootstrapConfig(b_draws=9),
                  methods=("modified",), seed=4)
    a = run_monte_carlo(plan)
    b = run_monte_carlo(McPlan(**{**plan.__dict__, "workers": 2}))
    assert np.array_equal(a.estimates, b.estimates)
    assert [c.coverage for c in a.inference] == [c.coverage for c in b.inference]
    assert [c.length for c in a.inference] == [c.length for c in b.inference]


def test_free_coordinates_design3():
    s = run_monte_carlo(McPlan(design(3), 1500, 2, seed=2))
    assert [p.name for p in s.params] == ["beta2", "beta3", "gamma"]
    assert s.estimates.shape == (2, 3)


def test_mad_center_median():
    s = run_monte_carlo(McPlan(design(1), 1000, 5, seed=9, mad_center="median"))
    col = s.estimates[:, 0]
    assert s.param("beta2").mad == pytest.approx(np.median(np.abs(col - np.median(col))))


def test_failures_abort():
    # a tiny sample rarely has switchers; most replications fail
    with pytest.raises(TooManyFailures):
        run_monte_carlo(McPlan(design(1), 4, 20, seed=1))


def test_full_scale_plan_accepted():
    plan = McPlan(design(3), 20000, 1000, bootstrap=BootstrapConfig(b_draws=199),
                  methods=("numerical", "modified"), c_sweep=C_SWEEP_TABLES, seed=1, workers=8)
    plan.validate()
    assert len(plan.cells()) == 10


@pytest.mark.parametrize("kwargs", [{"replications": 0}, {"methods": ("wild",)}, {"c_sweep": (0.0,)},
                                    {"mad_center": "mode"}])
def test_plan_validation(kwargs):
    with pytest.raises(InvalidSpec):
        McPlan(**{"design": design(1), "n": 100, "replications": 3, **kwargs}).validate()


@pytest.fixture(scope="module")
def table_summaries():
    out = []
    for n in (600, 800, 1000):
        out.append(run_monte_carlo(McPlan(design(1), n, 3, seed=n)))
    return out


def test_text_layout(table_summaries):
    text = emit_table(table_summaries, "text")
    lines = text.strip("\n").splitlines()
    stat_rows = [ln for ln in lines if ln.split()[0] in ("MEAN", "BIAS", "MAD", "RMSE")]
    assert len(stat_rows) == 4
    assert all(len(ln.split()) == 1 + 6 for ln in stat_rows)
    assert "COVERAGE" not in text


def test_csv_json_round_trip(table_summaries):
    rows_csv = parse_csv_table(emit_table(table_summaries, "csv"))
    rows_json = json.loads(emit_table(table_summaries, "json"))["rows"]
    assert len(rows_csv) == len(rows_json) == 3 * 2 * 4
    for a, b in zip(rows_csv, rows_json):
        assert a["value"] == b["value"] and a["param"] == b["param"] and a["n"] == b["n"]
    assert rows_json[0]["value"] == table_summaries[0].param("beta2").mean


def test_inference_block_rendered():
    s = run_monte_carlo(McPlan(design(1), 1000, 2, bootstrap=BootstrapConfig(b_draws=9),
                               methods=("numerical", "classic"), c_sweep=(0.9, 1.1), seed=1))
    text = emit_table(s)
    assert "numerical c=0.9 COVERAGE" in text and "classic LENGTH" in text
    with pytest.raises(InvalidSpec):
        emit_table(s, "xml")
