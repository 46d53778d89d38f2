import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iltlab.deviation_lab import (
    ExperimentConfig,
    ResultTable,
    TAIL_COLUMNS,
    emit,
    merge_batches,
    merge_lil_traces,
    moment_batch,
    parse_csv,
    replica_paths,
    run_lil_trace,
    run_mc_moments,
    run_simulate,
    run_tail_curve,
    sample_intersections,
    tail_batch,
    to_csv,
)
from iltlab.errors import BudgetExceeded, ConditionViolated, ConfigError
from iltlab.exact_moments import MomentEntry, expected_In, moment_exact
from iltlab.intersection import intersection_count
from iltlab.walk_engine import local_time_field, simple_random_walk


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(replicas=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(lambdas=(0.2, 0.1))
    with pytest.raises(ConfigError):
        ExperimentConfig(d=3)
    with pytest.raises(ConditionViolated):
        ExperimentConfig(law="srw3", p=3)
    with pytest.raises(ConfigError):
        ExperimentConfig(b_n_rule="power:1.5")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"bogus": 1})


def test_bn_default():
    assert ExperimentConfig(n=10).b_n() == 1.0
    assert ExperimentConfig(n=10**4).b_n() == pytest.approx(math.log(math.log(1e4)))


def test_schedule_is_geometric():
    s = ExperimentConfig(n=1000).schedule()
    assert s[0] == 16 and s[-1] == 1000
    assert all(b == math.ceil(1.5 * a) for a, b in zip(s[:-2], s[1:-1]))


def test_batch_counts_match_fields():
    cfg = ExperimentConfig(n=30, replicas=40, seed=9, p=3)
    vals = sample_intersections(cfg, [10, 30])
    law = cfg.step_law
    for r in range(cfg.replicas):
        paths = replica_paths(law, 30, 3, 9, r)
        for i, h in enumerate([10, 30]):
            assert vals[r, i] == intersection_count([local_time_field(pa.truncated(h))
                                                     for pa in paths])


def test_thread_count_does_not_matter(monkeypatch):
    cfg = ExperimentConfig(n=50, replicas=300, seed=4)
    monkeypatch.setenv("ILT_THREADS", "1")
    a = sample_intersections(cfg)
    monkeypatch.setenv("ILT_THREADS", "4")
    monkeypatch.setattr("iltlab.deviation_lab.CHUNK_STEPS", 1000)
    b = sample_intersections(cfg)
    assert np.array_equal(a, b)


def test_bad_thread_env(monkeypatch):
    monkeypatch.setenv("ILT_THREADS", "zero")
    with pytest.raises(ConfigError):
        sample_intersections(ExperimentConfig(n=5, replicas=2))


def test_budget(monkeypatch):
    monkeypatch.setattr("iltlab.deviation_lab.MAX_STEPS", 100)
    with pytest.raises(BudgetExceeded):
        sample_intersections(ExperimentConfig(n=64, replicas=10))


def test_mc_moments_close_to_exact():
    cfg = ExperimentConfig(n=4, replicas=20000, seed=1)
    table = run_mc_moments(cfg, [1, 2])
    law = simple_random_walk(2)
    for m in (1, 2):
        e = table.get(4, m, 2, "srw2")
        exact = float(moment_exact(law, 4, m, 2))
        assert abs(e.value - exact) < 4 * e.stderr
    # adding the exact values checks consistency inside the table
    table.add(MomentEntry(4, 1, 2, "srw2", expected_In(law, 4, 2), "exact-formula"))


def test_single_replica_stderr_flagged():
    e = moment_batch(ExperimentConfig(n=8, replicas=1), [1]).entries()[0]
    assert e.stderr is None and e.replicas == 1


def test_jackknife_equals_plain_stderr():
    cfg = ExperimentConfig(n=20, replicas=500, seed=3)
    vals = sample_intersections(cfg)[:, 0].astype(float)
    e = moment_batch(cfg, [1]).entries()[0]
    loo = (vals.sum() - vals) / (len(vals) - 1)
    jk = math.sqrt((len(vals) - 1) / len(vals) * np.sum((loo - loo.mean()) ** 2))
    assert e.stderr == pytest.approx(jk, rel=1e-10)
    assert e.value == pytest.approx(vals.mean(), rel=1e-14)


def test_moment_batches_merge_in_any_order():
    cfg = ExperimentConfig(n=16, replicas=90, seed=5)
    full = moment_batch(cfg, [1, 2])
    parts = [moment_batch(cfg, [1, 2], range(a, a + 30)) for a in (0, 30, 60)]
    for order in ([0, 1, 2], [2, 0, 1], [1, 2, 0]):
        merged = merge_batches([parts[i] for i in order])
        assert merged.sums == full.sums
        assert merged.entries() == full.entries()
    with pytest.raises(ConfigError):
        parts[0].merge(parts[0])


def test_tail_curve_nested_and_theory():
    cfg = ExperimentConfig(n=200, replicas=400, seed=2, lambdas=(0.05, 0.1, 0.2, 0.4, 0.8))
    t = run_tail_curve(cfg, moderate_coeff=2.925)
    p_hat = t.column("p_hat")
    assert all(a >= b for a, b in zip(p_hat, p_hat[1:]))
    assert all(r["hits"] <= r["trials"] for r in t.rows)
    assert t.column("theory") == pytest.approx([-2.925 * lam for lam in cfg.lambdas])
    assert t.columns == TAIL_COLUMNS


def test_tail_below_median():
    cfg = ExperimentConfig(n=500, replicas=400, seed=8, lambdas=(1.0,))
    vals = sample_intersections(cfg)[:, 0]
    scale = cfg.n * cfg.b_n()
    lam = 0.5 * float(np.median(vals)) / scale
    cfg = ExperimentConfig(n=500, replicas=400, seed=8, lambdas=(lam,))
    assert run_tail_curve(cfg, 2.925).rows[0]["p_hat"] > 0.4


def test_tail_batches_merge():
    cfg = ExperimentConfig(n=50, replicas=60, seed=6, lambdas=(0.1, 0.3))
    full = tail_batch(cfg)
    a = tail_batch(cfg, range(0, 25))
    b = tail_batch(cfg, range(25, 60))
    assert to_csv(b.merge(a).table(2.925)) == to_csv(full.table(2.925))


def test_lil_trace():
    cfg = ExperimentConfig(n=2000, replicas=3, seed=1)
    tr = run_lil_trace(cfg, reference=0.3419)
    for r in range(3):
        rows = [row for row in tr.rows if row["replica"] == r]
        mx = [row["running_max"] for row in rows]
        assert all(a <= b for a, b in zip(mx, mx[1:]))
        assert all(row["statistic"] >= 0 for row in rows)
        assert all(row["statistic"] == 0 for row in rows if row["I_n"] == 0)
    assert to_csv(tr) == to_csv(run_lil_trace(cfg, reference=0.3419))
    parts = [run_lil_trace(cfg, [r], reference=0.3419) for r in (2, 0, 1)]
    assert to_csv(merge_lil_traces(parts)) == to_csv(tr)


def test_simulate_with_smoothing():
    cfg = ExperimentConfig(n=40, replicas=3, seed=1, epsilon=0.5)
    t = run_simulate(cfg)
    assert len(t) == 3
    assert all(r["J_n"] <= r["I_n"] for r in t.rows)
    assert all(r["smoothed_I_n"] is not None for r in t.rows)


def test_empty_table_csv():
    assert to_csv(ResultTable(TAIL_COLUMNS)) == ",".join(TAIL_COLUMNS) + "\r\n"


cells = st.one_of(st.none(), st.integers(-10**12, 10**12),
                  st.floats(allow_nan=False, allow_infinity=False),
                  st.text(alphabet='ab,"\n x0-1.e', min_size=1, max_size=6))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(cells, cells), max_size=6))
def test_csv_roundtrip(rows):
    t = ResultTable(("a", "b"), [{"a": x, "b": y} for x, y in rows])
    text = to_csv(t)
    assert to_csv(parse_csv(text)) == text
    assert len(json.loads(emit(t, "json"))) == len(parse_csv(text).rows)


def test_emit_to_file(tmp_path):
    cfg = ExperimentConfig(n=20, replicas=20, seed=0, lambdas=(0.1, 0.2))
    t = run_tail_curve(cfg, 2.925)
    path = tmp_path / "tail.csv"
    emit(t, "csv", str(path))
    assert path.read_bytes() == to_csv(t).encode()
    rows = json.loads(emit(t, "json"))
    assert list(rows[0]) == list(TAIL_COLUMNS)
