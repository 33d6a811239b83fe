import csv
import dataclasses
import io
import math

import numpy as np
import pytest

from wpccn.experiments import (
    CSV_COLUMNS,
    ExperimentConfig,
    ThreeNodeConfig,
    iter_records,
    make_instance,
    region_width_error,
    run_experiment,
    summarize,
    three_node_sweep,
    write_records_csv,
    write_three_node_csv,
)
from wpccn.netmodel import load_instance, scenario_from_dict, scenario_instance


def _small(**kw):
    base = dict(kind="sweep_n", grid=[2, 3], algorithms=["obh", "rstma", "or_powmu"], trials=3, seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


def _body(records):
    """CSV text without the wall-time column, which varies run to run."""
    buf = io.StringIO()
    write_records_csv(records, buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    idx = rows[0].index("wall_time_s")
    return [r[:idx] + r[idx + 1 :] for r in rows]


def test_rerun_is_bit_identical():
    cfg = _small()
    assert _body(iter_records(cfg)) == _body(iter_records(cfg))


def test_threads_do_not_change_output():
    cfg = _small(trials=2)
    assert _body(iter_records(cfg, threads=2)) == _body(iter_records(cfg, threads=1))


def test_trial_streams_are_independent_of_grid_order():
    a = make_instance(_small(grid=[2, 3]), 1, 0)
    b = make_instance(_small(grid=[3, 3]), 1, 0)
    np.testing.assert_array_equal(a.channels.h_ap_src, b.channels.h_ap_src)


def test_seed_changes_draws():
    a = make_instance(_small(seed=1), 0, 0)
    b = make_instance(_small(seed=2), 0, 0)
    assert not np.array_equal(a.channels.h_ap_src, b.channels.h_ap_src)


def test_csv_schema():
    buf = io.StringIO()
    write_records_csv(iter_records(_small(trials=1, grid=[2])), buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 3
    assert {r[3] for r in rows[1:]} == {"obh", "rstma", "or_powmu"}


def test_sweep_values_applied():
    cfg = _small(kind="sweep_k", grid=[0, 3], params={"num_sources": 2, "num_relays": 1})
    assert make_instance(cfg, 0, 0).k == 0
    assert make_instance(cfg, 1, 0).k == 3
    cfg = _small(kind="sweep_pmax", grid=[1e-4])
    assert make_instance(cfg, 0, 0).params.max_ul_power == 1e-4
    cfg = _small(kind="sweep_relay_pos", grid=[3.0])
    assert np.allclose(np.linalg.norm(make_instance(cfg, 0, 0).positions.relays, axis=1), 3.0)
    cfg = _small(kind="optgap_maxeh", grid=[4], algorithms=["powmu", "max_eh"])
    inst = make_instance(cfg, 0, 0)
    assert inst.n == 4 and inst.k == 0


def test_bba_skipped_for_large_networks():
    cfg = _small(grid=[3], algorithms=["bba", "or_powmu"], trials=1, bba_max_sources=2)
    assert [r.algorithm for r in iter_records(cfg)] == ["or_powmu"]


def test_summary_statistics():
    res = run_experiment(_small(trials=4, grid=[2]))
    rows = {r["algorithm"]: r for r in res.summary}
    vals = [r.total_s for r in res.records if r.algorithm == "obh"]
    assert rows["obh"]["mean_total_s"] == pytest.approx(np.mean(vals))
    half = 1.959964 * np.std(vals, ddof=1) / 2.0
    assert rows["obh"]["ci95_s"] == pytest.approx(half, rel=1e-5)
    assert rows["obh"]["feasible"] == 4


def test_infeasible_trials_are_recorded():
    from wpccn.experiments import TrialRecord

    recs = [TrialRecord("num_sources", 2, 0, "x", math.nan, 0.0, False)]
    row = summarize(recs)[0]
    assert row["feasible"] == 0 and math.isnan(row["mean_total_s"])


@pytest.mark.parametrize(
    "kw",
    [
        dict(kind="bogus"),
        dict(trials=0),
        dict(grid=[]),
        dict(algorithms=["nope"]),
        dict(algorithms=[]),
        dict(geometry={"r_min_m": -1.0}),
        dict(channel={"fading": "nakagami"}),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        _small(**kw)


def test_config_roundtrip(tmp_path):
    cfg = _small()
    path = tmp_path / "c.json"
    import json

    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg
    assert dataclasses.replace(cfg, trials=9).trials == 9


def test_scenario_document(tmp_path):
    doc = {"n": 3, "k": 1, "r_min_m": 2.0, "r_max_m": 2.5, "sigma_z_db": 0.0, "fading": "none", "seed": 5}
    params, geo, ch, seed = scenario_from_dict(doc)
    assert (params.num_sources, params.num_relays, seed) == (3, 1, 5)
    assert geo.r_max_m == 2.5 and ch.shadowing_sigma_db == 0.0
    inst = scenario_instance(doc)
    assert np.all(np.linalg.norm(inst.positions.sources, axis=1) <= 2.5 + 1e-12)
    path = tmp_path / "s.json"
    import json

    path.write_text(json.dumps(doc))
    a, b = load_instance(path), load_instance(path, seed=6)
    assert not np.array_equal(a.positions.sources, b.positions.sources)
    inst_path = tmp_path / "i.json"
    inst.to_json(inst_path)
    np.testing.assert_array_equal(load_instance(inst_path).channels.g_src_rel, inst.channels.g_src_rel)
    with pytest.raises(ValueError):
        scenario_from_dict({"k": 1})


def test_three_node_sweep_region():
    res = three_node_sweep(ThreeNodeConfig(pmax_w=[1.0], points=141))
    cross, edges = res.crossovers[1.0], res.benefit_edges[1.0]
    assert len(cross) == 2 and len(edges) == 2
    assert cross[0] == pytest.approx(0.53592, abs=1e-2)
    assert cross[1] == pytest.approx(3.46408, abs=1e-2)
    # gain test: relay within 4 m of both the source and the AP
    assert edges[0] == pytest.approx(4 - 2 * math.sqrt(3), abs=1e-7)
    assert edges[1] == pytest.approx(2 * math.sqrt(3), abs=1e-7)
    assert region_width_error(cross, edges) < 5e-3
    buf = io.StringIO()
    write_three_node_csv(res, buf)
    assert buf.getvalue().splitlines()[0] == "pmax_w,relay_x_m,direct_total_s,relayed_total_s,relay_benefit"
    assert len(buf.getvalue().splitlines()) == 1 + 141


def test_three_node_config_validation():
    with pytest.raises(ValueError):
        ThreeNodeConfig(scheduler="other")
    with pytest.raises(ValueError):
        ThreeNodeConfig(x_min=1.0, x_max=0.0)
    with pytest.raises(ValueError):
        ThreeNodeConfig(pmax_w=[])
    assert region_width_error([1.0], [0.0, 1.0]) == math.inf
