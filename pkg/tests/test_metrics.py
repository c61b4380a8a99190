import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridfed.env import RewardWeights
from gridfed.metrics import (
    ARM_LABELS, ComparisonTable, DeltaReport, EpisodeReport, EpisodeTrace, Level, aggregate,
    aggregate_by_microgrid, comparison_table, delta, delta_hierarchy, read_deltas_csv,
    read_reports_csv, score_episode, write_deltas_csv, write_reports_csv,
)


def trace(g, price, carbon):
    g, price, carbon = (np.asarray(x, dtype=float) for x in (g, price, carbon))
    T = len(g)
    z = np.zeros(T)
    return EpisodeTrace(t=np.arange(T), action=z, realized_action=z, soc=z, grid_exchange=g, price=price,
                        carbon=carbon, cost=price * g, emissions=carbon * g, reward=-(price + carbon) * g)


def report(hid, mg, p, c, key="k", r=0.0):
    return EpisodeReport(hid, mg, key, r, p, c, r)


# ------------------------------------------------------------------ scores

def test_score_single_step():
    assert score_episode(trace([1.0], [0.5], [0.1]), 1)[:2] == (0.5, 0.1)


def test_score_import_export_cancel():
    p, c, r = score_episode(trace([1.0, -1.0], [0.5, 0.5], [0.2, 0.2]), 2)
    assert (p, c, r) == (0.0, 0.0, 0.0)


def test_score_per_step_mean_and_reward():
    p, c, r = score_episode(trace([1.0, 0.5], [0.2, 0.4], [0.1, 0.3]), 2, RewardWeights(2.0, 1.0))
    assert p == pytest.approx(0.2) and c == pytest.approx(0.125)
    assert r == pytest.approx(-(2 * 0.2 + 0.125))


def test_score_custom_normalizer():
    p, _, _ = score_episode(trace([1.0, 1.0], [0.5, 0.5], [0, 0]), 2, normalizer=1.0)
    assert p == 1.0


def test_score_incomplete_trace_rejected():
    with pytest.raises(ValueError):
        score_episode(trace([1.0], [0.5], [0.1]), 24)


def test_reports_csv_roundtrip(tmp_path):
    reps = [report(0, 1, 0.123456789, -1 / 3, "abc", -0.25), report(5, 2, 0.0, 1e-17, "def", 3.0)]
    write_reports_csv(reps, tmp_path / "r.csv")
    back = read_reports_csv(tmp_path / "r.csv")
    for a, b in zip(reps, back):
        assert (a.household_id, a.microgrid_id, a.day_key, a.price_score, a.emission_score, a.total_reward) == \
               (b.household_id, b.microgrid_id, b.day_key, b.price_score, b.emission_score, b.total_reward)


# ------------------------------------------------------------------ deltas

def test_delta_example():
    d = delta(report(3, 1, 0.5, 0.3), report(3, 1, 0.2, 0.4))
    assert d.level is Level.HOUSEHOLD and d.id == 3 and d.microgrid_id == 1
    assert d.p_delta == pytest.approx(0.3) and d.c_delta == pytest.approx(-0.1)


def test_delta_of_identical_is_zero():
    r = report(0, 0, 0.37, 0.11)
    d = delta(r, r)
    assert d.p_delta == 0.0 and d.c_delta == 0.0


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5), d=st.floats(-5, 5))
def test_delta_antisymmetric(a, b, c, d):
    x, y = report(0, 0, a, b), report(0, 0, c, d)
    assert delta(x, y).p_delta == -delta(y, x).p_delta
    assert delta(x, y).c_delta == -delta(y, x).c_delta


def test_delta_requires_same_household_and_day():
    with pytest.raises(ValueError):
        delta(report(0, 0, 0, 0), report(1, 0, 0, 0))
    with pytest.raises(ValueError):
        delta(report(0, 0, 0, 0, key="a"), report(0, 0, 0, 0, key="b"))


# -------------------------------------------------------------- aggregation

def hh(hid, mg, p, c):
    return DeltaReport(Level.HOUSEHOLD, hid, p, c, 1, mg)


def test_microgrid_mean():
    m = aggregate([hh(0, 2, 0.1, 0.2), hh(1, 2, 0.3, 0.0)], "Microgrid")
    assert m.level is Level.MICROGRID and m.id == 2 and m.n_households == 2
    assert m.p_delta == pytest.approx(0.2) and m.c_delta == pytest.approx(0.1)


def test_microgrid_rejects_mixed_groups():
    with pytest.raises(ValueError):
        aggregate([hh(0, 0, 0, 0), hh(1, 1, 0, 0)], Level.MICROGRID)


def test_distributor_weights_by_household_count():
    # microgrid A: 1 household with 0.9; microgrid B: 3 households with 0.1
    mgs = aggregate_by_microgrid([hh(0, 0, 0.9, 0.0), hh(1, 1, 0.1, 0.0), hh(2, 1, 0.1, 0.0), hh(3, 1, 0.1, 0.0)])
    dist = aggregate(mgs, Level.DISTRIBUTOR)
    assert dist.p_delta == pytest.approx(0.3)  # (0.9 + 3*0.1) / 4, not (0.9 + 0.1) / 2
    assert dist.n_households == 4


def test_distributor_same_from_households_or_microgrids():
    rng = np.random.default_rng(0)
    hs = [hh(i, int(rng.integers(0, 3)), *rng.normal(size=2)) for i in range(11)]
    a = aggregate(hs, Level.DISTRIBUTOR)
    b = aggregate(aggregate_by_microgrid(hs), Level.DISTRIBUTOR)
    assert a.p_delta == pytest.approx(b.p_delta, abs=1e-14)
    assert a.c_delta == pytest.approx(b.c_delta, abs=1e-14)


def test_aggregate_extra_weights():
    d = aggregate([hh(0, 0, 1.0, 0.0), hh(1, 0, 0.0, 0.0)], Level.DISTRIBUTOR, weights=[3, 1])
    assert d.p_delta == pytest.approx(0.75)


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate([], Level.MICROGRID)
    with pytest.raises(ValueError):
        aggregate([hh(0, 0, 0, 0), hh(1, 0, 0, 0)], Level.HOUSEHOLD)
    with pytest.raises(ValueError):
        aggregate([hh(0, 0, 0, 0)], Level.DISTRIBUTOR, weights=[0.0])
    with pytest.raises(ValueError):
        aggregate([aggregate([hh(0, 0, 0, 0)], Level.DISTRIBUTOR)], Level.DISTRIBUTOR)


def test_hierarchy_structure():
    base = [report(i, i % 2, 1.0, 1.0, key=f"d{i}") for i in range(5)]
    treated = [report(i, i % 2, 1.0 - 0.1 * i, 0.5, key=f"d{i}") for i in range(5)]
    out = delta_hierarchy(base, treated)
    levels = [d.level for d in out]
    assert levels == [Level.HOUSEHOLD] * 5 + [Level.MICROGRID] * 2 + [Level.DISTRIBUTOR]
    assert out[-1].p_delta == pytest.approx(0.2) and out[-1].c_delta == pytest.approx(0.5)


def test_hierarchy_averages_days():
    base = [report(0, 0, 1.0, 0.0, key="a"), report(0, 0, 1.0, 0.0, key="b")]
    treated = [report(0, 0, 0.0, 0.0, key="a"), report(0, 0, 0.5, 0.0, key="b")]
    hs = delta_hierarchy(base, treated)
    assert hs[0].p_delta == pytest.approx(0.75) and hs[0].n_households == 1


def test_hierarchy_mismatch():
    with pytest.raises(ValueError):
        delta_hierarchy([report(0, 0, 1, 1, key="a")], [report(0, 0, 1, 1, key="b")])
    with pytest.raises(ValueError):
        delta_hierarchy([report(0, 0, 1, 1), report(1, 0, 1, 1)], [report(0, 0, 1, 1)])


def test_deltas_csv_roundtrip(tmp_path):
    rows = [("federated/train", hh(0, 1, 0.1, -0.2)),
            ("federated/train", DeltaReport(Level.DISTRIBUTOR, 0, 1 / 3, 2 / 3, 7, None))]
    write_deltas_csv(rows, tmp_path / "d.csv")
    assert read_deltas_csv(tmp_path / "d.csv") == rows


# ------------------------------------------------------------------- table

def arm(p_train, p_test=None, r=-1.0):
    out = {"train": [report(0, 0, p_train, 0.1, "a", r), report(1, 0, p_train, 0.3, "b", r)]}
    if p_test is not None:
        out["test"] = [report(5, 1, p_test, 0.2, "c", r)]
    return out


def test_table_layout():
    t = comparison_table(arm(0.1, 0.2), arm(0.3, 0.4), arm(0.5, 0.6))
    assert t.columns == ARM_LABELS
    assert [name for name, _ in t.rows] == ["Train reward", "Train price score", "Train emission score",
                                            "Test price score", "Test emission score"]
    assert t.row("Train price score") == (0.1, 0.3, 0.5)
    assert t.row("Train emission score") == pytest.approx((0.2, 0.2, 0.2))
    assert t.row("Test price score") == (0.2, 0.4, 0.6)


def test_table_identical_arms_identical_columns():
    t = comparison_table(arm(0.3, 0.1), arm(0.3, 0.1), arm(0.3, 0.1))
    assert all(len(set(v)) == 1 for _, v in t.rows)


def test_table_without_test_split():
    t = comparison_table(arm(0.1), arm(0.2), arm(0.3))
    assert len(t.rows) == 3


def test_table_mismatched_arms():
    bad = arm(0.2)
    bad["train"] = bad["train"][:1]
    with pytest.raises(ValueError):
        comparison_table(arm(0.1), bad, arm(0.3))
    with pytest.raises(ValueError):
        comparison_table({"train": []}, {"train": []}, {"train": []})


def test_table_csv_and_text():
    t = comparison_table(arm(0.1, 0.2), arm(0.3, 0.4), arm(1 / 3, 0.6))
    assert ComparisonTable.from_csv(t.to_csv()) == t
    text = t.format_text().splitlines()
    assert "LP oracle" in text[0] and "A2C federated" in text[0]
    assert text[2].startswith("Train reward")
    with pytest.raises(KeyError):
        t.row("nope")
