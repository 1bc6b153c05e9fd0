import math

import pytest
from hypothesis import given, strategies as st

from adquality import engagement as eg
from adquality.engagement import EngagementRecord as R


def imp(ad, user):
    return R(ad, user, "impression")


def click(ad, user, dwell):
    return R(ad, user, "click", dwell)


def stats_for(ad, impressions, long_clicks, long_users):
    return eg.AdStats(ad, impressions, long_clicks, impressions, long_users,
                      long_clicks / impressions, long_users / impressions)


# parsing


def test_parse_header_only(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("ad_id,user_id,event,dwell_seconds,timestamp\n")
    assert eg.parse_event_log(p) == []


def test_parse_one_impression(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("ad_id,user_id,event,dwell_seconds,timestamp\na1,u1,impression,3.0,100\n")
    (rec,) = eg.parse_event_log(p)
    assert rec == R("a1", "u1", "impression", 0.0, 100.0)


def test_parse_unknown_event(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("ad_id,user_id,event,dwell_seconds,timestamp\n"
                 "a1,u1,impression,0,1\na1,u1,hover,0,2\n")
    with pytest.raises(eg.LogParseError) as exc:
        eg.parse_event_log(p)
    assert exc.value.line == 3 and exc.value.column == "event"


@pytest.mark.parametrize("row,column", [
    ("a1,u1,click,abc,1", "dwell_seconds"),
    ("a1,u1,click,-1,1", "dwell_seconds"),
    ("a1,u1,click,2,nan", "timestamp"),
    ("a1,u1", "event"),
])
def test_parse_bad_values(tmp_path, row, column):
    p = tmp_path / "log.csv"
    p.write_text(f"ad_id,user_id,event,dwell_seconds,timestamp\n{row}\n")
    with pytest.raises(eg.LogParseError) as exc:
        eg.parse_event_log(p)
    assert exc.value.line == 2 and exc.value.column == column
    assert "line 2" in str(exc.value)


def test_parse_missing_column(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("ad_id,user_id,event,timestamp\n")
    with pytest.raises(eg.LogParseError) as exc:
        eg.parse_event_log(p)
    assert exc.value.column == "dwell_seconds"


def test_log_round_trip(tmp_path):
    rows = [("a", "u1", "impression", 0.0, 1.0), ("a", "u1", "click", 7.5, 2.0)]
    p = tmp_path / "log.csv"
    eg.write_event_log(rows, p)
    assert [tuple(vars(r).values()) for r in eg.parse_event_log(p)] == rows


def test_record_rejects_bad_values():
    with pytest.raises(ValueError):
        R("a", "u", "hover")
    with pytest.raises(ValueError):
        R("a", "u", "click", -0.5)


# statistics


def test_lcr_filter_boundary():
    recs = [imp("a", f"u{i}") for i in range(500)]
    recs += [click("a", "u1", 10.0), click("a", "u2", 6.0)]
    (s,) = eg.compute_stats(recs).stats
    assert s.impressions == 500 and s.long_clicks == 2
    assert s.lcr == pytest.approx(0.004)


def test_lcr_vs_rlcr():
    recs = [imp("a", f"u{i}") for i in range(10)]
    recs += [click("a", "u0", 30.0)] * 3
    (s,) = eg.compute_stats(recs).stats
    assert s.lcr == pytest.approx(0.3)
    assert s.rlcr == pytest.approx(0.1)


def test_dwell_threshold_strict():
    recs = [imp("a", "u"), click("a", "u", 5.0)]
    (s,) = eg.compute_stats(recs).stats
    assert s.long_clicks == 0
    (s,) = eg.compute_stats(recs + [click("a", "u", 5.0001)]).stats
    assert s.long_clicks == 1


def test_zero_impression_ads_omitted_and_orphans_flagged():
    recs = [imp("a", "u1"), click("a", "u2", 9.0), click("b", "u3", 9.0)]
    rep = eg.compute_stats(recs)
    assert [s.ad_id for s in rep.stats] == ["a"]
    assert rep.omitted_ads == ["b"]
    assert rep.orphan_long_clicks == [("a", "u2"), ("b", "u3")]


def test_threshold_must_be_positive():
    with pytest.raises(ValueError):
        eg.compute_stats([], dwell_threshold=0)


record = st.builds(
    R,
    st.sampled_from(["a", "b", "c"]),
    st.sampled_from(["u1", "u2", "u3", "u4"]),
    st.sampled_from(["impression", "click"]),
    st.floats(0, 20),
)


@given(st.lists(record, max_size=40), st.randoms(use_true_random=False))
def test_stats_order_invariant(recs, rnd):
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    assert eg.compute_stats(recs) == eg.compute_stats(shuffled)


@given(st.lists(record, max_size=40))
def test_rates_in_unit_interval_without_orphans(recs):
    rep = eg.compute_stats(recs)
    if not rep.orphan_long_clicks:
        for s in rep.stats:
            assert 0 <= s.rlcr <= 1
            assert s.lcr >= 0


# filtering


def test_filter_rules():
    few = stats_for("a", 499, 5, 5)
    ok = stats_for("b", 500, 2, 2)
    one_user = stats_for("c", 500, 2, 1)
    assert eg.filter_ads([few, ok, one_user], "LCR") == [ok, one_user]
    assert eg.filter_ads([few, ok, one_user], "R-LCR") == [ok]
    with pytest.raises(ValueError):
        eg.filter_ads([ok], "CTR")


# labelling


def ten_ads():
    return [stats_for(f"ad{i}", 1000, i, i) for i in range(10)]


def test_label_30_30():
    labels = eg.percentile_label(ten_ads(), "LCR", 30, 30)
    good = [q.ad_id for q in labels if q.label == 1]
    bad = [q.ad_id for q in labels if q.label == 0]
    assert good == ["ad9", "ad8", "ad7"]
    assert bad == ["ad2", "ad1", "ad0"]


def test_label_50_50_covers_all():
    labels = eg.percentile_label(ten_ads(), "R-LCR", 50, 50)
    assert sorted(q.ad_id for q in labels) == sorted(s.ad_id for s in ten_ads())
    assert all(q.metric_used == "R-LCR" for q in labels)


def test_label_two_ads_70_30_overlap():
    # ceil(1.4) + ceil(0.6) = 3 > 2
    with pytest.raises(eg.LabelError):
        eg.percentile_label(ten_ads()[:2], "LCR", 70, 30)


def test_label_two_ads_50_50():
    assert len(eg.percentile_label(ten_ads()[:2], "LCR", 50, 50)) == 2


def test_label_bad_percentages():
    with pytest.raises(ValueError):
        eg.percentile_label(ten_ads(), "LCR", 70, 40)


def test_label_ties_by_ad_id():
    tied = [stats_for(a, 100, 1, 1) for a in ("d", "b", "a", "c")]
    labels = eg.percentile_label(tied, "LCR", 50, 50)
    assert [(q.ad_id, q.label) for q in labels] == [("a", 1), ("b", 1), ("c", 0), ("d", 0)]


stat = st.builds(
    lambda i, n, k: stats_for(f"ad{i:03d}", n, min(k, n), min(k, n)),
    st.integers(0, 999), st.integers(1, 50), st.integers(0, 50),
)


@given(st.lists(stat, min_size=1, max_size=30, unique_by=lambda s: s.ad_id),
       st.sampled_from([(30, 30), (10, 10), (70, 30), (50, 50)]),
       st.randoms(use_true_random=False))
def test_label_properties(stats, pcts, rnd):
    try:
        labels = eg.percentile_label(stats, "LCR", *pcts)
    except eg.LabelError:
        n = len(stats)
        assert math.ceil(n * pcts[0] / 100 - 1e-9) + math.ceil(n * pcts[1] / 100 - 1e-9) > n
        return
    shuffled = list(stats)
    rnd.shuffle(shuffled)
    assert eg.percentile_label(shuffled, "LCR", *pcts) == labels
    good = {q.ad_id for q in labels if q.label == 1}
    bad = {q.ad_id for q in labels if q.label == 0}
    assert not good & bad
    assert len(good) + len(bad) <= len(stats)
    if good and bad:
        assert min(q.metric_value for q in labels if q.label) >= max(q.metric_value for q in labels if not q.label)


# files


def test_label_file_round_trip(tmp_path):
    labels = eg.percentile_label(ten_ads(), "LCR")
    p = tmp_path / "labels.csv"
    eg.write_labels(labels, p)
    assert p.read_text().splitlines()[0] == "ad_id,label,metric,metric_value"
    assert eg.read_labels(p) == {q.ad_id: q.label for q in labels}


def test_read_labels_rejects_bad_label(tmp_path):
    p = tmp_path / "labels.csv"
    p.write_text("ad_id,label\na,2\n")
    with pytest.raises(eg.LogParseError):
        eg.read_labels(p)


def test_stats_file_header(tmp_path):
    p = tmp_path / "stats.csv"
    eg.write_stats(ten_ads()[:1], p)
    assert p.read_text().splitlines()[0] == ",".join(eg.STATS_COLUMNS)
