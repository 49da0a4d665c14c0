import pytest

import iptvpon

SMALL = """
[topology]
n_onus = 2
users_per_onu = 2
[workload]
n_objects = 30
duration_s = 600
request_rate = 0.5
zap_rate = 0.02
seed = 4
"""


def test_scoring_matches_hand_values():
    assert iptvpon.recency_factor(10.0, 0.0, 10.0) == 0.5
    s = iptvpon.SegmentStats()
    s.n_requests = 2
    s.n_payloads_played = 6
    s.t_last_accessed = 0.0
    cfg = iptvpon.CacheConfig()
    cfg.payloads_per_segment = 8
    assert iptvpon.utility1(s, 0.0, cfg) == pytest.approx(0.6)
    assert iptvpon.next_request_probability(10.0, 40.0) == 0.25


def test_cache_promotes_and_pins():
    cfg = iptvpon.CacheConfig()
    cfg.capacity1 = 2
    cfg.capacity2 = 2
    cfg.payloads_per_segment = 4
    cfg.segments_per_object = 2
    cache = iptvpon.make_cache("bilevel", cfg)
    D = iptvpon.CacheDecision
    assert cache.request(0, 0, 4, 0.0) == [(0, 0, D.MISS_INSERTED)]
    assert cache.request(0, 0, 4, 1.0)[0][2] in (D.HIT1, D.HIT1_PROMOTED)
    cache.start_play(0, 0)
    assert cache.contains(0, 0)
    assert len(cache) == 1
    with pytest.raises(ValueError):
        cache.request(0, 6, 4, 2.0)
    with pytest.raises(ValueError):
        iptvpon.make_cache("fifo", cfg)


def test_trace_and_simulation_are_deterministic():
    trace = iptvpon.generate_trace(SMALL)
    assert trace and all(a.time_s <= b.time_s for a, b in zip(trace, trace[1:]))
    assert {r.kind for r in trace} <= {"vod", "join", "leave"}
    a = iptvpon.simulate(SMALL)
    b = iptvpon.simulate(SMALL)
    assert a == b
    assert a["run"]["config_hash"] == iptvpon.config_hash(SMALL)
    t = a["totals"]
    assert t["packets_created"] == t["packets_delivered"] + t["packets_lost"] + t["packets_in_flight"]


def test_bad_config_lists_problems():
    with pytest.raises(iptvpon.ConfigError) as err:
        iptvpon.simulate("[cache.onu]\npolicy = fifo\nbogus = 1\n")
    assert "line 2" in str(err.value)


def test_cache_bench_and_protocol_check():
    ratios = iptvpon.cache_bench(SMALL, capacity=60, policies=["bilevel", "lru"])
    assert set(ratios) == {"bilevel", "lru"}
    assert all(0.0 <= v <= 1.0 for v in ratios.values())
    r = iptvpon.protocol_check(5000, seed=2)
    assert r["ok"] and r["steps"] == 5000 and r["failing_step"] is None


def test_ipdv():
    assert iptvpon.mean_abs_ipdv(iptvpon.ipdv([10.0, 12.0, 11.0])) == 1.5
    assert iptvpon.ipdv([1.0, None, 3.0, 4.0]) == [1.0]
