"""Harness: profiling, allocation math, runners, speedup reports."""

import math

import pytest

from pdevsim import SequentialCoordinator
from pdevsim.bench import (Allocation2Level, AtomicProfile, BenchError,
                           allocate_two_level, append_report_row,
                           balanced_buckets, balanced_pool_plan, local_plan,
                           plot_data_csv, profile_model, profiles_from_csv,
                           profiles_to_csv, read_report_rows,
                           run_distributed_local, run_parallel, run_plan,
                           run_sequential, speedup_rows, speedups_to_csv,
                           two_level_groups, two_level_pool_plan)
from pdevsim.devstone import DelayDistribution, DevstoneConfig, generate
from pdevsim.planfile import parse_plan_xml, emit_plan_xml


def _synthetic_profiles(total=197, generator=True):
    profiles = [AtomicProfile(f"A{i:03d}", float(total - i), float(total - i))
                for i in range(total)]
    if generator:
        profiles.append(AtomicProfile("generator", 0.0, 0.0))
    return profiles


def _graph_for(profiles):
    from pdevsim import ModelGraph, atomic_spec
    graph = ModelGraph("synthetic")
    for profile in profiles:
        model = "generator" if profile.name == "generator" else "devstone"
        graph.add_component(atomic_spec(profile.name, model))
    return graph


def test_quarter_fraction_matches_published_split():
    profiles = _synthetic_profiles(197)
    alloc = allocate_two_level(profiles, _graph_for(profiles), fraction=0.25,
                               n=4, m=8)
    assert len(alloc.l1) == 49
    assert len(alloc.l2) == 149  # the rest plus the generator
    assert "generator" in alloc.l2
    assert alloc.l1 == tuple(f"A{i:03d}" for i in range(49))  # slowest first


def test_full_fraction_leaves_generator_in_l2():
    profiles = _synthetic_profiles(10)
    alloc = allocate_two_level(profiles, _graph_for(profiles), fraction=1.0)
    assert len(alloc.l1) == 10
    assert alloc.l2 == ("generator",)


def test_allocation_requires_complete_profile():
    profiles = _synthetic_profiles(5)
    graph = _graph_for(profiles + [AtomicProfile("extra", 1.0, 1.0)])
    with pytest.raises(BenchError, match="extra"):
        allocate_two_level(profiles, graph)


def test_allocation_determinism_with_ties():
    profiles = [AtomicProfile(name, 1.0, 1.0) for name in ("b", "a", "d", "c")]
    graph = _graph_for(profiles)
    one = allocate_two_level(profiles, graph, fraction=0.5)
    two = allocate_two_level(list(reversed(profiles)), graph, fraction=0.5)
    assert one == two
    assert one.l1 == ("a", "b")  # ties break lexicographically


def test_balanced_buckets_bound():
    profiles = _synthetic_profiles(23, generator=False)
    for m in (2, 3, 5):
        buckets = balanced_buckets(profiles, m)
        by_name = {p.name: p.total for p in profiles}
        sums = [sum(by_name[n] for n in bucket) for bucket in buckets]
        heaviest = max(by_name.values())
        assert max(sums) - min(sums) <= heaviest


def test_two_level_pool_plan_shape():
    profiles = _synthetic_profiles(8)
    alloc = allocate_two_level(profiles, _graph_for(profiles), 0.25, n=3, m=5)
    plan = two_level_pool_plan(alloc)
    assert [(p.name, p.workers) for p in plan.pools] == [("L1", 3), ("L2", 5)]
    assert set(plan.assignment.values()) == {"L1", "L2"}
    groups = two_level_groups(alloc)
    assert {g for a, g in groups.items() if a in alloc.l1} <= {f"L1-{i}" for i in range(3)}
    assert len({g for g in groups.values()}) <= 8


def test_profile_csv_roundtrip():
    profiles = _synthetic_profiles(4)
    text = profiles_to_csv(profiles)
    assert profiles_from_csv(text) == sorted(
        profiles, key=lambda p: (-p.total, p.name))
    with pytest.raises(BenchError, match="header"):
        profiles_from_csv("nope\n1,2,3\n")


def test_profile_ranks_slow_atomics_first():
    config = DevstoneConfig("HO", 4, 3, DelayDistribution.constant(0.02), seed=0)
    profiles = profile_model(generate(config))
    assert profiles[0].name.startswith("A3_")  # deepest chain position is slowest
    totals = [p.total for p in profiles]
    assert totals == sorted(totals, reverse=True)
    by_name = {p.name: p for p in profiles}
    top = by_name["A3_1"]
    assert top.total == pytest.approx(2 * 3 * 0.02, rel=0.5)
    assert by_name["generator"].total <= 0.02 + 0.011


def test_profile_zero_delay_is_near_zero():
    profiles = profile_model(generate(DevstoneConfig("HO", 3, 3)))
    # everything within measurement-tick noise of zero
    assert all(p.total <= 0.021 for p in profiles)


def test_run_plan_backend_matching(tmp_path):
    pool_text = emit_plan_xml(generate(DevstoneConfig("HO", 3, 3)), workers=2)
    dist_text = emit_plan_xml(generate(DevstoneConfig("HO", 3, 3)),
                              host="127.0.0.1", base_port=5400)
    pool_plan = parse_plan_xml(pool_text)
    dist_plan = parse_plan_xml(dist_text)
    report = run_plan(pool_plan, "sequential")
    assert report.counter_triple() == (7, 7, 7)
    report = run_plan(pool_plan, "parallel")
    assert report.counter_triple() == (7, 7, 7)
    with pytest.raises(BenchError, match="pool-addressed"):
        run_plan(dist_plan, "parallel")
    with pytest.raises(BenchError, match="endpoint-addressed"):
        run_plan(pool_plan, "distributed-local")
    with pytest.raises(BenchError, match="unknown backend"):
        run_plan(pool_plan, "quantum")


def test_distributed_local_harness_roundtrip():
    report = run_distributed_local(generate(DevstoneConfig("HO", 3, 3)), trace=True)
    sequential = run_sequential(generate(DevstoneConfig("HO", 3, 3)), trace=True)
    assert report.backend == "distributed-local"
    assert report.counter_triple() == sequential.counter_triple()
    assert report.trace_text() == sequential.trace_text()


def test_report_rows_roundtrip(tmp_path):
    path = tmp_path / "rows.csv"
    first = run_sequential(generate(DevstoneConfig("HO", 3, 3)))
    append_report_row(path, first)
    append_report_row(path, first)
    rows = read_report_rows(path)
    assert len(rows) == 2
    assert rows[0]["model"] == "ho_w3_d3"
    assert int(rows[0]["num_delt_ints"]) == 7


def _row(model, backend, label, wall):
    return {"model": model, "backend": backend, "workers/pools": label,
            "cycles": "3", "wall_seconds": repr(wall),
            "num_delt_ints": "7", "num_delt_exts": "7", "num_events": "7"}


def test_speedup_math_and_grouping():
    rows = [_row("m", "sequential", "1", 8.0),
            _row("m", "parallel", "4", 2.0),
            _row("m", "parallel", "2x2", 4.0),
            _row("m", "distributed-local", "6", 16.0)]
    folded = speedup_rows(rows)
    by_label = {r.label: r for r in folded}
    assert by_label["4"].speedup == pytest.approx(4.0)
    assert by_label["4"].group == "parallel-1pool"
    assert by_label["2x2"].speedup == pytest.approx(2.0)
    assert by_label["2x2"].group == "parallel-2pool"
    assert by_label["6"].speedup == pytest.approx(0.5)
    csv_text = speedups_to_csv(folded)
    assert csv_text.splitlines()[0] == "model,group,label,wall_seconds,speedup"
    plot = plot_data_csv(folded)
    assert "sequential" not in plot


def test_speedup_requires_exactly_one_baseline():
    rows = [_row("m", "parallel", "4", 2.0)]
    with pytest.raises(BenchError, match="baseline"):
        speedup_rows(rows)
    rows = [_row("m", "sequential", "1", 8.0), _row("m", "sequential", "1", 7.0)]
    with pytest.raises(BenchError, match="multiple"):
        speedup_rows(rows)


def test_reference_speedup_ratios_from_published_numbers():
    rows = [_row("big", "sequential", "1", 5896.54),
            _row("big", "parallel", "32", 369.9),
            _row("big", "distributed-local", "7x15", 5896.54 / 1.84)]
    folded = speedup_rows(rows)
    assert folded[1].speedup == pytest.approx(15.94, abs=0.01)
    assert folded[2].speedup == pytest.approx(1.84, abs=0.01)


def test_profile_totals_track_process_cpu():
    # The summed per-atomic transition CPU must stay below the process
    # total for the run and dominate it once delays reach ~10 ms.
    import time

    from pdevsim import SequentialCoordinator

    config = DevstoneConfig("HO", 4, 3, DelayDistribution.constant(0.02), seed=0)
    graph = generate(config)
    coordinator = SequentialCoordinator(graph, profile=True)
    before = time.process_time()
    coordinator.simulate()
    process_cpu = time.process_time() - before
    summed = sum(ext + internal for _, ext, internal in coordinator.atomic_profiles())
    assert summed <= process_cpu + 1e-9
    assert summed >= 0.9 * process_cpu, (summed, process_cpu)
