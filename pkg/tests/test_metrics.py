from leapforge.metrics import compute_metrics
from leapforge.scenario import Clone, RadioParams, Scenario
from leapforge.simnet import run


def test_two_node_metrics():
    trace = run(Scenario(placements={1: (0.0, 0.0), 2: (10.0, 0.0)}))
    m = compute_metrics(trace.events)
    assert (m.in_range_pairs, m.agreeing_pairs, m.pairwise_success_fraction) == (1, 1, 1.0)
    for u in (1, 2):
        nm = m.nodes[u]
        assert nm.pairwise_count == 1
        assert 0 < nm.pairwise_latency_ms < 2000
        assert nm.cluster_ready_ms is not None and nm.cluster_ready_ms >= 2000
        assert nm.individual_confirmed_ms is not None
        assert nm.peak_store_bytes > 0
    assert m.messages_by_type["HELLO"] == 2 and m.bytes_by_type["HELLO"] == 22
    assert m.total_messages == sum(m.messages_by_type.values())


def test_out_of_range_pair_not_counted():
    trace = run(Scenario(placements={1: (0.0, 0.0), 2: (100.0, 0.0)}))
    m = compute_metrics(trace.events)
    assert m.in_range_pairs == 0 and m.pairwise_success_fraction == 1.0


def test_lossy_radio_lowers_success():
    s = Scenario(node_count=10, seed=2, radio=RadioParams(loss_prob=0.7))
    m = compute_metrics(run(s).events)
    assert m.agreeing_pairs < m.in_range_pairs


def test_detection_latency_recorded():
    s = Scenario(node_count=10, seed=1, adversaries=[Clone(victim_id=4, capture_ms=500)])
    m = compute_metrics(run(s).events)
    assert set(m.detection_latency_ms) == {4}
    assert 1000 <= m.detection_latency_ms[4] < 1200


def test_csv_shape():
    csv = compute_metrics(run(Scenario(node_count=3)).events).to_csv()
    lines = csv.splitlines()
    assert lines[0] == "metric,subject,value"
    assert all(line.count(",") == 2 for line in lines)
    assert "pairwise_success_fraction,all,1.0" in lines
