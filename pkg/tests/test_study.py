import json
import threading
import urllib.request

import numpy as np
import pytest

from nvbgen.study import (
    PageRejected,
    RatingRecord,
    RecordStore,
    StudyConfig,
    analyze_records,
    create_session,
    descriptive_stats,
    rm_anova,
    submit_page,
)
from nvbgen.study_service import StudyService, serve

SEQUENCES = ("seq1", "seq2", "seq3", "seq4")
CONDITIONS = ("GTS", "m1", "m2", "m3")


def make_config():
    uris = {
        (criterion, sequence, condition): f"/videos/{criterion}_{sequence}_{condition}.mp4"
        for criterion in ("believability", "coordination")
        for sequence in SEQUENCES
        for condition in CONDITIONS
    }
    return StudyConfig(sequences=SEQUENCES, conditions=CONDITIONS, video_uris=uris)


def record(pid, criterion, sequence, condition, score, page=0, shown=0):
    return RatingRecord(
        participant_id=pid, criterion=criterion, sequence_id=sequence,
        condition=condition, score=score, page_index=page, shown_index=shown,
        timestamp=0.0,
    )


def test_session_has_eight_pages_and_32_slots():
    session = create_session(make_config(), np.random.default_rng(0))
    assert len(session.pages) == 8
    assert all(len(p.condition_order) == 4 for p in session.pages)
    assert sum(len(p.condition_order) for p in session.pages) == 32


def test_block_order_fixed_regardless_of_seed():
    for seed in range(10):
        session = create_session(make_config(), np.random.default_rng(seed))
        criteria = [p.criterion for p in session.pages]
        assert criteria == ["believability"] * 4 + ["coordination"] * 4
        assert all(p.muted for p in session.pages[:4])
        assert not any(p.muted for p in session.pages[4:])


def test_distinct_seeds_randomize_page_order():
    a = create_session(make_config(), np.random.default_rng(1))
    b = create_session(make_config(), np.random.default_rng(2))
    assert [p.sequence_id for p in a.pages] != [p.sequence_id for p in b.pages] or \
        [p.condition_order for p in a.pages] != [p.condition_order for p in b.pages]


def test_each_block_covers_all_sequences():
    session = create_session(make_config(), np.random.default_rng(3))
    assert sorted(p.sequence_id for p in session.pages[:4]) == sorted(SEQUENCES)
    assert sorted(p.sequence_id for p in session.pages[4:]) == sorted(SEQUENCES)


def page_ratings(page, base=50):
    return {condition: base + i for i, condition in enumerate(page.condition_order)}


def test_submit_advances_page():
    session = create_session(make_config(), np.random.default_rng(4))
    advanced, records = submit_page(session, 0, page_ratings(session.pages[0]))
    assert advanced.current_index == 1
    assert len(records) == 4
    assert all(r.page_index == 0 for r in records)


def test_submit_incomplete_rejected():
    session = create_session(make_config(), np.random.default_rng(5))
    ratings = page_ratings(session.pages[0])
    ratings.pop(session.pages[0].condition_order[0])
    with pytest.raises(PageRejected, match="exactly once"):
        submit_page(session, 0, ratings)


def test_submit_past_page_navigation_locked():
    session = create_session(make_config(), np.random.default_rng(6))
    advanced, _ = submit_page(session, 0, page_ratings(session.pages[0]))
    with pytest.raises(PageRejected, match="navigation locked"):
        submit_page(advanced, 0, page_ratings(session.pages[0]))


def test_submit_out_of_range_score_rejected():
    session = create_session(make_config(), np.random.default_rng(7))
    ratings = page_ratings(session.pages[0])
    ratings[session.pages[0].condition_order[0]] = 101
    with pytest.raises(PageRejected, match="outside"):
        submit_page(session, 0, ratings)
    ratings[session.pages[0].condition_order[0]] = 55.5
    with pytest.raises(PageRejected, match="integer"):
        submit_page(session, 0, ratings)


def test_full_session_produces_32_records(tmp_path):
    store = RecordStore(tmp_path / "records.jsonl")
    session = create_session(make_config(), np.random.default_rng(8))
    total = 0
    while not session.completed:
        page = session.current_page()
        session, records = submit_page(session, page.page_index, page_ratings(page))
        store.append_all(records)
        total += len(records)
    assert total == 32
    stored = store.read_all()
    assert len(stored) == 32
    assert all(0 <= r.score <= 100 for r in stored)


def test_record_round_trip_and_validation():
    r = record("p1", "coordination", "seq1", "m1", 43)
    assert RatingRecord.from_json(r.to_json()) == r
    with pytest.raises(ValueError):
        record("p1", "coordination", "seq1", "m1", 101)


# frozen fixture: 12 participants x 4 integer sequence scores whose
# participant-level means have mean 43.4167 and sample std 19.0452
TABLE_FIXTURE = [
    [18, 18, 17, 17],
    [34, 34, 33, 33],
    [69, 69, 69, 69],
    [45, 45, 45, 45],
    [84, 84, 84, 84],
    [28, 27, 27, 27],
    [53, 53, 53, 53],
    [39, 39, 39, 38],
    [53, 53, 53, 53],
    [43, 43, 42, 42],
    [32, 32, 32, 31],
    [26, 26, 26, 25],
]


def test_descriptive_stats_reproduce_reference_cell():
    records = []
    for pid, scores in enumerate(TABLE_FIXTURE):
        for seq, score in zip(SEQUENCES, scores):
            records.append(record(f"p{pid}", "coordination", seq, "m1", score))
    stats = descriptive_stats(records)
    cell = stats["cells"][("coordination", "m1")]
    assert cell["mean"] == pytest.approx(43.42, abs=0.01)
    assert cell["std"] == pytest.approx(19.04, abs=0.01)
    assert cell["n"] == 12


def test_descriptive_stats_constant_sample():
    records = [record(f"p{i}", "believability", "seq1", "GTS", 60) for i in range(5)]
    stats = descriptive_stats(records)
    cell = stats["cells"][("believability", "GTS")]
    assert cell["mean"] == 60.0 and cell["std"] == 0.0


def test_descriptive_stats_match_two_pass_oracle():
    rng = np.random.default_rng(9)
    records = []
    for pid in range(10):
        for seq in SEQUENCES:
            records.append(record(f"p{pid}", "coordination", seq, "m2",
                                  int(rng.integers(0, 101))))
    stats = descriptive_stats(records)
    cell = stats["cells"][("coordination", "m2")]
    by_pid = {}
    for r in records:
        by_pid.setdefault(r.participant_id, []).append(r.score)
    means = [sum(v) / len(v) for v in by_pid.values()]
    mean = sum(means) / len(means)
    var = sum((m - mean) ** 2 for m in means) / (len(means) - 1)
    assert cell["mean"] == pytest.approx(mean, rel=1e-12)
    assert cell["std"] == pytest.approx(var**0.5, rel=1e-12)


def test_descriptive_stats_flags_empty_cells():
    records = [record("p0", "coordination", "seq1", "m1", 10),
               record("p0", "believability", "seq1", "m2", 10)]
    stats = descriptive_stats(records)
    assert ("coordination", "m2") in stats["empty_cells"]


def test_anova_identical_scores_f_zero():
    records = []
    for pid in range(5):
        for condition in CONDITIONS:
            records.append(record(f"p{pid}", "coordination", "seq1", condition, 40 + pid))
    result = rm_anova(records, "coordination")
    assert result.f_statistic == 0.0


def test_anova_matches_hand_computed_sums_of_squares():
    # worked 3-participant x 2-condition fixture
    scores = {"p0": (10, 14), "p1": (20, 26), "p2": (30, 31)}
    records = []
    for pid, (a, b) in scores.items():
        records.append(record(pid, "coordination", "seq1", "A", a))
        records.append(record(pid, "coordination", "seq1", "B", b))
    result = rm_anova(records, "coordination")

    # oracle: explicit sums of squares
    matrix = np.array([[10, 14], [20, 26], [30, 31]], dtype=float)
    grand = matrix.mean()
    ss_cond = 3 * sum((matrix[:, j].mean() - grand) ** 2 for j in range(2))
    ss_subj = 2 * sum((matrix[i, :].mean() - grand) ** 2 for i in range(3))
    ss_total = ((matrix - grand) ** 2).sum()
    ss_err = ss_total - ss_cond - ss_subj
    f_oracle = (ss_cond / 1) / (ss_err / 2)
    assert result.f_statistic == pytest.approx(f_oracle, abs=1e-6)
    assert result.df_conditions == 1 and result.df_error == 2


def test_anova_shifted_copy_pairwise_significant():
    records = []
    for pid in range(6):
        base = 30 + pid * 3
        records.append(record(f"p{pid}", "coordination", "seq1", "A", base))
        records.append(record(f"p{pid}", "coordination", "seq1", "B", base + 10))
    result = rm_anova(records, "coordination")
    cmp = result.pairwise[0]
    assert {cmp.condition_a, cmp.condition_b} == {"A", "B"}
    assert cmp.mean_difference == pytest.approx(10.0)
    assert cmp.p_value < 0.05
    assert cmp.significance in ("p<.05", "p<.01")


def test_anova_incomplete_design_lists_cells():
    records = [record("p0", "coordination", "seq1", "A", 10),
               record("p0", "coordination", "seq1", "B", 12),
               record("p1", "coordination", "seq1", "A", 11)]
    with pytest.raises(ValueError, match="incomplete design.*p1.*B"):
        rm_anova(records, "coordination")


def test_analysis_excludes_incomplete_sessions(tmp_path):
    records = []
    for seq in SEQUENCES:
        for criterion in ("believability", "coordination"):
            for condition in CONDITIONS:
                records.append(record("complete", criterion, seq, condition, 50))
    records.append(record("dropout", "believability", "seq1", "GTS", 10))
    analysis = analyze_records(records, total_records_per_session=32)
    assert analysis["excluded_participants"] == ["dropout"]
    assert analysis["n_records"] == 32


@pytest.fixture()
def live_server(tmp_path):
    server = serve(make_config(), tmp_path / "records.jsonl", port=0, seed=7)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", server
    server.shutdown()
    server.server_close()


def _get(url):
    with urllib.request.urlopen(url) as response:
        return json.loads(response.read().decode())


def _post(url, payload):
    request = urllib.request.Request(
        url, data=json.dumps(payload).encode(), method="POST",
        headers={"Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(request) as response:
            return response.status, json.loads(response.read().decode())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read().decode())


def test_service_full_session_over_http(live_server):
    base, server = live_server
    status, created = _post(f"{base}/api/sessions", {"participant_id": "web1"})
    assert status == 201
    assert created["total_pages"] == 8
    page = created["page"]
    assert page["muted"] is True  # believability block first

    submissions = 0
    while page is not None:
        ratings = [
            {"condition": video["condition"], "score": 40 + video["slot"]}
            for video in page["videos"]
        ]
        status, result = _post(
            f"{base}/api/sessions/web1/ratings",
            {"page_index": page["page_index"], "ratings": ratings},
        )
        assert status == 200 and result["accepted"]
        submissions += 1
        page = result["page"]
    assert submissions == 8

    records = _get(f"{base}/api/records")["records"]
    assert len(records) == 32
    assert all(0 <= r["score"] <= 100 for r in records)

    status, rejected = _post(
        f"{base}/api/sessions/web1/ratings",
        {"page_index": 0, "ratings": [{"condition": c, "score": 1} for c in CONDITIONS]},
    )
    assert status == 409
    assert "navigation locked" in rejected["reason"]


def test_service_page_payload_shape(live_server):
    base, _ = live_server
    _, created = _post(f"{base}/api/sessions", {"participant_id": "web2"})
    fetched = _get(f"{base}/api/sessions/web2/page")
    assert fetched["completed"] is False
    page = fetched["page"]
    assert page["scale"] == [0, 100]
    assert len(page["videos"]) == 4
    assert {v["label"] for v in page["videos"]} == {"Video A", "Video B", "Video C", "Video D"}
    assert fetched["page"] == created["page"]


def test_service_report_endpoint(live_server):
    base, _ = live_server
    _, created = _post(f"{base}/api/sessions", {"participant_id": "web3"})
    page = created["page"]
    while page is not None:
        ratings = [{"condition": v["condition"], "score": 50} for v in page["videos"]]
        _, result = _post(f"{base}/api/sessions/web3/ratings",
                          {"page_index": page["page_index"], "ratings": ratings})
        page = result["page"]
    report = _get(f"{base}/api/report")
    assert report["n_records"] == 32
    assert "believability/GTS" in report["descriptive"]["cells"]
    anova = report["anova"]["coordination"]
    assert anova["f_statistic"] == 0.0


def test_service_report_is_strict_json_for_degenerate_designs(live_server):
    # a single participant rating conditions differently drives the ANOVA F
    # statistic to infinity (zero residual df); the payload must stay valid JSON
    base, _ = live_server
    _, created = _post(f"{base}/api/sessions", {"participant_id": "solo"})
    page = created["page"]
    while page is not None:
        ratings = [{"condition": v["condition"], "score": 10 + 7 * v["slot"]}
                   for v in page["videos"]]
        _, result = _post(f"{base}/api/sessions/solo/ratings",
                          {"page_index": page["page_index"], "ratings": ratings})
        page = result["page"]
    report = _get(f"{base}/api/report")
    assert report["anova"]["coordination"]["f_statistic"] is None


def test_service_unknown_session_404(live_server):
    base, _ = live_server
    status, _ = _post(f"{base}/api/sessions/ghost/ratings",
                      {"page_index": 0, "ratings": []})
    assert status == 404


def test_service_hosts_frontend_and_videos(tmp_path):
    frontend = tmp_path / "frontend"
    frontend.mkdir()
    (frontend / "index.html").write_text("<!DOCTYPE html><title>study</title>")
    videos = tmp_path / "videos"
    videos.mkdir()
    (videos / "clip.mp4").write_bytes(b"\x00fakevideo")

    server = serve(make_config(), tmp_path / "records.jsonl", port=0,
                   videos_dir=str(videos), frontend_dir=str(frontend))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        with urllib.request.urlopen(f"{base}/") as response:
            assert response.status == 200
            assert b"study" in response.read()
        with urllib.request.urlopen(f"{base}/videos/clip.mp4") as response:
            assert response.read() == b"\x00fakevideo"
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(f"{base}/../escape")
        assert err.value.code in (400, 404)
    finally:
        server.shutdown()
        server.server_close()
