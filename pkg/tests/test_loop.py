import copy

import numpy as np
import pytest

from screenprio.dense import RocchioWeights
from screenprio.dense import rank as dense_rank
from screenprio.loop import (
    ScreeningRecord,
    SessionConfig,
    SessionError,
    concatenated_ranking,
    expected_iterations,
    next_batch,
    record_from_state,
    run_simulation,
    start_session,
    submit_feedback,
)

from conftest import make_datasets, make_qrels, random_session_data


def simple_datasets():
    return make_datasets(
        {
            "D1": [0.9, 0.1],
            "D2": [0.5, 0.5],
            "D3": [0.1, 0.9],
            "D4": [0.7, 0.3],
        },
        [1.0, 0.0],
    )


class TestStartSession:
    def test_initial_state(self):
        state = start_session(SessionConfig(topic_id="T1", k=2), simple_datasets())
        assert state.iteration == 0
        assert state.remaining == {"D1", "D2", "D3", "D4"}
        assert state.issued_token is None

    def test_unknown_topic(self):
        with pytest.raises(SessionError, match="unknown topic"):
            start_session(SessionConfig(topic_id="NOPE"), simple_datasets())

    def test_k_larger_than_pool_accepted(self):
        state = start_session(SessionConfig(topic_id="T1", k=25), simple_datasets())
        _token, batch = next_batch(state)
        assert len(batch) == 4

    def test_missing_pool_embedding(self):
        datasets = simple_datasets()
        bad = make_datasets({"D1": [1.0, 0.0]}, [1.0, 0.0])
        datasets.topics["T1"] = bad.topics["T1"].__class__(
            topic_id="T1", title_query="q", pool=("D1", "D9")
        )
        with pytest.raises(SessionError, match="D9"):
            start_session(SessionConfig(topic_id="T1"), datasets)


class TestNextBatch:
    def test_first_batch_equals_dense_rank_prefix(self):
        datasets = simple_datasets()
        state = start_session(SessionConfig(topic_id="T1", k=2), datasets)
        _token, batch = next_batch(state)
        full = dense_rank(
            datasets.embeddings.vector("topic:T1"), state.pool, datasets.embeddings
        )
        assert batch == full[:2]

    def test_partial_final_batch(self):
        state = start_session(SessionConfig(topic_id="T1", k=25), simple_datasets())
        _token, batch = next_batch(state)
        assert len(batch) == 4

    def test_outstanding_batch_guard(self):
        state = start_session(SessionConfig(topic_id="T1", k=2), simple_datasets())
        next_batch(state)
        with pytest.raises(SessionError, match="outstanding"):
            next_batch(state)


class TestSubmitFeedback:
    def test_noop_weights_keep_query(self):
        datasets = simple_datasets()
        config = SessionConfig(topic_id="T1", k=2, weights=RocchioWeights(1, 0, 0))
        state = start_session(config, datasets)
        q0 = state.current_query.copy()
        token, batch = next_batch(state)
        submit_feedback(state, token, [(s.doc_id, True) for s in batch])
        assert np.array_equal(state.current_query, q0)

    def test_all_nonrelevant_with_zero_gamma_keeps_query(self):
        config = SessionConfig(topic_id="T1", k=2, weights=RocchioWeights(1, 1, 0))
        state = start_session(config, simple_datasets())
        q0 = state.current_query.copy()
        token, batch = next_batch(state)
        submit_feedback(state, token, [(s.doc_id, False) for s in batch])
        assert np.array_equal(state.current_query, q0)

    def test_positive_feedback_moves_query_toward_cluster(self):
        # q=[1,0]; relevant direction [0,1]: after judging D3 relevant with
        # weights (1,1,0), the next batch should be headed by docs nearest
        # the hand-computed updated query q + mean(positives)
        datasets = make_datasets(
            {
                "D1": [0.95, 0.05],
                "D2": [0.9, 0.1],
                "D3": [0.1, 0.9],
                "D4": [0.15, 0.95],
                "D5": [0.5, 0.6],
            },
            [1.0, 0.0],
        )
        config = SessionConfig(topic_id="T1", k=3, weights=RocchioWeights(1, 1, 0))
        state = start_session(config, datasets)
        token, batch = next_batch(state)
        ids = [s.doc_id for s in batch]
        assert "D5" in ids  # third-ranked under the initial query
        submit_feedback(state, token, [(d, d == "D5") for d in ids])
        expected_q = np.array([1.0, 0.0]) + datasets.embeddings.vector("D5").astype(
            np.float64
        )
        expected = dense_rank(expected_q, state.remaining, datasets.embeddings)
        _t2, batch2 = next_batch(state)
        assert batch2 == expected[: len(batch2)]

    def test_invalid_submission_is_transactional(self):
        state = start_session(SessionConfig(topic_id="T1", k=2), simple_datasets())
        token, batch = next_batch(state)
        snapshot = (
            state.iteration,
            set(state.remaining),
            list(state.screened),
            state.issued_token,
        )
        with pytest.raises(SessionError):
            submit_feedback(state, token, [(batch[0].doc_id, True)])  # incomplete
        with pytest.raises(SessionError):
            submit_feedback(state, "bogus", [(s.doc_id, True) for s in batch])
        with pytest.raises(SessionError):
            submit_feedback(
                state, token, [(batch[0].doc_id, True), (batch[0].doc_id, False)]
            )
        assert snapshot == (
            state.iteration,
            set(state.remaining),
            list(state.screened),
            state.issued_token,
        )

    def test_stale_token_after_success(self):
        state = start_session(SessionConfig(topic_id="T1", k=2), simple_datasets())
        token, batch = next_batch(state)
        judgments = [(s.doc_id, True) for s in batch]
        submit_feedback(state, token, judgments)
        with pytest.raises(SessionError):
            submit_feedback(state, token, judgments)


class TestRunSimulation:
    def test_iteration_count_exact(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(0), 4, 3)
        record = run_simulation(SessionConfig(topic_id="T1", k=2), datasets, qrels)
        assert len(record.batches) == 2
        assert record.terminal_reason == "exhausted"

    def test_cutoff(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(1), 60, 4)
        record = run_simulation(
            SessionConfig(topic_id="T1", k=25, max_iterations=2), datasets, qrels
        )
        assert sum(len(b.doc_ids) for b in record.batches) == 50
        assert record.terminal_reason == "cutoff"

    def test_noop_weights_equal_initial_ranking(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(2), 30, 4)
        config = SessionConfig(topic_id="T1", k=7, weights=RocchioWeights(1, 0, 0))
        record = run_simulation(config, datasets, qrels)
        initial = dense_rank(
            datasets.embeddings.vector("topic:T1"),
            datasets.topics["T1"].pool,
            datasets.embeddings,
        )
        assert concatenated_ranking(record) == [s.doc_id for s in initial]

    def test_permutation_of_pool(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(3), 23, 4)
        record = run_simulation(SessionConfig(topic_id="T1", k=5), datasets, qrels)
        ranking = concatenated_ranking(record)
        assert sorted(ranking) == sorted(datasets.topics["T1"].pool)
        assert len(set(ranking)) == len(ranking)

    def test_deterministic_record_bytes(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(4), 20, 4)
        config = SessionConfig(topic_id="T1", k=6)
        r1 = run_simulation(config, datasets, qrels)
        r2 = run_simulation(config, datasets, qrels)
        assert r1.to_json() == r2.to_json()

    def test_k_at_least_n_equals_initial_ranking_for_all_strategies(self):
        datasets, qrels, rel = random_session_data(np.random.default_rng(5), 10, 4)
        for strategy in ("dense_rocchio", "bm25_static", "bm25_rm3_static", "tar_logistic"):
            config = SessionConfig(topic_id="T1", strategy=strategy, k=10)
            record = run_simulation(config, datasets, qrels)
            assert len(record.batches) == 1
            config2 = SessionConfig(topic_id="T1", strategy=strategy, k=15)
            record2 = run_simulation(config2, datasets, qrels)
            assert concatenated_ranking(record) == concatenated_ranking(record2)

    def test_static_strategy_concatenation_is_static_ranking(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(6), 12, 4)
        state = start_session(
            SessionConfig(topic_id="T1", strategy="bm25_static", k=5), datasets
        )
        static_order = [s.doc_id for s in state.static_ranking]
        record = run_simulation(
            SessionConfig(topic_id="T1", strategy="bm25_static", k=5), datasets, qrels
        )
        assert concatenated_ranking(record) == static_order

    def test_no_batch_repeats_earlier_docs(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(7), 25, 4)
        record = run_simulation(SessionConfig(topic_id="T1", k=4), datasets, qrels)
        seen: set[str] = set()
        n = len(datasets.topics["T1"].pool)
        for i, batch in enumerate(record.batches):
            assert not (set(batch.doc_ids) & seen)
            if i < len(record.batches) - 1:
                assert len(batch.doc_ids) == 4
            seen.update(batch.doc_ids)
        assert len(seen) == n

    def test_cumulative_scope_differs_from_batch_scope(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(8), 40, 6)
        batch_rec = run_simulation(
            SessionConfig(topic_id="T1", k=5, feedback_scope="batch"), datasets, qrels
        )
        cum_rec = run_simulation(
            SessionConfig(topic_id="T1", k=5, feedback_scope="cumulative"), datasets, qrels
        )
        assert sorted(concatenated_ranking(batch_rec)) == sorted(concatenated_ranking(cum_rec))

    def test_tar_simulation_runs(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(9), 15, 4)
        record = run_simulation(
            SessionConfig(topic_id="T1", strategy="tar_logistic", k=5), datasets, qrels
        )
        assert record.terminal_reason == "exhausted"
        assert sorted(concatenated_ranking(record)) == sorted(datasets.topics["T1"].pool)


class TestScreeningRecord:
    def test_json_round_trip(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(10), 9, 3)
        record = run_simulation(SessionConfig(topic_id="T1", k=4), datasets, qrels)
        restored = ScreeningRecord.from_json(record.to_json())
        assert restored.to_json() == record.to_json()

    def test_concatenation_order(self):
        record = run_simulation(
            SessionConfig(topic_id="T1", k=2),
            *random_session_data(np.random.default_rng(11), 5, 3)[:2],
        )
        flat = [d for b in record.batches for d in b.doc_ids]
        assert concatenated_ranking(record) == flat

    def test_unfinished_state_rejected(self):
        state = start_session(SessionConfig(topic_id="T1", k=2), simple_datasets())
        with pytest.raises(SessionError):
            record_from_state(state)


def test_expected_iterations():
    assert expected_iterations(4, 2) == 2
    assert expected_iterations(5, 2) == 3
    assert expected_iterations(500, 25) == 20
