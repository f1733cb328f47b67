import math
import random

import numpy as np
import pytest

from screenprio.dense import RocchioWeights
from screenprio.evaluation import (
    average_precision,
    bonferroni,
    build_report,
    last_rel,
    paired_t_test,
    regularized_incomplete_beta,
    score_record,
)
from screenprio.loop import SessionConfig, run_simulation

from conftest import make_qrels, random_session_data


def ap_oracle(ranking, relevant, total_relevant):
    """Direct-definition oracle: mean over relevant ranks of precision@rank."""
    precisions = []
    hits = 0
    for i, d in enumerate(ranking, start=1):
        if d in relevant:
            hits += 1
            precisions.append(hits / i)
    return sum(precisions) / total_relevant


class TestAveragePrecision:
    def test_perfect_prefix(self):
        assert average_precision(["R1", "R2", "N1", "N2"], {"R1", "R2"}, 2) == 1.0

    def test_hand_value(self):
        # [N,R,N,R], 2 relevant -> (1/2 + 2/4) / 2 = 0.5
        assert average_precision(["N1", "R1", "N2", "R2"], {"R1", "R2"}, 2) == 0.5

    def test_matches_oracle_on_random_permutations(self):
        rng = random.Random(17)
        for _ in range(500):
            n = rng.randint(1, 10)
            docs = [f"D{i}" for i in range(n)]
            rng.shuffle(docs)
            relevant = {d for d in docs if rng.random() < 0.4}
            if not relevant:
                relevant = {docs[0]}
            total = len(relevant) + rng.randint(0, 2)
            assert average_precision(docs, relevant, total) == pytest.approx(
                ap_oracle(docs, relevant, total), abs=1e-12
            )

    def test_zero_total_relevant_rejected(self):
        with pytest.raises(ValueError):
            average_precision(["D1"], set(), 0)

    def test_unscreened_relevant_penalizes(self):
        # 1 of 4 relevant unscreened: denominator stays 4
        ranking = ["R1", "R2", "R3", "N1"]
        ap = average_precision(ranking, {"R1", "R2", "R3", "R4"}, 4)
        assert ap == pytest.approx((1 + 1 + 1) / 4)

    def test_invariant_under_tail_nonrelevant_permutation(self):
        base = ["R1", "N1", "R2", "N2", "N3"]
        swapped = ["R1", "N1", "R2", "N3", "N2"]
        rel = {"R1", "R2"}
        assert average_precision(base, rel, 2) == average_precision(swapped, rel, 2)


class TestLastRel:
    def test_first_position(self):
        assert last_rel(["R1", "N1", "N2"], {"R1"}) == 1

    def test_linear_scan_value(self):
        assert last_rel(["N1", "R1", "N2", "R2", "N3"], {"R1", "R2"}) == 4

    def test_none_when_absent(self):
        assert last_rel(["N1", "N2"], {"R1"}) is None

    def test_matches_max_position_oracle(self):
        rng = random.Random(23)
        for _ in range(500):
            n = rng.randint(0, 12)
            docs = [f"D{i}" for i in range(n)]
            rng.shuffle(docs)
            relevant = {d for d in docs if rng.random() < 0.3}
            oracle = max(
                (i for i, d in enumerate(docs, start=1) if d in relevant), default=None
            )
            assert last_rel(docs, relevant) == oracle


class TestScoreRecord:
    def test_fixture_hand_values(self):
        datasets, qrels, relevant = random_session_data(np.random.default_rng(31), 12, 4)
        record = run_simulation(SessionConfig(topic_id="T1", k=5), datasets, qrels)
        metrics = score_record(record, qrels)
        ranking = [d for b in record.batches for d in b.doc_ids]
        assert metrics.ap == pytest.approx(
            ap_oracle(ranking, set(relevant), len(relevant)), abs=1e-12
        )
        assert metrics.last_rel == last_rel(ranking, set(relevant))
        assert metrics.num_screened == 12

    def test_recall_curve_non_decreasing_per_batch(self):
        datasets, qrels, _rel = random_session_data(np.random.default_rng(32), 20, 4)
        record = run_simulation(SessionConfig(topic_id="T1", k=6), datasets, qrels)
        metrics = score_record(record, qrels)
        found = [f for _s, f in metrics.recall_curve]
        assert found == sorted(found)
        assert metrics.recall_curve[-1][0] == 20

    def test_zero_relevant_topic_skipped(self):
        datasets, _qrels, _rel = random_session_data(np.random.default_rng(33), 8, 3)
        qrels = make_qrels("T1", [], non_relevant=["D0000"])
        record = run_simulation(SessionConfig(topic_id="T1", k=4), datasets, qrels)
        assert score_record(record, qrels) is None


class TestPairedTTest:
    def test_identical_samples_p_one(self):
        assert paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (0.0, 1.0)

    def test_oracle_case(self):
        # frozen from an independent statistics implementation
        t, p = paired_t_test([1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0])
        assert t == pytest.approx(3.872983346207417, abs=1e-4)
        assert p == pytest.approx(0.030466291662170977, abs=1e-4)

    def test_sign_flip_symmetry(self):
        a = [0.3, 0.5, 0.9, 0.1, 0.6]
        b = [0.2, 0.7, 0.4, 0.3, 0.5]
        t1, p1 = paired_t_test(a, b)
        t2, p2 = paired_t_test(b, a)
        assert t1 == pytest.approx(-t2, abs=1e-12)
        assert p1 == pytest.approx(p2, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            paired_t_test([1.0], [1.0, 2.0])

    def test_too_few_pairs(self):
        with pytest.raises(ValueError):
            paired_t_test([1.0], [0.0])

    def test_constant_nonzero_difference(self):
        t, p = paired_t_test([1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
        assert math.isinf(t) and p == 0.0


class TestIncompleteBeta:
    def test_endpoints(self):
        assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0

    def test_uniform_case(self):
        # I_x(1,1) = x
        for x in (0.1, 0.37, 0.92):
            assert regularized_incomplete_beta(1.0, 1.0, x) == pytest.approx(x, abs=1e-10)

    def test_symmetry(self):
        # I_x(a,b) = 1 - I_{1-x}(b,a)
        assert regularized_incomplete_beta(2.5, 4.0, 0.3) == pytest.approx(
            1.0 - regularized_incomplete_beta(4.0, 2.5, 0.7), abs=1e-10
        )

    def test_half_integer_closed_form(self):
        # I_x(1/2, 1/2) = (2/pi) * arcsin(sqrt(x))
        for x in (0.2, 0.5, 0.8):
            assert regularized_incomplete_beta(0.5, 0.5, x) == pytest.approx(
                2.0 / math.pi * math.asin(math.sqrt(x)), abs=1e-10
            )


class TestBonferroni:
    def test_basic(self):
        assert bonferroni(0.01, 4) == pytest.approx(0.04)

    def test_clamped(self):
        assert bonferroni(0.5, 4) == 1.0

    def test_identity(self):
        assert bonferroni(0.123, 1) == 0.123

    def test_invalid_m(self):
        with pytest.raises(ValueError):
            bonferroni(0.5, 0)

    def test_monotone(self):
        assert bonferroni(0.1, 2) <= bonferroni(0.2, 2) <= bonferroni(0.2, 3)


class TestBuildReport:
    def _records(self, seeds, k_values, topics=3):
        rng = np.random.default_rng(101)
        records = []
        qrels_entries = {}
        datasets_by_topic = {}
        for t in range(topics):
            tid = f"T{t}"
            datasets, qrels, _rel = random_session_data(rng, 15, 4, topic_id=tid)
            datasets_by_topic[tid] = (datasets, qrels)
            qrels_entries.update(qrels.entries)
        from screenprio.datastore import Qrels

        all_qrels = Qrels(qrels_entries)
        for weights in seeds:
            for k in k_values:
                for tid, (datasets, qrels) in datasets_by_topic.items():
                    config = SessionConfig(
                        topic_id=tid, k=k, weights=RocchioWeights(*weights)
                    )
                    records.append(run_simulation(config, datasets, qrels))
        return records, all_qrels

    def test_single_group_single_topic(self):
        rng = np.random.default_rng(55)
        datasets, qrels, relevant = random_session_data(rng, 10, 3)
        record = run_simulation(SessionConfig(topic_id="T1", k=5), datasets, qrels)
        report = build_report([record], qrels)
        assert len(report.rows) == 1
        metrics = score_record(record, qrels)
        assert report.rows[0].mean_ap == pytest.approx(metrics.ap)
        assert report.rows[0].mean_last_rel == pytest.approx(metrics.last_rel)

    def test_baseline_self_comparison(self):
        records, qrels = self._records([(1, 0, 0), (1, 1, 1)], [5])
        baseline_label = next(
            r.config for r in records if r.config["weights"] == [1, 0, 0]
        )
        report = build_report(records, qrels, baseline="dense_rocchio|1,0,0|k=5")
        base_row = [r for r in report.rows if r.key.weights == (1, 0, 0)][0]
        assert base_row.p_adjusted == 1.0
        assert not base_row.significant

    def test_grid_has_all_cells(self):
        weights = [(1, 1, 1), (1, 0.8, 0.2), (1, 0.5, 0.5), (1, 1, 0)]
        ks = [5, 10, 15, 25, 50]
        records, qrels = self._records(weights, ks, topics=2)
        report = build_report(records, qrels)
        assert len(report.rows) == 20

    def test_topic_set_mismatch_rejected(self):
        records, qrels = self._records([(1, 1, 1), (1, 1, 0)], [5], topics=2)
        with pytest.raises(ValueError, match="topic set"):
            build_report(records[:-1], qrels)

    def test_deterministic_output(self):
        records, qrels = self._records([(1, 1, 1), (1, 1, 0)], [5])
        r1 = build_report(records, qrels, baseline="dense_rocchio|1,1,0|k=5")
        r2 = build_report(records, qrels, baseline="dense_rocchio|1,1,0|k=5")
        assert r1.to_csv() == r2.to_csv()
        assert r1.to_text() == r2.to_text()

    def test_csv_header(self):
        records, qrels = self._records([(1, 1, 1)], [5])
        csv = build_report(records, qrels).to_csv()
        assert csv.splitlines()[0] == (
            "collection,strategy,alpha,beta,gamma,k,num_topics,"
            "mean_ap,mean_last_rel,p_value,p_adjusted,significant"
        )
