"""Workload generation, tranche subsets, dataset file round-trips."""

import json

import numpy as np
import pytest
from scipy import stats

from adalloc.datasets import (
    Dataset,
    DatasetError,
    QueryRecord,
    load_dataset,
    save_dataset,
)
from adalloc.workloads import (
    WorkloadSpec,
    generate_routing_workload,
    generate_workload,
    select_tranches,
)


class TestGenerateWorkload:
    def test_all_hopeless_when_zero_mass_is_one(self):
        ds = generate_workload(WorkloadSpec("code-like", 40, 8, seed=0, zero_mass=1.0))
        assert ds.rewards_matrix().sum() == 0
        assert np.all(ds.true_success_probs() == 0)

    def test_point_distribution_binomial_concentration(self):
        spec = WorkloadSpec(
            "custom", 500, 64, seed=1, zero_mass=0.0, success_dist=("point", 0.5)
        )
        lam_hat = generate_workload(spec).empirical_success_probs()
        sigma = np.sqrt(0.25 / 64 / 500)
        assert abs(lam_hat.mean() - 0.5) < 3 * sigma

    def test_seed_determinism_and_byte_identity(self, tmp_path):
        spec = WorkloadSpec("math-like", 50, 16, seed=9)
        a, b = generate_workload(spec), generate_workload(spec)
        assert a == b
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(a, pa)
        save_dataset(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_different_seeds_differ(self):
        a = generate_workload(WorkloadSpec("math-like", 30, 8, seed=1))
        b = generate_workload(WorkloadSpec("math-like", 30, 8, seed=2))
        assert a != b

    def test_empirical_distribution_converges(self):
        spec = WorkloadSpec(
            "custom", 10_000, 128, seed=13, zero_mass=0.0, success_dist=("beta", 2, 2)
        )
        lam_hat = generate_workload(spec).empirical_success_probs()
        ks = stats.kstest(lam_hat, stats.beta(2, 2).cdf)
        assert ks.statistic < 0.05

    def test_chat_family_scalar_rewards(self):
        ds = generate_workload(WorkloadSpec("chat-like", 25, 8, seed=3))
        assert ds.metric_kind == "reward"
        assert ds.feature_dim == 2 + 3
        variances = ds.rewards_matrix().var(axis=1)
        assert variances.max() / variances.min() > 10  # wide spread for tranches

    def test_features_learnable_shape(self):
        ds = generate_workload(WorkloadSpec("math-like", 20, 8, seed=4, n_distractors=2))
        assert ds.feature_dim == 3
        assert ds.features_matrix().shape == (20, 3)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            WorkloadSpec("poetry", 10, 4)


class TestGenerateRoutingWorkload:
    def test_shared_ids_and_gap_fraction(self):
        strong, weak = generate_routing_workload(400, 8, seed=3, weak_better_frac=0.3)
        assert strong.ids() == weak.ids()
        gaps = strong.rewards_matrix().mean(1) - weak.rewards_matrix().mean(1)
        assert 0.2 < (gaps < 0).mean() < 0.45

    def test_deterministic(self):
        a1, b1 = generate_routing_workload(30, 4, seed=7)
        a2, b2 = generate_routing_workload(30, 4, seed=7)
        assert a1 == a2 and b1 == b2


class TestSelectTranches:
    def test_identical_variances_tie_break_by_id(self):
        records = [
            QueryRecord(id=f"q{i:02d}", rewards=np.array([0.0, 1.0])) for i in range(10)
        ]
        ds = Dataset(records=records, max_budget=2, metric_kind="reward")
        subset = select_tranches(ds, 0.1, 0.1)
        assert subset.ids() == ["q00", "q09"]

    def test_max_variance_query_included(self):
        rng = np.random.default_rng(0)
        records = [
            QueryRecord(id=f"q{i}", rewards=rng.normal(0, 0.1, size=4)) for i in range(9)
        ]
        records.append(QueryRecord(id="wild", rewards=np.array([-9.0, 9.0, -9.0, 9.0])))
        ds = Dataset(records=records, max_budget=4, metric_kind="reward")
        subset = select_tranches(ds, 0.1, 0.1)
        assert "wild" in subset.ids()

    def test_subset_size_with_distinct_variances(self):
        ds = generate_workload(WorkloadSpec("chat-like", 50, 8, seed=2))
        subset = select_tranches(ds, 0.1, 0.1)
        assert len(subset) == 2 * int(0.1 * 50)
        assert len(set(subset.ids())) == len(subset)
        assert set(subset.ids()) <= set(ds.ids())

    def test_small_pools_rejected(self):
        ds = Dataset(
            records=[QueryRecord(id="a", rewards=np.array([1.0]))],
            max_budget=1,
            metric_kind="reward",
        )
        with pytest.raises(ValueError):
            select_tranches(ds)


class TestDatasetIO:
    def test_roundtrip_identity(self, tmp_path):
        ds = generate_workload(WorkloadSpec("code-like", 25, 8, seed=5))
        path = tmp_path / "d.jsonl"
        save_dataset(ds, path)
        assert load_dataset(path) == ds

    def test_roundtrip_reward_dataset(self, tmp_path):
        ds = generate_workload(WorkloadSpec("chat-like", 10, 4, seed=6))
        path = tmp_path / "d.jsonl"
        save_dataset(ds, path)
        assert load_dataset(path) == ds

    def test_reward_count_mismatch_names_line(self, tmp_path):
        ds = generate_workload(WorkloadSpec("math-like", 3, 4, seed=7))
        path = tmp_path / "d.jsonl"
        save_dataset(ds, path)
        lines = path.read_text().splitlines()
        row = json.loads(lines[2])  # force a short rewards array on line 3
        row["rewards"] = row["rewards"][:-1]
        lines[2] = json.dumps(row)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match="line 3"):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DatasetError, match="empty dataset"):
            load_dataset(path)

    def test_invalid_json_names_line(self, tmp_path):
        ds = generate_workload(WorkloadSpec("math-like", 2, 4, seed=8))
        path = tmp_path / "d.jsonl"
        save_dataset(ds, path)
        with open(path, "a") as fh:
            fh.write("{not json\n")
        with pytest.raises(DatasetError, match="line 4"):
            load_dataset(path)

    def test_unknown_schema(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"schema": "other.v9"}\n')
        with pytest.raises(DatasetError, match="schema"):
            load_dataset(path)

    def test_duplicate_ids_rejected(self):
        records = [
            QueryRecord(id="a", rewards=np.array([1.0])),
            QueryRecord(id="a", rewards=np.array([0.0])),
        ]
        with pytest.raises(DatasetError, match="duplicate"):
            Dataset(records=records, max_budget=1, metric_kind="reward")

    def test_non_binary_success_pool_rejected(self):
        with pytest.raises(DatasetError):
            Dataset(
                records=[QueryRecord(id="a", rewards=np.array([0.5]))],
                max_budget=1,
                metric_kind="success-rate",
            )
