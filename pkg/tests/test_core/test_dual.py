"""Tests for the dual state and its algebra."""

import numpy as np
import pytest
from oracles import (
    dense_dual,
    finite_difference,
    multiclass_problem,
    randomize_alpha,
    saturated_state,
    state_alpha,
)

from bqo_struct.core.dual import (
    DualState,
    InstanceState,
    WorkingSetEntry,
    check_consistency,
    dual_gradient_entry,
    dual_objective,
    primal_objective,
    reconstruct_w,
)
from bqo_struct.core.exceptions import ConsistencyError, StructureError
from bqo_struct.core.schemas import TrainConfig
from bqo_struct.core.sparse import SparseVec, zero_model


def make_entry(key, alpha=0.0, delta=1.0):
    return WorkingSetEntry(key, SparseVec.from_pairs([(key, 1.0)]), delta, alpha=alpha)


class TestWorkingSet:
    """Test working-set bookkeeping."""

    def test_entry_rejects_negative_loss(self):
        """Test a negative loss is refused."""
        with pytest.raises(StructureError, match="non-negative"):
            WorkingSetEntry(1, SparseVec.empty(), -1.0)

    def test_entry_caches_norm(self):
        """Test the squared feature norm is cached on creation."""
        entry = WorkingSetEntry(1, SparseVec.from_pairs([(0, 3.0), (1, 4.0)]), 1.0)
        assert entry.phi_sq_norm == 25.0

    def test_add_deduplicates(self):
        """Test a structure is stored at most once per instance."""
        inst = InstanceState(0, gold=0)
        assert inst.add(make_entry(1, alpha=0.5))
        assert not inst.add(make_entry(1, alpha=0.5))
        assert len(inst.entries) == 1
        assert inst.alpha_sum == 0.5
        assert 1 in inst

    def test_prune_drops_stale_zero_entries(self):
        """Test entries at zero for long enough are removed."""
        inst = InstanceState(0, gold=0)
        inst.add(make_entry(1))
        inst.add(make_entry(2, alpha=0.3))
        inst.add(make_entry(3))
        inst.entries[0].zero_streak = 2
        inst.entries[2].zero_streak = 1

        assert inst.prune(2) == 1
        assert [e.structure_key for e in inst.entries] == [2, 3]
        assert 1 not in inst
        assert inst.add(make_entry(1))

    def test_reconcile_detects_drift(self):
        """Test the alpha-sum audit."""
        inst = InstanceState(0, gold=0)
        inst.add(make_entry(1, alpha=0.25))
        inst.alpha_sum += 1e-12
        inst.reconcile()
        assert inst.alpha_sum == 0.25

        inst.alpha_sum = 0.5
        with pytest.raises(ConsistencyError, match="drifted"):
            inst.reconcile()


class TestObjective:
    """Test dual objective and gradient evaluation."""

    def test_empty_state_is_zero(self):
        """Test the objective of an empty working set at w = 0."""
        cfg = TrainConfig(hash_bits=10)
        state = DualState.for_shard([], cfg)
        assert dual_objective([state], zero_model(10), cfg.c) == 0.0

    def test_matches_dense_dual(self):
        """Test the maintained-quantity objective equals the explicit quadratic form."""
        task, data = multiclass_problem(seed=3, instances=8)
        cfg = TrainConfig(hash_bits=task.hash_bits, c=0.1)
        state = saturated_state(task, data, cfg)
        randomize_alpha(state, np.random.default_rng(0))
        dense = dense_dual(task, data, cfg.c)

        w = reconstruct_w([state], cfg.hash_bits)
        expected = dense.value(state_alpha(state))
        assert dual_objective([state], w, cfg.c) == pytest.approx(expected, rel=1e-10)

    def test_split_states_sum_up(self):
        """Test evaluating over two partitions equals one partition."""
        task, data = multiclass_problem(seed=4, instances=6)
        cfg = TrainConfig(hash_bits=task.hash_bits)
        whole = saturated_state(task, data, cfg)
        randomize_alpha(whole, np.random.default_rng(1))
        left = DualState(whole.instances[:3], cfg)
        right = DualState(whole.instances[3:], cfg)

        w = reconstruct_w([left, right], cfg.hash_bits)
        assert np.allclose(w, reconstruct_w([whole], cfg.hash_bits))
        assert dual_objective([left, right], w, cfg.c) == pytest.approx(
            dual_objective([whole], w, cfg.c), rel=1e-12
        )

    @pytest.mark.parametrize("seed", range(20))
    def test_gradient_matches_finite_differences(self, seed):
        """Test every gradient coordinate against central differences."""
        task, data = multiclass_problem(seed=seed, instances=3, labels=3, features=4)
        cfg = TrainConfig(hash_bits=task.hash_bits, c=0.1)
        state = saturated_state(task, data, cfg)
        randomize_alpha(state, np.random.default_rng(seed))
        dense = dense_dual(task, data, cfg.c)
        alpha = state_alpha(state)
        w = reconstruct_w([state], cfg.hash_bits)

        for k, (inst, entry) in enumerate(state.entries()):
            analytic = dual_gradient_entry(entry, inst.alpha_sum, w, cfg.c)
            numeric = finite_difference(dense.value, alpha, k)
            assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-6)

    def test_scalar_problem_optimum(self, scalar_problem):
        """Test f at alpha = 1/6 on the one-coordinate problem is -1/12."""
        task, data, cfg = scalar_problem
        state = saturated_state(task, data, cfg)
        (entry,) = state.instances[0].entries
        assert entry.phi_sq_norm == pytest.approx(1.0)
        assert entry.delta == 1.0

        entry.alpha = 1.0 / 6.0
        state.instances[0].alpha_sum = 1.0 / 6.0
        w = reconstruct_w([state], cfg.hash_bits)
        assert dual_objective([state], w, cfg.c) == pytest.approx(-1.0 / 12.0, rel=1e-12)

    def test_primal_margin_satisfied(self, scalar_problem):
        """Test an instance beyond its margin contributes no slack."""
        task, data, cfg = scalar_problem
        w = zero_model(cfg.hash_bits)
        w[task.emission_index(0, "x")] = 4.0
        assert primal_objective(w, data, task, cfg.c) == pytest.approx(8.0)

        # gold score 1/2 against loss-augmented 1 leaves xi = 1/2
        w[task.emission_index(0, "x")] = 1.0 / np.sqrt(2.0)
        assert primal_objective(w, data, task, cfg.c) == pytest.approx(0.25 + 0.1 * 0.25)

    def test_primal_at_zero(self):
        """Test the primal objective at w = 0 is C times the sum of squared maximum losses."""
        task, data = multiclass_problem(seed=5, instances=4)
        value = primal_objective(zero_model(task.hash_bits), data, task, c=0.1)
        assert value == pytest.approx(0.1 * len(data))


def test_check_consistency():
    """Test the w reconstruction audit."""
    w = np.ones(8)
    check_consistency(w, w + 1e-9)
    with pytest.raises(ConsistencyError, match="differs"):
        check_consistency(w, w + 1e-3)
