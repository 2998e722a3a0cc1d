"""Eligibility filtering, the five policies, and the fairness index."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_device
from feelsim.errors import DegenerateWeightsError, ValidationError
from feelsim.network import NetworkConfig
from feelsim.scheduler import (
    ConstraintConfig,
    ScoreWeights,
    filter_eligible,
    jain_fairness,
    schedule_age_fair,
    schedule_data_size_priority,
    schedule_post_training,
    schedule_pre_training,
    schedule_random,
)

NET = NetworkConfig(total_bandwidth=1e6, model_size_bits=1e5)
LAX = ConstraintConfig(min_battery=0.0, min_snr_db=-math.inf, min_data_size=0)


def _fleet(n=6, **overrides):
    return [make_device(device_id=i, **overrides) for i in range(n)]


# ------------------------------------------------------------------ configs


def test_score_weights_simplex_enforced():
    ScoreWeights(0.6, 0.2, 0.2)
    with pytest.raises(ValidationError) as info:
        ScoreWeights(0.5, 0.2, 0.2)
    assert info.value.code == "weights_not_simplex"
    with pytest.raises(ValidationError):
        ScoreWeights(1.2, -0.1, -0.1)


def test_constraint_config_validation():
    with pytest.raises(ValidationError):
        ConstraintConfig(min_battery=1.5)
    with pytest.raises(ValidationError):
        ConstraintConfig(completion_threshold=0.0)
    with pytest.raises(ValidationError):
        ConstraintConfig(min_participants=0)


# ---------------------------------------------------------------- filtering


def test_filter_battery_floor():
    devices = [
        make_device(device_id=0, battery=0.5),
        make_device(device_id=1, battery=0.04),
        make_device(device_id=2, battery=0.0),
    ]
    out = filter_eligible(devices, ConstraintConfig(min_battery=0.05), NET, epochs=1)
    assert [d.id for d in out] == [0]


def test_filter_drained_device_excluded_even_with_zero_floor():
    devices = [make_device(device_id=0, battery=0.0)]
    out = filter_eligible(devices, LAX, NET, epochs=1)
    assert out == []


def test_filter_snr_floor():
    devices = [make_device(device_id=0, snr_db=5.0), make_device(device_id=1, snr_db=-15.0)]
    out = filter_eligible(devices, ConstraintConfig(min_snr_db=-10.0), NET, epochs=1)
    assert [d.id for d in out] == [0]


def test_filter_min_data_size():
    devices = [make_device(device_id=0, n_samples=3), make_device(device_id=1, n_samples=16)]
    out = filter_eligible(devices, ConstraintConfig(min_data_size=16), NET, epochs=1)
    assert [d.id for d in out] == [1]


def test_filter_completion_budget_uses_equal_share():
    fast = make_device(device_id=0, snr_db=20.0, n_samples=10)
    slow = make_device(device_id=1, snr_db=20.0, n_samples=10_000, cpu_freq=1e8)
    constraints = ConstraintConfig(completion_threshold=1.0, min_battery=0.0)
    out = filter_eligible([fast, slow], constraints, NET, epochs=1)
    assert [d.id for d in out] == [0]


def test_filter_unreachable_dropped_and_order_preserved():
    devices = [
        make_device(device_id=2, snr_db=10.0),
        make_device(device_id=0, snr_db=-4000.0),
        make_device(device_id=1, snr_db=10.0),
    ]
    out = filter_eligible(devices, LAX, NET, epochs=1)
    assert [d.id for d in out] == [2, 1]


# ------------------------------------------------------------- pre-training


def test_pre_training_pure_diversity_ranking():
    devices = _fleet(5)
    div = {0: 0.1, 1: 0.9, 2: 0.5, 3: 0.7, 4: 0.3}
    decision = schedule_pre_training(
        devices, div, k=2, weights=ScoreWeights(1.0, 0.0, 0.0), constraints=LAX, net=NET, epochs=1
    )
    assert decision.selected == (1, 3)
    assert decision.round_valid


def test_pre_training_battery_breaks_diversity_tie():
    devices = [
        make_device(device_id=0, battery=0.2),
        make_device(device_id=1, battery=0.9),
    ]
    div = {0: 0.5, 1: 0.5}
    decision = schedule_pre_training(
        devices, div, k=1, weights=ScoreWeights(0.6, 0.4, 0.0), constraints=LAX, net=NET, epochs=1
    )
    assert decision.selected == (1,)


def test_pre_training_channel_term():
    devices = [
        make_device(device_id=0, snr_db=0.0),
        make_device(device_id=1, snr_db=25.0),
    ]
    div = {0: 0.5, 1: 0.5}
    decision = schedule_pre_training(
        devices, div, k=1, weights=ScoreWeights(0.0, 0.0, 1.0), constraints=LAX, net=NET, epochs=1
    )
    assert decision.selected == (1,)


def test_pre_training_exact_ties_prefer_lower_id():
    devices = _fleet(4)
    div = {i: 0.5 for i in range(4)}
    decision = schedule_pre_training(
        devices, div, k=2, weights=ScoreWeights(1.0, 0.0, 0.0), constraints=LAX, net=NET, epochs=1
    )
    assert decision.selected == (0, 1)


def test_pre_training_selection_invariant_to_index_rescaling():
    # a strictly increasing transform of the reported indices cannot change
    # a pure-diversity ranking
    devices = _fleet(6)
    rng = np.random.default_rng(3)
    div = {i: float(rng.uniform(0, 3)) for i in range(6)}
    warped = {i: math.exp(2.0 * v) + 1.0 for i, v in div.items()}
    w = ScoreWeights(1.0, 0.0, 0.0)
    a = schedule_pre_training(devices, div, k=3, weights=w, constraints=LAX, net=NET, epochs=1)
    b = schedule_pre_training(devices, warped, k=3, weights=w, constraints=LAX, net=NET, epochs=1)
    assert a.selected == b.selected


def test_pre_training_k_larger_than_pool_takes_all():
    devices = _fleet(3)
    decision = schedule_pre_training(
        devices, {i: 0.1 * i for i in range(3)}, k=10, weights=ScoreWeights(), constraints=LAX, net=NET, epochs=1
    )
    assert sorted(decision.selected) == [0, 1, 2]


def test_pre_training_empty_pool_invalid_round():
    decision = schedule_pre_training(
        [], {}, k=3, weights=ScoreWeights(), constraints=ConstraintConfig(min_participants=2), net=NET, epochs=1
    )
    assert decision.selected == ()
    assert not decision.round_valid


def test_pre_training_min_participants_gate():
    devices = _fleet(2)
    div = {0: 0.1, 1: 0.9}
    constraints = ConstraintConfig(min_battery=0.0, min_participants=3)
    decision = schedule_pre_training(devices, div, k=2, weights=ScoreWeights(), constraints=constraints, net=NET, epochs=1)
    assert decision.selected == (1, 0) or set(decision.selected) == {0, 1}
    assert not decision.round_valid


def test_pre_training_decision_shares_and_predictions():
    devices = _fleet(4, snr_db=10.0)
    div = {i: float(i) for i in range(4)}
    decision = schedule_pre_training(devices, div, k=3, weights=ScoreWeights(), constraints=LAX, net=NET, epochs=1)
    assert set(decision.bandwidth_share) == set(decision.selected)
    assert sum(decision.bandwidth_share.values()) == pytest.approx(NET.total_bandwidth, rel=1e-9)
    assert all(t > 0 for t in decision.predicted_completion.values())


def test_pre_training_straggler_cap_prunes_selection():
    # direct call without the filter: one device can never meet the deadline
    fast = [make_device(device_id=i, n_samples=10, snr_db=20.0) for i in range(2)]
    slow = make_device(device_id=5, n_samples=100_000, cpu_freq=1e8, snr_db=20.0)
    constraints = ConstraintConfig(min_battery=0.0, completion_threshold=2.0)
    div = {0: 0.0, 1: 0.1, 5: 9.9}
    decision = schedule_pre_training(fast + [slow], div, k=3, weights=ScoreWeights(1.0, 0.0, 0.0), constraints=constraints, net=NET, epochs=1)
    assert 5 not in decision.selected
    assert set(decision.selected) == {0, 1}


def test_pre_training_k_must_be_positive():
    with pytest.raises(ValueError):
        schedule_pre_training(_fleet(2), {0: 0.0, 1: 0.0}, k=0, weights=ScoreWeights(), constraints=LAX, net=NET, epochs=1)


# ------------------------------------------------------------ post-training


def test_post_training_top_k_by_index():
    devices = _fleet(5)
    indices = {0: 0.2, 1: 0.9, 2: 0.4, 3: 0.9, 4: 0.1}
    decision = schedule_post_training(devices, indices, k=3, constraints=LAX, net=NET, epochs=1)
    assert decision.selected == (1, 3, 2)  # tie at 0.9 broken by id


def test_post_training_empty():
    decision = schedule_post_training([], {}, k=2, constraints=LAX, net=NET, epochs=1)
    assert decision.selected == ()


# ------------------------------------------------------------------- random


def test_random_is_seeded_and_without_replacement():
    devices = _fleet(10)
    a = schedule_random(devices, k=4, seed=11, constraints=LAX, net=NET, epochs=1)
    b = schedule_random(devices, k=4, seed=11, constraints=LAX, net=NET, epochs=1)
    c = schedule_random(devices, k=4, seed=12, constraints=LAX, net=NET, epochs=1)
    assert a.selected == b.selected
    assert len(set(a.selected)) == 4
    assert a.selected != c.selected


def test_random_marginals_roughly_uniform():
    devices = _fleet(8)
    counts = {i: 0 for i in range(8)}
    trials = 1200
    for seed in range(trials):
        picked = schedule_random(devices, k=2, seed=seed, constraints=LAX, net=NET, epochs=1).selected
        for did in picked:
            counts[did] += 1
    expected = trials * 2 / 8
    for did, cnt in counts.items():
        assert abs(cnt - expected) < 0.2 * expected


# ---------------------------------------------------------------- data-size


def test_data_size_priority_favors_large_datasets():
    small = [make_device(device_id=i, n_samples=5) for i in range(4)]
    big = make_device(device_id=9, n_samples=5000)
    hits = 0
    for seed in range(200):
        decision = schedule_data_size_priority(small + [big], k=1, seed=seed, constraints=LAX, net=NET, epochs=1)
        hits += decision.selected == (9,)
    assert hits > 180


def test_data_size_priority_inverse_flips_preference():
    small = make_device(device_id=0, n_samples=5)
    big = make_device(device_id=1, n_samples=5000)
    hits = 0
    for seed in range(200):
        decision = schedule_data_size_priority(
            [small, big], k=1, seed=seed, constraints=LAX, net=NET, epochs=1, inverse=True
        )
        hits += decision.selected == (0,)
    assert hits > 180


def test_data_size_priority_degenerate_and_take_all():
    zeros = [make_device(device_id=i, n_samples=0) for i in range(3)]
    with pytest.raises(DegenerateWeightsError):
        schedule_data_size_priority(zeros, k=2, seed=0, constraints=LAX, net=NET, epochs=1)
    devices = _fleet(3)
    decision = schedule_data_size_priority(devices, k=3, seed=0, constraints=LAX, net=NET, epochs=1)
    assert sorted(decision.selected) == [0, 1, 2]


# ----------------------------------------------------------------- age-fair


def test_age_fair_never_participated_wins():
    veteran = make_device(device_id=0, participation_count=6, last_round=9)
    fresh = make_device(device_id=1)
    decision = schedule_age_fair([veteran, fresh], k=1, current_round=10, constraints=LAX, net=NET, epochs=1)
    assert decision.selected == (1,)


def test_age_fair_orders_by_staleness_then_count():
    devices = [
        make_device(device_id=0, participation_count=2, last_round=8),
        make_device(device_id=1, participation_count=2, last_round=3),
        make_device(device_id=2, participation_count=5, last_round=3),
    ]
    decision = schedule_age_fair(devices, k=2, current_round=10, constraints=LAX, net=NET, epochs=1)
    assert decision.selected == (1, 2)  # both aged 7, fewer participations first


def test_age_fair_rotation_converges_to_even_counts():
    # simulate 12 rounds of k=2 over 4 devices by hand
    state = {i: {"count": 0, "last": None} for i in range(4)}
    for rnd in range(12):
        devices = [
            make_device(device_id=i, participation_count=state[i]["count"], last_round=state[i]["last"])
            for i in range(4)
        ]
        decision = schedule_age_fair(devices, k=2, current_round=rnd, constraints=LAX, net=NET, epochs=1)
        for did in decision.selected:
            state[did]["count"] += 1
            state[did]["last"] = rnd
    counts = [state[i]["count"] for i in range(4)]
    assert max(counts) - min(counts) <= 1
    assert jain_fairness(counts) > 0.99


# ------------------------------------------------------------------ fairness


def test_jain_anchors():
    assert jain_fairness([3, 3, 3]) == pytest.approx(1.0, abs=1e-12)
    assert jain_fairness([6, 0, 0]) == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert jain_fairness({0: 1, 1: 1, 2: 0, 3: 0}) == pytest.approx(0.5, rel=1e-12)
    assert jain_fairness([0, 0, 0]) == 1.0


def test_jain_rejects_bad_input():
    with pytest.raises(ValueError):
        jain_fairness([])
    with pytest.raises(ValueError):
        jain_fairness([1, -2])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=50), min_size=1, max_size=12))
def test_jain_matches_oracle_and_bounds(counts):
    got = jain_fairness(counts)
    want = oracles.jain(counts)
    assert got == pytest.approx(want, rel=1e-12)
    assert 1.0 / len(counts) - 1e-12 <= got <= 1.0 + 1e-12
