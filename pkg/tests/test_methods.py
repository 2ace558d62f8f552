import numpy as np
import pytest

from lib.analysis import consensus_deviation
from lib.methods import (
    ConsensusSchedule,
    DivergenceError,
    MethodSpec,
    ScheduleError,
    average_blocks,
    centralized_step,
    dgd_step,
    dsgt_step,
    extra_step,
    init_state,
    near_dgd_step,
    run,
    step,
)
from lib.objectives import QuadraticObjective, StochasticOracle, average_gradient, build_suite, make_quadratic_suite
from lib.topology import apply_consensus, averaging_matrix, generate_graph, metropolis_weights


def _ring10():
    return metropolis_weights(generate_graph("ring", 10))


# =========================
# building blocks
# =========================

@pytest.mark.parametrize("blocks,expected", [
    ([[7.0, 1.0]], [7.0, 1.0]),
    ([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5]),
    ([[2.0], [4.0], [6.0]], [4.0]),
])
def test_average_blocks(blocks, expected):
    np.testing.assert_allclose(average_blocks(np.array(blocks)), expected)


def test_schedules():
    assert [ConsensusSchedule.constant(3).rounds_at(k) for k in range(3)] == [3, 3, 3]
    assert [ConsensusSchedule.increasing().rounds_at(k) for k in range(4)] == [1, 2, 3, 4]
    doubling = ConsensusSchedule.doubling(1, 2)
    assert [doubling.rounds_at(k) for k in range(6)] == [1, 1, 2, 2, 4, 4]
    assert doubling.total_rounds(6) == 14
    assert ConsensusSchedule.doubling(1, 500).label == "1_500_x2"


@pytest.mark.parametrize("factory", [
    lambda: ConsensusSchedule.constant(0),
    lambda: ConsensusSchedule.doubling(0, 5),
    lambda: ConsensusSchedule.doubling(1, 0),
    lambda: ConsensusSchedule(kind="random"),
])
def test_schedule_rejects_invalid(factory):
    with pytest.raises(ScheduleError):
        factory()


def test_method_spec_labels_and_validation():
    assert MethodSpec("near_dgd").display_label == "near_dgd_1"
    assert MethodSpec("near_dgd", ConsensusSchedule.increasing()).display_label == "near_dgd_plus"
    assert MethodSpec("dsgt").display_label == "dsgt"
    assert MethodSpec("dgd", label="baseline").display_label == "baseline"
    with pytest.raises(ScheduleError):
        MethodSpec("extra", ConsensusSchedule.constant(2))
    with pytest.raises(ScheduleError):
        MethodSpec("adam")


def test_init_state_shapes(quad_suite5):
    ms = init_state(MethodSpec("dgd"), quad_suite5, 0.1, y0=np.ones(3))
    assert ms.x.shape == (5, 3)
    assert ms.k == 0 and ms.comm_rounds_total == 0
    central = init_state(MethodSpec("centralized_sgd"), quad_suite5, 0.1)
    assert central.x.shape == (1, 3)
    with pytest.raises(ValueError):
        init_state(MethodSpec("dgd"), quad_suite5, 0.1, y0=np.ones((4, 3)))


# =========================
# single steps
# =========================

def test_near_dgd_single_agent_one_step(single_quadratic):
    oracle = StochasticOracle(single_quadratic, mode="exact")
    cm = averaging_matrix(1)
    ms = near_dgd_step(init_state(MethodSpec("near_dgd"), single_quadratic, 1.0), cm, oracle, single_quadratic)
    np.testing.assert_array_equal(ms.x, [[0.0]])
    np.testing.assert_array_equal(ms.y, [[3.0]])
    assert (ms.k, ms.comm_rounds_total, ms.grad_evals_total) == (1, 1, 1)


def test_near_dgd_hand_evaluated(halves_suite, uniform2):
    oracle = StochasticOracle(halves_suite, mode="exact")
    ms = init_state(MethodSpec("near_dgd"), halves_suite, 0.5, y0=np.array([[0.0], [2.0]]))
    ms = near_dgd_step(ms, uniform2, oracle, halves_suite)
    np.testing.assert_allclose(ms.x, [[1.0], [1.0]])
    np.testing.assert_allclose(ms.y, [[0.5], [0.5]])


def test_step_rejects_wrong_method(quad_suite5, ring5):
    oracle = StochasticOracle(quad_suite5, mode="exact")
    ms = init_state(MethodSpec("dgd"), quad_suite5, 0.1)
    with pytest.raises(ScheduleError):
        near_dgd_step(ms, ring5, oracle, quad_suite5)


def test_dgd_zero_step_is_pure_consensus(quad_suite5, ring5, rng):
    oracle = StochasticOracle(quad_suite5, mode="exact")
    start = rng.normal(size=(5, 3))
    ms = dgd_step(init_state(MethodSpec("dgd"), quad_suite5, 0.0, y0=start), ring5, oracle, quad_suite5)
    np.testing.assert_allclose(ms.x, apply_consensus(ring5, start, 1))
    assert consensus_deviation(ms.x) <= ring5.beta ** 2 * consensus_deviation(start) + 1e-12


def test_dgd_identical_quadratics_match_centralized_gd(ring5):
    suite = make_quadratic_suite(5, 3, seed=2, heterogeneous=False)
    oracle = StochasticOracle(suite, mode="exact")
    dgd = init_state(MethodSpec("dgd"), suite, 0.1)
    gd = init_state(MethodSpec("centralized_sgd"), suite, 0.1)
    for _ in range(50):
        dgd = dgd_step(dgd, ring5, oracle, suite)
        gd = centralized_step(gd, oracle, suite)
        np.testing.assert_allclose(dgd.x, np.tile(gd.x[0], (5, 1)), atol=1e-10)


def test_extra_zero_step_is_stationary_from_consensus(quad_suite5, ring5):
    oracle = StochasticOracle(quad_suite5, mode="exact")
    ms = init_state(MethodSpec("extra"), quad_suite5, 0.0, y0=np.ones(3))
    for _ in range(5):
        ms = extra_step(ms, ring5, oracle, quad_suite5)
    np.testing.assert_allclose(ms.x, np.ones((5, 3)), atol=1e-14)
    assert ms.comm_rounds_total == 5


def test_extra_single_agent_is_gradient_descent(single_quadratic):
    oracle = StochasticOracle(single_quadratic, mode="exact")
    cm = averaging_matrix(1)
    extra = init_state(MethodSpec("extra"), single_quadratic, 0.3)
    gd = init_state(MethodSpec("centralized_sgd"), single_quadratic, 0.3)
    for _ in range(10):
        extra = extra_step(extra, cm, oracle, single_quadratic)
        gd = centralized_step(gd, oracle, single_quadratic)
        np.testing.assert_allclose(extra.x, gd.x, atol=1e-12)


def test_dsgt_tracking_identity_and_counters(quad_suite5, ring5):
    oracle = StochasticOracle(quad_suite5, mode="exact")
    ms = init_state(MethodSpec("dsgt"), quad_suite5, 0.05)
    for k in range(1, 30):
        ms = dsgt_step(ms, ring5, oracle, quad_suite5)
        current = np.vstack([obj.gradient(ms.x[i]) for i, obj in enumerate(quad_suite5.locals)])
        np.testing.assert_allclose(average_blocks(ms.aux["s"]), average_blocks(current), atol=1e-10)
        assert ms.comm_rounds_total == 2 * k
        assert ms.grad_evals_total == 5 * k
        assert ms.init_grad_evals == 5


def test_centralized_minibatch_counts_n_evals(quad_suite5):
    oracle = StochasticOracle(quad_suite5, mode="additive_gaussian", sigma=1.0)
    ms = init_state(MethodSpec("centralized_minibatch"), quad_suite5, 0.1)
    ms = centralized_step(ms, oracle, quad_suite5)
    assert (ms.comm_rounds_total, ms.grad_evals_total) == (0, 5)


def test_centralized_gd_monotone_decrease(quad_suite5):
    oracle = StochasticOracle(quad_suite5, mode="exact")
    alpha = 2.0 / (quad_suite5.mu_bar + quad_suite5.lip_bar)
    ms = init_state(MethodSpec("centralized_sgd"), quad_suite5, alpha)
    err = np.sum((ms.x[0] - quad_suite5.x_star) ** 2)
    for _ in range(30):
        ms = centralized_step(ms, oracle, quad_suite5)
        new_err = np.sum((ms.x[0] - quad_suite5.x_star) ** 2)
        assert new_err <= err + 1e-15
        err = new_err


def test_divergence_is_reported(quad_suite5, ring5):
    oracle = StochasticOracle(quad_suite5, mode="exact")
    with pytest.raises(DivergenceError) as info:
        run(MethodSpec("dgd"), ring5, oracle, quad_suite5, iterations=500, alpha=5.0)
    assert info.value.method == "dgd"
    assert info.value.iteration >= 0


# =========================
# identities along runs
# =========================

def test_average_identities_and_deviation_inequality(quad_suite5, ring5):
    oracle = StochasticOracle(quad_suite5, mode="additive_gaussian", sigma=1.0, seed=5)
    spec = MethodSpec("near_dgd", ConsensusSchedule.doubling(1, 3))
    ms = init_state(spec, quad_suite5, 0.05, y0=np.ones(3))
    for _ in range(25):
        y_prev = ms.y
        t = spec.schedule.rounds_at(ms.k)
        ms = near_dgd_step(ms, ring5, oracle, quad_suite5)
        np.testing.assert_allclose(average_blocks(ms.x), average_blocks(y_prev), atol=1e-12)
        expected = average_blocks(ms.x) - ms.alpha * ms.last_gradient_mean
        np.testing.assert_allclose(average_blocks(ms.y), expected, atol=1e-12)
        assert consensus_deviation(ms.x) <= ring5.beta ** (2 * t) * np.sum(y_prev ** 2) + 1e-10


def test_comm_counter_follows_schedule(quad_suite5, ring5):
    oracle = StochasticOracle(quad_suite5, mode="exact")
    schedule = ConsensusSchedule.doubling(2, 4)
    record = run(MethodSpec("near_dgd", schedule), ring5, oracle, quad_suite5, iterations=13, alpha=0.05)
    assert record.last.comm_total == schedule.total_rounds(13)
    assert record.last.comm_total == sum(2 * 2 ** (k // 4) for k in range(13))
    assert [row.t_k for row in record.rows[1:4]] == [2, 2, 2]


def test_run_zero_iterations_has_initial_row(quad_suite5, ring5):
    oracle = StochasticOracle(quad_suite5, mode="exact")
    record = run(MethodSpec("dgd"), ring5, oracle, quad_suite5, iterations=0, alpha=0.1)
    assert len(record.rows) == 1
    assert record.rows[0].k == 0 and record.rows[0].comm_total == 0


def test_run_is_deterministic(logistic_suite4):
    cm = metropolis_weights(generate_graph("erdos_renyi", 4, seed=1, p_edge=0.7))
    oracle = StochasticOracle(logistic_suite4, mode="minibatch", batch=4)
    a = run(MethodSpec("near_dgd"), cm, oracle, logistic_suite4, 30, 0.5, seed=9)
    b = run(MethodSpec("near_dgd"), cm, oracle, logistic_suite4, 30, 0.5, seed=9)
    assert a.to_csv() == b.to_csv()


def test_common_random_numbers_across_methods(logistic_suite4):
    cm = metropolis_weights(generate_graph("ring", 4))
    logs = {}
    for name in ("near_dgd", "dgd", "extra"):
        oracle = StochasticOracle(logistic_suite4, mode="minibatch", batch=3, seed=17, log_draws=True)
        run(MethodSpec(name), cm, oracle, logistic_suite4, 12, 0.5)
        logs[name] = sorted(oracle.draw_log)
    assert logs["near_dgd"] == logs["dgd"] == logs["extra"]


def test_single_agent_methods_coincide(single_quadratic):
    cm = averaging_matrix(1)
    oracle = StochasticOracle(single_quadratic, mode="additive_gaussian", sigma=0.7)
    records = {
        name: run(MethodSpec(name), cm, oracle, single_quadratic, 40, 0.2, seed=3)
        for name in ("near_dgd", "dgd", "centralized_sgd", "centralized_minibatch", "dsgt")
    }
    reference = records["centralized_sgd"].final_x
    for name in ("near_dgd", "dgd", "centralized_minibatch"):
        assert np.array_equal(records[name].final_y, reference)
    np.testing.assert_allclose(records["dsgt"].final_x, reference, atol=1e-12)


def test_extra_and_dsgt_exact_on_heterogeneous_quadratics():
    suite = make_quadratic_suite(6, 3, mu=1.0, lip=3.0, seed=4)
    cm = metropolis_weights(generate_graph("ring", 6))
    oracle = StochasticOracle(suite, mode="exact")
    for name in ("extra", "dsgt"):
        record = run(MethodSpec(name), cm, oracle, suite, 6000, 0.05)
        assert np.sum((average_blocks(record.final_x) - suite.x_star) ** 2) <= 1e-16


def test_near_dgd_plateau_decreases_with_rounds():
    suite = make_quadratic_suite(6, 3, mu=1.0, lip=3.0, seed=4)
    cm = metropolis_weights(generate_graph("path", 6))
    oracle = StochasticOracle(suite, mode="exact")
    plateaus = [
        run(MethodSpec("near_dgd", ConsensusSchedule.constant(t)), cm, oracle, suite, 1500, 0.1).last.mean_err
        for t in (1, 2, 4)
    ]
    assert plateaus[0] > plateaus[1] > plateaus[2]
