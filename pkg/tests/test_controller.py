import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from articulate.controller import (
    ControlPlan,
    ControllerConfig,
    MPPIController,
    cost_arm_reach,
    cost_collision,
    cost_joint_limit,
    cost_object,
    cost_pose_reach,
    mppi_step,
    mppi_update,
    softmax_weights,
    stage_cost,
    target_to_local,
    target_to_world,
)
from articulate.kinematics import Pose2, forward_kinematics
from articulate.scene import ObjectModel, RobotModel, SystemState, Task
from articulate.simulator import SimParams, SimulationError, rollout

ROBOT = RobotModel()
FINGER = RobotModel.free_finger()
OVEN = ObjectModel.oven(handle=(0.7, 0.9, 0.08))
CFG = ControllerConfig()
SIM = SimParams()


# -- cost terms ---------------------------------------------------------------------------------


def test_object_cost_examples():
    assert cost_object(0.3, 0.3, 50.0) == 0.0
    assert cost_object(0.0, math.pi / 2, 1.0) == pytest.approx(2.4674, abs=1e-4)
    assert cost_object(0.1, 0.5, 2.0) == pytest.approx(2 * cost_object(0.1, 0.5, 1.0))


def test_pose_cost_examples():
    t = Pose2(0.2, 1.0, 0.5)
    assert cost_pose_reach(t, t, CFG.W_t) == 0.0
    assert cost_pose_reach(Pose2(0.21, 1.0, 0.5), t, CFG.W_t) == pytest.approx(1e-3)
    assert cost_pose_reach(Pose2(0, 0, math.pi), Pose2(0, 0, 0), CFG.W_t) == pytest.approx(
        cost_pose_reach(Pose2(0, 0, -math.pi), Pose2(0, 0, 0), CFG.W_t))


def test_collision_cost_examples():
    free = ROBOT.observation_config(-2.5)
    assert cost_collision(ROBOT, free, OVEN, 0.0, 1000.0) == 0.0
    assert cost_collision(ROBOT, np.array([-0.6, 0.6, 0.0, 0.0]), OVEN, 0.0, 1000.0) == 1000.0


def test_joint_limit_cost_examples():
    lo, hi = ROBOT.lower, ROBOT.upper
    assert cost_joint_limit(0.5 * (lo + hi), lo, hi, 100.0, 10.0) == 0.0
    q = 0.5 * (lo + hi)
    q[2] = hi[2] + 0.1
    assert cost_joint_limit(q, lo, hi, 100.0, 10.0) == pytest.approx(100.1)
    q[2] = hi[2]
    assert cost_joint_limit(q, lo, hi, 100.0, 10.0) == 0.0


SHORT = RobotModel(r_max=0.9)


def _arm_with_reach(r):
    # elbow angle giving shoulder-to-finger distance r with a straight wrist
    l1, l2, l3 = SHORT.link_lengths
    c = (r**2 - l1**2 - (l2 + l3) ** 2) / (2 * l1 * (l2 + l3))
    return np.array([-2.0, 0.0, math.acos(c), 0.0])


def test_arm_reach_cost_examples():
    assert cost_arm_reach(SHORT, _arm_with_reach(0.85), 100.0, 50.0) == 0.0
    assert cost_arm_reach(SHORT, _arm_with_reach(1.0), 100.0, 50.0) == pytest.approx(105.0)
    assert cost_arm_reach(SHORT, _arm_with_reach(0.9 + 1e-9), 100.0, 50.0) == pytest.approx(100.0)
    assert cost_arm_reach(FINGER, np.zeros(3), 100.0, 50.0) == 0.0


def test_stage_cost_composition():
    q = ROBOT.observation_config(-2.5)
    ee = forward_kinematics(ROBOT, q)[0]
    state = SystemState(q, 0.4, np.zeros(4))
    assert stage_cost(ROBOT, state, OVEN, ee, Task(0.0, 0.4), CFG, mode=1) == 0.0
    assert stage_cost(ROBOT, state, OVEN, ee, Task(0.0, 0.4), CFG, mode=2) == 0.0

    bad = SystemState(np.array([-0.6, 0.6, 0.0, 0.0]), 0.0, np.zeros(4))
    target, task = Pose2(-0.3, 1.0, 0.2), Task(0.0, 0.8)
    m1 = stage_cost(ROBOT, bad, OVEN, target, task, CFG, mode=1)
    m2 = stage_cost(ROBOT, bad, OVEN, target, task, CFG, mode=2)
    assert m1 - m2 == pytest.approx(CFG.w_c - cost_object(0.0, 0.8, CFG.W_o))


def test_fused_rollout_cost_matches_step_by_step(rng):
    o = 0.5
    state = SystemState(np.array([-1.0, 0.9, -0.4, -0.6]), o, np.zeros(4), 0.0)
    target = Pose2(-0.3, 1.1, 0.3)
    local = target_to_local(OVEN, o, target)
    ctl = MPPIController(ROBOT, OVEN, CFG)
    samples = ctl.sample(rng)
    task = Task(0.0, 1.2)
    for mode in (1, 2):
        fused = ctl.evaluate(state, samples, task.o_star, local, mode)
        for k in range(0, CFG.K, 8):
            tr = rollout(ROBOT, OVEN, state, samples[k])
            ref = sum(stage_cost(ROBOT, s, OVEN, target_to_world(OVEN, s.o, local), task, CFG, mode)
                      for s in tr.states())
            assert fused[k] == pytest.approx(ref, rel=1e-9, abs=1e-9)


@given(st.floats(0, 1.5), st.floats(-1, 0.3), st.floats(0.5, 1.5), st.floats(-3, 3))
def test_local_target_roundtrip(o, x, z, phi):
    pose = Pose2(x, z, phi)
    back = target_to_world(OVEN, o, target_to_local(OVEN, o, pose))
    pos, ang = back.error_to(pose)
    assert pos < 1e-12 and ang < 1e-12


# -- weights and update -------------------------------------------------------------------------------


def test_softmax_shift_invariance_is_bit_stable(rng):
    # dyadic costs keep S - min S exact under the shift
    costs = rng.integers(0, 400, 64) / 8.0
    samples = rng.standard_normal((64, 50, 4))
    vmax = ROBOT.vmax
    a, _ = mppi_update(np.zeros((50, 4)), samples, costs, 1.0, vmax)
    b, _ = mppi_update(np.zeros((50, 4)), samples, costs + 1000.0, 1.0, vmax)
    assert np.array_equal(a, b)


def test_tiny_lambda_selects_elite(rng):
    costs = rng.uniform(0, 10, 64)
    samples = rng.uniform(-0.4, 0.4, (64, 50, 4))
    plan, w = mppi_update(np.zeros((50, 4)), samples, costs, 1e-9, ROBOT.vmax)
    assert np.allclose(plan, samples[np.argmin(costs)])
    assert w.max() == pytest.approx(1.0)


def test_softmax_ignores_non_finite():
    w = softmax_weights([1.0, np.inf, np.nan, 1.0], 1.0)
    assert np.allclose(w, [0.5, 0, 0, 0.5])
    with pytest.raises(SimulationError):
        softmax_weights([np.nan, np.inf], 1.0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=16), st.floats(1e-3, 1e3))
def test_weights_form_a_distribution(costs, lam):
    w = softmax_weights(costs, lam)
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
    assert w[int(np.argmin(costs))] == w.max()


@given(st.integers(0, 2**32 - 1))
def test_returned_controls_obey_limits(seed):
    rng = np.random.default_rng(seed)
    cfg = ControllerConfig(sigma_base=5.0, sigma_joint=5.0)
    ctl = MPPIController(ROBOT, OVEN, cfg)
    state = SystemState(ROBOT.observation_config(-2.0), 0.2, np.zeros(4))
    u = ctl.step(state, 0.0, target_to_local(OVEN, 0.2, Pose2(-0.4, 1.0, 0.0)), rng)
    assert np.all(np.abs(u) <= ROBOT.vmax)
    assert np.all(np.abs(ctl.plan.nominal) <= ROBOT.vmax)


def test_identical_costs_average_to_nominal():
    ctl = MPPIController(ROBOT, OVEN, CFG)
    bound = 3 * ctl.sigma / math.sqrt(CFG.K)
    inside, total, mean = 0, 0, 0.0
    for seed in range(100):
        samples = ctl.sample(np.random.default_rng(seed))
        plan, _ = mppi_update(ctl.plan.nominal, samples, np.zeros(CFG.K), CFG.lam, ctl.vmax)
        dev = plan - ctl.plan.nominal
        inside += np.sum(np.abs(dev) <= bound)
        total += dev.size
        mean += dev.mean() / 100
    # a per-entry 3-sigma band holds for about 99.7% of entries
    assert inside / total >= 0.99
    assert abs(mean) < 0.01


def test_config_validation():
    for bad in (dict(K=1), dict(lam=0.0), dict(mode=3), dict(W_o=-1.0)):
        with pytest.raises(ValueError):
            ControllerConfig(**bad)
    with pytest.raises(ValueError):
        ControllerConfig(horizon=1.01).n_steps(0.02)


# -- closed-loop behaviour ---------------------------------------------------------------------------


def toy_run(seed, seconds=3.0, record_descent=False):
    """Free finger as a pure integrator far from the object, tracking a fixed pose."""
    obj = ObjectModel.oven()
    ctl = MPPIController(FINGER, obj, CFG)
    state = SystemState(np.array([-2.5, 1.0, 0.0]), 0.0, np.zeros(3))
    target = Pose2(-2.2, 1.2, 0.4)
    local = target_to_local(obj, 0.0, target)
    rng = np.random.default_rng(seed)
    dt = 1.0 / CFG.replan_rate
    errors, descents = [], []
    for _ in range(round(seconds / dt)):
        if record_descent:
            samples = ctl.sample(rng)
            costs = ctl.evaluate(state, samples, 0.0, local, 1)
            plan, _ = mppi_update(ctl.plan.nominal, samples, costs, CFG.lam, ctl.vmax)
            prev = ctl.evaluate(state, ctl.plan.nominal[None], 0.0, local, 1)[0]
            descents.append(ctl.evaluate(state, plan[None], 0.0, local, 1)[0] <= prev)
            ctl.plan = ControlPlan(np.vstack([plan[1:], plan[-1:]]))
            u = plan[0]
        else:
            u = ctl.step(state, 0.0, local, rng)
        state.q = state.q + dt * u
        state.t += dt
        errors.append(math.hypot(state.q[0] - target.x, state.q[1] - target.z))
    return errors, descents


def test_toy_integrator_converges():
    errors, _ = toy_run(0)
    assert errors[-1] < 0.02


def test_descent_tendency():
    _, descents = toy_run(1, seconds=1.0, record_descent=True)
    assert np.mean(descents) >= 0.9


def test_mppi_step_is_deterministic_and_pure():
    state = SystemState(ROBOT.observation_config(-2.0), 0.3, np.zeros(4))
    local = target_to_local(OVEN, 0.3, Pose2(-0.5, 1.0, 0.0))
    plan = ControlPlan.zeros(CFG.n_steps(SIM.rollout_dt), 4)
    a = mppi_step(state, plan, CFG, SIM, np.random.default_rng(3), ROBOT, OVEN, 0.0, local)
    b = mppi_step(state, plan, CFG, SIM, np.random.default_rng(3), ROBOT, OVEN, 0.0, local)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1].nominal, b[1].nominal)
    assert np.all(plan.nominal == 0.0)
