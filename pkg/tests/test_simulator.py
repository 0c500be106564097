import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from articulate.kinematics import dynamics_terms
from articulate.scene import DEG, ObjectModel, RobotModel, SystemState
from articulate.simulator import (
    Contact,
    LowLevelState,
    Plant,
    SimParams,
    TrajectoryWriter,
    contact_force,
    contact_query,
    mechanical_energy_door,
    object_joint_step,
    pi_torque,
    read_trajectory,
    rollout,
    step,
)

ROBOT = RobotModel()
FINGER = RobotModel.free_finger()
OVEN = ObjectModel.oven(handle=(0.7, 0.9, 0.08))
SIM = SimParams()


def closest_distance(p, seg):
    a, b = seg[:2], seg[2:]
    e = b - a
    t = np.clip(np.dot(p - a, e) / np.dot(e, e), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * e)))


def door_point(obj, o, a, offset):
    """World point at arc length a along the panel, offset along the outer normal."""
    origin, d, n = obj.frame(o)
    return origin + a * d + offset * n


def finger_state(p, o, do=0.0):
    return SystemState(np.array([p[0], p[1], 0.0]), o, np.zeros(3), do)


# the PI loop trails a reference by about F/ki; a stiff integral gain keeps a scripted
# push within a few millimetres of its reference
PUSHER = dataclasses.replace(FINGER, kd=(400.0, 400.0, 20.0), ki=(40000.0, 40000.0, 200.0))


def push_setup(o0=30 * DEG, a=0.45, speed=0.1):
    """Finger just off the inner face near the tip, reference along the opening direction."""
    obj = ObjectModel.oven()
    _, _, n = obj.frame(o0)
    start = finger_state(door_point(obj, o0, a, -(FINGER.finger_radius + 0.002)), o0)
    return obj, start, np.array([speed * n[0], speed * n[1], 0.0])


def golden_push(duration=1.0):
    obj, state, u = push_setup()
    plant = Plant(PUSHER, obj, SIM)
    state.dq[:] = u
    plant.advance(state, u, LowLevelState.initial(PUSHER, u), round(duration / SIM.dt))
    return plant, state


# -- contact geometry and force law ----------------------------------------------------------


@given(st.floats(-0.7, 0.7), st.floats(0.6, 1.5), st.floats(0.0, 90.0))
def test_contact_query_matches_independent_projection(x, z, o_deg):
    o = o_deg * DEG
    p = np.array([x, z])
    r = FINGER.finger_radius
    depth = max(r - closest_distance(p, s) for s in OVEN.segments(o))
    c = contact_query(p, r, OVEN, o)
    if depth <= 1e-12:
        assert c is None or c.penetration <= 1e-12
    else:
        assert c is not None
        assert c.penetration == pytest.approx(depth, abs=1e-9)
        assert np.linalg.norm(c.normal) == pytest.approx(1.0)


def test_contact_on_closed_door_outer_face():
    p = door_point(OVEN, 0.0, 0.2, 0.029)
    c = contact_query(p, 0.03, OVEN, 0.0)
    assert c.movable
    assert c.penetration == pytest.approx(0.001)
    # the door pushes the finger outward along the outer normal (-x when closed)
    assert np.allclose(c.normal, [-1.0, 0.0])


def test_force_examples():
    n = np.array([1.0, 0.0])
    at_rest = Contact(np.zeros(2), n, 0.001, np.zeros(2))
    assert np.allclose(contact_force(at_rest), [50.0, 0.0])
    separating = dataclasses.replace(at_rest, rel_velocity=np.array([1.0, 0.0]))
    assert np.allclose(contact_force(separating), 0.0)
    sliding = dataclasses.replace(at_rest, rel_velocity=np.array([0.0, 0.5]))
    assert contact_force(sliding, SimParams(surface_friction=0.0))[1] == 0.0
    f = contact_force(sliding, SimParams(surface_friction=0.5))
    assert f[1] == pytest.approx(-0.5 * f[0])


@given(st.floats(0.0, 0.01), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_force_never_pulls(depth, vx, vz, mu):
    c = Contact(np.zeros(2), np.array([0.6, 0.8]), depth, np.array([vx, vz]))
    f = contact_force(c, SimParams(surface_friction=mu))
    assert f @ c.normal >= -1e-12
    tangential = abs(f[0] * 0.8 - f[1] * 0.6)
    assert tangential <= mu * (f @ c.normal) + 1e-9


# -- object joint -----------------------------------------------------------------------------


def test_joint_holds_below_breakaway_torque():
    o, do = 0.5, 0.0
    for _ in range(200):
        o, do = object_joint_step(OVEN, o, do, 20.0, SIM.dt)
    assert abs(do) < 0.01
    assert abs(o - 0.5) < 0.005


def test_joint_reaches_viscous_steady_state():
    o, do = 0.1, 0.0
    for _ in range(150):
        o, do = object_joint_step(OVEN, o, do, 100.0, SIM.dt)
    b, f = OVEN.joint_damping, OVEN.joint_coulomb_friction
    assert do == pytest.approx((100.0 - f) / b, rel=1e-3)


@pytest.mark.parametrize("o,tau", [(90 * DEG, 500.0), (0.0, -500.0)])
def test_joint_clamps_at_limits(o, tau):
    o1, v1 = object_joint_step(OVEN, o, 0.0, tau, SIM.dt)
    assert (o1, v1) == (o, 0.0)


@given(st.floats(0, 90), st.floats(-5, 5), st.floats(-1000, 1000))
def test_joint_stays_in_range(o_deg, do, tau):
    o1, _ = object_joint_step(OVEN, o_deg * DEG, do, tau, SIM.dt)
    assert 0.0 <= o1 <= OVEN.o_max


# -- low-level control --------------------------------------------------------------------------


def test_pi_torque_under_perfect_tracking():
    q = np.array([-1.2, 0.4, -0.3, 0.5])
    u = np.array([0.1, -0.2, 0.3, 0.0])
    ll = LowLevelState.initial(ROBOT, u)
    tau, new = pi_torque(ROBOT, q, u, u, ll, SIM.dt)
    d = dynamics_terms(ROBOT, q, u)
    assert np.allclose(tau, d.C @ u + d.g)
    assert np.allclose(new.integral_error, 0.0)


@given(st.floats(1.0, 500.0), st.floats(1.0, 500.0))
def test_pi_torque_linear_in_kd(k1, k2):
    q = np.array([-1.2, 0.4, -0.3, 0.5])
    dq = np.array([0.3, 0.1, -0.2, 0.4])
    u = np.zeros(4)
    ll1 = LowLevelState.initial(ROBOT)
    ll2 = ll1.copy()
    ll1.kd[:], ll2.kd[:] = k1, k2
    t1, _ = pi_torque(ROBOT, q, dq, u, ll1, SIM.dt)
    t2, _ = pi_torque(ROBOT, q, dq, u, ll2, SIM.dt)
    assert np.allclose(t1 - t2, -(k1 - k2) * (dq - u))


def test_pi_gains_must_be_positive():
    with pytest.raises(ValueError):
        LowLevelState(np.zeros(4), np.zeros(4), np.ones(4), np.zeros(4))


def test_velocity_tracking():
    state = SystemState(np.array([-2.0, 0.8, -0.6, 0.2]), 0.0, np.zeros(4))
    u = np.array([0.1, 0.2, -0.15, 0.1])
    plant, ll = Plant(ROBOT, OVEN), LowLevelState.initial(ROBOT)
    plant.advance(state, u, ll, round(2.0 / SIM.dt))
    assert np.max(np.abs(state.dq - u)) < 1e-3


def test_equilibrium_without_contact():
    start = SystemState(ROBOT.observation_config(-2.5), 0.3, np.zeros(4))
    state = start.copy()
    Plant(ROBOT, OVEN).advance(state, np.zeros(4), LowLevelState.initial(ROBOT), 700)
    assert np.max(np.abs(state.q - start.q)) < 1e-3
    assert state.o == start.o


def test_step_does_not_mutate_inputs():
    s0 = SystemState(ROBOT.observation_config(-2.5), 0.3, np.zeros(4))
    s1, _, _ = step(ROBOT, OVEN, s0, np.full(4, 0.1))
    assert s0.t == 0.0 and np.all(s0.dq == 0.0)
    assert s1.t == pytest.approx(SIM.dt)


# -- contact dynamics -------------------------------------------------------------------------------


def test_push_opens_door_with_bounded_penetration():
    plant, state = golden_push()
    assert state.o > 35 * DEG
    assert plant.max_penetration <= 0.005


def test_plant_is_bit_identical_on_repeat():
    a, b = golden_push(0.5), golden_push(0.5)
    assert np.array_equal(a[1].q, b[1].q) and a[1].o == b[1].o
    assert a[0].max_penetration == b[0].max_penetration


def test_action_reaction():
    obj = ObjectModel.oven()
    o = 30 * DEG
    p = door_point(obj, o, 0.4, -0.028)
    state = finger_state(p, o)
    rec = Plant(FINGER, obj).advance(state, np.zeros(3), LowLevelState.initial(FINGER), 1)
    c = contact_query(p, FINGER.finger_radius, obj, o)
    assert rec.contact
    assert rec.object_impulse == pytest.approx(-(rec.finger_impulse @ c.point_jacobian), rel=1e-9)
    assert rec.object_impulse > 0  # inner-face push acts in the opening direction


def test_passive_contact_does_not_create_energy():
    # the semi-implicit contact update conserves a shadow energy, so compare the door
    # before and after a full bounce against a pinned finger
    obj = ObjectModel.oven(joint_damping=0.0, joint_coulomb_friction=0.0)
    sim = SimParams(contact_damping=0.0, surface_friction=0.0)
    o = 30 * DEG
    p = door_point(obj, o, 0.45, FINGER.finger_radius + 0.002)
    pinned = dataclasses.replace(
        FINGER, joint_limits=((p[0] - 1e-9, p[0]), (p[1] - 1e-9, p[1]), (-1e-9, 0.0)))
    plant, ll = Plant(pinned, obj, sim), LowLevelState.initial(pinned)
    # the error at the contact kink grows like k (v h)^2, hence moderate door speeds
    for do in (0.1, 0.2, 0.3):
        state = finger_state(p, o, do=do)
        e0 = mechanical_energy_door(obj, state.do, 0.0, sim.contact_stiffness)
        touched = False
        for _ in range(2000):
            contact = plant.advance(state, np.zeros(3), ll, 1).contact
            if touched and not contact:
                break
            touched |= contact
        e1 = mechanical_energy_door(obj, state.do, 0.0, sim.contact_stiffness)
        assert state.do < 0
        assert e1 <= e0 + 1e-3


@settings(max_examples=15)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=5, max_size=5))
def test_door_angle_stays_in_range(pushes):
    state = finger_state(door_point(OVEN, 20 * DEG, 0.3, -0.05), 20 * DEG)
    plant, ll = Plant(FINGER, OVEN), LowLevelState.initial(FINGER)
    for vx, vz in pushes:
        plant.advance(state, np.array([vx, vz, 0.0]), ll, 100)
        assert 0.0 <= state.o <= OVEN.o_max


# -- coarse rollouts ----------------------------------------------------------------------------------


def test_rollout_is_static_under_zero_controls():
    state = SystemState(ROBOT.observation_config(-2.0), 0.4, np.zeros(4))
    tr = rollout(ROBOT, OVEN, state, np.zeros((50, 4)))
    assert np.allclose(tr.q, state.q) and np.allclose(tr.o, 0.4)
    assert np.allclose(np.diff(tr.t), SIM.rollout_dt)


def test_rollout_is_deterministic(rng):
    state = SystemState(ROBOT.observation_config(-1.5), 0.4, np.zeros(4))
    u = rng.uniform(-0.5, 0.5, (50, 4))
    a, b = rollout(ROBOT, OVEN, state, u), rollout(ROBOT, OVEN, state, u)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.o, b.o)


def test_rollout_rejects_bad_shape():
    state = SystemState(ROBOT.observation_config(-1.5), 0.0, np.zeros(4))
    with pytest.raises(ValueError):
        rollout(ROBOT, OVEN, state, np.zeros((10, 3)))


def test_rollout_agrees_with_plant_on_a_push():
    _, end = golden_push(duration=2.0)
    obj, start, u = push_setup()
    tr = rollout(PUSHER, obj, start, np.tile(u, (100, 1)))
    assert tr.o[-1] - start.o == pytest.approx(end.o - start.o, rel=0.1)


def test_trajectory_roundtrip(tmp_path):
    path = tmp_path / "traj.jsonl"
    s = SystemState(np.array([0.1, 0.2, 0.3]), 0.4, np.zeros(3), t=1.25)
    with open(path, "w") as fh:
        w = TrajectoryWriter(fh)
        w.write(s, [0.0, 1.0, 0.0], True, (3.0, 4.0), phase="interact")
    (rec,) = read_trajectory(path)
    assert rec == {"t": 1.25, "q": [0.1, 0.2, 0.3], "o": 0.4, "u": [0.0, 1.0, 0.0],
                   "contact": True, "force": [3.0, 4.0], "phase": "interact"}


def test_trajectory_requires_schema(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"t": 0}\n')
    with pytest.raises(ValueError):
        read_trajectory(path)
