"""Acceptance suite: one PASS/FAIL line per criterion.

Criteria 5 to 8 read the experiment outputs under ``results/`` (override with
ARTICULATE_RESULTS); run the CLI pipeline first to produce them.
"""
import dataclasses
import json
import os
import shutil
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from articulate.affordance import KernelEstimator, MLPNet, reward_J
from articulate.bench.metrics import (
    TrialResult,
    sample_reach_rate,
    sample_success_rate,
    task_success_rate,
)
from articulate.bench.store import read_summary
from articulate.controller import ControllerConfig, MPPIController, mppi_update, target_to_local
from articulate.kinematics import Pose2, dynamics_terms, jacobian
from articulate.scene import DEG, ObjectModel, RobotModel, SystemState
from articulate.simulator import LowLevelState, Plant, SimParams, mechanical_energy_door

from test_affordance import auc, synthetic
from test_controller import toy_run
from test_kinematics import _passive_rhs, fd_jacobian, mass_matrix_dot, total_energy
from test_simulator import FINGER, door_point, finger_state, golden_push

RESULTS = Path(os.environ.get("ARTICULATE_RESULTS", Path(__file__).parents[1] / "results"))
ROBOT = RobotModel()


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def summary(*parts):
    path = RESULTS.joinpath(*parts)
    if not path.exists():
        pytest.fail(f"missing {path}; run the experiment pipeline first")
    return read_summary(path)


def random_configs(rng, n):
    return [ROBOT.lower + rng.random(4) * (ROBOT.upper - ROBOT.lower) for _ in range(n)]


# -- 1 to 4: component suites -------------------------------------------------------------------


def test_criterion_1_kinematics(report):
    t0 = time.time()
    rng = np.random.default_rng(1)
    qs = random_configs(rng, 200)
    jac = max(np.max(np.abs(jacobian(ROBOT, q) - fd_jacobian(ROBOT, q))) for q in qs)
    sym, skew, min_eig = 0.0, 0.0, np.inf
    for q in qs[:50]:
        dq = rng.uniform(-1.5, 1.5, 4)
        M = dynamics_terms(ROBOT, q, dq).M
        sym = max(sym, np.max(np.abs(M - M.T)))
        min_eig = min(min_eig, np.linalg.eigvalsh(M).min())
        S = mass_matrix_dot(q, dq) - 2 * dynamics_terms(ROBOT, q, dq).C
        skew = max(skew, np.max(np.abs(S + S.T)))
    drift = 0.0
    for q0 in ([-1.0, 0.3, -0.4, 0.2], [-2.0, 1.2, 0.8, -1.0]):
        x = np.concatenate([q0, [0.3, 0.0, 0.5, -0.5]])
        e0, h = total_energy(x), 1e-3
        for _ in range(5000):
            k1 = _passive_rhs(x)
            k2 = _passive_rhs(x + 0.5 * h * k1)
            k3 = _passive_rhs(x + 0.5 * h * k2)
            k4 = _passive_rhs(x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            drift = max(drift, abs(total_energy(x) - e0))
    dt = time.time() - t0
    ok = jac <= 1e-5 and sym <= 1e-12 and min_eig > 0 and skew <= 1e-6 and drift <= 1e-3 and dt < 60
    report(1, ok, f"jacobian err {jac:.1e}, min eig(M) {min_eig:.2e}, skew {skew:.1e}, "
                  f"energy drift {drift:.1e} J, {dt:.0f}s")


def test_criterion_2_simulator(report):
    t0 = time.time()
    a, b = golden_push(1.0), golden_push(1.0)
    identical = np.array_equal(a[1].q, b[1].q) and a[1].o == b[1].o
    plant, state = a
    penetration, opened = plant.max_penetration, state.o

    rng = np.random.default_rng(2)
    oven = ObjectModel.oven(handle=(0.7, 0.9, 0.08))
    in_range = True
    for _ in range(10):
        s = finger_state(door_point(oven, 20 * DEG, 0.3, -0.05), 20 * DEG)
        p, ll = Plant(FINGER, oven), LowLevelState.initial(FINGER)
        for v in rng.uniform(-1, 1, (5, 2)):
            p.advance(s, np.array([v[0], v[1], 0.0]), ll, 100)
            in_range &= 0.0 <= s.o <= oven.o_max

    # frictionless elastic door bouncing off a pinned finger
    obj = ObjectModel.oven(joint_damping=0.0, joint_coulomb_friction=0.0)
    sim = SimParams(contact_damping=0.0, surface_friction=0.0)
    o = 30 * DEG
    pt = door_point(obj, o, 0.45, FINGER.finger_radius + 0.002)
    pinned = dataclasses.replace(
        FINGER, joint_limits=((pt[0] - 1e-9, pt[0]), (pt[1] - 1e-9, pt[1]), (-1e-9, 0.0)))
    gain = -np.inf
    for do in (0.1, 0.2, 0.3):
        p, ll = Plant(pinned, obj, sim), LowLevelState.initial(pinned)
        s = finger_state(pt, o, do=do)
        e0 = mechanical_energy_door(obj, s.do, 0.0, sim.contact_stiffness)
        touched = False
        for _ in range(2000):
            contact = p.advance(s, np.zeros(3), ll, 1).contact
            if touched and not contact:
                break
            touched |= contact
        gain = max(gain, mechanical_energy_door(obj, s.do, 0.0, sim.contact_stiffness) - e0)

    s = SystemState(np.array([-2.0, 0.8, -0.6, 0.2]), 0.0, np.zeros(4))
    u = np.array([0.1, 0.2, -0.15, 0.1])
    Plant(ROBOT, oven).advance(s, u, LowLevelState.initial(ROBOT), round(2.0 / SimParams().dt))
    track = np.max(np.abs(s.dq - u))
    dt = time.time() - t0
    ok = (identical and in_range and penetration <= 0.005 and opened > 30 * DEG
          and gain <= 1e-3 and track < 1e-3 and dt < 120)
    report(2, ok, f"bit-identical {identical}, o in range {in_range}, golden penetration "
                  f"{penetration * 1e3:.2f} mm, bounce energy gain {gain:.1e} J, "
                  f"tracking err {track:.1e}, {dt:.0f}s")


def test_criterion_3_controller(report):
    t0 = time.time()
    final = toy_run(0)[0][-1]
    rng = np.random.default_rng(3)
    costs = rng.integers(0, 400, 64) / 8.0
    samples = rng.standard_normal((64, 50, 4))
    x, _ = mppi_update(np.zeros((50, 4)), samples, costs, 1.0, ROBOT.vmax)
    y, _ = mppi_update(np.zeros((50, 4)), samples, costs + 1000.0, 1.0, ROBOT.vmax)
    shift = np.array_equal(x, y)
    c = rng.uniform(0, 10, 64)
    s = rng.uniform(-0.4, 0.4, (64, 50, 4))
    elite = np.allclose(mppi_update(np.zeros((50, 4)), s, c, 1e-9, ROBOT.vmax)[0], s[np.argmin(c)])
    oven = ObjectModel.oven(handle=(0.7, 0.9, 0.08))
    clamp = True
    cfg = ControllerConfig(sigma_base=5.0, sigma_joint=5.0)
    for seed in range(30):
        ctl = MPPIController(ROBOT, oven, cfg)
        st = SystemState(ROBOT.observation_config(-2.0), 0.2, np.zeros(4))
        u = ctl.step(st, 0.0, target_to_local(oven, 0.2, Pose2(-0.4, 1.0, 0.0)),
                     np.random.default_rng(seed))
        clamp &= bool(np.all(np.abs(u) <= ROBOT.vmax) and np.all(np.abs(ctl.plan.nominal) <= ROBOT.vmax))
    dt = time.time() - t0
    ok = final < 0.02 and shift and elite and clamp and dt < 120
    report(3, ok, f"toy pose error after 3 s {final:.4f}, shift-invariant {shift}, "
                  f"elite limit {elite}, limits hold {clamp}, {dt:.0f}s")


def _mlp_grad_error(rng):
    worst = 0.0
    net = MLPNet(hidden=16, z_dim=10, rng=rng)
    X = rng.standard_normal((12, 8))
    rel = rng.uniform(-1, 1, 12)
    J = (rng.random(12) > 0.5).astype(float)
    J[0] = 1.0
    Z = rng.standard_normal((12, 10))
    target = rng.uniform(0.2, 0.8, 12)
    h = 1e-5
    for term in ("A", "Q", "S"):
        _, grad = net.loss_and_grad(X, rel, J, Z, target, terms=(term,))
        for k in rng.choice(net.theta.size, 60, replace=False):
            theta = net.theta.copy()
            net.theta[k] += h
            up = net.loss_and_grad(X, rel, J, Z, target, terms=(term,))[0]
            net.theta[k] -= 2 * h
            down = net.loss_and_grad(X, rel, J, Z, target, terms=(term,))[0]
            net.theta[...] = theta
            num = (up - down) / (2 * h)
            worst = max(worst, abs(grad[k] - num) / max(abs(num), 1e-3))
    return worst


def test_criterion_4_affordance(report):
    t0 = time.time()
    rng = np.random.default_rng(4)
    grad = _mlp_grad_error(rng)
    F, rel, J = synthetic(rng, 400)
    est = KernelEstimator.fit(F, rel, J, rng)
    Ft, relt, Jt = synthetic(np.random.default_rng(41), 200)
    score = auc(est.affordance(Ft, relt), Jt)
    F, rel, J = synthetic(rng, 150, rule=lambda F, rel: (F[:, 0] > 0.5) & (rel > 0))
    est = KernelEstimator.fit(F, rel, J, rng)
    Fq, _, _ = synthetic(np.random.default_rng(42), 20)
    mc = np.max(np.abs(est.actionability(Fq, np.random.default_rng(43), 100)
                       - est.actionability(Fq, np.random.default_rng(44), 1000)))
    theta = 5 * DEG
    boundary = (reward_J(0.0, theta, 90 * DEG) == 0
                and reward_J(0.0, theta + 1e-9, 90 * DEG) == 1
                and reward_J(0.0, 0.25, 1.0, 0.25) == 0
                and reward_J(0.0, 0.25 + 2**-30, 1.0, 0.25) == 1
                and reward_J(90 * DEG, 84 * DEG, 0.0) == 1
                and reward_J(10 * DEG, 0.0, 90 * DEG) == 0)
    dt = time.time() - t0
    ok = grad <= 1e-4 and score > 0.9 and mc <= 0.03 and boundary and dt < 180
    report(4, ok, f"MLP gradient rel err {grad:.1e}, kernel AUC {score:.3f}, "
                  f"alpha MC gap {mc:.3f}, reward boundary exact {boundary}, {dt:.0f}s")


# -- 5 to 7: experiments ------------------------------------------------------------------------


def _trials(path):
    lines = [json.loads(x) for x in Path(path).read_text().splitlines() if x.strip()]
    return lines[0]["meta"], [TrialResult.from_record(r) for r in lines[1:]]


def test_criterion_5_sample_evaluation(report):
    s = summary("eval_samples", "summary-seed0.json")
    res = s["results"]
    rate = lambda t, v, k: res[t][v][k]
    lines, ok = [], s["trials"] >= 500
    for task in ("open", "close"):
        a, r = rate(task, "agent_aware", "sample_success_rate"), rate(task, "random", "sample_success_rate")
        ok &= a >= 2 * r
        lines.append(f"{task} agent-aware {a:.3f} vs random {r:.3f}")
    ag = rate("close", "agent_aware", "sample_reach_rate")
    ee = rate("close", "ee_aware", "sample_reach_rate")
    filt = rate("close", "ee_aware+ik+collision", "sample_reach_rate")
    ok &= ag > ee and filt > ee
    lines.append(f"close reach agent-aware {ag:.3f}, ee-aware {ee:.3f}, ee+ik+collision {filt:.3f}")
    n_ds = [read_summary(RESULTS / "datasets" / f"{t}-{m}-seed0.summary.json")["n"]
            for t in ("open", "close") for m in ("full", "disembodied")]
    ok &= min(n_ds) >= 2000
    report(5, ok, "; ".join(lines) + f"; n={s['trials']}, episodes={min(n_ds)}")


def test_criterion_6_task_evaluation(report):
    s = summary("eval_tasks", "summary-seed0.json")
    close = s["results"]["close"]
    c, f = close["closed_loop"]["task_success_rate"], close["fixed_pose"]["task_success_rate"]
    multi = close["closed_loop"]["multi_interaction_fraction"]
    ok = s["trials"] >= 200 and c >= f and multi >= 0.10
    report(6, ok, f"close closed-loop {c:.3f} vs fixed-pose {f:.3f}, "
                  f"closed-loop trials with >1 interaction {multi:.2f}, n={s['trials']}")


def test_criterion_7_seed_sensitivity(report):
    s = summary("sensitivity", "summary.json")
    rates = {k: v["sample_success_rate"] for k, v in s["per_seed"].items()}
    digests = {v["dataset_digest"] for v in s["per_seed"].values()}
    spread = s["agent_aware"]["spread"]
    ok = len(rates) >= 3 and len(digests) == len(rates) and spread <= 0.10
    report(7, ok, f"agent-aware rates {rates}, spread {100 * spread:.1f} pp")


# -- 8, 9: bookkeeping --------------------------------------------------------------------------


def _recount(path):
    """Ratios from raw lines, without the package's result types."""
    rows = [json.loads(x) for x in Path(path).read_text().splitlines()[1:] if x.strip()]
    n = len(rows)
    return (sum(1 for r in rows if r["success"]) / n, sum(1 for r in rows if r["reached"]) / n, n)


def test_criterion_8_metrics_recount(report):
    files = sorted(RESULTS.glob("eval_samples/*.jsonl")) + sorted(RESULTS.glob("eval_tasks/*.jsonl"))
    if not files:
        pytest.fail(f"no trial files under {RESULTS}")
    mismatches = []
    blocks = {}
    for p in RESULTS.glob("eval_*/summary-seed*.json"):
        s = read_summary(p)
        for task, per_variant in s["results"].items():
            for variant, b in per_variant.items():
                blocks[(p.parent.name, task, variant, s["seed"])] = b
    for p in RESULTS.glob("sensitivity/summary.json"):
        s = read_summary(p)
        for seed, b in s["per_seed"].items():
            blocks[("eval_samples", s["task"], "agent_aware", int(seed))] = b
    checked = 0
    for path in files:
        meta, results = _trials(path)
        succ, reach, n = _recount(path)
        ok = sample_success_rate(results) == succ and sample_reach_rate(results) == reach
        if path.parent.name == "eval_tasks":
            ok &= task_success_rate(results) == succ
        key = (path.parent.name, meta["task"], meta["variant"], meta["seed"])
        if key in blocks:
            b = blocks[key]
            rate = b.get("sample_success_rate", b.get("task_success_rate"))
            ok &= rate == succ and b["n"] == n
            checked += 1
        if not ok:
            mismatches.append(path.name)
    report(8, not mismatches and checked > 0,
           f"{len(files)} trial files recounted, {checked} matched against summaries, "
           f"mismatches {mismatches or 'none'}")


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "articulate.cli", *args],
                          capture_output=True, text=True, timeout=1800)


def test_criterion_9_reproducible_summaries(report, tmp_path):
    # a small eval-tasks run, twice from the same starting files in separate directories
    cfg = tmp_path / "small.yaml"
    cfg.write_text("schema: articulate.config/1\ncollect: {episodes: 40}\n"
                   "eval_tasks: {trials: 1, reach_budget: 20.0, interact_budget: 20.0}\n")
    seed_dir = tmp_path / "start"
    source = RESULTS / "datasets" / "close-full-seed0.jsonl"
    if source.exists():
        (seed_dir / "datasets").mkdir(parents=True)
        head = source.read_text().splitlines()[:41]
        (seed_dir / "datasets" / source.name).write_text("\n".join(head) + "\n")
    else:
        assert _cli("--out", str(seed_dir), "--config", str(cfg), "collect", "--task", "close",
                    "--mode", "full").returncode == 0
    outs = []
    for name in ("a", "b"):
        shutil.copytree(seed_dir, tmp_path / name)
        r = _cli("--out", str(tmp_path / name), "--config", str(cfg), "--seed", "0", "eval-tasks")
        assert r.returncode == 0, r.stderr[-2000:]
        outs.append((tmp_path / name / "eval_tasks" / "summary-seed0.json").read_bytes())
    same = outs[0] == outs[1]
    # the full-size run: resuming from complete trial files must reproduce the stored bytes
    stored = RESULTS / "eval_tasks" / "summary-seed0.json"
    resumed = None
    if stored.exists():
        copy = tmp_path / "full"
        for sub in ("datasets", "models", "eval_tasks"):
            shutil.copytree(RESULTS / sub, copy / sub,
                            ignore=lambda d, names: [n for n in names if "seed0" not in n])
        r = _cli("--out", str(copy), "--seed", "0", "eval-tasks")
        resumed = r.returncode == 0 and \
            (copy / "eval_tasks" / "summary-seed0.json").read_bytes() == stored.read_bytes()
    ok = same and resumed is not False
    report(9, ok, f"fresh reruns byte-identical {same}, "
                  f"full-size summary reproduced on resume {resumed}")
