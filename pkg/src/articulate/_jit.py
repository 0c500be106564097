"""Compiled kernels shared by the kinematics, simulator and controller modules.

Everything here works on flat float arrays so numba can compile it without
object support. The public modules wrap these with dataclasses.

Robot vector ``rp``::

    0 kind (0 = prismatic base + revolute chain, 1 = free finger x/z/phi)
    1 number of links n
    2 shoulder height above ground
    3 base carriage mass (free finger: body mass)
    4 finger radius
    5 joint armature (free finger: rotational inertia)
    6 gravity acceleration (0 disables)
    7 r_max
    8 .. 8+n       link lengths
    8+n .. 8+2n   link masses

Object vector ``op``::

    0 joint type (0 revolute, 1 prismatic)   1,2 anchor x, z
    3 movable length L   4 o_max   5 mass   6 damping   7 Coulomb friction
    8 gravity on joint (0/1)   9 gravity acceleration   10 friction tanh scale

Movable geometry ``mov`` is (m, 4) in object-local (a, b) coordinates, a along
the panel and b along the outer normal. Static geometry ``stat`` is (s, 4) in
world coordinates. Sim vector ``sp``::

    0 dt   1 contact stiffness   2 contact damping   3 surface friction
    4 rollout dt   5 tangential velocity scale   6 integral clamp
"""
import math

import numpy as np
from numba import njit

KIND_ARM = 0
KIND_FREE = 1

CONTACT_NONE = 0
CONTACT_MOVABLE = 1
CONTACT_STATIC = 2

TWO_PI = 2.0 * math.pi


@njit(cache=True, inline="always")
def wrap(a):
    w = a - TWO_PI * math.floor((a + math.pi) / TWO_PI)
    if w <= -math.pi:
        w = math.pi
    return w


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------


@njit(cache=True, inline="always")
def point_segment(px, pz, ax, az, bx, bz):
    """Closest point on segment ab to p: (distance, cx, cz, t)."""
    ex = bx - ax
    ez = bz - az
    ll = ex * ex + ez * ez
    t = 0.0
    if ll > 0.0:
        t = ((px - ax) * ex + (pz - az) * ez) / ll
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    cx = ax + t * ex
    cz = az + t * ez
    return math.hypot(px - cx, pz - cz), cx, cz, t


@njit(cache=True, inline="always")
def _orient(ax, az, bx, bz, cx, cz):
    return (bx - ax) * (cz - az) - (bz - az) * (cx - ax)


@njit(cache=True, inline="always")
def segment_segment(ax, az, bx, bz, cx, cz, dx, dz):
    d1 = _orient(cx, cz, dx, dz, ax, az)
    d2 = _orient(cx, cz, dx, dz, bx, bz)
    d3 = _orient(ax, az, bx, bz, cx, cz)
    d4 = _orient(ax, az, bx, bz, dx, dz)
    if ((d1 > 0.0 and d2 < 0.0) or (d1 < 0.0 and d2 > 0.0)) and (
        (d3 > 0.0 and d4 < 0.0) or (d3 < 0.0 and d4 > 0.0)
    ):
        return 0.0
    best = point_segment(ax, az, cx, cz, dx, dz)[0]
    v = point_segment(bx, bz, cx, cz, dx, dz)[0]
    if v < best:
        best = v
    v = point_segment(cx, cz, ax, az, bx, bz)[0]
    if v < best:
        best = v
    v = point_segment(dx, dz, ax, az, bx, bz)[0]
    if v < best:
        best = v
    return best


@njit(cache=True, inline="always")
def object_frame(op, o):
    """Origin, panel direction and outer normal of the movable part at o."""
    if op[0] == 0.0:
        s = math.sin(o)
        c = math.cos(o)
        return op[1], op[2], -s, c, -c, -s
    return op[1] - o, op[2], 0.0, 1.0, -1.0, 0.0


@njit(cache=True, inline="always")
def local_to_world(op, o, a, b):
    ox, oz, dx, dz, nx, nz = object_frame(op, o)
    return ox + a * dx + b * nx, oz + a * dz + b * nz


@njit(cache=True, inline="always")
def point_velocity_jacobian(op, o, px, pz):
    """d(point rigidly attached to the movable part)/do at world point p."""
    ox, oz, dx, dz, nx, nz = object_frame(op, o)
    if op[0] == 0.0:
        a = (px - ox) * dx + (pz - oz) * dz
        b = (px - ox) * nx + (pz - oz) * nz
        return a * nx - b * dx, a * nz - b * dz
    return -1.0, 0.0


@njit(cache=True, inline="always")
def movable_world(op, mov, o, out):
    ox, oz, dx, dz, nx, nz = object_frame(op, o)
    for i in range(mov.shape[0]):
        out[i, 0] = ox + mov[i, 0] * dx + mov[i, 1] * nx
        out[i, 1] = oz + mov[i, 0] * dz + mov[i, 1] * nz
        out[i, 2] = ox + mov[i, 2] * dx + mov[i, 3] * nx
        out[i, 3] = oz + mov[i, 2] * dz + mov[i, 3] * nz


@njit(cache=True, inline="always")
def target_world(op, o, tgt):
    """World pose of a target stored as (a, b, dphi) in the movable frame."""
    ox, oz, dx, dz, nx, nz = object_frame(op, o)
    x = ox + tgt[0] * dx + tgt[1] * nx
    z = oz + tgt[0] * dz + tgt[1] * nz
    return x, z, wrap(math.atan2(nz, nx) + tgt[2])


# --------------------------------------------------------------------------
# kinematics
# --------------------------------------------------------------------------


@njit(cache=True, inline="always")
def fk_points(rp, q, pts):
    """Joint positions (shoulder .. finger centre) into pts; returns ee angle."""
    if rp[0] == 1.0:
        pts[0, 0] = q[0]
        pts[0, 1] = q[1]
        return wrap(q[2])
    n = int(rp[1])
    pts[0, 0] = q[0]
    pts[0, 1] = rp[2]
    th = 0.0
    for k in range(n):
        th += q[k + 1]
        ln = rp[8 + k]
        pts[k + 1, 0] = pts[k, 0] + ln * math.cos(th)
        pts[k + 1, 1] = pts[k, 1] + ln * math.sin(th)
    return wrap(th)


@njit(cache=True)
def jacobian_into(rp, q, pts, J):
    """Analytic 3 x n_q Jacobian of (x, z, phi); pts must hold fk_points(q)."""
    J[:, :] = 0.0
    if rp[0] == 1.0:
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        J[2, 2] = 1.0
        return
    n = int(rp[1])
    ex = pts[n, 0]
    ez = pts[n, 1]
    J[0, 0] = 1.0
    for j in range(1, n + 1):
        J[0, j] = -(ez - pts[j - 1, 1])
        J[1, j] = ex - pts[j - 1, 0]
        J[2, j] = 1.0


@njit(cache=True)
def dynamics_into(rp, q, dq, M, C, g, dM, Jc, H):
    """Inertia, Coriolis (Christoffel form) and gravity terms.

    Links are point masses at their midpoints; revolute joints carry an
    additional armature inertia. dM, Jc, H are scratch arrays of shapes
    (nq, nq, nq), (2, nq) and (2, nq, nq).
    """
    nq = q.shape[0]
    M[:, :] = 0.0
    C[:, :] = 0.0
    g[:] = 0.0
    grav = rp[6]
    if rp[0] == 1.0:
        M[0, 0] = rp[3]
        M[1, 1] = rp[3]
        M[2, 2] = rp[5]
        g[1] = rp[3] * grav
        return
    n = int(rp[1])
    P = np.empty((n + 1, 2))
    fk_points(rp, q, P)
    M[0, 0] = rp[3]
    dM[:, :, :] = 0.0
    for k in range(n):
        m = rp[8 + n + k]
        cx = 0.5 * (P[k, 0] + P[k + 1, 0])
        cz = 0.5 * (P[k, 1] + P[k + 1, 1])
        Jc[:, :] = 0.0
        Jc[0, 0] = 1.0
        for j in range(1, k + 2):
            Jc[0, j] = -(cz - P[j - 1, 1])
            Jc[1, j] = cx - P[j - 1, 0]
        H[:, :, :] = 0.0
        for j in range(1, k + 2):
            for i in range(1, k + 2):
                jpx = 0.0
                jpz = 0.0
                if i <= j - 1:
                    jpx = -(P[j - 1, 1] - P[i - 1, 1])
                    jpz = P[j - 1, 0] - P[i - 1, 0]
                vx = Jc[0, i] - jpx
                vz = Jc[1, i] - jpz
                H[0, j, i] = -vz
                H[1, j, i] = vx
        for a in range(nq):
            for b in range(nq):
                M[a, b] += m * (Jc[0, a] * Jc[0, b] + Jc[1, a] * Jc[1, b])
                for i in range(1, nq):
                    dM[a, b, i] += m * (
                        H[0, a, i] * Jc[0, b]
                        + H[1, a, i] * Jc[1, b]
                        + Jc[0, a] * H[0, b, i]
                        + Jc[1, a] * H[1, b, i]
                    )
            g[a] += m * grav * Jc[1, a]
    for j in range(1, nq):
        M[j, j] += rp[5]
    for a in range(nq):
        for b in range(nq):
            s = 0.0
            for i in range(nq):
                s += 0.5 * (dM[a, b, i] + dM[a, i, b] - dM[b, i, a]) * dq[i]
            C[a, b] = s


# --------------------------------------------------------------------------
# contact and collision
# --------------------------------------------------------------------------


@njit(cache=True, inline="always")
def contact_query_into(op, mov, stat, cx, cz, r, o, movable_only, out):
    """Deepest finger-disc contact. out = [flag, delta, nx, nz, px, pz, jx, jz].

    (jx, jz) is d(contact point)/do for movable contacts, zero otherwise.
    """
    out[:] = 0.0
    best = 0.0
    ox, oz, dx, dz, nx, nz = object_frame(op, o)
    for i in range(mov.shape[0]):
        ax = ox + mov[i, 0] * dx + mov[i, 1] * nx
        az = oz + mov[i, 0] * dz + mov[i, 1] * nz
        bx = ox + mov[i, 2] * dx + mov[i, 3] * nx
        bz = oz + mov[i, 2] * dz + mov[i, 3] * nz
        dist, px, pz, t = point_segment(cx, cz, ax, az, bx, bz)
        pen = r - dist
        if pen > best:
            best = pen
            out[0] = CONTACT_MOVABLE
            out[1] = pen
            if dist > 1e-12:
                out[2] = (cx - px) / dist
                out[3] = (cz - pz) / dist
            else:
                out[2] = nx
                out[3] = nz
            out[4] = px
            out[5] = pz
    if not movable_only:
        for i in range(stat.shape[0]):
            dist, px, pz, t = point_segment(
                cx, cz, stat[i, 0], stat[i, 1], stat[i, 2], stat[i, 3]
            )
            pen = r - dist
            if pen > best:
                best = pen
                out[0] = CONTACT_STATIC
                out[1] = pen
                if dist > 1e-12:
                    out[2] = (cx - px) / dist
                    out[3] = (cz - pz) / dist
                else:
                    ex = stat[i, 2] - stat[i, 0]
                    ez = stat[i, 3] - stat[i, 1]
                    el = math.hypot(ex, ez)
                    out[2] = -ez / el
                    out[3] = ex / el
                out[4] = px
                out[5] = pz
    if out[0] == CONTACT_MOVABLE:
        jx, jz = point_velocity_jacobian(op, o, out[4], out[5])
        out[6] = jx
        out[7] = jz


@njit(cache=True, inline="always")
def contact_force(delta, nx, nz, vrx, vrz, kp, kd, mu, v_eps):
    """Penalty force on the finger; vr is finger minus surface velocity."""
    vn = vrx * nx + vrz * nz
    fn = kp * delta - kd * vn
    if fn < 0.0:
        fn = 0.0
    fx = fn * nx
    fz = fn * nz
    tx = vrx - vn * nx
    tz = vrz - vn * nz
    vt = math.hypot(tx, tz)
    if vt > 0.0 and mu > 0.0 and fn > 0.0:
        scale = vt / v_eps
        if scale > 1.0:
            scale = 1.0
        ft = mu * fn * scale
        fx -= ft * tx / vt
        fz -= ft * tz / vt
    return fx, fz


@njit(cache=True, inline="always")
def robot_collision(rp, pts, op, mov, stat, o, eps_c, segw):
    """Link segments within eps_c of the object, or finger disc in static geometry."""
    movable_world(op, mov, o, segw)
    return collision_world(rp, pts, segw, stat, eps_c)


@njit(cache=True, inline="always")
def collision_world(rp, pts, segw, stat, eps_c):
    """robot_collision with the movable segments already in world coordinates."""
    n = int(rp[1]) if rp[0] == 0.0 else 0
    r = rp[4]
    m = segw.shape[0]
    s = stat.shape[0]
    for i in range(n):
        ax = pts[i, 0]
        az = pts[i, 1]
        bx = pts[i + 1, 0]
        bz = pts[i + 1, 1]
        lox = min(ax, bx) - eps_c
        hix = max(ax, bx) + eps_c
        loz = min(az, bz) - eps_c
        hiz = max(az, bz) + eps_c
        for j in range(m + s):
            if j < m:
                cx = segw[j, 0]
                cz = segw[j, 1]
                dx = segw[j, 2]
                dz = segw[j, 3]
            else:
                cx = stat[j - m, 0]
                cz = stat[j - m, 1]
                dx = stat[j - m, 2]
                dz = stat[j - m, 3]
            if max(cx, dx) < lox or min(cx, dx) > hix:
                continue
            if max(cz, dz) < loz or min(cz, dz) > hiz:
                continue
            if segment_segment(ax, az, bx, bz, cx, cz, dx, dz) < eps_c:
                return True
    fx = pts[n, 0]
    fz = pts[n, 1]
    for j in range(s):
        if point_segment(fx, fz, stat[j, 0], stat[j, 1], stat[j, 2], stat[j, 3])[0] < r:
            return True
    return False


# --------------------------------------------------------------------------
# object joint
# --------------------------------------------------------------------------


@njit(cache=True)
def object_inertia(op):
    if op[0] == 0.0:
        return op[5] * op[3] * op[3] / 3.0
    return op[5]


@njit(cache=True)
def object_gravity_torque(op, o):
    if op[8] == 0.0 or op[0] != 0.0:
        return 0.0
    return op[5] * op[9] * 0.5 * op[3] * math.sin(o)


@njit(cache=True, inline="always")
def _joint_residual(v1, inertia, v0, h, tau, b, f, eps, f0, s, a):
    fn = f0 + s * v1
    act = fn > 0.0
    if not act:
        fn = 0.0
    th = math.tanh(v1 / eps)
    res = inertia * (v1 - v0) - h * (tau - b * v1 - f * th - a * fn)
    der = inertia + h * (b + f * (1.0 - th * th) / eps)
    if act:
        der += h * a * s
    return res, der


@njit(cache=True, inline="always")
def solve_joint_velocity(inertia, v0, h, tau, b, f, eps, f0, s, a):
    """Implicit joint velocity update.

    Solves I (v1 - v0) = h (tau - b v1 - f tanh(v1/eps) - a max(0, f0 + s v1))
    for v1. The residual is strictly increasing, so a safeguarded Newton
    iteration inside an expanding bracket always converges.
    """
    r0, d0 = _joint_residual(v0, inertia, v0, h, tau, b, f, eps, f0, s, a)
    if r0 == 0.0:
        return v0
    step = abs(r0) / inertia + 1e-9
    if r0 > 0.0:
        hi = v0
        lo = v0 - step
        while _joint_residual(lo, inertia, v0, h, tau, b, f, eps, f0, s, a)[0] > 0.0:
            lo -= step
            step *= 2.0
    else:
        lo = v0
        hi = v0 + step
        while _joint_residual(hi, inertia, v0, h, tau, b, f, eps, f0, s, a)[0] < 0.0:
            hi += step
            step *= 2.0
    x = v0
    for _ in range(60):
        res, der = _joint_residual(x, inertia, v0, h, tau, b, f, eps, f0, s, a)
        if res == 0.0:
            return x
        if res > 0.0:
            hi = x
        else:
            lo = x
        xn = x - res / der
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-13 * (1.0 + abs(x)):
            return xn
        x = xn
    return x


@njit(cache=True, inline="always")
def object_step(op, o, do, tau, h, f0, s, a):
    inertia = object_inertia(op)
    tau_total = tau + object_gravity_torque(op, o)
    # pinned at a limit: the residual is monotone, so its sign at zero velocity
    # tells whether the solution would only be clamped back
    if o >= op[4] or o <= 0.0:
        r0 = _joint_residual(0.0, inertia, do, h, tau_total, op[6], op[7], op[10], f0, s, a)[0]
        if (o >= op[4] and r0 <= 0.0) or (o <= 0.0 and r0 >= 0.0):
            return (op[4] if o >= op[4] else 0.0), 0.0
    v1 = solve_joint_velocity(inertia, do, h, tau_total, op[6], op[7], op[10], f0, s, a)
    o1 = o + h * v1
    if o1 <= 0.0:
        o1 = 0.0
        if v1 < 0.0:
            v1 = 0.0
    elif o1 >= op[4]:
        o1 = op[4]
        if v1 > 0.0:
            v1 = 0.0
    return o1, v1


# --------------------------------------------------------------------------
# ground-truth stepping
# --------------------------------------------------------------------------


@njit(cache=True)
def pi_torque_into(M, C, g, dq, u, u_prev, integ, kd, ki, h, clamp, tau):
    """Computed-torque PI law; updates integ in place."""
    nq = dq.shape[0]
    for i in range(nq):
        e = dq[i] - u[i]
        v = integ[i] + h * e
        if v > clamp:
            v = clamp
        elif v < -clamp:
            v = -clamp
        integ[i] = v
    for i in range(nq):
        s = g[i] - kd[i] * (dq[i] - u[i]) - ki[i] * integ[i]
        for j in range(nq):
            s += M[i, j] * (u[j] - u_prev[j]) / h + C[i, j] * u[j]
        tau[i] = s


@njit(cache=True)
def gt_advance(
    rp, qlo, qhi, op, mov, stat, sp, kd, ki,
    q, dq, obj, u, u_prev, integ, n_steps, rec,
):
    """Advance the full-dynamics plant n_steps at sp[0] holding reference u.

    obj = [o, do]. rec accumulates [max penetration, contact steps,
    impulse on finger x, z, generalised impulse on object, last contact flag].
    Returns False if the state became non-finite.
    """
    nq = q.shape[0]
    h = sp[0]
    n = int(rp[1]) if rp[0] == 0.0 else 0
    M = np.empty((nq, nq))
    C = np.empty((nq, nq))
    g = np.empty(nq)
    dM = np.empty((nq, nq, nq))
    Jc = np.empty((2, nq))
    H = np.empty((2, nq, nq))
    J = np.empty((3, nq))
    pts = np.empty((n + 1, 2))
    tau = np.empty(nq)
    rhs = np.empty(nq)
    cres = np.empty(8)
    for _ in range(n_steps):
        dynamics_into(rp, q, dq, M, C, g, dM, Jc, H)
        pi_torque_into(M, C, g, dq, u, u_prev, integ, kd, ki, h, sp[6], tau)
        for i in range(nq):
            u_prev[i] = u[i]
        fk_points(rp, q, pts)
        jacobian_into(rp, q, pts, J)
        cx = pts[n, 0]
        cz = pts[n, 1]
        vfx = 0.0
        vfz = 0.0
        for i in range(nq):
            vfx += J[0, i] * dq[i]
            vfz += J[1, i] * dq[i]
        contact_query_into(op, mov, stat, cx, cz, rp[4], obj[0], False, cres)
        fx = 0.0
        fz = 0.0
        tau_o = 0.0
        if cres[0] != CONTACT_NONE:
            vsx = cres[6] * obj[1]
            vsz = cres[7] * obj[1]
            fx, fz = contact_force(
                cres[1], cres[2], cres[3], vfx - vsx, vfz - vsz, sp[1], sp[2], sp[3], sp[5]
            )
            if cres[0] == CONTACT_MOVABLE:
                tau_o = -(fx * cres[6] + fz * cres[7])
            if cres[1] > rec[0]:
                rec[0] = cres[1]
            rec[1] += 1.0
            rec[2] += h * fx
            rec[3] += h * fz
            rec[4] += h * tau_o
        rec[5] = cres[0]
        for i in range(nq):
            s = tau[i] + J[0, i] * fx + J[1, i] * fz - g[i]
            for j in range(nq):
                s -= C[i, j] * dq[j]
            rhs[i] = s
        acc = np.linalg.solve(M, rhs)
        for i in range(nq):
            dq[i] += h * acc[i]
            q[i] += h * dq[i]
            if q[i] < qlo[i]:
                q[i] = qlo[i]
                if dq[i] < 0.0:
                    dq[i] = 0.0
            elif q[i] > qhi[i]:
                q[i] = qhi[i]
                if dq[i] > 0.0:
                    dq[i] = 0.0
        o1, v1 = object_step(op, obj[0], obj[1], tau_o, h, 0.0, 0.0, 0.0)
        obj[0] = o1
        obj[1] = v1
        for i in range(nq):
            if not (math.isfinite(q[i]) and math.isfinite(dq[i])):
                return False
        if not (math.isfinite(o1) and math.isfinite(v1)):
            return False
    return True


# --------------------------------------------------------------------------
# controller rollouts
# --------------------------------------------------------------------------


@njit(cache=True, inline="always")
def rollout_into(rp, op, mov, sp, q0, o0, do0, useq, h, tq, to, tdo, tpts, tphi):
    """Kinematic-robot rollout (dq = u) with implicit object/contact update.

    Writes H states after each control into tq (H, nq), to, tdo, tpts
    (H, n+1, 2) and tphi.
    """
    nq = q0.shape[0]
    n = int(rp[1]) if rp[0] == 0.0 else 0
    kp = sp[1]
    kdc = sp[2]
    q = q0.copy()
    pts = np.empty((n + 1, 2))
    fk_points(rp, q, pts)
    cx = pts[n, 0]
    cz = pts[n, 1]
    o = o0
    do = do0
    cres = np.empty(8)
    dummy = np.empty((0, 4))
    for t in range(useq.shape[0]):
        for i in range(nq):
            q[i] += h * useq[t, i]
        phi = fk_points(rp, q, tpts[t])
        nx_ = tpts[t, n, 0]
        nz_ = tpts[t, n, 1]
        vfx = (nx_ - cx) / h
        vfz = (nz_ - cz) / h
        cx = nx_
        cz = nz_
        contact_query_into(op, mov, dummy, cx, cz, rp[4], o, True, cres)
        f0 = 0.0
        s = 0.0
        a = 0.0
        if cres[0] == CONTACT_MOVABLE:
            a = cres[6] * cres[2] + cres[7] * cres[3]
            vfn = vfx * cres[2] + vfz * cres[3]
            f0 = kp * cres[1] - kdc * vfn
            s = (kp * h + kdc) * a
        o, do = object_step(op, o, do, 0.0, h, f0, s, a)
        for i in range(nq):
            tq[t, i] = q[i]
        to[t] = o
        tdo[t] = do
        tphi[t] = phi


@njit(cache=True, inline="always")
def stage_cost_jit(rp, qlo, qhi, op, mov, stat, q, pts, phi, o, o_star, tgt, cw, wjd, mode, segw):
    """Stage cost l(x; m). cw = [W_o, Wt_x, Wt_z, Wt_phi, w_c, w_j, w_a, w_as, eps_c]."""
    n = int(rp[1]) if rp[0] == 0.0 else 0
    embodied = rp[0] == 0.0
    cost = 0.0
    tx, tz, tphi = target_world(op, o, tgt)
    ex = pts[n, 0] - tx
    ez = pts[n, 1] - tz
    ea = wrap(phi - tphi)
    cost += cw[1] * ex * ex + cw[2] * ez * ez + cw[3] * ea * ea
    if mode == 2:
        eo = o - o_star
        cost += cw[0] * eo * eo
    if embodied:
        for i in range(q.shape[0]):
            if q[i] > qhi[i]:
                e = q[i] - qhi[i]
                cost += cw[5] + wjd[i] * e * e
            elif q[i] < qlo[i]:
                e = q[i] - qlo[i]
                cost += cw[5] + wjd[i] * e * e
        r = math.hypot(pts[n, 0] - pts[0, 0], pts[n, 1] - pts[0, 1])
        if r > rp[7]:
            cost += cw[6] + cw[7] * (r - rp[7])
        if mode == 1:
            if robot_collision(rp, pts, op, mov, stat, o, cw[8], segw):
                cost += cw[4]
    return cost


@njit(cache=True)
def rollout_costs(
    rp, qlo, qhi, op, mov, stat, sp, q0, o0, do0, samples, h, o_star, tgt, cw, wjd, mode, costs
):
    """Total stage cost of each sampled control sequence.

    Fused equivalent of rollout_into followed by stage_cost_jit at every
    step; it avoids materialising trajectories and shares the object frame.
    """
    K = samples.shape[0]
    H = samples.shape[1]
    nq = q0.shape[0]
    n = int(rp[1]) if rp[0] == 0.0 else 0
    embodied = rp[0] == 0.0
    kp = sp[1]
    kdc = sp[2]
    r_f = rp[4]
    q = np.empty(nq)
    pts = np.empty((n + 1, 2))
    m = mov.shape[0]
    segw = np.empty((m, 4))
    for k in range(K):
        for i in range(nq):
            q[i] = q0[i]
        fk_points(rp, q, pts)
        cx = pts[n, 0]
        cz = pts[n, 1]
        o = o0
        do = do0
        total = 0.0
        for t in range(H):
            for i in range(nq):
                q[i] += h * samples[k, t, i]
            phi = fk_points(rp, q, pts)
            fx = pts[n, 0]
            fz = pts[n, 1]
            vfx = (fx - cx) / h
            vfz = (fz - cz) / h
            cx = fx
            cz = fz
            # implicit linearised contact with the movable part
            ox, oz, dx, dz, nx, nz = object_frame(op, o)
            best = 0.0
            bnx = 0.0
            bnz = 0.0
            bpx = 0.0
            bpz = 0.0
            for i in range(m):
                ax = ox + mov[i, 0] * dx + mov[i, 1] * nx
                az = oz + mov[i, 0] * dz + mov[i, 1] * nz
                bx = ox + mov[i, 2] * dx + mov[i, 3] * nx
                bz = oz + mov[i, 2] * dz + mov[i, 3] * nz
                dist, px, pz, _ = point_segment(cx, cz, ax, az, bx, bz)
                pen = r_f - dist
                if pen > best:
                    best = pen
                    if dist > 1e-12:
                        bnx = (cx - px) / dist
                        bnz = (cz - pz) / dist
                    else:
                        bnx = nx
                        bnz = nz
                    bpx = px
                    bpz = pz
            f0 = 0.0
            sl = 0.0
            a = 0.0
            if best > 0.0:
                jx, jz = point_velocity_jacobian(op, o, bpx, bpz)
                a = jx * bnx + jz * bnz
                f0 = kp * best - kdc * (vfx * bnx + vfz * bnz)
                sl = (kp * h + kdc) * a
            o, do = object_step(op, o, do, 0.0, h, f0, sl, a)
            # stage cost at the new state
            ox, oz, dx, dz, nx, nz = object_frame(op, o)
            tx = ox + tgt[0] * dx + tgt[1] * nx
            tz = oz + tgt[0] * dz + tgt[1] * nz
            ea = wrap(phi - wrap(math.atan2(nz, nx) + tgt[2]))
            ex = cx - tx
            ez = cz - tz
            c = cw[1] * ex * ex + cw[2] * ez * ez + cw[3] * ea * ea
            if mode == 2:
                eo = o - o_star
                c += cw[0] * eo * eo
            if embodied:
                for i in range(nq):
                    if q[i] > qhi[i]:
                        e = q[i] - qhi[i]
                        c += cw[5] + wjd[i] * e * e
                    elif q[i] < qlo[i]:
                        e = q[i] - qlo[i]
                        c += cw[5] + wjd[i] * e * e
                rr = math.hypot(cx - pts[0, 0], cz - pts[0, 1])
                if rr > rp[7]:
                    c += cw[6] + cw[7] * (rr - rp[7])
                if mode == 1:
                    for i in range(m):
                        segw[i, 0] = ox + mov[i, 0] * dx + mov[i, 1] * nx
                        segw[i, 1] = oz + mov[i, 0] * dz + mov[i, 1] * nz
                        segw[i, 2] = ox + mov[i, 2] * dx + mov[i, 3] * nx
                        segw[i, 3] = oz + mov[i, 2] * dz + mov[i, 3] * nz
                    if collision_world(rp, pts, segw, stat, cw[8]):
                        c += cw[4]
            total += c
        costs[k] = total


# --------------------------------------------------------------------------
# inverse kinematics
# --------------------------------------------------------------------------


@njit(cache=True)
def ik_dls(rp, qlo, qhi, target, q, lam, max_iter, tol_pos, tol_ang):
    """Damped least squares on (x, z, phi); q is updated in place.

    Success requires the pose tolerance, joint limits and reach <= r_max.
    """
    nq = q.shape[0]
    n = int(rp[1]) if rp[0] == 0.0 else 0
    pts = np.empty((n + 1, 2))
    J = np.empty((3, nq))
    A = np.empty((3, 3))
    e = np.empty(3)
    for it in range(max_iter + 1):
        phi = fk_points(rp, q, pts)
        e[0] = target[0] - pts[n, 0]
        e[1] = target[1] - pts[n, 1]
        e[2] = wrap(target[2] - phi)
        if math.hypot(e[0], e[1]) < tol_pos and abs(e[2]) < tol_ang:
            r = math.hypot(pts[n, 0] - pts[0, 0], pts[n, 1] - pts[0, 1])
            if n == 0 or r <= rp[7]:
                return True
        if it == max_iter:
            break
        if n > 0:
            # pull the base in when the pose is met only by overreaching
            r = math.hypot(pts[n, 0] - pts[0, 0], pts[n, 1] - pts[0, 1])
            dzs = pts[n, 1] - pts[0, 1]
            if r > rp[7] and abs(dzs) < rp[7]:
                reach_x = math.sqrt(rp[7] * rp[7] - dzs * dzs) * 0.98
                side = 1.0 if pts[n, 0] >= pts[0, 0] else -1.0
                v = min(max(pts[n, 0] - side * reach_x, qlo[0]), qhi[0])
                if abs(v - q[0]) > 1e-9:
                    q[0] = v
                    continue
        jacobian_into(rp, q, pts, J)
        for a in range(3):
            for b in range(3):
                s = 0.0
                for i in range(nq):
                    s += J[a, i] * J[b, i]
                A[a, b] = s
            A[a, a] += lam * lam
        y = np.linalg.solve(A, e)
        for i in range(nq):
            d = J[0, i] * y[0] + J[1, i] * y[1] + J[2, i] * y[2]
            v = q[i] + d
            if v < qlo[i]:
                v = qlo[i]
            elif v > qhi[i]:
                v = qhi[i]
            q[i] = v
    return False
