"""Numba-compiled rollout engine.

Everything inside a rollout (terrain queries, trajectory generation, policy
forward pass, contact physics, reward) lives here as nopython kernels so a
full 10 s episode costs well under a millisecond. Kernels are pure float64
functions of their inputs: no RNG, no globals, no allocation in the hot
loop, hence bit-identical results regardless of threading.

The python-facing modules (tg, terrain, sim, policy) keep readable reference
implementations of the same formulas; equivalence is enforced by tests.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# --- terrain parameter vector layout (mirrors terrain.py constants) ---
TP_SPAWN_END = 0
TP_SLOPE_TAN = 1
TP_STEP_HEIGHT = 2
TP_STEP_DEPTH = 3
TP_TILE_SIZE = 4
TP_TILE_X0 = 5
TP_TILE_Y0 = 6
TP_BEAM_HALFWIDTH = 7
TP_UNSUPPORTED = 8

TT_SLOPE = 0
TT_STAIRS = 1
TT_UNEVEN = 2
TT_BEAM = 3

# --- physics parameter vector layout ---
(P_MASS, P_IX, P_IY, P_IZ, P_LEG_LEN, P_KN, P_CN, P_CT, P_MU, P_G,
 P_CONTROL_DT, P_N_SUB, P_MAX_STEPS, P_FALL_H, P_FALL_COS, P_OFFBEAM_Z,
 P_CONTACT_TOL, P_F0, P_NOM_H, P_HIP_LAT, P_RES_CLAMP, P_FREQ_CLAMP,
 P_VEL_AVG_BETA, P_ROT_DAMPING) = range(24)
P_LEN = 24

# --- reward parameter vector layout ---
(R_WLV, R_WAVT, R_WAVP, R_WS, R_WTP, R_VTGT, R_SIGV, R_SIGW) = range(8)
R_LEN = 8

# --- kernel output vector layout ---
(OUT_RETURN, OUT_R_LV, OUT_R_AVT, OUT_R_AVP, OUT_R_S, OUT_R_TP,
 OUT_STEPS, OUT_TERM, OUT_NONFINITE, OUT_MAX_CMD_NORM, OUT_OBS_COUNT,
 OUT_TRACE_ROWS) = range(12)
OUT_LEN = 12

TERM_TIME_LIMIT = 0
TERM_FELL = 1
TERM_OFF_BEAM = 2
TERM_DIVERGED = 3

OBS_DIM = 33
N_LEGS = 4
TRACE_COLS = 36  # ... + per-leg mean normal force (4), mean net tangential x (1)

TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True)
def terrain_height(type_code, tp, tiles, x, y):
    """Piecewise-exact terrain height; unsupported beam sides return the fall floor."""
    if x < tp[TP_SPAWN_END]:
        return 0.0
    if type_code == TT_SLOPE:
        return tp[TP_SLOPE_TAN] * (x - tp[TP_SPAWN_END])
    if type_code == TT_STAIRS:
        return math.floor((x - tp[TP_SPAWN_END]) / tp[TP_STEP_DEPTH]) * tp[TP_STEP_HEIGHT]
    if type_code == TT_UNEVEN:
        ix = int(math.floor((x - tp[TP_TILE_X0]) / tp[TP_TILE_SIZE]))
        iy = int(math.floor((y - tp[TP_TILE_Y0]) / tp[TP_TILE_SIZE]))
        if ix < 0:
            ix = 0
        elif ix >= tiles.shape[0]:
            ix = tiles.shape[0] - 1
        if iy < 0:
            iy = 0
        elif iy >= tiles.shape[1]:
            iy = tiles.shape[1] - 1
        return tiles[ix, iy]
    # beam
    if abs(y) <= tp[TP_BEAM_HALFWIDTH]:
        return 0.0
    return tp[TP_UNSUPPORTED]


@njit(cache=True, nogil=True, inline="always")
def _wrap_phase(phi):
    out = phi % TWO_PI
    if out < 0.0:
        out += TWO_PI
    if out >= TWO_PI:
        out -= TWO_PI
    return out


@njit(cache=True, nogil=True, inline="always")
def tg_leg_target(swing, turn, lift, y_delta, nominal_h, phi):
    """Leg-frame (x, y, z) target at phase phi (already wrapped)."""
    beta1 = (math.sin(phi + math.pi / 2.0) - 1.0) / 2.0
    beta2 = (math.sin(2.0 * phi + math.pi / 2.0) - 1.0) / 2.0
    x = swing * beta1 + swing
    if phi <= math.pi:
        y = y_delta
        z = nominal_h
    else:
        y = y_delta - turn * beta2
        z = nominal_h - lift * beta2
    return x, y, z


@njit(cache=True, nogil=True, inline="always")
def quat_normalize(q):
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n > 0.0:
        q[0] /= n
        q[1] /= n
        q[2] /= n
        q[3] /= n


@njit(cache=True, nogil=True, inline="always")
def quat_rotate(q, vx, vy, vz):
    """Rotate vector by unit quaternion (w, x, y, z): body -> world."""
    tw = 2.0 * (q[2] * vz - q[3] * vy)
    tx = 2.0 * (q[3] * vx - q[1] * vz)
    ty = 2.0 * (q[1] * vy - q[2] * vx)
    rx = vx + q[0] * tw + (q[2] * ty - q[3] * tx)
    ry = vy + q[0] * tx + (q[3] * tw - q[1] * ty)
    rz = vz + q[0] * ty + (q[1] * tx - q[2] * tw)
    return rx, ry, rz


@njit(cache=True, nogil=True, inline="always")
def quat_rotate_inv(q, vx, vy, vz):
    """Rotate by the conjugate: world -> body."""
    tw = 2.0 * (-q[2] * vz + q[3] * vy)
    tx = 2.0 * (-q[3] * vx + q[1] * vz)
    ty = 2.0 * (-q[1] * vy + q[2] * vx)
    rx = vx + q[0] * tw + (-q[2] * ty + q[3] * tx)
    ry = vy + q[0] * tx + (-q[3] * tw + q[1] * ty)
    rz = vz + q[0] * ty + (-q[1] * tx + q[2] * tw)
    return rx, ry, rz


@njit(cache=True, nogil=True, inline="always")
def quat_mul_rotvec(q, rx, ry, rz):
    """q <- q * exp(rotvec/2): integrate a body-frame rotation increment."""
    angle = math.sqrt(rx * rx + ry * ry + rz * rz)
    if angle < 1e-12:
        dw, dx, dy, dz = 1.0, 0.5 * rx, 0.5 * ry, 0.5 * rz
    else:
        half = 0.5 * angle
        s = math.sin(half) / angle
        dw, dx, dy, dz = math.cos(half), rx * s, ry * s, rz * s
    w = q[0] * dw - q[1] * dx - q[2] * dy - q[3] * dz
    x = q[0] * dx + q[1] * dw + q[2] * dz - q[3] * dy
    y = q[0] * dy - q[1] * dz + q[2] * dw + q[3] * dx
    z = q[0] * dz + q[1] * dy - q[2] * dx + q[3] * dw
    q[0], q[1], q[2], q[3] = w, x, y, z
    quat_normalize(q)


@njit(cache=True, nogil=True)
def assemble_input(obs, obs_mean, obs_std, phases, total_freqs, f0, cond, x_out):
    """Policy input: [normalized obs(33), sin/cos phase(8), freqs/(2 f0)(4), cond]."""
    for i in range(OBS_DIM):
        x_out[i] = (obs[i] - obs_mean[i]) / obs_std[i]
    for i in range(N_LEGS):
        x_out[OBS_DIM + 2 * i] = math.sin(phases[i])
        x_out[OBS_DIM + 2 * i + 1] = math.cos(phases[i])
    for i in range(N_LEGS):
        x_out[OBS_DIM + 8 + i] = total_freqs[i] / (2.0 * f0)
    for i in range(cond.shape[0]):
        x_out[OBS_DIM + 12 + i] = cond[i]


@njit(cache=True, nogil=True)
def policy_forward(mode, w1, b1, w2, b2, x, out16, hidden_buf):
    """Affine (mode 1) or one-hidden-layer tanh (mode 2) map. mode 0 zeros the output."""
    if mode == 0:
        for i in range(16):
            out16[i] = 0.0
        return
    if mode == 1:
        for i in range(16):
            acc = b1[i]
            for j in range(x.shape[0]):
                acc += w1[i, j] * x[j]
            out16[i] = acc
        return
    for hval in range(w1.shape[0]):
        acc = b1[hval]
        for j in range(x.shape[0]):
            acc += w1[hval, j] * x[j]
        hidden_buf[hval] = math.tanh(acc)
    for i in range(16):
        acc = b2[i]
        for j in range(w1.shape[0]):
            acc += w2[i, j] * hidden_buf[j]
        out16[i] = acc


@njit(cache=True, nogil=True)
def _contact_forces(px, py, pz, vx, vy, vz, wbx, wby, wbz, quat,
                    t_prev, t_new, alpha, foot_vel_body, hips,
                    k_n, c_n, c_t, mu, contact_tol, ttype, tp, tiles):
    """Sum of contact wrenches about the CoM at the given trunk state.

    Returns (fx, fy, fz, tau_x, tau_y, tau_z, grf_sq, fn0, fn1, fn2, fn3, ftx_sum).
    """
    fx_tot = 0.0
    fy_tot = 0.0
    fz_tot = 0.0
    tau_x = 0.0
    tau_y = 0.0
    tau_z = 0.0
    grf_sq = 0.0
    fn_leg0 = 0.0
    fn_leg1 = 0.0
    fn_leg2 = 0.0
    fn_leg3 = 0.0
    ftx_sum = 0.0
    wwx, wwy, wwz = quat_rotate(quat, wbx, wby, wbz)
    for leg in range(N_LEGS):
        bx = hips[leg, 0] + t_prev[leg, 0] + alpha * (t_new[leg, 0] - t_prev[leg, 0])
        by = hips[leg, 1] + t_prev[leg, 1] + alpha * (t_new[leg, 1] - t_prev[leg, 1])
        bz = hips[leg, 2] + t_prev[leg, 2] + alpha * (t_new[leg, 2] - t_prev[leg, 2])
        rxw, ryw, rzw = quat_rotate(quat, bx, by, bz)
        fx_w = px + rxw
        fy_w = py + ryw
        fz_w = pz + rzw
        h_terr = terrain_height(ttype, tp, tiles, fx_w, fy_w)
        if fz_w <= h_terr + contact_tol:
            cvx, cvy, cvz = quat_rotate(
                quat, foot_vel_body[leg, 0], foot_vel_body[leg, 1], foot_vel_body[leg, 2])
            vfx = vx + (wwy * rzw - wwz * ryw) + cvx
            vfy = vy + (wwz * rxw - wwx * rzw) + cvy
            vfz = vz + (wwx * ryw - wwy * rxw) + cvz
            fn = k_n * (h_terr - fz_w) - c_n * vfz
            if fn < 0.0:
                fn = 0.0
            ftx = -c_t * vfx
            fty = -c_t * vfy
            ft_norm = math.sqrt(ftx * ftx + fty * fty)
            ft_max = mu * fn
            if ft_norm > ft_max and ft_norm > 0.0:
                s = ft_max / ft_norm
                ftx *= s
                fty *= s
            fx_tot += ftx
            fy_tot += fty
            fz_tot += fn
            tau_x += ryw * fn - rzw * fty
            tau_y += rzw * ftx - rxw * fn
            tau_z += rxw * fty - ryw * ftx
            grf_sq += ftx * ftx + fty * fty + fn * fn
            ftx_sum += ftx
            if leg == 0:
                fn_leg0 += fn
            elif leg == 1:
                fn_leg1 += fn
            elif leg == 2:
                fn_leg2 += fn
            else:
                fn_leg3 += fn
    return (fx_tot, fy_tot, fz_tot, tau_x, tau_y, tau_z, grf_sq,
            fn_leg0, fn_leg1, fn_leg2, fn_leg3, ftx_sum)


@njit(cache=True, nogil=True)
def rollout_kernel(tgp, gait_offsets, side_sign, hips,
                   pol_mode, w1, b1, w2, b2, cond, obs_mean, obs_std,
                   phys, rw, ttype, tp, tiles,
                   init_pos, init_quat,
                   collect_obs, obs_sum, obs_sumsq,
                   trace_on, trace, out):
    """Run one full episode; fills `out` (OUT_* layout) plus optional obs stats / trace."""
    mass = phys[P_MASS]
    inv_m = 1.0 / mass
    ix_i, iy_i, iz_i = phys[P_IX], phys[P_IY], phys[P_IZ]
    leg_len = phys[P_LEG_LEN]
    k_n, c_n, c_t, mu = phys[P_KN], phys[P_CN], phys[P_CT], phys[P_MU]
    g = phys[P_G]
    control_dt = phys[P_CONTROL_DT]
    n_sub = int(phys[P_N_SUB])
    dt = control_dt / n_sub
    max_steps = int(phys[P_MAX_STEPS])
    fall_h = phys[P_FALL_H]
    fall_cos = phys[P_FALL_COS]
    offbeam_z = phys[P_OFFBEAM_Z]
    contact_tol = phys[P_CONTACT_TOL]
    f0 = phys[P_F0]
    nominal_h = phys[P_NOM_H]
    hip_lat = phys[P_HIP_LAT]
    res_clamp = phys[P_RES_CLAMP]
    freq_clamp = phys[P_FREQ_CLAMP]
    c_rot = phys[P_ROT_DAMPING]

    swing, turn, lift, y_off = tgp[0], tgp[1], tgp[2], tgp[3]
    y_delta = hip_lat + y_off

    # trunk state
    pos = np.empty(3)
    vel = np.zeros(3)
    omega = np.zeros(3)  # body frame
    quat = np.empty(4)
    for i in range(3):
        pos[i] = init_pos[i]
    for i in range(4):
        quat[i] = init_quat[i]

    phases = np.empty(N_LEGS)
    total_freqs = np.empty(N_LEGS)
    for i in range(N_LEGS):
        phases[i] = _wrap_phase(TWO_PI * gait_offsets[i])
        total_freqs[i] = f0

    # commanded hip-relative body-frame targets (current and previous)
    t_prev = np.empty((N_LEGS, 3))
    t_new = np.empty((N_LEGS, 3))
    foot_vel_body = np.zeros((N_LEGS, 3))
    for leg in range(N_LEGS):
        lx, ly, lz = tg_leg_target(swing, turn, lift, y_delta, nominal_h, phases[leg])
        t_prev[leg, 0] = lx
        t_prev[leg, 1] = side_sign[leg] * ly
        t_prev[leg, 2] = lz

    in_dim = OBS_DIM + 12 + cond.shape[0]
    x_in = np.zeros(in_dim)
    out16 = np.zeros(16)
    hidden_buf = np.zeros(w1.shape[0])
    obs = np.zeros(OBS_DIM)

    ret = 0.0
    s_lv = 0.0
    s_avt = 0.0
    s_avp = 0.0
    s_s = 0.0
    s_tp = 0.0
    steps = 0
    term = TERM_TIME_LIMIT
    nonfinite = 0.0
    max_cmd_norm = 0.0
    obs_count = 0.0
    trace_rows = 0

    # velocity-Verlet carried accelerations (filled on the first substep)
    have_acc = False
    ax_p = 0.0
    ay_p = 0.0
    az_p = 0.0
    awx_p = 0.0
    awy_p = 0.0
    awz_p = 0.0

    # smoothed forward velocity for the tracking reward (EMA; rocking in
    # place averages out instead of harvesting the exp peak each half-swing)
    vel_beta = phys[P_VEL_AVG_BETA]
    v_bar = 0.0

    for step in range(max_steps):
        # --- observation at step start ---
        gx, gy, gz = quat_rotate_inv(quat, 0.0, 0.0, -1.0)
        bvx, bvy, bvz = quat_rotate_inv(quat, vel[0], vel[1], vel[2])
        obs[0], obs[1], obs[2] = gx, gy, gz
        obs[3], obs[4], obs[5] = bvx, bvy, bvz
        obs[6], obs[7], obs[8] = omega[0], omega[1], omega[2]
        for leg in range(N_LEGS):
            for k in range(3):
                obs[9 + 3 * leg + k] = hips[leg, k] + t_prev[leg, k]
                obs[21 + 3 * leg + k] = foot_vel_body[leg, k]

        if collect_obs == 1:
            for i in range(OBS_DIM):
                obs_sum[i] += obs[i]
                obs_sumsq[i] += obs[i] * obs[i]
            obs_count += 1.0

        # --- policy ---
        if pol_mode > 0:
            assemble_input(obs, obs_mean, obs_std, phases, total_freqs, f0, cond, x_in)
            policy_forward(pol_mode, w1, b1, w2, b2, x_in, out16, hidden_buf)
            for i in range(16):
                if not math.isfinite(out16[i]):
                    out16[i] = 0.0
                    nonfinite += 1.0
        else:
            for i in range(16):
                out16[i] = 0.0

        # --- phase advance with clamped total frequency ---
        for leg in range(N_LEGS):
            fres = out16[12 + leg]
            if fres > 1.0:
                fres = 1.0
            elif fres < -1.0:
                fres = -1.0
            fres *= freq_clamp
            tot = f0 + fres
            if tot < 0.0:
                tot = 0.0
            elif tot > 2.0 * f0:
                tot = 2.0 * f0
            total_freqs[leg] = tot
            phases[leg] = _wrap_phase(phases[leg] + TWO_PI * tot * control_dt)

        # --- compose targets: TG + residuals, mirrored, workspace-clamped ---
        # raw outputs are in clamp-normalized units: residual = clamp * clip(out, -1, 1)
        d_targets_sq = 0.0
        for leg in range(N_LEGS):
            lx, ly, lz = tg_leg_target(swing, turn, lift, y_delta, nominal_h, phases[leg])
            rx = out16[3 * leg]
            ry = out16[3 * leg + 1]
            rz = out16[3 * leg + 2]
            if rx > 1.0:
                rx = 1.0
            elif rx < -1.0:
                rx = -1.0
            if ry > 1.0:
                ry = 1.0
            elif ry < -1.0:
                ry = -1.0
            if rz > 1.0:
                rz = 1.0
            elif rz < -1.0:
                rz = -1.0
            rx *= res_clamp
            ry *= res_clamp
            rz *= res_clamp
            cx = lx + rx
            cy = side_sign[leg] * (ly + ry)
            cz = lz + rz
            norm = math.sqrt(cx * cx + cy * cy + cz * cz)
            if norm > leg_len:
                scale = leg_len / norm
                cx *= scale
                cy *= scale
                cz *= scale
                norm = leg_len
            if norm > max_cmd_norm:
                max_cmd_norm = norm
            t_new[leg, 0] = cx
            t_new[leg, 1] = cy
            t_new[leg, 2] = cz
            dx = cx - t_prev[leg, 0]
            dy = cy - t_prev[leg, 1]
            dz = cz - t_prev[leg, 2]
            d_targets_sq += dx * dx + dy * dy + dz * dz
            foot_vel_body[leg, 0] = dx / control_dt
            foot_vel_body[leg, 1] = dy / control_dt
            foot_vel_body[leg, 2] = dz / control_dt

        # --- physics substeps (velocity Verlet) ---
        grf_sq = 0.0
        diverged = False
        fn_acc0 = 0.0
        fn_acc1 = 0.0
        fn_acc2 = 0.0
        fn_acc3 = 0.0
        ftx_acc = 0.0
        for sub in range(n_sub):
            alpha = (sub + 1.0) / n_sub
            if not have_acc:
                (fx, fy, fz, tau_x, tau_y, tau_z, _grf,
                 _f0, _f1, _f2, _f3, _fx) = _contact_forces(
                    pos[0], pos[1], pos[2], vel[0], vel[1], vel[2],
                    omega[0], omega[1], omega[2], quat, t_prev, t_new, 0.0,
                    foot_vel_body, hips, k_n, c_n, c_t, mu, contact_tol,
                    ttype, tp, tiles)
                ax_p = fx * inv_m
                ay_p = fy * inv_m
                az_p = fz * inv_m - g
                tbx, tby, tbz = quat_rotate_inv(quat, tau_x, tau_y, tau_z)
                awx_p = (tbx - (iz_i - iy_i) * omega[1] * omega[2] - c_rot * omega[0]) / ix_i
                awy_p = (tby - (ix_i - iz_i) * omega[2] * omega[0] - c_rot * omega[1]) / iy_i
                awz_p = (tbz - (iy_i - ix_i) * omega[0] * omega[1] - c_rot * omega[2]) / iz_i
                have_acc = True

            # drift with current velocity + half acceleration
            pos[0] += vel[0] * dt + 0.5 * ax_p * dt * dt
            pos[1] += vel[1] * dt + 0.5 * ay_p * dt * dt
            pos[2] += vel[2] * dt + 0.5 * az_p * dt * dt
            quat_mul_rotvec(quat,
                            omega[0] * dt + 0.5 * awx_p * dt * dt,
                            omega[1] * dt + 0.5 * awy_p * dt * dt,
                            omega[2] * dt + 0.5 * awz_p * dt * dt)

            # forces at the new pose with half-stepped velocities
            vhx = vel[0] + 0.5 * ax_p * dt
            vhy = vel[1] + 0.5 * ay_p * dt
            vhz = vel[2] + 0.5 * az_p * dt
            whx = omega[0] + 0.5 * awx_p * dt
            why = omega[1] + 0.5 * awy_p * dt
            whz = omega[2] + 0.5 * awz_p * dt
            (fx, fy, fz, tau_x, tau_y, tau_z, grf_c,
             fn0, fn1, fn2, fn3, ftxs) = _contact_forces(
                pos[0], pos[1], pos[2], vhx, vhy, vhz, whx, why, whz,
                quat, t_prev, t_new, alpha, foot_vel_body, hips,
                k_n, c_n, c_t, mu, contact_tol, ttype, tp, tiles)
            ax_n = fx * inv_m
            ay_n = fy * inv_m
            az_n = fz * inv_m - g
            tbx, tby, tbz = quat_rotate_inv(quat, tau_x, tau_y, tau_z)
            awx_n = (tbx - (iz_i - iy_i) * why * whz - c_rot * whx) / ix_i
            awy_n = (tby - (ix_i - iz_i) * whz * whx - c_rot * why) / iy_i
            awz_n = (tbz - (iy_i - ix_i) * whx * why - c_rot * whz) / iz_i

            vel[0] += 0.5 * (ax_p + ax_n) * dt
            vel[1] += 0.5 * (ay_p + ay_n) * dt
            vel[2] += 0.5 * (az_p + az_n) * dt
            omega[0] += 0.5 * (awx_p + awx_n) * dt
            omega[1] += 0.5 * (awy_p + awy_n) * dt
            omega[2] += 0.5 * (awz_p + awz_n) * dt
            ax_p, ay_p, az_p = ax_n, ay_n, az_n
            awx_p, awy_p, awz_p = awx_n, awy_n, awz_n

            grf_sq += grf_c
            fn_acc0 += fn0
            fn_acc1 += fn1
            fn_acc2 += fn2
            fn_acc3 += fn3
            ftx_acc += ftxs

            ok = True
            for i in range(3):
                if not (math.isfinite(pos[i]) and math.isfinite(vel[i]) and math.isfinite(omega[i])):
                    ok = False
            if not (math.isfinite(quat[0]) and math.isfinite(quat[1])
                    and math.isfinite(quat[2]) and math.isfinite(quat[3])):
                ok = False
            if not ok:
                diverged = True
                break

        if diverged:
            term = TERM_DIVERGED
            break

        # --- reward (end-of-step state) ---
        v_bar += vel_beta * (vel[0] - v_bar)
        dv = v_bar - rw[R_VTGT]
        r_lv = rw[R_WLV] * math.exp(-(dv * dv) / (rw[R_SIGV] * rw[R_SIGV]))
        r_avt = rw[R_WAVT] * math.exp(-(omega[2] * omega[2]) / (rw[R_SIGW] * rw[R_SIGW]))
        r_avp = -rw[R_WAVP] * (omega[0] * omega[0] + omega[1] * omega[1])
        r_s = -rw[R_WS] * d_targets_sq
        r_tp = -rw[R_WTP] * (grf_sq / n_sub)
        s_lv += r_lv
        s_avt += r_avt
        s_avp += r_avp
        s_s += r_s
        s_tp += r_tp
        ret += r_lv + r_avt + r_avp + r_s + r_tp
        steps += 1

        if trace_on == 1 and trace_rows < trace.shape[0]:
            row = trace_rows
            trace[row, 0] = (step + 1) * control_dt
            trace[row, 1] = pos[0]
            trace[row, 2] = pos[1]
            trace[row, 3] = pos[2]
            trace[row, 4] = quat[0]
            trace[row, 5] = quat[1]
            trace[row, 6] = quat[2]
            trace[row, 7] = quat[3]
            trace[row, 8] = vel[0]
            trace[row, 9] = vel[1]
            trace[row, 10] = vel[2]
            trace[row, 11] = omega[0]
            trace[row, 12] = omega[1]
            trace[row, 13] = omega[2]
            for leg in range(N_LEGS):
                for k in range(3):
                    trace[row, 14 + 3 * leg + k] = hips[leg, k] + t_new[leg, k]
            trace[row, 26] = r_lv
            trace[row, 27] = r_avt
            trace[row, 28] = r_avp
            trace[row, 29] = r_s
            trace[row, 30] = r_tp
            trace[row, 31] = fn_acc0 / n_sub
            trace[row, 32] = fn_acc1 / n_sub
            trace[row, 33] = fn_acc2 / n_sub
            trace[row, 34] = fn_acc3 / n_sub
            trace[row, 35] = ftx_acc / n_sub
            trace_rows += 1

        # --- termination ---
        if pos[2] < offbeam_z:
            term = TERM_OFF_BEAM
            break
        h_under = terrain_height(ttype, tp, tiles, pos[0], pos[1])
        cos_tilt = 1.0 - 2.0 * (quat[1] * quat[1] + quat[2] * quat[2])
        if pos[2] - h_under < fall_h or cos_tilt < fall_cos:
            term = TERM_FELL
            break

        # roll targets
        for leg in range(N_LEGS):
            for k in range(3):
                t_prev[leg, k] = t_new[leg, k]

    out[OUT_RETURN] = ret
    out[OUT_R_LV] = s_lv
    out[OUT_R_AVT] = s_avt
    out[OUT_R_AVP] = s_avp
    out[OUT_R_S] = s_s
    out[OUT_R_TP] = s_tp
    out[OUT_STEPS] = steps
    out[OUT_TERM] = term
    out[OUT_NONFINITE] = nonfinite
    out[OUT_MAX_CMD_NORM] = max_cmd_norm
    out[OUT_OBS_COUNT] = obs_count
    out[OUT_TRACE_ROWS] = trace_rows
