"""Compiled trajectory engine. Internal, see montecarlo.simulate.

The per-step dynamics (relax, local jumps, collective detection) are never
iterated step by step. Between events every conditional amplitude relaxes
as eps_i(u) = eps_ss + delta_i * x with the shared factor x = exp(-gamma*
dt*u/2), so both the total jump probability and the detection probability
are quadratics in x. Quadratics with nonnegative curvature take their
maximum at interval endpoints, which gives a per-segment upper bound q on
the per-step event probability; steps are then skipped geometrically and
candidates accepted by exact thinning. The result is sample-for-sample
equivalent to the literal per-step Bernoulli process (up to the single-
jump-per-step approximation, whose error is O((sum lambda dt)^2)).

deltas are stored in the frame of the last sync step s0 (their value at
s0), so advancing time costs nothing; jumps update one entry in frame
coordinates (divide by the current x), detections and block boundaries
resynchronize everything exactly. Positions follow exact OU transitions
every pos_stride steps.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_P_LIMIT = 1
STATUS_OVERFLOW = 2


@njit(cache=True)
def _quad(a, b, c, x):
    v = a + x * (b + x * c)
    return v if v > 0.0 else 0.0


@njit(cache=True)
def run_trajectory(
    seed,
    u_modes,        # (M, N) complex128 mode amplitudes
    gamma,
    eps_ss,
    k_mag,
    sigma_r,
    dt,
    n_steps,
    pos_stride,
    det_scale,      # detection_gain * gamma * dt
    pdecay,         # OU decay over one position block
    pnoise,         # OU innovation std over one position block
    splitter,
    p_limit,
    out_steps,
    out_ch,
):
    np.random.seed(seed)
    m_modes, n_em = u_modes.shape
    cap = out_steps.shape[0]
    half_gdt = 0.5 * gamma * dt
    jump_scale = gamma * dt

    pos = np.empty(n_em)
    for i in range(n_em):
        pos[i] = sigma_r * np.random.standard_normal()

    cmat = np.empty((m_modes, n_em), dtype=np.complex128)
    s_inf = np.empty(m_modes, dtype=np.complex128)
    s_del = np.zeros(m_modes, dtype=np.complex128)
    delta = np.zeros(n_em, dtype=np.complex128)
    wv = np.empty(m_modes)

    d1 = 0.0 + 0.0j
    d2 = 0.0
    amp_bound = 0.0   # upper bound on max_i |delta_i| in frame coords

    # build coupling matrix and equilibrium field for current positions
    for m in range(m_modes):
        acc = 0.0 + 0.0j
        for i in range(n_em):
            ph = k_mag * pos[i]
            cmat[m, i] = u_modes[m, i] * complex(math.cos(ph), math.sin(ph))
            acc += cmat[m, i]
        s_inf[m] = eps_ss * acc

    a_eq = 0.0
    for m in range(m_modes):
        a_eq += det_scale * (s_inf[m].real ** 2 + s_inf[m].imag ** 2)
    max_p_eq = a_eq
    if a_eq > p_limit:
        return 0, 0, max_p_eq, 0.0, STATUS_P_LIMIT

    count = 0
    n_jumps = 0
    max_ident = 0.0
    status = STATUS_OK

    block_start = np.int64(0)
    while block_start < n_steps and status == STATUS_OK:
        block_end = block_start + pos_stride
        if block_end > n_steps:
            block_end = n_steps
        s = block_start   # last processed step; state synced at s0 == s
        s0 = block_start

        while s < block_end and status == STATUS_OK:
            # quadratic coefficients in x = exp(-half_gdt*(step - s0))
            det_a = 0.0
            det_b = 0.0
            det_c = 0.0
            for m in range(m_modes):
                det_a += s_inf[m].real ** 2 + s_inf[m].imag ** 2
                det_b += 2.0 * (
                    s_inf[m].real * s_del[m].real + s_inf[m].imag * s_del[m].imag
                )
                det_c += s_del[m].real ** 2 + s_del[m].imag ** 2
            det_a *= det_scale
            det_b *= det_scale
            det_c *= det_scale
            jmp_a = jump_scale * n_em * eps_ss * eps_ss
            jmp_b = jump_scale * 2.0 * eps_ss * d1.real
            jmp_c = jump_scale * d2

            x_hi = math.exp(-half_gdt * (s + 1 - s0))
            x_end = math.exp(-half_gdt * (block_end - s0))
            q = max(_quad(det_a, det_b, det_c, x_hi), _quad(det_a, det_b, det_c, x_end))
            q += max(_quad(jmp_a, jmp_b, jmp_c, x_hi), _quad(jmp_a, jmp_b, jmp_c, x_end))
            if q <= 0.0:
                s = block_end
                break
            if q > 1.0:
                q = 1.0
            log1mq = math.log1p(-q) if q < 1.0 else 0.0

            cursor = s
            event = False
            while True:  # candidate walk over (s, block_end]
                if q >= 1.0:
                    cursor += 1
                else:
                    skip = math.log(np.random.random()) / log1mq
                    if skip >= float(block_end - cursor):
                        cursor = block_end
                        break
                    cursor += np.int64(skip) + 1
                if cursor > block_end:
                    cursor = block_end
                    break
                x = math.exp(-half_gdt * (cursor - s0))
                p_j = _quad(jmp_a, jmp_b, jmp_c, x)
                if p_j > 1.0:
                    p_j = 1.0
                p_d = _quad(det_a, det_b, det_c, x)
                if p_d > 1.0:
                    p_d = 1.0
                r = np.random.random() * q

                if r < p_j:
                    # ---- local jump: one emitter resets to ground ----
                    # emitter picked by rejection against the amplitude bound
                    peak = eps_ss + amp_bound * x
                    lam_max = peak * peak
                    j = 0
                    while True:
                        j = np.int64(np.random.random() * n_em)
                        if j >= n_em:
                            j = n_em - 1
                        er = eps_ss + delta[j].real * x
                        ei = delta[j].imag * x
                        if np.random.random() * lam_max <= er * er + ei * ei:
                            break
                    old = delta[j]
                    new = -eps_ss / x
                    delta[j] = complex(new, 0.0)
                    d1 += delta[j] - old
                    d2 += (new * new) - (old.real**2 + old.imag**2)
                    if -new > amp_bound:
                        amp_bound = -new
                    for m in range(m_modes):
                        s_del[m] += cmat[m, j] * (delta[j] - old)
                    n_jumps += 1
                    # detection can still fire in the same step, post-jump
                    p_dp = 0.0
                    for m in range(m_modes):
                        sr = s_inf[m].real + s_del[m].real * x
                        si = s_inf[m].imag + s_del[m].imag * x
                        p_dp += sr * sr + si * si
                    p_dp *= det_scale
                    do_detect = np.random.random() < p_dp
                    event = True
                elif r < p_j + (1.0 - p_j) * p_d:
                    do_detect = True
                    event = True
                else:
                    continue

                if event and not do_detect:
                    # resync frame at the jump step to keep coefficients fresh
                    if cursor != s0:
                        for i in range(n_em):
                            delta[i] *= x
                        for m in range(m_modes):
                            s_del[m] *= x
                        d1 *= x
                        d2 *= x * x
                        amp_bound *= x
                        s0 = cursor
                    s = cursor
                    break

                # ---- collective detection at `cursor` ----
                if cursor != s0:
                    for i in range(n_em):
                        delta[i] *= x
                    for m in range(m_modes):
                        s_del[m] *= x
                    d1 *= x
                    d2 *= x * x
                    amp_bound *= x
                    s0 = cursor
                w_tot = 0.0
                for m in range(m_modes):
                    sr = s_inf[m].real + s_del[m].real
                    si = s_inf[m].imag + s_del[m].imag
                    wv[m] = sr * sr + si * si
                    w_tot += wv[m]
                if w_tot > 0.0:
                    pick = np.random.random() * w_tot
                    kappa = 0
                    acc_w = wv[0]
                    while acc_w < pick and kappa < m_modes - 1:
                        kappa += 1
                        acc_w += wv[kappa]
                    out_steps[count] = cursor
                    out_ch[count] = 0 if np.random.random() < splitter else 1
                    count += 1
                    # collapse on the detected mode
                    s_field = s_inf[kappa] + s_del[kappa]
                    sum_c2e2 = 0.0 + 0.0j
                    scale = 0.0
                    for i in range(n_em):
                        eps_i = eps_ss + delta[i]
                        ci = cmat[kappa, i]
                        term = ci * eps_i
                        scale += term.real**2 + term.imag**2
                        sum_c2e2 += term * term
                        eps_new = eps_i * (s_field - term) / s_field
                        delta[i] = eps_new - eps_ss
                    s_new = 0.0 + 0.0j
                    for i in range(n_em):
                        s_new += cmat[kappa, i] * (eps_ss + delta[i])
                    resid = abs(s_new * s_field - (s_field * s_field - sum_c2e2))
                    # cancellation scale: |S|^2 when the summed field is
                    # generic, sum |c_i eps_i|^2 when it nearly vanishes
                    denom = s_field.real**2 + s_field.imag**2
                    if scale > denom:
                        denom = scale
                    if denom > 0.0:
                        rel = resid / denom
                        if rel > max_ident:
                            max_ident = rel
                    # exact aggregate rebuild in the new frame
                    d1 = 0.0 + 0.0j
                    d2 = 0.0
                    amp_bound = 0.0
                    for i in range(n_em):
                        d1 += delta[i]
                        mag2 = delta[i].real ** 2 + delta[i].imag ** 2
                        d2 += mag2
                        mag = math.sqrt(mag2)
                        if mag > amp_bound:
                            amp_bound = mag
                    for m in range(m_modes):
                        acc = 0.0 + 0.0j
                        for i in range(n_em):
                            acc += cmat[m, i] * delta[i]
                        s_del[m] = acc
                    if count >= cap:
                        status = STATUS_OVERFLOW
                s = cursor
                break

            if not event:
                # the whole segment passed without an event
                s = block_end

        if status != STATUS_OK:
            break

        # ---- block boundary: settle frame, move positions, rebuild ----
        x_b = math.exp(-half_gdt * (block_end - s0))
        for i in range(n_em):
            delta[i] *= x_b
        d1 *= x_b
        d2 *= x_b * x_b
        amp_bound *= x_b
        if block_end < n_steps:
            for i in range(n_em):
                pos[i] = pos[i] * pdecay + pnoise * np.random.standard_normal()
            a_eq = 0.0
            for m in range(m_modes):
                acc = 0.0 + 0.0j
                accd = 0.0 + 0.0j
                for i in range(n_em):
                    ph = k_mag * pos[i]
                    cmat[m, i] = u_modes[m, i] * complex(math.cos(ph), math.sin(ph))
                    acc += cmat[m, i]
                    accd += cmat[m, i] * delta[i]
                s_inf[m] = eps_ss * acc
                s_del[m] = accd
                a_eq += det_scale * (s_inf[m].real ** 2 + s_inf[m].imag ** 2)
            if a_eq > max_p_eq:
                max_p_eq = a_eq
            if a_eq > p_limit:
                status = STATUS_P_LIMIT
        else:
            for m in range(m_modes):
                accd = 0.0 + 0.0j
                for i in range(n_em):
                    accd += cmat[m, i] * delta[i]
                s_del[m] = accd
        block_start = block_end

    return count, n_jumps, max_p_eq, max_ident, status


@njit(cache=True)
def dead_time_filter(ts, dead_ps):
    """Keep mask for sorted single-channel timestamps under dead time."""
    n = ts.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    last = np.int64(-1)
    for i in range(n):
        if last < 0 or ts[i] - last >= dead_ps:
            keep[i] = True
            last = ts[i]
    return keep
