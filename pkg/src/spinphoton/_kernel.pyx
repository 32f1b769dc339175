# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled shot executor (hot lane).

Mirrors _kernel_py.run_batch operation-for-operation: identical
counter-addressed draws, identical inner-loop arithmetic order, real-only
divisors.  Outputs are bit-identical to the pure-Python lane.
"""

import numpy as np

from . import program as _program

from libc.math cimport sqrt, log, cos, sin, exp, pi

cdef int OP_UNITARY = 0
cdef int OP_FLIP = 1
cdef int OP_EMIT = 2
cdef int OP_DETECT = 3
cdef int OP_READOUT = 4

assert (_program.OP_UNITARY, _program.OP_FLIP, _program.OP_EMIT,
        _program.OP_DETECT, _program.OP_READOUT) == (0, 1, 2, 3, 4)

LANE = "compiled"

ctypedef unsigned long long u64

cdef u64 MASK64 = <u64>0xFFFFFFFFFFFFFFFF
cdef u64 GOLDEN = <u64>0x9E3779B97F4A7C15
cdef double INV_2_53 = 1.0 / 9007199254740992.0

# draw addresses; values match spinphoton.rng
cdef int ADDR_ROUTE_EARLY = 7
cdef int ADDR_ROUTE_LATE = 8
cdef int ADDR_PHASE_N1 = 3
cdef int ADDR_OVERLAP = 9
cdef int ADDR_CLICK = 10
cdef int ADDR_DARK = 11
cdef int ADDR_DARK_PLACE = 12
cdef int ADDR_LEAK = 13
cdef int ADDR_LEAK_ROUTE = 14
cdef int ADDR_READ_PROJ = 15
cdef int ADDR_READ_POIS = 16

cdef int STREAM_SHOT = 0


cdef inline double complex c_make(double re, double im) noexcept nogil:
    return re + im * 1j


cdef inline u64 _mix(u64 z) noexcept nogil:
    z ^= z >> 30
    z = z * <u64>0xBF58476D1CE4E5B9
    z ^= z >> 27
    z = z * <u64>0x94D049BB133111EB
    z ^= z >> 31
    return z


cdef inline u64 draw_u64(u64 seed, u64 stream, u64 index, u64 counter) noexcept nogil:
    cdef u64 z = _mix(seed + GOLDEN * (stream + 1))
    z = _mix(z + GOLDEN * (index + 1))
    z = _mix(z + GOLDEN * (counter + 1))
    return z


cdef inline double uniform(u64 seed, u64 stream, u64 index, u64 counter) noexcept nogil:
    return <double>(draw_u64(seed, stream, index, counter) >> 11) * INV_2_53


cdef inline double normal(u64 seed, u64 stream, u64 index, u64 counter) noexcept nogil:
    cdef double u1 = uniform(seed, stream, index, counter)
    cdef double u2 = uniform(seed, stream, index, counter + 1)
    return sqrt(-2.0 * log(1.0 - u1)) * cos(2.0 * pi * u2)


cdef inline long poisson_inv(double lam, double u) noexcept nogil:
    cdef double p, cum
    cdef long k = 0
    if lam <= 0.0:
        return 0
    p = exp(-lam)
    cum = p
    while u > cum and k < 100000:
        k += 1
        p *= lam / k
        cum += p
    return k


def run_batch(prog, seed, shot0, n_shots, delta, out):
    """Same contract as spinphoton._kernel_py.run_batch."""
    cdef int dim = prog.dim
    cdef int sdim = prog.spin_dim
    if dim > 64 or sdim > 16:
        raise ValueError("register too large for the compiled kernel")

    cdef const int[::1] opcodes = np.ascontiguousarray(prog.opcodes, dtype=np.int32)
    cdef const int[::1] addrs = np.ascontiguousarray(prog.addrs, dtype=np.int32)
    cdef const int[::1] matidx = np.ascontiguousarray(prog.matidx, dtype=np.int32)
    cdef const double[:, ::1] fp = np.ascontiguousarray(prog.fparams, dtype=np.float64)
    cdef const int[:, ::1] ip = np.ascontiguousarray(prog.iparams, dtype=np.int32)
    cdef double complex[:, :, ::1] mats = np.ascontiguousarray(prog.mats, dtype=np.complex128)
    cdef const int[::1] esrc = np.ascontiguousarray(prog.emit_src, dtype=np.int32)
    cdef const int[::1] edst = np.ascontiguousarray(prog.emit_dst, dtype=np.int32)
    cdef const int[::1] proj = np.ascontiguousarray(prog.proj_idx, dtype=np.int32)
    cdef double complex[::1] init = np.ascontiguousarray(prog.init_state, dtype=np.complex128)
    cdef const double[::1] dview = np.ascontiguousarray(delta, dtype=np.float64)

    cdef unsigned char[::1] o_her = out["herald"]
    cdef signed char[::1] o_det = out["detector"]
    cdef signed char[::1] o_bin = out["abin"]
    cdef signed char[::1] o_acc = out["accidental"]
    cdef signed char[::1] o_lost = out["lost"]
    cdef signed char[::1] o_true = out["spin_true"]
    cdef int[::1] o_cnt = out["counts"]
    cdef signed char[::1] o_inf = out["inferred"]

    cdef u64 cseed = <u64>seed
    cdef long cshot0 = shot0
    cdef long cn = n_shots
    cdef int n_ins = opcodes.shape[0]

    cdef double complex state[64]
    cdef double complex tmp[64]
    cdef double complex a1[16]
    cdef double complex a2[16]
    cdef double complex vals[16]

    cdef long s, g
    cdef int k, i, j, t, sp, op, off, cnt, ph_bin, thr, pcnt, cell
    cdef int herald, detector, abin, acc_type, lost, spin_true, inferred
    cdef long counts
    cdef int arm_e, arm_l, bin_e, bin_l, clicked, lev
    cdef double dlt, eta, s_amp, tau, theta, c_amp, w, p_lost, u, se, nrm
    cdef double p_el, p_ls, mu, p_dark, phi, sigma, p_leak
    cdef double w_e, w_l, u_e, u_l, jn, phase, p1, p2, n2
    cdef double lam_b, lam_d, lam, p0, u_p, u_c, u_lr, u_pl, u2
    cdef double acc_w, w_seg, inv_sqrt2
    cdef double complex a, phz, cph, cl, ce, v1, v2
    cdef int matched
    cdef int d_seg, b_seg

    inv_sqrt2 = 1.0 / sqrt(2.0)

    with nogil:
        for s in range(cn):
            g = cshot0 + s
            dlt = dview[s]
            for i in range(dim):
                state[i] = init[i]
            herald = 0
            detector = 0
            abin = 0
            acc_type = 0
            lost = 0
            spin_true = -1
            counts = -1
            inferred = -1

            for k in range(n_ins):
                op = opcodes[k]
                if op == OP_UNITARY or op == OP_FLIP:
                    if op == OP_FLIP:
                        if uniform(cseed, STREAM_SHOT, g, <u64>addrs[k]) >= fp[k, 0]:
                            continue
                    for i in range(dim):
                        a = 0
                        for j in range(dim):
                            a += mats[matidx[k], i, j] * state[j]
                        tmp[i] = a
                    for i in range(dim):
                        state[i] = tmp[i]
                elif op == OP_EMIT:
                    eta = fp[k, 0]
                    s_amp = fp[k, 1]
                    tau = fp[k, 2]
                    off = ip[k, 0]
                    cnt = ip[k, 1]
                    ph_bin = ip[k, 2]
                    theta = 2.0 * pi * dlt * tau
                    phz = c_make(cos(theta), sin(theta))
                    c_amp = sqrt(max(0.0, 1.0 - s_amp * s_amp))
                    w = 0.0
                    for t in range(cnt):
                        a = state[esrc[off + t]]
                        w += a.real * a.real + a.imag * a.imag
                        state[edst[off + t]] = a * s_amp * phz
                        state[esrc[off + t]] = a * c_amp
                    p_lost = (1.0 - eta) * s_amp * s_amp * w
                    u = uniform(cseed, STREAM_SHOT, g, <u64>addrs[k])
                    if p_lost > 0.0 and u < p_lost:
                        nrm = s_amp * sqrt(w)
                        for t in range(cnt):
                            vals[t] = state[edst[off + t]] / nrm
                        for i in range(dim):
                            state[i] = 0
                        for t in range(cnt):
                            state[edst[off + t] - ph_bin + 3] = vals[t]
                        lost |= 1 if ph_bin == 1 else 2
                    else:
                        se = sqrt(eta)
                        for t in range(cnt):
                            state[edst[off + t]] = state[edst[off + t]] * se
                        if p_lost > 0.0:
                            nrm = sqrt(1.0 - p_lost)
                            for i in range(dim):
                                state[i] = state[i] / nrm
                elif op == OP_DETECT:
                    p_el = fp[k, 0]
                    p_ls = fp[k, 1]
                    mu = fp[k, 2]
                    p_dark = fp[k, 3]
                    phi = fp[k, 4]
                    sigma = fp[k, 5]
                    p_leak = fp[k, 6]

                    w_e = 0.0
                    w_l = 0.0
                    for sp in range(sdim):
                        a = state[sp * 4 + 1]
                        w_e += a.real * a.real + a.imag * a.imag
                        a = state[sp * 4 + 2]
                        w_l += a.real * a.real + a.imag * a.imag

                    u_e = uniform(cseed, STREAM_SHOT, g, <u64>ADDR_ROUTE_EARLY)
                    u_l = uniform(cseed, STREAM_SHOT, g, <u64>ADDR_ROUTE_LATE)
                    arm_e = 1 if u_e < p_el else 0
                    arm_l = 0 if u_l < p_ls else 1
                    bin_e = 2 if arm_e == 1 else 1
                    bin_l = 2 if arm_l == 0 else 3
                    jn = normal(cseed, STREAM_SHOT, g, <u64>ADDR_PHASE_N1)
                    phase = phi + sigma * jn
                    matched = 1 if uniform(cseed, STREAM_SHOT, g, <u64>ADDR_OVERLAP) < mu else 0
                    u = uniform(cseed, STREAM_SHOT, g, <u64>ADDR_CLICK)

                    clicked = 0
                    if bin_e == 2 and bin_l == 2 and matched == 1:
                        cph = c_make(cos(phase), sin(phase))
                        p1 = 0.0
                        p2 = 0.0
                        for sp in range(sdim):
                            cl = state[sp * 4 + 2]
                            ce = state[sp * 4 + 1] * cph
                            v1 = (cl + ce) * inv_sqrt2
                            v2 = (cl - ce) * inv_sqrt2
                            a1[sp] = v1
                            a2[sp] = v2
                            p1 += v1.real * v1.real + v1.imag * v1.imag
                            p2 += v2.real * v2.real + v2.imag * v2.imag
                        if u < p1:
                            detector = 1
                            abin = 2
                            clicked = 1
                            nrm = sqrt(p1)
                            for i in range(dim):
                                state[i] = 0
                            for sp in range(sdim):
                                state[sp * 4] = a1[sp] / nrm
                        elif u < p1 + p2:
                            detector = 2
                            abin = 2
                            clicked = 1
                            nrm = sqrt(p2)
                            for i in range(dim):
                                state[i] = 0
                            for sp in range(sdim):
                                state[sp * 4] = a2[sp] / nrm
                    else:
                        acc_w = 0.0
                        for t in range(4):
                            if t < 2:
                                w_seg = w_e / 2.0
                                b_seg = bin_e
                                lev = 1
                            else:
                                w_seg = w_l / 2.0
                                b_seg = bin_l
                                lev = 2
                            d_seg = 1 if (t == 0 or t == 2) else 2
                            if u < acc_w + w_seg:
                                detector = d_seg
                                abin = b_seg
                                clicked = 1
                                nrm = sqrt(w_e if lev == 1 else w_l)
                                for sp in range(sdim):
                                    vals[sp] = state[sp * 4 + lev] / nrm
                                for i in range(dim):
                                    state[i] = 0
                                for sp in range(sdim):
                                    state[sp * 4] = vals[sp]
                                break
                            acc_w += w_seg

                    if clicked == 0:
                        n2 = 1.0 - w_e - w_l
                        if n2 > 1e-24:
                            nrm = sqrt(n2)
                            for sp in range(sdim):
                                state[sp * 4 + 1] = 0
                                state[sp * 4 + 2] = 0
                            for i in range(dim):
                                state[i] = state[i] / nrm
                        if p_leak > 0.0 and uniform(cseed, STREAM_SHOT, g, <u64>ADDR_LEAK) < p_leak:
                            u_lr = uniform(cseed, STREAM_SHOT, g, <u64>ADDR_LEAK_ROUTE)
                            u_pl = uniform(cseed, STREAM_SHOT, g, <u64>ADDR_DARK_PLACE)
                            if u_lr < 0.5:
                                u2 = 2.0 * u_lr
                                abin = 2 if u2 < p_el else 1
                            else:
                                u2 = 2.0 * u_lr - 1.0
                                abin = 2 if u2 < p_ls else 3
                            detector = 1 if u_pl < 0.5 else 2
                            acc_type = 2
                        elif p_dark > 0.0 and uniform(cseed, STREAM_SHOT, g, <u64>ADDR_DARK) < p_dark:
                            cell = <int>(uniform(cseed, STREAM_SHOT, g, <u64>ADDR_DARK_PLACE) * 6.0)
                            if cell > 5:
                                cell = 5
                            detector = 1 + (cell % 2)
                            abin = 1 + (cell // 2)
                            acc_type = 1
                    herald = 1 if detector != 0 else 0
                elif op == OP_READOUT:
                    if herald == 1:
                        lam_b = fp[k, 0]
                        lam_d = fp[k, 1]
                        thr = ip[k, 0]
                        pcnt = ip[k, 2]
                        p0 = 0.0
                        for t in range(pcnt):
                            a = state[proj[t]]
                            p0 += a.real * a.real + a.imag * a.imag
                        u_p = uniform(cseed, STREAM_SHOT, g, <u64>ADDR_READ_PROJ)
                        spin_true = 0 if u_p < p0 else 1
                        lam = lam_b if spin_true == 0 else lam_d
                        u_c = uniform(cseed, STREAM_SHOT, g, <u64>ADDR_READ_POIS)
                        counts = poisson_inv(lam, u_c)
                        inferred = 0 if counts >= thr else 1

            o_her[s] = <unsigned char>herald
            o_det[s] = <signed char>detector
            o_bin[s] = <signed char>abin
            o_acc[s] = <signed char>acc_type
            o_lost[s] = <signed char>lost
            o_true[s] = <signed char>spin_true
            o_cnt[s] = <int>counts
            o_inf[s] = <signed char>inferred
