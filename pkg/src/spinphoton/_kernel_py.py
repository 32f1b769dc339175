"""Pure-Python shot executor (fallback lane).

Runs the same instruction tables as the compiled kernel with identical
arithmetic: the same counter-addressed draws, the same operation order in
every inner loop, and only real-valued divisors, so the two lanes return
bit-identical records.  Roughly two orders of magnitude slower than the
compiled lane; selected automatically when the extension is unavailable.
"""

from __future__ import annotations

import math

from .program import OP_DETECT, OP_EMIT, OP_FLIP, OP_READOUT, OP_UNITARY, ShotProgram
from . import rng as _r

LANE = "python"


def _matvec(m, v, dim):
    out = [0j] * dim
    for i in range(dim):
        acc = 0j
        row = m[i]
        for j in range(dim):
            acc += row[j] * v[j]
        out[i] = acc
    return out


def run_batch(prog: ShotProgram, seed: int, shot0: int, n_shots: int, delta, out):
    """Execute n_shots trajectories; fills the record arrays in `out`.

    delta: per-shot optical detuning in Hz (length n_shots).
    out: dict of numpy arrays (herald, detector, abin, accidental, lost,
    spin_true, counts, inferred), each of length n_shots.
    """
    dim = prog.dim
    sdim = prog.spin_dim
    n_ins = len(prog.opcodes)
    mats = [[[complex(prog.mats[k, i, j]) for j in range(dim)] for i in range(dim)]
            for k in range(prog.mats.shape[0])]
    init = [complex(x) for x in prog.init_state]
    opcodes = prog.opcodes
    addrs = prog.addrs
    matidx = prog.matidx
    fp = prog.fparams
    ip = prog.iparams
    esrc = prog.emit_src
    edst = prog.emit_dst
    proj = prog.proj_idx

    o_her = out["herald"]
    o_det = out["detector"]
    o_bin = out["abin"]
    o_acc = out["accidental"]
    o_lost = out["lost"]
    o_true = out["spin_true"]
    o_cnt = out["counts"]
    o_inf = out["inferred"]

    for s in range(n_shots):
        g = shot0 + s
        dlt = float(delta[s])
        state = list(init)
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
            if op == OP_UNITARY:
                state = _matvec(mats[matidx[k]], state, dim)
            elif op == OP_FLIP:
                if _r.uniform(seed, _r.STREAM_SHOT, g, int(addrs[k])) < fp[k, 0]:
                    state = _matvec(mats[matidx[k]], state, dim)
            elif op == OP_EMIT:
                eta = fp[k, 0]
                s_amp = fp[k, 1]
                tau = fp[k, 2]
                off = int(ip[k, 0])
                cnt = int(ip[k, 1])
                ph_bin = int(ip[k, 2])
                theta = 2.0 * math.pi * dlt * tau
                phz = complex(math.cos(theta), math.sin(theta))
                c_amp = math.sqrt(max(0.0, 1.0 - s_amp * s_amp))
                w = 0.0
                for t in range(cnt):
                    a = state[esrc[off + t]]
                    w += a.real * a.real + a.imag * a.imag
                    state[edst[off + t]] = a * s_amp * phz
                    state[esrc[off + t]] = a * c_amp
                p_lost = (1.0 - eta) * s_amp * s_amp * w
                u = _r.uniform(seed, _r.STREAM_SHOT, g, int(addrs[k]))
                if p_lost > 0.0 and u < p_lost:
                    norm = s_amp * math.sqrt(w)
                    vals = [state[edst[off + t]] / norm for t in range(cnt)]
                    state = [0j] * dim
                    for t in range(cnt):
                        state[edst[off + t] - ph_bin + 3] = vals[t]
                    lost |= 1 if ph_bin == 1 else 2
                else:
                    se = math.sqrt(eta)
                    for t in range(cnt):
                        state[edst[off + t]] = state[edst[off + t]] * se
                    if p_lost > 0.0:
                        norm = math.sqrt(1.0 - p_lost)
                        for i in range(dim):
                            state[i] = state[i] / norm
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

                u_e = _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_ROUTE_EARLY)
                u_l = _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_ROUTE_LATE)
                arm_e = 1 if u_e < p_el else 0  # 1 = long
                arm_l = 0 if u_l < p_ls else 1
                bin_e = 2 if arm_e == 1 else 1
                bin_l = 2 if arm_l == 0 else 3
                jn = _r.normal(seed, _r.STREAM_SHOT, g, _r.ADDR_PHASE_N1)
                phase = phi + sigma * jn
                matched = _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_OVERLAP) < mu
                u = _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_CLICK)

                clicked = 0
                if bin_e == 2 and bin_l == 2 and matched:
                    cph = complex(math.cos(phase), math.sin(phase))
                    inv_sqrt2 = 1.0 / math.sqrt(2.0)
                    a1 = [0j] * sdim
                    a2 = [0j] * sdim
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
                        detector, abin, clicked = 1, 2, 1
                        nrm = math.sqrt(p1)
                        state = [0j] * dim
                        for sp in range(sdim):
                            state[sp * 4] = a1[sp] / nrm
                    elif u < p1 + p2:
                        detector, abin, clicked = 2, 2, 1
                        nrm = math.sqrt(p2)
                        state = [0j] * dim
                        for sp in range(sdim):
                            state[sp * 4] = a2[sp] / nrm
                else:
                    acc = 0.0
                    for w_seg, d_seg, b_seg, lev in (
                        (w_e / 2.0, 1, bin_e, 1),
                        (w_e / 2.0, 2, bin_e, 1),
                        (w_l / 2.0, 1, bin_l, 2),
                        (w_l / 2.0, 2, bin_l, 2),
                    ):
                        if u < acc + w_seg:
                            detector, abin, clicked = d_seg, b_seg, 1
                            wv = w_e if lev == 1 else w_l
                            nrm = math.sqrt(wv)
                            vals = [state[sp * 4 + lev] / nrm for sp in range(sdim)]
                            state = [0j] * dim
                            for sp in range(sdim):
                                state[sp * 4] = vals[sp]
                            break
                        acc += w_seg

                if not clicked:
                    n2 = 1.0 - w_e - w_l
                    if n2 > 1e-24:
                        nrm = math.sqrt(n2)
                        for sp in range(sdim):
                            state[sp * 4 + 1] = 0j
                            state[sp * 4 + 2] = 0j
                        for i in range(dim):
                            state[i] = state[i] / nrm
                    if p_leak > 0.0 and _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_LEAK) < p_leak:
                        u_lr = _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_LEAK_ROUTE)
                        u_pl = _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_DARK_PLACE)
                        if u_lr < 0.5:
                            u2 = 2.0 * u_lr
                            abin = 2 if u2 < p_el else 1
                        else:
                            u2 = 2.0 * u_lr - 1.0
                            abin = 2 if u2 < p_ls else 3
                        detector = 1 if u_pl < 0.5 else 2
                        acc_type = 2
                    elif p_dark > 0.0 and _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_DARK) < p_dark:
                        cell = int(_r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_DARK_PLACE) * 6.0)
                        if cell > 5:
                            cell = 5
                        detector = 1 + (cell % 2)
                        abin = 1 + (cell // 2)
                        acc_type = 1
                herald = 1 if detector != 0 else 0
            elif op == OP_READOUT:
                if herald:
                    lam_b = fp[k, 0]
                    lam_d = fp[k, 1]
                    thr = int(ip[k, 0])
                    pcnt = int(ip[k, 2])
                    p0 = 0.0
                    for t in range(pcnt):
                        a = state[proj[t]]
                        p0 += a.real * a.real + a.imag * a.imag
                    u_p = _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_READ_PROJ)
                    spin_true = 0 if u_p < p0 else 1
                    lam = lam_b if spin_true == 0 else lam_d
                    u_c = _r.uniform(seed, _r.STREAM_SHOT, g, _r.ADDR_READ_POIS)
                    counts = _r.poisson_inv(lam, u_c)
                    inferred = 0 if counts >= thr else 1

        o_her[s] = herald
        o_det[s] = detector
        o_bin[s] = abin
        o_acc[s] = acc_type
        o_lost[s] = lost
        o_true[s] = spin_true
        o_cnt[s] = counts
        o_inf[s] = inferred
