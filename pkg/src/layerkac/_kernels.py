"""Compiled hot loops: heat-bath sweeps and Gray-code enumeration.

Everything here is deterministic given its inputs.  The enumeration walk is
split into index-range chunks whose partial results are combined by the caller
in fixed order, so thread count never changes the answer.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True)
def compute_hfield(spins, weights, h_periodic, margin_col, out):
    """Horizontal Kac field for every site, honoring the boundary decoration."""
    H, L = spins.shape
    R = weights.size
    for i in range(H):
        mc = margin_col[i]
        for x in range(L):
            h = 0.0
            for d in range(1, R):
                wd = weights[d]
                xr = x + d
                if xr < L:
                    h += wd * spins[i, xr]
                elif h_periodic:
                    h += wd * spins[i, xr % L]
                else:
                    h += wd * mc
                xl = x - d
                if xl >= 0:
                    h += wd * spins[i, xl]
                elif h_periodic:
                    h += wd * spins[i, xl % L]
                else:
                    h += wd * mc
            out[i, x] = h


@njit(cache=True)
def heat_bath_sweep_kernel(spins, hfield, weights, eps, beta, order, uniforms,
                           h_periodic, v_periodic, top_val, bottom_val):
    """One sweep in the given site order, resampling each spin from its
    conditional law and keeping the horizontal field cache incremental."""
    H, L = spins.shape
    R = weights.size
    flips = 0
    for t in range(order.size):
        s = order[t]
        i = s // L
        x = s - i * L
        iu = i + 1
        if iu >= H:
            up = spins[0, x] if v_periodic else top_val
        else:
            up = spins[iu, x]
        idn = i - 1
        if idn < 0:
            dn = spins[H - 1, x] if v_periodic else bottom_val
        else:
            dn = spins[idn, x]
        f = hfield[i, x] + eps * (up + dn)
        p = 0.5 * (1.0 + np.tanh(beta * f))
        new = np.int8(1) if uniforms[t] < p else np.int8(-1)
        if new != spins[i, x]:
            spins[i, x] = new
            flips += 1
            d2 = 2.0 * new
            for d in range(1, R):
                wd = weights[d]
                xr = x + d
                if xr < L:
                    hfield[i, xr] += d2 * wd
                elif h_periodic:
                    hfield[i, xr % L] += d2 * wd
                xl = x - d
                if xl >= 0:
                    hfield[i, xl] += d2 * wd
                elif h_periodic:
                    hfield[i, xl % L] += d2 * wd
    return flips


@njit(cache=True)
def _block_ok(bsum, length, target, m, z):
    avg = bsum / length
    if target == 1:
        return abs(avg - m) <= z
    if target == -1:
        return abs(avg + m) <= z
    return (abs(avg - m) > z) and (abs(avg + m) > z)


@njit(cache=True)
def _enum_chunk(K, h, e0, beta, block_of, base_sums, blk_len, blk_target,
                mbeta, zeta, j_start, j_end, e_shift, do_sum):
    """Walk Gray-code indices [j_start, j_end); bit b of the code means spin b
    is -1.  Returns (min admissible energy, shifted Boltzmann sum, count)."""
    n = h.size
    nblk = blk_len.size
    sigma = np.empty(n, np.int8)
    gray = j_start ^ (j_start >> 1)
    for a in range(n):
        sigma[a] = -1 if (gray >> a) & 1 else 1
    E = e0
    for a in range(n):
        E -= h[a] * sigma[a]
        for b in range(a + 1, n):
            E -= K[a, b] * sigma[a] * sigma[b]
    bsum = np.empty(nblk, np.int64)
    for k in range(nblk):
        bsum[k] = base_sums[k]
    for a in range(n):
        if block_of[a] >= 0:
            bsum[block_of[a]] += sigma[a]
    nfail = 0
    for k in range(nblk):
        if not _block_ok(bsum[k], blk_len[k], blk_target[k], mbeta, zeta):
            nfail += 1

    best = np.inf
    cnt = 0
    ssum = 0.0
    comp = 0.0  # Kahan compensation
    if nfail == 0:
        cnt = 1
        best = E
        if do_sum:
            term = np.exp(-beta * (E - e_shift))
            y = term - comp
            t = ssum + y
            comp = (t - ssum) - y
            ssum = t
    for j in range(j_start + 1, j_end):
        b = 0
        jj = j
        while jj & 1 == 0:
            jj >>= 1
            b += 1
        old = sigma[b]
        f = h[b]
        for c in range(n):
            f += K[b, c] * sigma[c]
        E += 2.0 * old * f
        sigma[b] = -old
        kb = block_of[b]
        if kb >= 0:
            ok_before = _block_ok(bsum[kb], blk_len[kb], blk_target[kb], mbeta, zeta)
            bsum[kb] += 2 * sigma[b]
            ok_after = _block_ok(bsum[kb], blk_len[kb], blk_target[kb], mbeta, zeta)
            if ok_before and not ok_after:
                nfail += 1
            elif ok_after and not ok_before:
                nfail -= 1
        if nfail == 0:
            cnt += 1
            if E < best:
                best = E
            if do_sum:
                term = np.exp(-beta * (E - e_shift))
                y = term - comp
                t = ssum + y
                comp = (t - ssum) - y
                ssum = t
    return best, ssum, cnt


@njit(cache=True, parallel=True)
def enum_pass(K, h, e0, beta, block_of, base_sums, blk_len, blk_target,
              mbeta, zeta, n_chunks, e_shift, do_sum):
    """Chunked Gray-code pass; per-chunk partials land in fixed slots."""
    n = h.size
    total = np.int64(1) << n
    step = total // n_chunks
    mins = np.empty(n_chunks)
    sums = np.empty(n_chunks)
    cnts = np.empty(n_chunks, np.int64)
    for c in prange(n_chunks):
        j0 = c * step
        j1 = total if c == n_chunks - 1 else (c + 1) * step
        m, s, k = _enum_chunk(K, h, e0, beta, block_of, base_sums, blk_len,
                              blk_target, mbeta, zeta, j0, j1, e_shift, do_sum)
        mins[c] = m
        sums[c] = s
        cnts[c] = k
    return mins, sums, cnts
