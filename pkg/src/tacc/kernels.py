"""JIT-compiled kernels: generic strided walkers for contraction and
permutation, the triple-loop GEMM, and the packed cache-blocked GEMM
drivers.

Summation order is part of every kernel's contract: each output element is
the p-ascending sum of products added to its initial value (0 or the prior
C value). kc blocks ascend, so a blocked run stores and reloads the same
partial sums a register accumulator would hold, and results are bitwise
equal to the plain triple loop whatever the blocking. The 4x8 kernel keeps
its 32 accumulators in scalar locals: numba holds scalars in registers but
heap-allocates small arrays, and the array form loses the 5x performance
floor while the register form clears it with ~70% headroom.

All kernels are cache=True so compiled code persists across processes.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True)
def contract_kernel(a, b, c, out_ext, k_ext, astr_o, bstr_o, cstr_o,
                    astr_k, bstr_k, alpha, beta):
    """Nested-loop contraction: out indices outer, contracted inner.

    a, b, c are flat buffers; *_ext / *str_* arrays are aligned with the out
    and contracted index lists. c[off] = beta * c[off] + alpha * sum.
    """
    n_out = out_ext.shape[0]
    n_k = k_ext.shape[0]
    total_out = 1
    for t in range(n_out):
        total_out *= out_ext[t]
    total_k = 1
    for t in range(n_k):
        total_k *= k_ext[t]
    oidx = np.zeros(n_out, np.int64)
    kidx = np.zeros(n_k, np.int64)
    for _ in range(total_out):
        aoff0 = 0
        boff0 = 0
        coff = 0
        for t in range(n_out):
            aoff0 += oidx[t] * astr_o[t]
            boff0 += oidx[t] * bstr_o[t]
            coff += oidx[t] * cstr_o[t]
        acc = 0.0
        for _ in range(total_k):
            ao = aoff0
            bo = boff0
            for t in range(n_k):
                ao += kidx[t] * astr_k[t]
                bo += kidx[t] * bstr_k[t]
            acc += a[ao] * b[bo]
            t = n_k - 1
            while t >= 0:
                kidx[t] += 1
                if kidx[t] < k_ext[t]:
                    break
                kidx[t] = 0
                t -= 1
        if beta == 0.0:
            c[coff] = alpha * acc
        else:
            c[coff] = beta * c[coff] + alpha * acc
        t = n_out - 1
        while t >= 0:
            oidx[t] += 1
            if oidx[t] < out_ext[t]:
                break
            oidx[t] = 0
            t -= 1


@njit(cache=True)
def permute_kernel(src, dst, ext, sstr, dstr, tile, alpha, accumulate):
    """Strided copy dst = [dst +] alpha * src walked in the given loop
    order; the last two loops are tiled by `tile` (tile >= extent degrades
    to the untiled walk)."""
    n_loops = ext.shape[0]
    if n_loops == 0:
        if accumulate:
            dst[0] = dst[0] + alpha * src[0]
        else:
            dst[0] = alpha * src[0]
        return
    if n_loops == 1:
        e0 = ext[0]
        s0 = sstr[0]
        d0 = dstr[0]
        for jb in range(0, e0, tile):
            je = min(jb + tile, e0)
            for j in range(jb, je):
                if accumulate:
                    dst[j * d0] = dst[j * d0] + alpha * src[j * s0]
                else:
                    dst[j * d0] = alpha * src[j * s0]
        return
    n_outer = n_loops - 2
    e1 = ext[n_loops - 2]
    e2 = ext[n_loops - 1]
    s1 = sstr[n_loops - 2]
    s2 = sstr[n_loops - 1]
    d1 = dstr[n_loops - 2]
    d2 = dstr[n_loops - 1]
    total_outer = 1
    for t in range(n_outer):
        total_outer *= ext[t]
    oidx = np.zeros(n_outer, np.int64)
    for _ in range(total_outer):
        so = 0
        do = 0
        for t in range(n_outer):
            so += oidx[t] * sstr[t]
            do += oidx[t] * dstr[t]
        for jb in range(0, e1, tile):
            je = min(jb + tile, e1)
            for kb in range(0, e2, tile):
                ke = min(kb + tile, e2)
                for j in range(jb, je):
                    sj = so + j * s1
                    dj = do + j * d1
                    if accumulate:
                        for k in range(kb, ke):
                            dst[dj + k * d2] = dst[dj + k * d2] + alpha * src[sj + k * s2]
                    else:
                        for k in range(kb, ke):
                            dst[dj + k * d2] = alpha * src[sj + k * s2]
        t = n_outer - 1
        while t >= 0:
            oidx[t] += 1
            if oidx[t] < ext[t]:
                break
            oidx[t] = 0
            t -= 1


@njit(cache=True)
def naive_gemm_kernel(a, b, c, accumulate):
    """i-j-p triple loop; the untiled baseline and the ablation reference."""
    m, kk = a.shape
    n = b.shape[1]
    for i in range(m):
        for j in range(n):
            acc = c[i, j] if accumulate else 0.0
            for p in range(kk):
                acc += a[i, p] * b[p, j]
            c[i, j] = acc


@njit(cache=True)
def micro_compute(apack, bpack, cblock, kc, accumulate):
    """Behavioral reference for one micro-tile: apack (mr, kc) times
    bpack (kc, nr) into cblock (mr, nr), p ascending."""
    mr = apack.shape[0]
    nr = bpack.shape[1]
    for i in range(mr):
        for j in range(nr):
            acc = cblock[i, j] if accumulate else 0.0
            for p in range(kc):
                acc += apack[i, p] * bpack[p, j]
            cblock[i, j] = acc


@njit(cache=True, inline="always")
def _kernel_4x8(apack, bpack, c, i0, j0, kc, accumulate):
    # apack (kc, 4) and bpack (kc, 8) are p-major packed micro panels
    if accumulate:
        c00 = c[i0, j0]; c01 = c[i0, j0 + 1]; c02 = c[i0, j0 + 2]; c03 = c[i0, j0 + 3]
        c04 = c[i0, j0 + 4]; c05 = c[i0, j0 + 5]; c06 = c[i0, j0 + 6]; c07 = c[i0, j0 + 7]
        c10 = c[i0 + 1, j0]; c11 = c[i0 + 1, j0 + 1]; c12 = c[i0 + 1, j0 + 2]; c13 = c[i0 + 1, j0 + 3]
        c14 = c[i0 + 1, j0 + 4]; c15 = c[i0 + 1, j0 + 5]; c16 = c[i0 + 1, j0 + 6]; c17 = c[i0 + 1, j0 + 7]
        c20 = c[i0 + 2, j0]; c21 = c[i0 + 2, j0 + 1]; c22 = c[i0 + 2, j0 + 2]; c23 = c[i0 + 2, j0 + 3]
        c24 = c[i0 + 2, j0 + 4]; c25 = c[i0 + 2, j0 + 5]; c26 = c[i0 + 2, j0 + 6]; c27 = c[i0 + 2, j0 + 7]
        c30 = c[i0 + 3, j0]; c31 = c[i0 + 3, j0 + 1]; c32 = c[i0 + 3, j0 + 2]; c33 = c[i0 + 3, j0 + 3]
        c34 = c[i0 + 3, j0 + 4]; c35 = c[i0 + 3, j0 + 5]; c36 = c[i0 + 3, j0 + 6]; c37 = c[i0 + 3, j0 + 7]
    else:
        c00 = 0.0; c01 = 0.0; c02 = 0.0; c03 = 0.0; c04 = 0.0; c05 = 0.0; c06 = 0.0; c07 = 0.0
        c10 = 0.0; c11 = 0.0; c12 = 0.0; c13 = 0.0; c14 = 0.0; c15 = 0.0; c16 = 0.0; c17 = 0.0
        c20 = 0.0; c21 = 0.0; c22 = 0.0; c23 = 0.0; c24 = 0.0; c25 = 0.0; c26 = 0.0; c27 = 0.0
        c30 = 0.0; c31 = 0.0; c32 = 0.0; c33 = 0.0; c34 = 0.0; c35 = 0.0; c36 = 0.0; c37 = 0.0
    for p in range(kc):
        b0 = bpack[p, 0]; b1 = bpack[p, 1]; b2 = bpack[p, 2]; b3 = bpack[p, 3]
        b4 = bpack[p, 4]; b5 = bpack[p, 5]; b6 = bpack[p, 6]; b7 = bpack[p, 7]
        a0 = apack[p, 0]
        c00 += a0 * b0; c01 += a0 * b1; c02 += a0 * b2; c03 += a0 * b3
        c04 += a0 * b4; c05 += a0 * b5; c06 += a0 * b6; c07 += a0 * b7
        a1 = apack[p, 1]
        c10 += a1 * b0; c11 += a1 * b1; c12 += a1 * b2; c13 += a1 * b3
        c14 += a1 * b4; c15 += a1 * b5; c16 += a1 * b6; c17 += a1 * b7
        a2 = apack[p, 2]
        c20 += a2 * b0; c21 += a2 * b1; c22 += a2 * b2; c23 += a2 * b3
        c24 += a2 * b4; c25 += a2 * b5; c26 += a2 * b6; c27 += a2 * b7
        a3 = apack[p, 3]
        c30 += a3 * b0; c31 += a3 * b1; c32 += a3 * b2; c33 += a3 * b3
        c34 += a3 * b4; c35 += a3 * b5; c36 += a3 * b6; c37 += a3 * b7
    c[i0, j0] = c00; c[i0, j0 + 1] = c01; c[i0, j0 + 2] = c02; c[i0, j0 + 3] = c03
    c[i0, j0 + 4] = c04; c[i0, j0 + 5] = c05; c[i0, j0 + 6] = c06; c[i0, j0 + 7] = c07
    c[i0 + 1, j0] = c10; c[i0 + 1, j0 + 1] = c11; c[i0 + 1, j0 + 2] = c12; c[i0 + 1, j0 + 3] = c13
    c[i0 + 1, j0 + 4] = c14; c[i0 + 1, j0 + 5] = c15; c[i0 + 1, j0 + 6] = c16; c[i0 + 1, j0 + 7] = c17
    c[i0 + 2, j0] = c20; c[i0 + 2, j0 + 1] = c21; c[i0 + 2, j0 + 2] = c22; c[i0 + 2, j0 + 3] = c23
    c[i0 + 2, j0 + 4] = c24; c[i0 + 2, j0 + 5] = c25; c[i0 + 2, j0 + 6] = c26; c[i0 + 2, j0 + 7] = c27
    c[i0 + 3, j0] = c30; c[i0 + 3, j0 + 1] = c31; c[i0 + 3, j0 + 2] = c32; c[i0 + 3, j0 + 3] = c33
    c[i0 + 3, j0 + 4] = c34; c[i0 + 3, j0 + 5] = c35; c[i0 + 3, j0 + 6] = c36; c[i0 + 3, j0 + 7] = c37


@njit(cache=True, inline="always")
def _kernel_edge(apack, bpack, c, i0, j0, kc, m_eff, n_eff, accumulate):
    # bounded fringe path, same per-element summation order as _kernel_4x8
    for i in range(m_eff):
        for j in range(n_eff):
            acc = c[i0 + i, j0 + j] if accumulate else 0.0
            for p in range(kc):
                acc += apack[p, i] * bpack[p, j]
            c[i0 + i, j0 + j] = acc


@njit(cache=True)
def _pack_a(a, ic, pc, mc_eff, kc_eff, mr, apack):
    # p-major (kc, mr) micro panels, zero-padded to full mr rows
    nmicro = (mc_eff + mr - 1) // mr
    for blk in range(nmicro):
        i0 = blk * mr
        rows = min(mr, mc_eff - i0)
        for p in range(kc_eff):
            for i in range(rows):
                apack[blk, p, i] = a[ic + i0 + i, pc + p]
            for i in range(rows, mr):
                apack[blk, p, i] = 0.0


@njit(cache=True)
def _pack_b(b, pc, jc, kc_eff, nc_eff, nr, bpack):
    nmicro = (nc_eff + nr - 1) // nr
    for blk in range(nmicro):
        j0 = blk * nr
        cols = min(nr, nc_eff - j0)
        for p in range(kc_eff):
            for j in range(cols):
                bpack[blk, p, j] = b[pc + p, jc + j0 + j]
            for j in range(cols, nr):
                bpack[blk, p, j] = 0.0


@njit(cache=True)
def tiled_gemm_ref(a, b, c, mc, nc, kc, accumulate):
    """Blocked GEMM (nc, kc, mc loops), packed panels, 4x8 register kernel."""
    mr = 4
    nr = 8
    m, k = a.shape
    n = b.shape[1]
    bpack = np.empty(((nc + nr - 1) // nr, kc, nr))
    apack = np.empty(((mc + mr - 1) // mr, kc, mr))
    for jc in range(0, n, nc):
        nc_eff = min(nc, n - jc)
        for pc in range(0, k, kc):
            kc_eff = min(kc, k - pc)
            _pack_b(b, pc, jc, kc_eff, nc_eff, nr, bpack)
            acc_block = accumulate or pc > 0
            for ic in range(0, m, mc):
                mc_eff = min(mc, m - ic)
                _pack_a(a, ic, pc, mc_eff, kc_eff, mr, apack)
                for jr in range(0, nc_eff, nr):
                    n_eff = min(nr, nc_eff - jr)
                    jblk = jr // nr
                    for ir in range(0, mc_eff, mr):
                        m_eff = min(mr, mc_eff - ir)
                        if m_eff == mr and n_eff == nr:
                            _kernel_4x8(apack[ir // mr], bpack[jblk], c,
                                        ic + ir, jc + jr, kc_eff, acc_block)
                        else:
                            _kernel_edge(apack[ir // mr], bpack[jblk], c,
                                         ic + ir, jc + jr, kc_eff,
                                         m_eff, n_eff, acc_block)


@njit(cache=True, parallel=True)
def tiled_gemm_ref_par(a, b, c, mc, nc, kc, accumulate):
    """Parallel variant: mc blocks run concurrently, writing disjoint C
    rows; each C element still sees the same kc-ascending update order, so
    results are bitwise identical to the serial driver."""
    mr = 4
    nr = 8
    m, k = a.shape
    n = b.shape[1]
    bpack = np.empty(((nc + nr - 1) // nr, kc, nr))
    n_mc = (m + mc - 1) // mc
    for jc in range(0, n, nc):
        nc_eff = min(nc, n - jc)
        for pc in range(0, k, kc):
            kc_eff = min(kc, k - pc)
            _pack_b(b, pc, jc, kc_eff, nc_eff, nr, bpack)
            acc_block = accumulate or pc > 0
            for icb in prange(n_mc):
                ic = icb * mc
                mc_eff = min(mc, m - ic)
                apack = np.empty(((mc + mr - 1) // mr, kc, mr))
                _pack_a(a, ic, pc, mc_eff, kc_eff, mr, apack)
                for jr in range(0, nc_eff, nr):
                    n_eff = min(nr, nc_eff - jr)
                    jblk = jr // nr
                    for ir in range(0, mc_eff, mr):
                        m_eff = min(mr, mc_eff - ir)
                        if m_eff == mr and n_eff == nr:
                            _kernel_4x8(apack[ir // mr], bpack[jblk], c,
                                        ic + ir, jc + jr, kc_eff, acc_block)
                        else:
                            _kernel_edge(apack[ir // mr], bpack[jblk], c,
                                         ic + ir, jc + jr, kc_eff,
                                         m_eff, n_eff, acc_block)


@njit(cache=True)
def tiled_gemm_scalar(a, b, c, mc, nc, kc, mr, nr, accumulate):
    """Same blocking and packing, but every micro-tile runs the bounded
    per-element path: cache behavior of tiling without register blocking."""
    m, k = a.shape
    n = b.shape[1]
    bpack = np.empty(((nc + nr - 1) // nr, kc, nr))
    apack = np.empty(((mc + mr - 1) // mr, kc, mr))
    for jc in range(0, n, nc):
        nc_eff = min(nc, n - jc)
        for pc in range(0, k, kc):
            kc_eff = min(kc, k - pc)
            _pack_b(b, pc, jc, kc_eff, nc_eff, nr, bpack)
            acc_block = accumulate or pc > 0
            for ic in range(0, m, mc):
                mc_eff = min(mc, m - ic)
                _pack_a(a, ic, pc, mc_eff, kc_eff, mr, apack)
                for jr in range(0, nc_eff, nr):
                    n_eff = min(nr, nc_eff - jr)
                    jblk = jr // nr
                    for ir in range(0, mc_eff, mr):
                        m_eff = min(mr, mc_eff - ir)
                        _kernel_edge(apack[ir // mr], bpack[jblk], c,
                                     ic + ir, jc + jr, kc_eff,
                                     m_eff, n_eff, acc_block)


_warmed = False


def warmup() -> None:
    """Compile every kernel once on tiny inputs (cached across processes)."""
    global _warmed
    if _warmed:
        return
    a = np.ones((5, 3))
    b = np.ones((3, 9))
    c = np.zeros((5, 9))
    naive_gemm_kernel(a, b, c, False)
    tiled_gemm_ref(a, b, c, 4, 8, 2, True)
    tiled_gemm_ref_par(a, b, c, 4, 8, 2, True)
    tiled_gemm_scalar(a, b, c, 4, 8, 2, 4, 8, True)
    micro_compute(np.ones((4, 2)), np.ones((2, 8)), np.zeros((4, 8)), 2, False)
    one = np.ones(4)
    out = np.zeros(4)
    ext = np.array([2, 2], np.int64)
    st = np.array([2, 1], np.int64)
    permute_kernel(one, out, ext, st, st, 32, 1.0, False)
    permute_kernel(one, out, ext, st, st, 32, 1.0, True)
    contract_kernel(one, one, out,
                    np.array([2], np.int64), np.array([2], np.int64),
                    np.array([2], np.int64), np.array([0], np.int64),
                    np.array([1], np.int64), np.array([1], np.int64),
                    np.array([2], np.int64), 1.0, 0.0)
    _warmed = True
