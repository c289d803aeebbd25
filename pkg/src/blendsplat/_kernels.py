"""JIT-compiled tile compositing kernels.

Tiles are pure scheduling: a splat contributes to a pixel iff the pixel
center lies inside its radius circle, so the rendered image is independent
of the tile size. Each prange iteration owns one tile; every buffer row it
writes (pixels of the tile, entries binned to the tile) is touched by no
other tile, which keeps results bit-identical for any thread count.

The backward kernel revisits each pixel's composited splats back-to-front,
rebuilding transmittance from the stored final value, so no per-pixel
contributor lists are kept.
"""

import numpy as np
from numba import njit, prange

ALPHA_MIN = 1.0 / 255.0
ALPHA_MAX = 0.99
T_CUTOFF = 1e-4


@njit(cache=True, parallel=True)
def composite_forward(
    tile_offsets, entry_slot, n_tiles_x, tile_size,
    mu2d, conic, rgb, alpha, radius2,
    bg, width, height,
    out_img, out_T, out_nexam, out_ncomp, entry_max_alpha,
):
    n_tiles = tile_offsets.shape[0] - 1
    for t in prange(n_tiles):
        ty = t // n_tiles_x
        tx = t - ty * n_tiles_x
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        s = tile_offsets[t]
        e = tile_offsets[t + 1]
        for py in range(y0, y1):
            pyf = py + 0.5
            for px in range(x0, x1):
                pxf = px + 0.5
                T = 1.0
                cr = 0.0
                cg = 0.0
                cb = 0.0
                n_exam = 0
                n_comp = 0
                for i in range(s, e):
                    j = entry_slot[i]
                    dx = pxf - mu2d[j, 0]
                    dy = pyf - mu2d[j, 1]
                    if dx * dx + dy * dy > radius2[j]:
                        continue
                    power = -0.5 * (conic[j, 0] * dx * dx + conic[j, 2] * dy * dy) - conic[j, 1] * dx * dy
                    if power > 0.0:
                        continue
                    a_eff = alpha[j] * np.exp(power)
                    if a_eff < ALPHA_MIN:
                        continue
                    if a_eff > ALPHA_MAX:
                        a_eff = ALPHA_MAX
                    cr += rgb[j, 0] * a_eff * T
                    cg += rgb[j, 1] * a_eff * T
                    cb += rgb[j, 2] * a_eff * T
                    if a_eff > entry_max_alpha[i]:
                        entry_max_alpha[i] = a_eff
                    T *= 1.0 - a_eff
                    n_exam = i - s + 1
                    n_comp += 1
                    if T < T_CUTOFF:
                        break
                out_img[py, px, 0] = cr + bg[0] * T
                out_img[py, px, 1] = cg + bg[1] * T
                out_img[py, px, 2] = cb + bg[2] * T
                out_T[py, px] = T
                out_nexam[py, px] = n_exam
                out_ncomp[py, px] = n_comp


@njit(cache=True, parallel=True)
def composite_backward(
    tile_offsets, entry_slot, n_tiles_x, tile_size,
    mu2d, conic, rgb, alpha, radius2,
    bg, width, height,
    d_img, final_T, n_exam_buf,
    d_rgb, d_alpha, d_mu2d, d_conic,
):
    n_tiles = tile_offsets.shape[0] - 1
    for t in prange(n_tiles):
        ty = t // n_tiles_x
        tx = t - ty * n_tiles_x
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        s = tile_offsets[t]
        for py in range(y0, y1):
            pyf = py + 0.5
            for px in range(x0, x1):
                n = n_exam_buf[py, px]
                if n == 0:
                    continue
                dLr = d_img[py, px, 0]
                dLg = d_img[py, px, 1]
                dLb = d_img[py, px, 2]
                if dLr == 0.0 and dLg == 0.0 and dLb == 0.0:
                    continue
                pxf = px + 0.5
                T_cur = final_T[py, px]
                # suffix contribution (everything composited after entry i)
                Sr = bg[0] * T_cur
                Sg = bg[1] * T_cur
                Sb = bg[2] * T_cur
                for i in range(s + n - 1, s - 1, -1):
                    j = entry_slot[i]
                    dx = pxf - mu2d[j, 0]
                    dy = pyf - mu2d[j, 1]
                    if dx * dx + dy * dy > radius2[j]:
                        continue
                    power = -0.5 * (conic[j, 0] * dx * dx + conic[j, 2] * dy * dy) - conic[j, 1] * dx * dy
                    if power > 0.0:
                        continue
                    a_raw = alpha[j] * np.exp(power)
                    if a_raw < ALPHA_MIN:
                        continue
                    clamped = a_raw > ALPHA_MAX
                    a_eff = ALPHA_MAX if clamped else a_raw
                    one_minus = 1.0 - a_eff
                    T_before = T_cur / one_minus
                    w = a_eff * T_before
                    d_rgb[i, 0] += dLr * w
                    d_rgb[i, 1] += dLg * w
                    d_rgb[i, 2] += dLb * w
                    if not clamped:
                        d_aeff = (
                            dLr * (rgb[j, 0] * T_before - Sr / one_minus)
                            + dLg * (rgb[j, 1] * T_before - Sg / one_minus)
                            + dLb * (rgb[j, 2] * T_before - Sb / one_minus)
                        )
                        g = np.exp(power)
                        d_alpha[i] += d_aeff * g
                        d_power = d_aeff * a_raw
                        d_conic[i, 0] += d_power * (-0.5 * dx * dx)
                        d_conic[i, 1] += d_power * (-dx * dy)
                        d_conic[i, 2] += d_power * (-0.5 * dy * dy)
                        d_mu2d[i, 0] += d_power * (conic[j, 0] * dx + conic[j, 1] * dy)
                        d_mu2d[i, 1] += d_power * (conic[j, 2] * dy + conic[j, 1] * dx)
                    Sr += rgb[j, 0] * w
                    Sg += rgb[j, 1] * w
                    Sb += rgb[j, 2] * w
                    T_cur = T_before
