"""Standalone scalar reference implementation of the image pipeline.

This is the independent oracle the vectorized kernels are checked against:
a straight sextuple loop over (slow, fast, sub-slow, sub-fast, mosaic
domain, wavelength sample) in pure Python floats.  It deliberately imports
nothing from the package -- the formulas are written out from scratch so a
bug in the production code cannot hide in a shared helper.
"""

import math
import struct


def f32(x):
    """Round a float through IEEE-754 binary32, back to binary64."""
    return struct.unpack("f", struct.pack("f", x))[0]


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def mat_vec(m, v):
    return tuple(dot(m[i], v) for i in range(3))


def round_half_away(x):
    if x >= 0.0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def ref_sincg(x, n):
    sx = math.sin(x)
    if abs(sx) < 1e-12:
        return n * math.cos(n * x) / math.cos(x)
    return math.sin(n * x) / sx


def ref_real_basis(a, b, c, alpha, beta, gamma):
    """Rows (a, b, c) in Angstrom; a along x, b in the x-y plane."""
    ca = math.cos(math.radians(alpha))
    cb = math.cos(math.radians(beta))
    cg = math.cos(math.radians(gamma))
    sg = math.sin(math.radians(gamma))
    factor = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg
    return (
        (a, 0.0, 0.0),
        (b * cg, b * sg, 0.0),
        (c * cb, c * (ca - cb * cg) / sg, c * math.sqrt(factor) / sg),
    )


def _sub_pixel_geometry(panel, beam_direction, slow, fast, ss, sf):
    ps = panel["pixel_size"]
    fa = panel["fast_axis"]
    sa = panel["slow_axis"]
    bc = panel["beam_center"]
    pos = tuple(
        panel["distance"] * beam_direction[x]
        + ((slow + ss) - bc[0]) * ps * sa[x]
        + ((fast + sf) - bc[1]) * ps * fa[x]
        for x in range(3)
    )
    r = math.sqrt(dot(pos, pos))
    s_out = tuple(p / r for p in pos)
    normal = cross(fa, sa)
    omega = (ps * ps / (r * r)) * abs(dot(pos, normal)) / r
    cos_2t = dot(s_out, beam_direction)
    return pos, s_out, omega, cos_2t


def ref_spots_image(cell, orientation, mosaic_matrices, n_cells, hkl_entries,
                    default_f, panel, beam, oversample, r_e_sqr):
    """Bragg spot image as a flat row-major list of (64-bit) floats.

    cell: (a, b, c, alpha, beta, gamma); orientation / mosaic_matrices:
    3x3 row tuples; panel/beam: plain dicts mirroring the config fields.
    """
    basis = ref_real_basis(*cell)
    rotated = []
    for m in mosaic_matrices:
        rotated.append(tuple(mat_vec(m, mat_vec(orientation, row)) for row in basis))
    na, nb, nc = n_cells
    samples = beam["samples"]
    bd = beam["beam_direction"]
    pol_on = beam["polarization_on"]
    norm = sum(w for _, w in samples) * len(mosaic_matrices) * oversample * oversample
    prefactor = r_e_sqr * beam["fluence"] / norm

    out = []
    for slow in range(panel["slow_pixels"]):
        for fast in range(panel["fast_pixels"]):
            acc = 0.0
            for i in range(oversample):
                for j in range(oversample):
                    ss = (i + 0.5) / oversample
                    sf = (j + 0.5) / oversample
                    _, s_out, omega, cos_2t = _sub_pixel_geometry(
                        panel, bd, slow, fast, ss, sf
                    )
                    pol = 1.0 if not pol_on else 0.5 * (1.0 + cos_2t * cos_2t)
                    for rows in rotated:
                        for lam, wt in samples:
                            q = tuple((s_out[x] - bd[x]) / lam for x in range(3))
                            h = dot(rows[0], q)
                            k = dot(rows[1], q)
                            l = dot(rows[2], q)
                            f_latt = (
                                ref_sincg(math.pi * h, na)
                                * ref_sincg(math.pi * k, nb)
                                * ref_sincg(math.pi * l, nc)
                            )
                            f_cell = hkl_entries.get(
                                (round_half_away(h), round_half_away(k), round_half_away(l)),
                                default_f,
                            )
                            amp = f_cell * f_latt
                            acc += wt * amp * amp * omega * pol
            out.append(prefactor * acc)
    return out


def interp_profile(points, stol):
    if stol <= points[0][0]:
        return points[0][1]
    if stol >= points[-1][0]:
        return points[-1][1]
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if x0 <= stol <= x1:
            t = (stol - x0) / (x1 - x0)
            return y0 + t * (y1 - y0)
    raise AssertionError("unreachable")


def ref_background_image(profile_points, panel, beam, thickness_factor, r_e_sqr):
    """Background image at pixel centers, flat row-major 64-bit floats."""
    samples = beam["samples"]
    bd = beam["beam_direction"]
    pol_on = beam["polarization_on"]
    prefactor = (
        r_e_sqr * beam["fluence"] * thickness_factor / sum(w for _, w in samples)
    )
    out = []
    for slow in range(panel["slow_pixels"]):
        for fast in range(panel["fast_pixels"]):
            _, s_out, omega, cos_2t = _sub_pixel_geometry(panel, bd, slow, fast, 0.5, 0.5)
            pol = 1.0 if not pol_on else 0.5 * (1.0 + cos_2t * cos_2t)
            sin_theta = math.sqrt(0.5 * (1.0 - min(1.0, max(-1.0, cos_2t))))
            acc = 0.0
            for lam, wt in samples:
                f_bg = interp_profile(profile_points, sin_theta / lam)
                acc += wt * f_bg * f_bg
            out.append(prefactor * acc * omega * pol)
    return out


def ref_pipeline(cell, orientation, mosaic_matrices, n_cells, hkl_entries, default_f,
                 panel, beam, oversample, profile_points, thickness_factor, r_e_sqr):
    """Full pipeline: both kernels rounded through binary32, summed in binary64.

    Mirrors the production accumulation semantics (32-bit kernel stage,
    64-bit accumulator) without sharing any code with it.
    """
    spots = ref_spots_image(
        cell, orientation, mosaic_matrices, n_cells, hkl_entries, default_f,
        panel, beam, oversample, r_e_sqr,
    )
    background = ref_background_image(profile_points, panel, beam, thickness_factor, r_e_sqr)
    return [f32(s) + f32(b) for s, b in zip(spots, background)]
