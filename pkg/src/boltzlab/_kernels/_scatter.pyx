# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scatter-assembly kernels (hot loops of the collision module).

Mirrors numpy_backend exactly: K2 matrix assembly and dense gain-tensor
assembly over (partner node, sphere node) quadrature tuples with trilinear
interpolation stencils at the post-collision velocities.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, fabs, floor, pow, sin, sqrt

cnp.import_array()

cdef double INV_TWO_PI_34 = (2.0 * 3.14159265358979323846) ** -0.75


cdef inline double _smu(double x, double y, double z) nogil:
    return INV_TWO_PI_34 * exp(-0.25 * (x * x + y * y + z * z))


cdef inline int _stencil(double px, double py, double pz, double a0,
                         double inv_h, int n, long* idx, double* wgt) nogil:
    """Trilinear corner indices/weights; zero weight outside the lattice."""
    cdef double tx = (px - a0) * inv_h
    cdef double ty = (py - a0) * inv_h
    cdef double tz = (pz - a0) * inv_h
    cdef long ix = <long>floor(tx)
    cdef long iy = <long>floor(ty)
    cdef long iz = <long>floor(tz)
    cdef double fx = tx - ix
    cdef double fy = ty - iy
    cdef double fz = tz - iz
    cdef int c = 0
    cdef int dx, dy, dz
    cdef long jx, jy, jz
    cdef double wx, wy, wz
    for dx in range(2):
        jx = ix + dx
        wx = fx if dx else 1.0 - fx
        for dy in range(2):
            jy = iy + dy
            wy = fy if dy else 1.0 - fy
            for dz in range(2):
                jz = iz + dz
                wz = fz if dz else 1.0 - fz
                if 0 <= jx < n and 0 <= jy < n and 0 <= jz < n:
                    idx[c] = (jx * n + jy) * n + jz
                    wgt[c] = wx * wy * wz
                else:
                    idx[c] = 0
                    wgt[c] = 0.0
                c += 1
    return 8


def assemble_k2(double[:, ::1] xi, double[::1] axis, double[::1] weights,
                double gamma, double[::1] cos_nodes, double[::1] cos_weights,
                double[::1] phi_nodes, double[::1] phi_weights):
    cdef Py_ssize_t n_nodes = xi.shape[0]
    cdef int n = axis.shape[0]
    cdef double a0 = axis[0]
    cdef double inv_h = 1.0 / (axis[1] - axis[0])
    cdef int nc = cos_nodes.shape[0]
    cdef int nphi = phi_nodes.shape[0]

    out = np.zeros((n_nodes, n_nodes))
    cdef double[:, ::1] k2 = out

    cdef double[::1] cphi = np.cos(np.asarray(phi_nodes))
    cdef double[::1] sphi = np.sin(np.asarray(phi_nodes))
    smu_arr = INV_TWO_PI_34 * np.exp(-0.25 * np.sum(np.asarray(xi) ** 2, axis=1))
    cdef double[::1] smu_grid = smu_arr

    cdef Py_ssize_t j, a
    cdef int ic, il, p
    cdef double ux, uy, uz, umag, inv_umag
    cdef double hx, hy, hz, e1x, e1y, e1z, e2x, e2y, e2z, nrm
    cdef double c, s, base_w, wq, proj
    cdef double ox, oy, oz, ppx, ppy, ppz, spx, spy, spz
    cdef double smu_p, smu_sp, v1, v2
    cdef long idx1[8]
    cdef long idx2[8]
    cdef double wgt1[8]
    cdef double wgt2[8]

    with nogil:
        for j in range(n_nodes):
            for a in range(n_nodes):
                if a == j:
                    continue
                ux = xi[j, 0] - xi[a, 0]
                uy = xi[j, 1] - xi[a, 1]
                uz = xi[j, 2] - xi[a, 2]
                umag = sqrt(ux * ux + uy * uy + uz * uz)
                inv_umag = 1.0 / umag
                hx = ux * inv_umag
                hy = uy * inv_umag
                hz = uz * inv_umag
                if fabs(hz) < 0.9:
                    e1x = hy
                    e1y = -hx
                    e1z = 0.0
                else:
                    e1x = 0.0
                    e1y = hz
                    e1z = -hy
                nrm = 1.0 / sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
                e1x *= nrm
                e1y *= nrm
                e1z *= nrm
                e2x = hy * e1z - hz * e1y
                e2y = hz * e1x - hx * e1z
                e2z = hx * e1y - hy * e1x
                base_w = weights[a] * smu_grid[a] * pow(umag, gamma)
                for ic in range(nc):
                    c = cos_nodes[ic]
                    s = sqrt(max(0.0, 1.0 - c * c))
                    proj = umag * c
                    for il in range(nphi):
                        ox = c * hx + s * (cphi[il] * e1x + sphi[il] * e2x)
                        oy = c * hy + s * (cphi[il] * e1y + sphi[il] * e2y)
                        oz = c * hz + s * (cphi[il] * e1z + sphi[il] * e2z)
                        ppx = xi[j, 0] - proj * ox
                        ppy = xi[j, 1] - proj * oy
                        ppz = xi[j, 2] - proj * oz
                        spx = xi[a, 0] + proj * ox
                        spy = xi[a, 1] + proj * oy
                        spz = xi[a, 2] + proj * oz
                        wq = (base_w * cos_weights[ic] * phi_weights[il]
                              * fabs(c))
                        smu_p = _smu(ppx, ppy, ppz)
                        smu_sp = _smu(spx, spy, spz)
                        _stencil(ppx, ppy, ppz, a0, inv_h, n, idx1, wgt1)
                        _stencil(spx, spy, spz, a0, inv_h, n, idx2, wgt2)
                        v1 = wq * smu_sp
                        v2 = wq * smu_p
                        for p in range(8):
                            k2[j, idx1[p]] += v1 * wgt1[p]
                            k2[j, idx2[p]] += v2 * wgt2[p]
    return out


def assemble_gain_tensor(double[:, ::1] xi, double[::1] axis,
                         double[::1] weights, double gamma,
                         double[::1] cos_nodes, double[::1] cos_weights,
                         double[::1] phi_nodes, double[::1] phi_weights):
    cdef Py_ssize_t n_nodes = xi.shape[0]
    cdef int n = axis.shape[0]
    cdef double a0 = axis[0]
    cdef double inv_h = 1.0 / (axis[1] - axis[0])
    cdef int nc = cos_nodes.shape[0]
    cdef int nphi = phi_nodes.shape[0]

    out = np.zeros((n_nodes, n_nodes, n_nodes))
    cdef double[:, :, ::1] tensor = out

    cdef double[::1] cphi = np.cos(np.asarray(phi_nodes))
    cdef double[::1] sphi = np.sin(np.asarray(phi_nodes))
    smu_arr = INV_TWO_PI_34 * np.exp(-0.25 * np.sum(np.asarray(xi) ** 2, axis=1))
    cdef double[::1] smu_grid = smu_arr

    cdef Py_ssize_t j, a
    cdef int ic, il, p, q
    cdef double ux, uy, uz, umag, inv_umag
    cdef double hx, hy, hz, e1x, e1y, e1z, e2x, e2y, e2z, nrm
    cdef double c, s, base_w, wq, proj
    cdef double ox, oy, oz, ppx, ppy, ppz, spx, spy, spz, vs
    cdef long idx_g[8]
    cdef long idx_f[8]
    cdef double wgt_g[8]
    cdef double wgt_f[8]

    with nogil:
        for j in range(n_nodes):
            for a in range(n_nodes):
                if a == j:
                    continue
                ux = xi[j, 0] - xi[a, 0]
                uy = xi[j, 1] - xi[a, 1]
                uz = xi[j, 2] - xi[a, 2]
                umag = sqrt(ux * ux + uy * uy + uz * uz)
                inv_umag = 1.0 / umag
                hx = ux * inv_umag
                hy = uy * inv_umag
                hz = uz * inv_umag
                if fabs(hz) < 0.9:
                    e1x = hy
                    e1y = -hx
                    e1z = 0.0
                else:
                    e1x = 0.0
                    e1y = hz
                    e1z = -hy
                nrm = 1.0 / sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
                e1x *= nrm
                e1y *= nrm
                e1z *= nrm
                e2x = hy * e1z - hz * e1y
                e2y = hz * e1x - hx * e1z
                e2z = hx * e1y - hy * e1x
                base_w = weights[a] * smu_grid[a] * pow(umag, gamma)
                for ic in range(nc):
                    c = cos_nodes[ic]
                    s = sqrt(max(0.0, 1.0 - c * c))
                    proj = umag * c
                    for il in range(nphi):
                        ox = c * hx + s * (cphi[il] * e1x + sphi[il] * e2x)
                        oy = c * hy + s * (cphi[il] * e1y + sphi[il] * e2y)
                        oz = c * hz + s * (cphi[il] * e1z + sphi[il] * e2z)
                        ppx = xi[j, 0] - proj * ox
                        ppy = xi[j, 1] - proj * oy
                        ppz = xi[j, 2] - proj * oz
                        spx = xi[a, 0] + proj * ox
                        spy = xi[a, 1] + proj * oy
                        spz = xi[a, 2] + proj * oz
                        wq = (base_w * cos_weights[ic] * phi_weights[il]
                              * fabs(c))
                        _stencil(ppx, ppy, ppz, a0, inv_h, n, idx_g, wgt_g)
                        _stencil(spx, spy, spz, a0, inv_h, n, idx_f, wgt_f)
                        for p in range(8):
                            vs = wq * wgt_f[p]
                            if vs == 0.0:
                                continue
                            for q in range(8):
                                tensor[j, idx_f[p], idx_g[q]] += vs * wgt_g[q]
    return out
