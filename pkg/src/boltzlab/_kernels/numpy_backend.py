"""Pure-NumPy scatter-assembly backend.

Same contracts as the compiled extension: given the velocity lattice and a
product sphere rule (Gauss-Legendre in the deflection cosine, uniform in
azimuth, both relative to the collision direction), assemble

  * the gain part K2 of the compact collision matrix, where the two
    post-collision evaluations are distributed over trilinear interpolation
    stencils, and
  * the dense bilinear gain tensor T[j, a, b] realizing the quadratic gain
    term, with the first slot interpolated at xi_*' and the second at xi'.

Vectorized over (partner node, sphere node) per output row; each row does a
single bincount scatter over the concatenated stencil contributions.
"""
from __future__ import annotations

import numpy as np

INV_TWO_PI_34 = (2.0 * np.pi) ** -0.75


def _sqrt_maxwellian(points: np.ndarray) -> np.ndarray:
    return INV_TWO_PI_34 * np.exp(-0.25 * np.sum(points ** 2, axis=-1))


def _trilinear_stencil(points: np.ndarray, axis: np.ndarray):
    """Corner indices/weights of trilinear interpolation with zero extension.

    Returns (idx, wgt) of shape (M, 8); out-of-lattice corners carry index 0
    and weight 0.
    """
    n = axis.size
    h = axis[1] - axis[0]
    t = (points - axis[0]) / h
    i0 = np.floor(t).astype(np.int64)
    frac = t - i0
    idx = np.empty(points.shape[:-1] + (8,), dtype=np.int64)
    wgt = np.empty(points.shape[:-1] + (8,), dtype=np.float64)
    corner = 0
    for dx in (0, 1):
        wx = (1.0 - frac[..., 0]) if dx == 0 else frac[..., 0]
        ix = i0[..., 0] + dx
        okx = (ix >= 0) & (ix < n)
        for dy in (0, 1):
            wy = (1.0 - frac[..., 1]) if dy == 0 else frac[..., 1]
            iy = i0[..., 1] + dy
            oky = (iy >= 0) & (iy < n)
            for dz in (0, 1):
                wz = (1.0 - frac[..., 2]) if dz == 0 else frac[..., 2]
                iz = i0[..., 2] + dz
                ok = okx & oky & (iz >= 0) & (iz < n)
                flat = (ix * n + iy) * n + iz
                idx[..., corner] = np.where(ok, flat, 0)
                wgt[..., corner] = np.where(ok, wx * wy * wz, 0.0)
                corner += 1
    return idx, wgt


def _pair_geometry(xi_j, xi, j, gamma, cos_nodes, cos_weights,
                   phi_nodes, phi_weights, weights):
    """Post-collision points and quadrature weights for one output node.

    Returns (xi_prime, xi_star_prime, wq) flattened over (partner, sphere
    node); the coincident partner j is dropped (the kernel weight vanishes
    for gamma > 0 and the deflection angle is undefined at u = 0).
    """
    u = xi_j[None, :] - xi                       # (N, 3)
    umag = np.sqrt(np.sum(u ** 2, axis=1))
    keep = np.ones(xi.shape[0], dtype=bool)
    keep[j] = False
    u, umag, xi_a, w_a = u[keep], umag[keep], xi[keep], weights[keep]

    uhat = u / umag[:, None]
    # orthonormal frame transverse to uhat; switch reference away from poles
    ref = np.where(np.abs(uhat[:, 2])[:, None] < 0.9,
                   np.array([0.0, 0.0, 1.0])[None, :],
                   np.array([1.0, 0.0, 0.0])[None, :])
    e1 = np.cross(uhat, ref)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(uhat, e1)

    c = cos_nodes[:, None]                        # (nc, 1)
    s = np.sqrt(np.maximum(0.0, 1.0 - c ** 2))
    omega = (c[None, :, :, None] * uhat[:, None, None, :]
             + s[None, :, :, None] * (np.cos(phi_nodes)[None, None, :, None]
                                      * e1[:, None, None, :]
                                      + np.sin(phi_nodes)[None, None, :, None]
                                      * e2[:, None, None, :]))   # (A, nc, np, 3)
    proj = umag[:, None, None] * cos_nodes[None, :, None]
    xi_prime = xi_j[None, None, None, :] - proj[..., None] * omega
    xi_star_prime = xi_a[:, None, None, :] + proj[..., None] * omega

    kern = (umag[:, None, None] ** gamma) * np.abs(cos_nodes)[None, :, None]
    smu_a = _sqrt_maxwellian(xi_a)
    wq = ((w_a * smu_a)[:, None, None] * cos_weights[None, :, None]
          * phi_weights[None, None, :] * kern)
    return (xi_prime.reshape(-1, 3), xi_star_prime.reshape(-1, 3),
            wq.reshape(-1))


def assemble_k2(xi, axis, weights, gamma, cos_nodes, cos_weights,
                phi_nodes, phi_weights):
    n_nodes = xi.shape[0]
    k2 = np.zeros((n_nodes, n_nodes))
    for j in range(n_nodes):
        xp, xsp, wq = _pair_geometry(xi[j], xi, j, gamma, cos_nodes,
                                     cos_weights, phi_nodes, phi_weights,
                                     weights)
        idx_p, wgt_p = _trilinear_stencil(xp, axis)
        idx_sp, wgt_sp = _trilinear_stencil(xsp, axis)
        smu_p = _sqrt_maxwellian(xp)
        smu_sp = _sqrt_maxwellian(xsp)
        # f interpolated at xi' against sqrt(mu)(xi_*'), and vice versa
        vals = np.concatenate(
            [(wq * smu_sp)[:, None] * wgt_p, (wq * smu_p)[:, None] * wgt_sp],
            axis=0).ravel()
        cols = np.concatenate([idx_p, idx_sp], axis=0).ravel()
        k2[j] = np.bincount(cols, weights=vals, minlength=n_nodes)
    return k2


def assemble_gain_tensor(xi, axis, weights, gamma, cos_nodes, cos_weights,
                         phi_nodes, phi_weights):
    n_nodes = xi.shape[0]
    tensor = np.zeros((n_nodes, n_nodes, n_nodes))
    for j in range(n_nodes):
        xp, xsp, wq = _pair_geometry(xi[j], xi, j, gamma, cos_nodes,
                                     cos_weights, phi_nodes, phi_weights,
                                     weights)
        idx_p, wgt_p = _trilinear_stencil(xp, axis)       # g slot at xi'
        idx_sp, wgt_sp = _trilinear_stencil(xsp, axis)    # f slot at xi_*'
        flat = (idx_sp[:, :, None] * n_nodes + idx_p[:, None, :]).reshape(-1)
        vals = (wq[:, None, None] * wgt_sp[:, :, None]
                * wgt_p[:, None, :]).reshape(-1)
        tensor[j] = np.bincount(flat, weights=vals,
                                minlength=n_nodes * n_nodes
                                ).reshape(n_nodes, n_nodes)
    return tensor
