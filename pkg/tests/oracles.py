"""Independent reference computations used only by the tests."""
from __future__ import annotations

import numpy as np

Z0 = 376.730313668


def gauss_legendre_polygon(vertices2d, func, order: int = 96) -> complex:
    """Integrate ``func(u, v)`` over a convex 2D polygon.

    The polygon is cut into vertical slabs at every vertex abscissa; inside a
    slab the lower and upper boundaries are straight, so a tensor Gauss rule
    on the slab is exact up to the smoothness of ``func``.
    """
    p = np.asarray(vertices2d, dtype=float)
    xs, ws = np.polynomial.legendre.leggauss(order)
    cuts = np.unique(p[:, 0])
    total = 0j
    edges = list(zip(p, np.roll(p, -1, axis=0)))
    for x0, x1 in zip(cuts[:-1], cuts[1:]):
        if x1 - x0 < 1e-15:
            continue
        xm = 0.5 * (x0 + x1)
        lo_hi = []
        for a, b in edges:
            if (a[0] - xm) * (b[0] - xm) < 0:
                lo_hi.append((a, b))
        # two edges straddle the slab mid-line of a convex polygon
        def y_at(edge, x):
            a, b = edge
            t = (x - a[0]) / (b[0] - a[0])
            return a[1] + t * (b[1] - a[1])
        x = xm + 0.5 * (x1 - x0) * xs
        ya, yb = y_at(lo_hi[0], x), y_at(lo_hi[1], x)
        ylo, yhi = np.minimum(ya, yb), np.maximum(ya, yb)
        half = 0.5 * (yhi - ylo)
        yy = 0.5 * (yhi + ylo)[:, None] + half[:, None] * xs[None, :]
        vals = func(np.broadcast_to(x[:, None], yy.shape), yy)
        total += 0.5 * (x1 - x0) * np.sum(ws[:, None] * half[:, None] * ws[None, :] * vals)
    return total


def mirror(v, n):
    return v - 2.0 * np.dot(v, n) * n


def general_far_field(path, theta, phi, lit_vertices3d, k, amplitude=1.0, order=96):
    """Quadrature of ``J(r) . e_hat exp(jk r . r_hat)`` with J built from 3D vectors.

    Returns ``(N_theta, N_phi)`` for one reflection path.
    """
    normals = {1: np.array([0.0, 0, 1]), 2: np.array([1.0, 0, 0]), 3: np.array([0.0, 1, 0])}
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    kdir = -np.array([st * cp, st * sp, ct])
    h = np.array([ct * cp, ct * sp, -st])
    for plate in path[:-1]:
        kdir, h = mirror(kdir, normals[plate]), mirror(h, normals[plate])
    n = normals[path[-1]]
    jvec = 2.0 * np.cross(n, h) * amplitude / Z0
    rhat = np.array([st * cp, st * sp, ct])
    th_hat = np.array([ct * cp, ct * sp, -st])
    ph_hat = np.array([-sp, cp, 0.0])
    axes = {1: (0, 1), 2: (1, 2), 3: (0, 2)}[path[-1]]
    uv = np.asarray(lit_vertices3d)[:, axes]

    def point(u, v):
        r = np.zeros(u.shape + (3,))
        r[..., axes[0]] = u
        r[..., axes[1]] = v
        return r

    def integrand(comp):
        def f(u, v):
            r = point(u, v)
            return (jvec @ comp) * np.exp(-1j * k * (r @ kdir)) * np.exp(1j * k * (r @ rhat))
        return f

    return (gauss_legendre_polygon(uv, integrand(th_hat), order),
            gauss_legendre_polygon(uv, integrand(ph_hat), order))


def shoelace(p) -> float:
    p = np.asarray(p, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


def lit_fraction_by_rays(path, theta, phi, a, n_rays, rng):
    """Fraction of the final plate hit by rays following ``path`` exactly.

    Rays are launched backward from random points of the final plate along the
    reversed propagation and each preceding plate hit is checked directly.
    """
    normals = {1: 2, 2: 0, 3: 1}
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    dirs = [-np.array([st * cp, st * sp, ct])]
    for plate in path[:-1]:
        n = np.eye(3)[normals[plate]]
        dirs.append(mirror(dirs[-1], n))
    last = path[-1]
    ax = normals[last]
    pts = rng.uniform(0.0, a, size=(n_rays, 3))
    pts[:, ax] = 0.0
    ok = np.ones(n_rays, dtype=bool)
    cur = pts
    for step in range(len(path) - 1, 0, -1):
        d = dirs[step]  # direction of travel arriving at path[step]
        plate = path[step - 1]
        pax = normals[plate]
        # walk backward: cur - s d hits plane coordinate pax == 0
        s = cur[:, pax] / d[pax]
        prev = cur - s[:, None] * d
        inside = np.all((prev >= -1e-12) & (prev <= a + 1e-12), axis=1)
        ok &= inside & (s > 0)
        cur = prev
    return ok.mean()
