"""Reference computations that share no code with the package.

Everything here is deliberately slow and direct: GLL rules from
numpy.polynomial, Lagrange derivatives from explicit polynomial objects,
dense element matrices from per-point Jacobian inverses, and global
numbering by coordinate matching.
"""
from itertools import product

import numpy as np
from numpy.polynomial import legendre as L
from numpy.polynomial import polynomial as Pn


def gll_rule(n):
    """GLL nodes/weights: endpoints plus roots of P_n', weights 2/(n(n+1) P_n^2)."""
    cn = np.zeros(n + 1)
    cn[-1] = 1.0
    interior = np.sort(np.real(L.legroots(L.legder(cn)))) if n > 1 else np.array([])
    x = np.concatenate([[-1.0], interior, [1.0]])
    w = 2.0 / (n * (n + 1) * L.legval(x, cn) ** 2)
    return x, w


def lagrange_values_and_derivatives(x):
    """V[i, q] = phi_i(x_q) and Dv[i, q] = phi_i'(x_q) via explicit monomial polynomials."""
    p = len(x)
    V = np.zeros((p, p))
    Dv = np.zeros((p, p))
    for i in range(p):
        others = np.delete(x, i)
        coef = Pn.polyfromroots(others) / np.prod(x[i] - others)
        V[i] = Pn.polyval(x, coef)
        Dv[i] = Pn.polyval(x, Pn.polyder(coef))
    return V, Dv


def trilinear(corners, xi):
    """Map and Jacobian of a trilinear hex; corners[a + 2b + 4c] sits at reference (a, b, c)."""
    x = np.zeros(3)
    J = np.zeros((3, 3))
    for v in range(8):
        bits = (v & 1, (v >> 1) & 1, (v >> 2) & 1)
        f = [(1 + xi[d]) / 2 if bits[d] else (1 - xi[d]) / 2 for d in range(3)]
        df = [0.5 if bits[d] else -0.5 for d in range(3)]
        x += f[0] * f[1] * f[2] * corners[v]
        grad = np.array([df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]])
        J += np.outer(corners[v], grad)
    return x, J


def dense_galerkin(vertices, elements, n, kappa=1.0, c=0.0):
    """Assembled GLL-quadrature Galerkin matrix (natural boundary conditions).

    Returns (A, node_xyz, local_index) with local_index[e, i, j, k] the
    oracle's global node number.
    """
    x, w = gll_rule(n)
    V, Dv = lagrange_values_and_derivatives(x)
    p = n + 1
    ne = len(elements)
    coords = np.zeros((ne, p, p, p, 3))
    kel = np.zeros((ne, p**3, p**3))
    for e in range(ne):
        X = vertices[elements[e]]
        for a, b, cc in product(range(p), repeat=3):
            xq, J = trilinear(X, (x[a], x[b], x[cc]))
            coords[e, a, b, cc] = xq
            det = np.linalg.det(J)
            Jinv = np.linalg.inv(J)
            grads = np.zeros((p**3, 3))
            for idx, (i, j, k) in enumerate(product(range(p), repeat=3)):
                grads[idx] = [
                    Dv[i, a] * V[j, b] * V[k, cc],
                    V[i, a] * Dv[j, b] * V[k, cc],
                    V[i, a] * V[j, b] * Dv[k, cc],
                ]
            phys = grads @ Jinv  # row: grad_x phi = J^-T grad_xi phi
            wq = w[a] * w[b] * w[cc] * det
            kel[e] += kappa * wq * phys @ phys.T
            q = (a * p + b) * p + cc
            kel[e, q, q] += c * wq
    flat = coords.reshape(-1, 3)
    key = np.round(flat, 9)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    local_index = inverse.reshape(ne, p, p, p)
    N = len(first)
    A = np.zeros((N, N))
    for e in range(ne):
        g = local_index[e].ravel()
        A[np.ix_(g, g)] += kel[e]
    return A, flat[first], local_index


def extended_pencil(n):
    """1D stiffness/mass of a 5-element reference chain restricted to nodes -1..n+1."""
    x, w = gll_rule(n)
    _, Dv = lagrange_values_and_derivatives(x)
    d = (Dv * w) @ Dv.T
    size = 5 * n + 1
    K = np.zeros((size, size))
    M = np.zeros(size)
    for e in range(5):
        s = slice(e * n, e * n + n + 1)
        K[s, s] += d
        M[s] += w
    keep = np.arange(2 * n - 1, 3 * n + 2)
    return K[np.ix_(keep, keep)], np.diag(M[keep])


def kronecker_box_solve(n, r, h, kappa, c):
    """Dense solve of the separable box problem for right-hand side r[(n+3)^3]."""
    K, M = extended_pencil(n)
    hx, hy, hz = h
    A = kappa * (
        (hy * hz / (2 * hx)) * np.kron(np.kron(K, M), M)
        + (hx * hz / (2 * hy)) * np.kron(np.kron(M, K), M)
        + (hx * hy / (2 * hz)) * np.kron(np.kron(M, M), K)
    ) + c * (hx * hy * hz / 8) * np.kron(np.kron(M, M), M)
    return np.linalg.solve(A, r.ravel()).reshape(r.shape)


def dense_matrix(apply, size):
    """Columns of a linear map applied to the unit vectors."""
    out = np.empty((size, size))
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        out[:, j] = apply(e)
    return out


def permutation_from_locals(l2g, local_index):
    """perm[package_global] = oracle_global, checked to be a bijection."""
    perm = -np.ones(l2g.max() + 1, dtype=np.int64)
    a, b = l2g.ravel(), local_index.ravel()
    perm[a] = b
    if not np.array_equal(perm[a], b) or len(np.unique(perm)) != len(perm) or perm.min() < 0:
        raise AssertionError("local numbering disagrees with coordinate matching")
    return perm
