"""Independent reference implementations used to derive expected test values.

Everything here is deliberately written the slow, obvious way (nested loops,
exhaustive enumeration, generic LP solvers) and shares no code with the
package under test.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate, optimize


def hom_density_brute(m: int, edges: list[tuple[int, int]], a: np.ndarray) -> float:
    """Homomorphism density by direct summation over all block assignments."""
    r = a.shape[0]
    total = 0.0
    for assign in itertools.product(range(r), repeat=m):
        p = 1.0
        for u, v in edges:
            p *= a[assign[u], assign[v]]
        total += p
    return total / r**m


def decorated_density_brute(
    m: int,
    edges: list[tuple[int, int]],
    decorations: list,
    cells_atoms: np.ndarray,
    cells_weights: np.ndarray,
) -> float:
    """Decorated homomorphism density on a measure-valued step kernel.

    cells_atoms/cells_weights have shape (r, r, k): per-cell finite measures.
    decorations[e] is a callable applied to atoms of the cell edge e lands on.
    """
    r = cells_atoms.shape[0]
    total = 0.0
    for assign in itertools.product(range(r), repeat=m):
        p = 1.0
        for (u, v), f in zip(edges, decorations):
            atoms = cells_atoms[assign[u], assign[v]]
            weights = cells_weights[assign[u], assign[v]]
            p *= sum(wk * f(ak) for ak, wk in zip(atoms, weights))
        total += p
    return total / r**m


def cut_norm_brute(a: np.ndarray) -> float:
    """Cut norm by looping over every pair of vertex subsets."""
    r = a.shape[0]
    best = 0.0
    for s_bits in itertools.product((0, 1), repeat=r):
        s = np.array(s_bits, dtype=float)
        for t_bits in itertools.product((0, 1), repeat=r):
            t = np.array(t_bits, dtype=float)
            best = max(best, abs(s @ a @ t))
    return best / r**2


def min_over_perms_brute(r: int, objective) -> float:
    """Minimum of a permutation objective by full enumeration."""
    return min(objective(np.array(p)) for p in itertools.permutations(range(r)))


def w1_lp(atoms_mu, weights_mu, atoms_nu, weights_nu) -> float:
    """1-D Wasserstein-1 via the transport LP (HiGHS)."""
    na, nb = len(atoms_mu), len(atoms_nu)
    cost = np.abs(np.subtract.outer(np.asarray(atoms_mu), np.asarray(atoms_nu)))
    # marginals as equality constraints on the na*nb coupling variables
    a_eq = np.zeros((na + nb, na * nb))
    for i in range(na):
        a_eq[i, i * nb : (i + 1) * nb] = 1.0
    for j in range(nb):
        a_eq[na + j, j::nb] = 1.0
    b_eq = np.concatenate([weights_mu, weights_nu])
    res = optimize.linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None))
    assert res.success
    return float(res.fun)


def gaussian_tail_quadrature(x: float) -> float:
    """P(Z > x) by adaptive quadrature of the standard normal density."""
    val, _ = integrate.quad(lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi), x, np.inf)
    return val


def sample_symmetric_gaussian(rng: np.random.Generator, r: int, size: int) -> np.ndarray:
    """Symmetric Gaussian matrices with Var<v,Y>_F = 2||v||_F^2 for symmetric v.

    One N(0,1) per off-diagonal unordered pair (mirrored) and N(0,2) on the
    diagonal.  Under this convention E[Y | <v,Y>_F = x] = v x / ||v||_F^2
    exactly, which is the disintegration behind the closed-form drift.
    """
    y = rng.standard_normal((size, r, r))
    y = np.triu(y, 1)
    y = y + np.swapaxes(y, 1, 2)
    diag = rng.standard_normal((size, r)) * math.sqrt(2.0)
    y[:, np.arange(r), np.arange(r)] = diag
    return y


def explicit_drift_mc(v: np.ndarray, t: float, size: int, seed: int):
    """Monte-Carlo estimate of E[Y exp(-t <v,Y>_F^+)], with standard errors."""
    rng = np.random.default_rng(seed)
    mean = np.zeros_like(v)
    m2 = np.zeros_like(v)
    done = 0
    for chunk in range(0, size, 250_000):
        k = min(250_000, size - chunk)
        y = sample_symmetric_gaussian(rng, v.shape[0], k)
        x = np.einsum("kij,ij->k", y, v)
        w = np.exp(-t * np.maximum(x, 0.0))
        g = y * w[:, None, None]
        delta = g.mean(axis=0) - mean
        mean += delta * (k / (done + k))
        m2 += ((g - mean) ** 2).sum(axis=0)
        done += k
    se = np.sqrt(m2 / done) / math.sqrt(done)
    return mean, se


def skorokhod_brute(path: np.ndarray, lo: float, hi: float):
    """Two-sided reflection by the plain stepwise recursion, scalar loop."""
    x = [path[0]]
    l_lo = [0.0]
    l_hi = [0.0]
    for k in range(1, len(path)):
        y = x[-1] + (path[k] - path[k - 1])
        up = max(0.0, lo - y)
        y += up
        down = max(0.0, y - hi)
        y -= down
        x.append(y)
        l_lo.append(l_lo[-1] + up)
        l_hi.append(l_hi[-1] + down)
    return np.array(x), np.array(l_lo), np.array(l_hi)


def fd_gradient(f, x0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a matrix."""
    g = np.zeros_like(x0)
    for idx in np.ndindex(*x0.shape):
        xp = x0.copy()
        xm = x0.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def cut_norm_fractional(a: np.ndarray, rounds: int, seed: int) -> float:
    """Best |x^T A y| / r^2 over the box [0,1]^r x [0,1]^r by coordinate ascent.

    Starts from random interior points; used to confirm the bilinear objective
    attains its maximum at subset-indicator vertices.
    """
    r = a.shape[0]
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(rounds):
        for sign in (1.0, -1.0):
            x = rng.uniform(0.2, 0.8, size=r)
            y = rng.uniform(0.2, 0.8, size=r)
            for _ in range(60):
                y = (sign * (x @ a) > 0).astype(float)
                x = (sign * (a @ y) > 0).astype(float)
            best = max(best, abs(x @ a @ y))
    return best / r**2
