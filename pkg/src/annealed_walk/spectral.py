"""Killed heat kernels, Dirichlet spectra and related quantities on finite lattice sets.

``Q_D`` is the transition matrix of the simple random walk restricted to ``D``:
(Q f)(x) = (1/2d) sum over unit e of f(x + e) 1{x + e in D}. It is symmetric and
substochastic; the generator is I - Q_D.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bessel import bessel_zero
from .environment import Environment, WindowTooSmall
from .lattice import (LatticeSet, Point, as_point, ball, connected_component,
                      empirical_center, external_boundary, neighbors_array)

DENSE_LIMIT = 4000
EIG_RESIDUAL_TOL = 1e-8
GREEN_RESIDUAL_TOL = 1e-10
ESCAPE_TOL = 1e-9


class DisconnectedDomain(ValueError):
    """The operation needs a nearest-neighbour connected domain."""


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def _index_of(points: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Row index in ``points`` of each query row, -1 when absent."""
    d = points.shape[1]
    lo = np.minimum(points.min(0), queries.min(0)) if queries.size else points.min(0)
    hi = np.maximum(points.max(0), queries.max(0)) if queries.size else points.max(0)
    shape = hi - lo + 1
    def enc(a):
        key = np.zeros(a.shape[0], dtype=np.int64)
        for i in range(d):
            key = key * shape[i] + (a[:, i] - lo[i])
        return key
    kp = enc(points)
    order = np.argsort(kp, kind="stable")
    ks = kp[order]
    kq = enc(queries)
    pos = np.searchsorted(ks, kq)
    pos = np.minimum(pos, ks.size - 1)
    hit = ks[pos] == kq
    return np.where(hit, order[pos], -1)


def transition_matrix(domain: LatticeSet) -> sp.csr_matrix:
    """Q_D as a sparse symmetric matrix, rows and columns in ``domain.points`` order."""
    pts = domain.points
    n, d = pts.shape
    nb = neighbors_array(pts)  # (n, 2d, d)
    idx = _index_of(pts, nb.reshape(-1, d)).reshape(n, 2 * d)
    rows = np.repeat(np.arange(n), 2 * d)
    cols = idx.reshape(-1)
    keep = cols >= 0
    data = np.full(int(keep.sum()), 1.0 / (2 * d))
    return sp.csr_matrix((data, (rows[keep], cols[keep])), shape=(n, n))


def is_connected(domain: LatticeSet) -> bool:
    if not domain.cached_size:
        return False
    first = tuple(domain.points[0])
    return connected_component(domain, first).cached_size == domain.cached_size


# ------------------------------------------------------------------------
# heat kernel


@dataclass
class HeatKernelResult:
    """Distribution of S_n under P_u for the walk stopped on leaving D.

    ``values`` lives on D and its external boundary (``sites`` order); ``exited``
    is the mass that left D at some time 1..n-1, including first steps that
    jump beyond the boundary layer.
    """

    sites: LatticeSet
    u: Point
    n: int
    values: np.ndarray
    exited: float
    next_values: np.ndarray
    convention: str

    def __call__(self, v) -> float:
        v = as_point(v)
        i = _index_of(self.sites.points, np.asarray([v], dtype=np.int64))[0]
        if i < 0:
            return 0.0
        if self.convention == "parity" and (self.n + sum(abs(a - b) for a, b in zip(v, self.u))) % 2:
            return float(self.next_values[i])
        return float(self.values[i])

    def as_dict(self) -> dict:
        """Nonzero entries, with the parity convention applied when selected."""
        out = {}
        u = np.asarray(self.u)
        odd = (np.abs(self.sites.points - u).sum(1) + self.n) % 2 == 1
        vals = np.where(odd, self.next_values, self.values) if self.convention == "parity" else self.values
        for p, v in zip(self.sites.points.tolist(), vals):
            if v != 0.0:
                out[tuple(p)] = float(v)
        return out

    def total(self) -> float:
        return math.fsum(self.values)


def heat_kernel_field(domain: LatticeSet, u, n: int, convention: str = "parity") -> HeatKernelResult:
    """p_n^D(u, .) = P_u(S_n = ., S_1..S_{n-1} in D) on D and its external boundary.

    With ``convention="parity"`` a query (n, v) with n + |u - v|_1 odd returns
    p_{n+1}^D(u, v); ``"raw"`` returns p_n^D(u, v) as is.
    """
    if convention not in ("parity", "raw"):
        raise ValueError("convention must be 'parity' or 'raw'")
    if n < 0:
        raise ValueError("n must be nonnegative")
    u = as_point(u)
    d = domain.dimension
    boundary = external_boundary(domain)
    sites = domain.union(boundary)
    if u not in sites:
        raise ValueError("u must lie in D or on its external boundary")
    pts = sites.points
    m = pts.shape[0]
    inside = domain.contains_many(pts)
    # A[y, x] = 1/2d for x in D and y a neighbour of x; all such y lie in sites
    nb = neighbors_array(pts)
    idx = _index_of(pts, nb.reshape(-1, d)).reshape(m, 2 * d)
    src = np.repeat(np.arange(m), 2 * d)
    dst = idx.reshape(-1)
    keep = (dst >= 0) & np.repeat(inside, 2 * d)
    A = sp.csr_matrix((np.full(int(keep.sum()), 1.0 / (2 * d)), (dst[keep], src[keep])), shape=(m, m))

    iu = _index_of(pts, np.asarray([u], dtype=np.int64))[0]
    f = np.zeros(m)
    exited = []
    f[iu] = 1.0
    steps_needed = n + 1 if convention == "parity" else n
    history = [f.copy()]
    for t in range(1, steps_needed + 1):
        if t == 1:
            g = np.zeros(m)
            first = idx[iu]
            for j in first:
                if j >= 0:
                    g[j] += 1.0 / (2 * d)
            exited.append(1.0 - g.sum())
        else:
            out = f[~inside]
            if t - 1 <= n - 1:
                exited.append(math.fsum(out))
            g = A @ f
        f = g
        history.append(f.copy())
    values = history[n]
    nxt = history[n + 1] if convention == "parity" else np.zeros(m)
    exit_mass = math.fsum(exited[: max(n, 0)]) if n >= 1 else 0.0
    return HeatKernelResult(sites, u, n, values, exit_mass, nxt, convention)


def heat_kernel(domain: LatticeSet, u, v, n: int, convention: str = "parity") -> float:
    """p_n^D(u, v), with the parity convention by default."""
    return heat_kernel_field(domain, u, n, convention)(v)


def survival_in_domain(domain: LatticeSet, u, n: int) -> float:
    """P_u(S_0, ..., S_n all in D) by iterating Q_D."""
    Q = transition_matrix(domain)
    i = _index_of(domain.points, np.asarray([as_point(u)], dtype=np.int64))[0]
    if i < 0:
        return 0.0
    f = np.ones(domain.cached_size)
    for _ in range(n):
        f = Q @ f
    return float(f[i])


# ------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class SpectrumResult:
    domain: LatticeSet
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, rows in domain.points order
    k_computed: int
    residual: float

    def eigenvector(self, k: int) -> np.ndarray:
        return self.eigenvectors[:, k]

    def to_json(self) -> str:
        return json.dumps({"sites": self.domain.cached_size, "k": self.k_computed,
                           "eigenvalues": [float(v) for v in self.eigenvalues],
                           "residual": self.residual})

    def csv_rows(self):
        d = self.domain.dimension
        yield ",".join([f"x{i}" for i in range(d)] + [f"phi{k + 1}" for k in range(self.k_computed)])
        for p, row in zip(self.domain.points.tolist(), self.eigenvectors):
            yield ",".join([str(c) for c in p] + [repr(float(v)) for v in row])


def dirichlet_spectrum(domain: LatticeSet, k: int = 1) -> SpectrumResult:
    """Bottom ``k`` eigenpairs of I - Q_D on a connected domain.

    Dense symmetric solve up to 4000 sites, shift-invert Lanczos above. The
    first eigenvector is made nonnegative.
    """
    n = domain.cached_size
    if n == 0:
        raise ValueError("empty domain")
    if not 1 <= k <= n:
        raise ValueError("k must lie in 1..|D|")
    if not is_connected(domain):
        raise DisconnectedDomain("domain is not nearest-neighbour connected")
    Q = transition_matrix(domain)
    M = sp.identity(n, format="csr") - Q
    if n <= DENSE_LIMIT or k >= n - 1:
        vals, vecs = scipy.linalg.eigh(M.toarray(), subset_by_index=[0, k - 1])
    else:
        vals, vecs = spla.eigsh(M.tocsc(), k=k, sigma=0.0, which="LM", tol=1e-13)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    if vecs[:, 0].sum() < 0:
        vecs[:, 0] = -vecs[:, 0]
    res = float(np.max(np.linalg.norm(M @ vecs - vecs * vals, axis=0)))
    if res > EIG_RESIDUAL_TOL:
        raise RuntimeError(f"eigen-residual {res:.3g} exceeds {EIG_RESIDUAL_TOL}")
    return SpectrumResult(domain, np.asarray(vals), vecs, k, res)


def principal_eigenvalue(domain: LatticeSet) -> float:
    return float(dirichlet_spectrum(domain, 1).eigenvalues[0])


def continuum_ball_eigenvalue(d: int, radius: float, k: int = 1) -> float:
    """Principal Dirichlet eigenvalue of -(1/2d) Laplacian on a Euclidean ball."""
    if k != 1:
        raise NotImplementedError("only the principal eigenvalue is available")
    if radius <= 0:
        raise ValueError("radius must be positive")
    j = bessel_zero(d / 2.0 - 1.0)
    return j * j / (2.0 * d * radius * radius)


def continuum_ball_gap(d: int, radius: float = 1.0) -> float:
    """lambda_2 - lambda_1 for -(1/2d) Laplacian on a ball: (j_{d/2,1}^2 - j_{d/2-1,1}^2) / (2d R^2)."""
    j0 = bessel_zero(d / 2.0 - 1.0)
    j1 = bessel_zero(d / 2.0)
    return (j1 * j1 - j0 * j0) / (2.0 * d * radius * radius)


@dataclass(frozen=True)
class ScalingConstants:
    d: int
    p: float
    lambda1_continuum: float
    c_dp: float
    rho_coefficient: float

    def rho(self, N: float) -> float:
        return self.rho_coefficient * float(N) ** (1.0 / (self.d + 2))

    def to_dict(self) -> dict:
        return {"d": self.d, "p": self.p, "lambda1_continuum": self.lambda1_continuum,
                "c_dp": self.c_dp, "rho_coefficient": self.rho_coefficient}


def scaling_constants(d: int, p: float) -> ScalingConstants:
    """Donsker-Varadhan rate c(d, p) and the prefactor of rho_N = coefficient * N^{1/(d+2)}."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    lam = continuum_ball_eigenvalue(d, unit_ball_volume(d) ** (-1.0 / d))
    L = math.log(1.0 / p)
    c = (d + 2) / 2.0 * L ** (2.0 / (d + 2)) * (2.0 * lam / d) ** (d / (d + 2.0))
    coef = (2.0 * lam / (d * L)) ** (1.0 / (d + 2))
    return ScalingConstants(d, float(p), lam, c, coef)


def continuous_hull_volume(domain: LatticeSet) -> int:
    """Volume of {x in R^d : dist_inf(x, D) < 2}, counted as distinct unit cells."""
    d = domain.dimension
    offs = np.array(np.meshgrid(*([np.arange(-2, 2)] * d), indexing="ij")).reshape(d, -1).T
    cells = (domain.points[:, None, :] + offs[None, :, :]).reshape(-1, d)
    return int(np.unique(cells, axis=0).shape[0])


def faber_krahn_gap(domain: LatticeSet) -> tuple[float, float, float]:
    """(lambda_D, lambda of the Euclidean ball with the hull's volume, difference)."""
    lam = principal_eigenvalue(domain)
    d = domain.dimension
    vol = continuous_hull_volume(domain)
    r = (vol / unit_ball_volume(d)) ** (1.0 / d)
    lam_ball = continuum_ball_eigenvalue(d, r)
    return lam, lam_ball, lam - lam_ball


def ball_eigenvalue_table(radii: Sequence[float], d: int = 2) -> list[dict]:
    """Discrete vs continuum principal eigenvalue of lattice balls B(0, R)."""
    rows = []
    for R in radii:
        B = ball(tuple([0] * d), R)
        lam = principal_eigenvalue(B)
        cont = continuum_ball_eigenvalue(d, R)
        rows.append({"R": R, "sites": B.cached_size, "lambda_discrete": lam,
                     "lambda_continuum": cont, "scaled_error": abs(lam - cont) * R**3})
    return rows


# ------------------------------------------------------------------------
# parity and normalised spectral bounds


@dataclass
class ParityReport:
    asymmetry: float
    projection_residual: float
    top_eigenvalue_Q2: float
    predicted_top: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def parity_spectrum_check(domain: LatticeSet) -> ParityReport:
    """Symmetry of spec(Q_D) about 0 and invariance of span{phi 1_even, phi 1_odd} under Q^2."""
    if not is_connected(domain):
        raise DisconnectedDomain("domain is not nearest-neighbour connected")
    Q = transition_matrix(domain)
    if domain.cached_size <= DENSE_LIMIT:
        ev = scipy.linalg.eigvalsh(Q.toarray())
        asym = float(np.max(np.abs(ev + ev[::-1])))
    else:
        top = spla.eigsh(Q, k=6, which="LA", return_eigenvectors=False)
        bot = spla.eigsh(Q, k=6, which="SA", return_eigenvectors=False)
        asym = float(np.max(np.abs(np.sort(top)[::-1] + np.sort(bot))))
    spec = dirichlet_spectrum(domain, 1)
    phi = spec.eigenvector(0)
    even = (domain.points.sum(1) % 2) == 0
    V = np.column_stack([phi * even, phi * ~even])
    V, _ = np.linalg.qr(V)
    Q2V = Q @ (Q @ V)
    H = V.T @ Q2V
    resid = float(np.max(np.linalg.norm(Q2V - V @ H, axis=0)))
    top = float(np.max(np.linalg.eigvalsh(H)))
    return ParityReport(asym, resid, top, (1.0 - float(spec.eigenvalues[0])) ** 2)


def inner_radius(domain: LatticeSet, center) -> float:
    """Distance from ``center`` to the nearest lattice site outside the domain."""
    b = external_boundary(domain).points - np.asarray(center, dtype=np.int64)
    return float(np.sqrt((b * b).sum(1).min()))


def eigen_bounds_measurement(domain: LatticeSet, min_radius: float = 10.0) -> tuple[float, float]:
    """((lambda_2 - lambda_1) R^2, sup|phi_1| R^{d/2}) with R the covering radius about the empirical center.

    The domain must contain the ball of radius ``min_radius`` about that center
    and at least half of R.
    """
    center, R = empirical_center(domain)
    r_in = inner_radius(domain, center)
    if r_in < min_radius or r_in < 0.5 * R:
        raise ValueError(f"domain is not sandwiched between comparable balls (inner {r_in:.3g}, outer {R:.3g})")
    spec = dirichlet_spectrum(domain, 2)
    gap = float(spec.eigenvalues[1] - spec.eigenvalues[0])
    sup = float(np.max(np.abs(spec.eigenvector(0))))
    d = domain.dimension
    return gap * R * R, sup * R ** (d / 2.0)


# ------------------------------------------------------------------------
# Green visit function


def _window_system(env: Environment):
    pts = env.window.points
    d = env.dimension
    n = pts.shape[0]
    nb = neighbors_array(pts)
    idx = _index_of(pts, nb.reshape(-1, d)).reshape(n, 2 * d)
    closed = env.obstacles.contains_many(pts)
    return pts, idx, closed


def green_visits(env: Environment, u, x, r: float, return_residual: bool = False):
    """E_u[number of n in [0, tau_O] with S_n in B(x, r)].

    The visit at the killing time counts. Solved on the window; raises
    WindowTooSmall when the walk from ``u`` leaves the window before meeting an
    obstacle with probability above 1e-9.
    """
    u = as_point(u)
    d = env.dimension
    if u not in env.window:
        raise WindowTooSmall("u is outside the window")
    B = ball(as_point(x), r)
    if not env.window.contains_many(B.points).all():
        raise WindowTooSmall("B(x, r) is not inside the window")
    pts, idx, closed = _window_system(env)
    in_ball = B.contains_many(pts)
    iu = int(_index_of(pts, np.asarray([u], dtype=np.int64))[0])
    if closed[iu]:
        g_u = 1.0 if in_ball[iu] else 0.0
        return (g_u, 0.0) if return_residual else g_u

    open_idx = np.flatnonzero(~closed)
    pos = -np.ones(pts.shape[0], dtype=np.int64)
    pos[open_idx] = np.arange(open_idx.size)
    w = 1.0 / (2 * d)
    nbr = idx[open_idx]  # (m, 2d)
    valid = nbr >= 0
    nb_open = valid & ~closed[np.where(valid, nbr, 0)]
    rows = np.repeat(np.arange(open_idx.size), 2 * d)[nb_open.reshape(-1)]
    cols = pos[nbr[nb_open]]
    m = open_idx.size
    Qo = sp.csr_matrix((np.full(rows.size, w), (rows, cols)), shape=(m, m))
    A = (sp.identity(m, format="csr") - Qo).tocsc()
    nb_obs_ball = valid & closed[np.where(valid, nbr, 0)] & in_ball[np.where(valid, nbr, 0)]
    rhs = in_ball[open_idx].astype(float) + w * nb_obs_ball.sum(1)
    escape_rhs = w * (~valid).sum(1).astype(float)

    lu = spla.splu(A)
    g = lu.solve(rhs)
    g = g + lu.solve(rhs - A @ g)  # one refinement step
    h = lu.solve(escape_rhs)
    iu_o = int(pos[iu])
    if h[iu_o] > ESCAPE_TOL:
        raise WindowTooSmall(f"escape probability {h[iu_o]:.3g} from u exceeds {ESCAPE_TOL}")
    resid = float(np.max(np.abs(A @ g - rhs)))
    if resid > GREEN_RESIDUAL_TOL:
        raise RuntimeError(f"Green residual {resid:.3g} exceeds {GREEN_RESIDUAL_TOL}")
    if return_residual:
        return float(g[iu_o]), resid
    return float(g[iu_o])


def green_visits_mc(env: Environment, u, x, r: float, n_walks: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of green_visits and its standard error."""
    from ._backend import kernels
    from .environment import OUTSIDE
    from .rng import seed_state

    lo, hi = env.window.bounding_box()
    lo, hi = lo - 1, hi + 1
    mask = env.status_mask(lo, hi)
    target, _ = ball(as_point(x), r).to_mask(lo, hi)
    start = np.asarray(as_point(u)) - lo
    s, s2, escaped, _ = kernels.killed_walk_visits(mask, target.astype(np.uint8), start,
                                                   n_walks, seed_state(seed))
    if escaped:
        raise WindowTooSmall(f"{escaped} simulated walks left the window")
    mean = s / n_walks
    var = max(s2 / n_walks - mean * mean, 0.0)
    return mean, math.sqrt(var / n_walks)


# ------------------------------------------------------------------------
# survival lower bound


def log_survival_lower_bound(d: int, p: float, N: int, c: float = 1.0,
                             region: str = "volume") -> float:
    """log of exp{vol(B) log p - N lambda_B - c rho_N^{d-1}} for the optimal ball B.

    ``region="volume"`` takes B as the ball of volume rho_N^d (the dilation by
    rho_N of the unit-volume ball that defines lambda_1); ``"radius"`` takes the
    Euclidean ball of radius rho_N.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    sc = scaling_constants(d, p)
    rho = sc.rho(N)
    if region == "volume":
        vol = rho**d
        lam = sc.lambda1_continuum / rho**2
    elif region == "radius":
        vol = unit_ball_volume(d) * rho**d
        lam = continuum_ball_eigenvalue(d, rho)
    else:
        raise ValueError("region must be 'volume' or 'radius'")
    return vol * math.log(p) - N * lam - c * rho ** (d - 1)


def survival_lower_bound(d: int, p: float, N: int, c: float = 1.0, region: str = "volume") -> float:
    return math.exp(log_survival_lower_bound(d, p, N, c, region))
