"""Mode-space discretization of the generator and its weighted conjugate.

The twist identification ``(x, 1) ~ (A x, 0)`` turns each transpose-orbit
of a nonzero torus frequency into a line of coupled cells; the generator
acts there as first-order transport, discretized cell-by-cell in a
rectified-time Fourier basis with an upwind interface flux.  Zero inflow
is imposed at the stable-coframe end of the truncated line and mass flows
out at the unstable-coframe end, where the anisotropic weight is
geometrically small; hard truncation there is the boundary convention
used throughout.  The k = 0 sector keeps the plain Fourier basis, where
the generator matrix is the frequency diagonal scaled by the time
change's Fourier coefficients.

The diagonal weight evaluates the escape-function exponential at one
representative phase point per mode.  For a time change depending only on
the suspension coordinate, the order function depends only on the
covector, so this diagonal is the multiplier quantization of the weight.
Matrices act on coefficient vectors; each sector's basis is orthonormal
in its own inner product (plain for the neutral sector, time-rectified
for orbit sectors).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import cotangent
from .errors import (ContourTooClose, NonConvergence, TruncationTooSmall,
                     UnresolvedState, WeightOverflow)
from .escape import EscapeFunction, smoothstep
from .model import MappingTorusFlow


# ---------------------------------------------------------------------------
# sectors and mode bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeutralSector:
    """The k = 0 frequency sector."""

    key: str = "neutral"


@dataclass(frozen=True)
class OrbitSector:
    """One transpose-orbit of nonzero torus frequencies.

    k0 is the minimal-norm representative (ties broken lexicographically);
    positions run over the kept powers p with frequency (A^T)^p k0.
    """

    k0: tuple
    p_lo: int
    p_hi: int

    @property
    def key(self):
        return f"orbit{self.k0[0]},{self.k0[1]}"

    @property
    def positions(self):
        return range(self.p_lo, self.p_hi + 1)

    @property
    def n_cells(self):
        return self.p_hi - self.p_lo + 1


@dataclass(frozen=True)
class ModeIndex:
    sector_key: str
    p: int          # orbit position (0 for the neutral sector)
    j: int          # integer frequency in the sector discretization


@dataclass(frozen=True)
class Truncation:
    k_max: int = 6
    p_max: int = 2
    j_max: int = 24
    j_buffer: int = 0           # 0 -> automatic buffer for the neutral sector
    flux_penalty: float = 1.6
    edge_guard: int = 6

    def neutral_buffer(self):
        if self.j_buffer > 0:
            return self.j_buffer
        return max(16, int(np.ceil(10 + 0.35 * self.j_max)))


def orbit_representative(cat, k):
    """Minimal-norm element of the A^T-orbit through k (lexicographic ties)."""
    at = cat.matrix.T
    at_inv = cat.power(-1).T

    def norm2(v):
        return int(v[0]) ** 2 + int(v[1]) ** 2

    best = np.asarray(k, dtype=np.int64)
    for step in (at, at_inv):
        v = np.asarray(k, dtype=np.int64)
        while True:
            v = step @ v
            if norm2(v) > norm2(best) and norm2(v) > norm2(k):
                break
            if (norm2(v), v[0], v[1]) < (norm2(best), best[0], best[1]):
                best = v.copy()
    return int(best[0]), int(best[1])


def enumerate_orbits(cat, k_max, p_max=2):
    """All orbit sectors meeting the ball |k| <= k_max, with kept positions.

    Positions p are kept while |(A^T)^p k0| stays below the cutoff
    k_max * lambda_u**p_max, so the window grows with both knobs.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    cutoff = float(k_max) * cat.lambda_u ** p_max
    reps = {}
    rng_k = int(np.ceil(k_max))
    for k1 in range(-rng_k, rng_k + 1):
        for k2 in range(-rng_k, rng_k + 1):
            if (k1, k2) == (0, 0) or k1 * k1 + k2 * k2 > k_max * k_max:
                continue
            reps[orbit_representative(cat, (k1, k2))] = None
    sectors = []
    at = cat.matrix.T
    at_inv = cat.power(-1).T
    for k0 in sorted(reps):
        v = np.asarray(k0, dtype=np.int64)
        p_hi = 0
        w = v.copy()
        while np.linalg.norm(at @ w) <= cutoff:
            w = at @ w
            p_hi += 1
        p_lo = 0
        w = v.copy()
        while np.linalg.norm(at_inv @ w) <= cutoff:
            w = at_inv @ w
            p_lo -= 1
        sectors.append(OrbitSector(k0=k0, p_lo=p_lo, p_hi=p_hi))
    return sectors


def sector_frequencies(cat, sector):
    """Torus frequency (A^T)^p k0 for each cell, ordered along the line.

    Cell 0 sits at the zero-inflow (stable-coframe) end, which carries the
    largest position p; the flow transports mass toward increasing cell
    index, i.e. toward the unstable-coframe end.
    """
    freqs = []
    for ell in range(sector.n_cells):
        p = sector.p_hi - ell
        freqs.append(tuple((cat.power(p).T @ np.asarray(sector.k0)).tolist()))
    return freqs


# ---------------------------------------------------------------------------
# generator blocks
# ---------------------------------------------------------------------------

@dataclass
class SectorBlock:
    sector: object
    basis: list
    matrix: np.ndarray
    flow: MappingTorusFlow = field(repr=False, default=None)

    @property
    def key(self):
        return self.sector.key

    @property
    def dim(self):
        return self.matrix.shape[0]


def build_generator(flow: MappingTorusFlow, sector, truncation: Truncation) -> SectorBlock:
    """Matrix block of the generator -i c(tau) d/dtau for one sector."""
    if truncation.p_max < 2:
        raise TruncationTooSmall(f"p_max must be >= 2, got {truncation.p_max}")
    if truncation.flux_penalty <= 0.0:
        raise ValueError("flux penalty must be positive for a dissipative truncation")
    if isinstance(sector, NeutralSector):
        jmax = truncation.j_max + truncation.neutral_buffer()
        js = np.arange(-jmax, jmax + 1)
        n = js.size
        h = np.zeros((n, n), dtype=complex)
        degree = flow.time_change.degree
        for d in range(-degree, degree + 1):
            coef = flow.time_change.fourier_coefficient(d)
            if coef == 0:
                continue
            for col, j in enumerate(js):
                row = col + d
                if 0 <= row < n:
                    h[row, col] += 2.0 * np.pi * j * coef
        basis = [ModeIndex(sector.key, 0, int(j)) for j in js]
        return SectorBlock(sector, basis, h, flow)

    tbar = flow.period
    omega = 2.0 * np.pi / tbar
    kappa = truncation.flux_penalty
    jmax = truncation.j_max
    js = np.arange(-jmax, jmax + 1)
    nj = js.size
    ncell = sector.n_cells
    n = ncell * nj
    h = np.zeros((n, n), dtype=complex)
    ones = np.ones((nj, nj), dtype=complex)
    self_flux = -1j * kappa / tbar * ones
    hop_flux = 1j * kappa / tbar * ones
    for ell in range(ncell):
        sl = slice(ell * nj, (ell + 1) * nj)
        h[sl, sl] = np.diag(omega * js) + self_flux
        if ell > 0:
            h[sl, slice((ell - 1) * nj, ell * nj)] = hop_flux
    basis = [ModeIndex(sector.key, sector.p_hi - ell, int(j))
             for ell in range(ncell) for j in js]
    return SectorBlock(sector, basis, h, flow)


def orbit_cell_block(flow: MappingTorusFlow, truncation: Truncation):
    """Diagonal cell block shared by every orbit sector.

    The sector matrices are block lower bidiagonal with identical diagonal
    blocks, so the exact sector spectrum is the spectrum of this block with
    algebraic multiplicity equal to the cell count.  Conjugation by the
    diagonal weight acts cell-wise, hence leaves the block spectrum
    unchanged.  Dense solves of the full sector matrix scatter these
    Jordan-degenerate eigenvalues; the block route is the well-conditioned
    way to read them off.
    """
    tbar = flow.period
    js = np.arange(-truncation.j_max, truncation.j_max + 1)
    block = np.diag(2.0 * np.pi / tbar * js).astype(complex)
    block -= 1j * truncation.flux_penalty / tbar * np.ones((js.size, js.size))
    return block


def mode_covector(flow: MappingTorusFlow, sector, mode: ModeIndex, h=1.0):
    """Phase-space covector (xi_x, eta) assigned to a mode, scaled by h."""
    if isinstance(sector, NeutralSector):
        k = np.zeros(2)
    else:
        k = (flow.cat.power(mode.p).T @ np.asarray(sector.k0)).astype(float)
    return 2.0 * np.pi * h * np.array([k[0], k[1], float(mode.j)])


def _mode_adapted(flow, sector, block_basis, h):
    """Equivariant frame components of every mode covector (rep. tau = 0)."""
    out = np.empty((len(block_basis), 3))
    c0 = float(flow.time_change(0.0))
    for i, mode in enumerate(block_basis):
        xi = mode_covector(flow, sector, mode, h)
        a, b = cotangent.horizontal_components(flow, xi[:2])
        out[i] = (a, b, c0 * xi[2])
    return out


# ---------------------------------------------------------------------------
# weighted generator
# ---------------------------------------------------------------------------

@dataclass
class WeightedGenerator:
    """Conjugated block P = W H W^{-1} with its weight metadata."""

    block: SectorBlock
    escape: EscapeFunction = field(repr=False)
    h: float
    log_weight: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)

    @property
    def key(self):
        return self.block.key

    @property
    def dim(self):
        return self.block.dim

    @property
    def weight_condition(self):
        return float(np.exp(self.log_weight.max() - self.log_weight.min()))

    def rescaled(self):
        """h-rescaled matrix h*P (spectral variable z = h*lambda)."""
        return self.h * self.matrix

    def mode_radii(self):
        """Adapted norm |h xi| of every mode covector."""
        ad = _mode_adapted(self.block.flow, self.block.sector,
                           self.block.basis, self.h)
        return np.linalg.norm(ad, axis=1)


def conjugate_by_diagonal(matrix, log_weight):
    """W M W^{-1} for W = diag(exp(log_weight)), computed entrywise.

    Scales entry (i, j) by exp(log_weight[i] - log_weight[j]); the diagonal
    is untouched.
    """
    logw = np.asarray(log_weight, dtype=float)
    return np.asarray(matrix) * np.exp(logw[:, None] - logw[None, :])


def apply_weight(block: SectorBlock, escape: EscapeFunction, h: float) -> WeightedGenerator:
    """Conjugate a sector block by the diagonal escape weight.

    Entries are scaled by weight ratios, P_ij = w_i H_ij / w_j, so the
    diagonal of P equals the diagonal of H exactly.
    """
    ad = _mode_adapted(block.flow, block.sector, block.basis, h)
    logw = np.asarray(escape.escape_value(ad), dtype=float)
    if np.any(np.abs(logw) > 700.0):
        raise WeightOverflow(
            f"max |log weight| = {np.abs(logw).max():.1f} exceeds 700; "
            "reduce |u|, s or the truncation")
    return WeightedGenerator(block=block, escape=escape, h=h,
                             log_weight=logw,
                             matrix=conjugate_by_diagonal(block.matrix, logw))


# ---------------------------------------------------------------------------
# dense solvers
# ---------------------------------------------------------------------------

@dataclass
class EigenPair:
    value: complex
    vector: np.ndarray
    residual: float


def eigendecompose(p: np.ndarray, norm=None):
    """Dense non-Hermitian eigendecomposition, sorted by descending Im.

    Returns EigenPair entries with relative residuals ||Pv - lv|| / ||P||.
    """
    p = np.asarray(p, dtype=complex)
    if norm is None:
        norm = np.linalg.norm(p, 2) if p.size else 0.0
    try:
        vals, vecs = sla.eig(p)
    except sla.LinAlgError as exc:  # pragma: no cover - LAPACK failure path
        raise NonConvergence(f"dense eigensolver failed: {exc}") from exc
    order = np.argsort(-vals.imag, kind="stable")
    out = []
    for idx in order:
        v = vecs[:, idx]
        res = np.linalg.norm(p @ v - vals[idx] * v) / max(norm, 1e-300)
        out.append(EigenPair(complex(vals[idx]), v, float(res)))
    return out


def singular_values(p: np.ndarray, z_e=0.0):
    """Ascending singular values of (P - z_e I)."""
    p = np.asarray(p, dtype=complex)
    shifted = p - complex(z_e) * np.eye(p.shape[0])
    return np.sort(sla.svdvals(shifted))


def singular_values_gram(p: np.ndarray, z_e=0.0):
    """Cross-validation route: sqrt of Hermitian eigenvalues of A*A."""
    p = np.asarray(p, dtype=complex)
    a = p - complex(z_e) * np.eye(p.shape[0])
    vals = sla.eigvalsh(a.conj().T @ a)
    return np.sqrt(np.clip(vals, 0.0, None))


def _projector_quadrature(p, center, radius, n_quad):
    n = p.shape[0]
    eye = np.eye(n)
    acc = np.zeros_like(p)
    scale = np.linalg.norm(p, np.inf) + abs(center) + radius
    for m in range(n_quad):
        th = 2.0 * np.pi * (m + 0.5) / n_quad
        z = center + radius * np.exp(1j * th)
        shifted = z * eye - p
        if np.min(sla.svdvals(shifted)) < 1e-13 * scale:
            raise ContourTooClose(f"contour point {z:.6g} is numerically "
                                  "an eigenvalue")
        acc += radius * np.exp(1j * th) * np.linalg.inv(shifted)
    return acc / n_quad


def spectral_projector_rank(p: np.ndarray, center, radius, n_quad=64):
    """Algebraic eigenvalue count inside a circle via resolvent quadrature.

    Trapezoid rule on the circle; rank read off by thresholding singular
    values of the projector approximation at 1/2.  The quadrature error is
    estimated by halving the node count; the call fails with
    ContourTooClose when ten times that estimate could move a singular
    value across the 1/2 threshold, i.e. when the contour passes too close
    to the spectrum for the requested resolution.
    """
    p = np.asarray(p, dtype=complex)
    proj = _projector_quadrature(p, center, radius, n_quad)
    rough = _projector_quadrature(p, center, radius, max(4, n_quad // 2))
    err = np.linalg.norm(proj - rough, 2)
    svals = sla.svdvals(proj)
    if err > 0.25 or np.any(np.abs(svals - 0.5) < 10.0 * max(err, 1e-14)):
        raise ContourTooClose(
            f"quadrature error estimate {err:.2e} cannot separate the "
            "projector spectrum at threshold 1/2")
    return int(np.sum(svals >= 0.5))


# ---------------------------------------------------------------------------
# coherent states
# ---------------------------------------------------------------------------

@dataclass
class CoherentState:
    alpha_x: tuple
    alpha_xi: tuple
    h: float
    coeffs: dict                  # sector key -> coefficient vector
    norm2: float                  # captured squared norm
    ref_norm2: float              # quadrature norm of the continuum packet


class PacketProfile:
    """Shared suspension-coordinate data for one Gaussian wave packet."""

    def __init__(self, flow: MappingTorusFlow, alpha_x, alpha_xi, h,
                 tau_grid=4096):
        self.ax = np.asarray(alpha_x, dtype=float)
        self.xi = np.asarray(alpha_xi, dtype=float)
        self.h = float(h)
        self.gamma = float(np.sqrt(1.0 + self.xi @ self.xi)) / self.h
        self.taus = (np.arange(tau_grid) + 0.5) / tau_grid
        self.dtau = 1.0 / tau_grid
        dt = (self.taus - self.ax[2] + 0.5) % 1.0 - 0.5
        self.g_tau = np.exp(1j * self.xi[2] * dt / self.h
                            - 0.5 * self.gamma * dt * dt)
        self.c_vals = flow.time_change(self.taus)
        self.phi = flow.time_change.rectified(self.taus)
        self.tbar = flow.period
        # continuum packet norm in the rectified measure (the packet lives
        # on nonzero-frequency sectors, which use that measure)
        self.ref_norm2 = (np.pi / self.gamma) * float(
            np.sum(np.abs(self.g_tau) ** 2 / self.c_vals) * self.dtau)

    def project(self, flow, block):
        """Coefficient vector of the packet on one sector block."""
        if isinstance(block.sector, NeutralSector):
            js = np.array([m.j for m in block.basis])
            tau_int = (np.exp(-2j * np.pi * np.outer(js, self.taus))
                       @ self.g_tau) * self.dtau
            x_int = _gaussian_x_integral(np.zeros((1, 2)), self.ax[:2],
                                         self.xi[:2], self.h, self.gamma)[0]
            return x_int * tau_int
        freqs = np.asarray(sector_frequencies(flow.cat, block.sector), dtype=float)
        x_int = _gaussian_x_integral(freqs, self.ax[:2], self.xi[:2],
                                     self.h, self.gamma)
        js = np.arange(-_sector_jmax(block), _sector_jmax(block) + 1)
        phases = np.exp(-2j * np.pi * np.outer(js, self.phi) / self.tbar)
        tau_int = (phases @ (self.g_tau / self.c_vals)) * self.dtau / np.sqrt(self.tbar)
        return (x_int[:, None] * tau_int[None, :]).ravel()


def coherent_state(flow: MappingTorusFlow, blocks, alpha_x, alpha_xi, h,
                   mass_tol=0.01, tau_grid=4096):
    """Project a Gaussian wave packet on the truncated mode basis.

    alpha_x = (x1, x2, tau) is the center, alpha_xi the covector.  Raises
    UnresolvedState when more than mass_tol of the packet's squared norm is
    missing from the truncation window.
    """
    profile = PacketProfile(flow, alpha_x, alpha_xi, h, tau_grid)
    coeffs = {}
    captured = 0.0
    for block in blocks:
        vec = profile.project(flow, block)
        coeffs[block.key] = vec
        captured += float(np.vdot(vec, vec).real)
    if captured < (1.0 - mass_tol) * profile.ref_norm2:
        raise UnresolvedState(
            f"truncation captures {captured / profile.ref_norm2:.4f} of the packet mass")
    return CoherentState(tuple(profile.ax), tuple(profile.xi), h, coeffs,
                         captured, profile.ref_norm2)


def _sector_jmax(block):
    return max(m.j for m in block.basis)


def _gaussian_x_integral(freqs, x0, xi_x, h, gamma):
    """Closed-form torus-Gaussian overlaps for a batch of frequencies."""
    q = xi_x[None, :] / h - 2.0 * np.pi * np.asarray(freqs, dtype=float)
    phase = np.exp(-2j * np.pi * (freqs @ x0))
    return (2.0 * np.pi / gamma) * phase * np.exp(-np.sum(q * q, axis=1) / (2.0 * gamma))


def coherent_expectation(state: CoherentState, matrices):
    """<e, M e> / ||e||^2 over the sector blocks in `matrices` (key -> array)."""
    total = 0.0 + 0.0j
    for key, vec in state.coeffs.items():
        if key in matrices:
            total += np.vdot(vec, matrices[key] @ vec)
    return complex(total / state.norm2)


# ---------------------------------------------------------------------------
# appendix-level numeric checks
# ---------------------------------------------------------------------------

def quadratic_partition(radii, r0=1.0, r1=3.0):
    """Diagonal radial multipliers with chi0^2 + chi1^2 = 1 exactly."""
    s = smoothstep((np.asarray(radii) - r0) / (r1 - r0))
    return np.cos(0.5 * np.pi * s), np.sin(0.5 * np.pi * s)


def partition_ims_check(block: SectorBlock, escape: EscapeFunction, z,
                        h_list, trials=20, r0=2.0, r1=10.0, seed=0):
    """Localization-defect residuals r(h) of the quadratic partition.

    For each h the weighted, h-rescaled block A = h P - z is split by the
    radial multipliers and r(h) = | ||A u||^2 - ||A chi0 u||^2
    - ||A chi1 u||^2 | / ||u||^2 is averaged over random test vectors.  The
    vectors are random wave packets (random center in the partition band,
    random phase ramp): the quadratic form on packets probes the
    symbol-level O(h^2) localization defect, whereas white noise only sees
    its statistical fluctuations.
    """
    rng = np.random.default_rng(seed)
    n = block.dim
    js = np.array([m.j for m in block.basis], dtype=float)
    c0 = float(block.flow.time_change(0.0))
    out = {}
    for h in h_list:
        wg = apply_weight(block, escape, h)
        a = wg.rescaled() - complex(z) * np.eye(n)
        chi0, chi1 = quadratic_partition(wg.mode_radii(), r0, r1)
        rng = np.random.default_rng(seed)
        vals = []
        for _ in range(trials):
            r_c = rng.uniform(r0, r1)
            j_c = rng.choice([-1.0, 1.0]) * r_c / (2.0 * np.pi * h * c0)
            j_c = np.clip(j_c, js.min() + 1.0, js.max() - 1.0)
            width = np.sqrt(max(r_c, 1.0) / h) / (2.0 * np.pi)
            u = (np.exp(-0.5 * ((js - j_c) / width) ** 2)
                 * np.exp(2j * np.pi * js * rng.random()))
            au = a @ u
            a0 = a @ (chi0 * u)
            a1 = a @ (chi1 * u)
            res = (np.vdot(au, au) - np.vdot(a0, a0) - np.vdot(a1, a1)).real
            vals.append(abs(res) / np.vdot(u, u).real)
        out[float(h)] = float(np.mean(vals))
    return out


def garding_upper_check(wg: WeightedGenerator, trials=200, seed=0, shift=0.0):
    """Max over random vectors of Im <u, (h P - i shift) u> / ||u||^2."""
    rng = np.random.default_rng(seed)
    p = wg.rescaled() - 1j * shift * np.eye(wg.dim)
    top = -np.inf
    for _ in range(trials):
        u = rng.normal(size=wg.dim) + 1j * rng.normal(size=wg.dim)
        top = max(top, float(np.vdot(u, p @ u).imag / np.vdot(u, u).real))
    return top


def numerical_range_top(matrix):
    """Largest eigenvalue of the Hermitian imaginary part (exact sup of
    Im of the numerical range)."""
    m = np.asarray(matrix, dtype=complex)
    return float(np.max(sla.eigvalsh((m - m.conj().T) / 2j)))


# ---------------------------------------------------------------------------
# binary matrix dump (documented interchange layout)
# ---------------------------------------------------------------------------

_MAGIC = b"CSPC"


def dump_matrix(path, matrix):
    """Dense binary dump: magic 'CSPC', int64 rows, int64 cols (little
    endian), then row-major complex128 little-endian pairs."""
    m = np.ascontiguousarray(np.asarray(matrix, dtype="<c16"))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.array(m.shape, dtype="<i8").tobytes())
        fh.write(m.tobytes())


def load_matrix(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a catspec matrix dump")
        rows, cols = np.frombuffer(fh.read(16), dtype="<i8")
        data = np.frombuffer(fh.read(), dtype="<c16")
    return data.reshape(int(rows), int(cols)).copy()
