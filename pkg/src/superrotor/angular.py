"""Truncated |N, M> basis, wave packets and angular operators.

Spherical harmonics follow the Condon-Shortley phase convention (the one
used by :func:`scipy.special.sph_harm_y`); every operator and oracle in the
package shares it, which fixes the sign of the Delta M = +-2 couplings and
hence of all directionality observables.

Flat index of |N, M> is ``N**2 + N + M``; the basis up to ``n_max`` has
``(n_max + 1)**2`` states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import roots_legendre, sph_harm_y

from .molecule import CM_TO_RAD_PS, MoleculeSpec, energy

LAB_Z = "z"


# --------------------------------------------------------------------- basis
@dataclass(frozen=True)
class BasisIndex:
    n_max: int

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")

    @property
    def size(self) -> int:
        return (self.n_max + 1) ** 2

    def index(self, n, m):
        n = np.asarray(n)
        m = np.asarray(m)
        if np.any(np.abs(m) > n) or np.any(n > self.n_max) or np.any(n < 0):
            raise IndexError(f"(N={n}, M={m}) outside basis with n_max={self.n_max}")
        return n * n + n + m

    @property
    def n(self) -> np.ndarray:
        return _quantum_numbers(self.n_max)[0]

    @property
    def m(self) -> np.ndarray:
        return _quantum_numbers(self.n_max)[1]

    def shell(self, n: int) -> slice:
        return slice(n * n, (n + 1) ** 2)


@lru_cache(maxsize=None)
def _quantum_numbers(n_max):
    ns = np.concatenate([np.full(2 * n + 1, n) for n in range(n_max + 1)])
    ms = np.concatenate([np.arange(-n, n + 1) for n in range(n_max + 1)])
    ns.setflags(write=False)
    ms.setflags(write=False)
    return ns, ms


@lru_cache(maxsize=16)
def mirror_partners(n_max: int):
    """Index arrays pairing |N, M> with |N, -M>.

    Returns ``(zero, pos, neg, pair_starts)``: the M = 0 states, the M > 0
    states, their -M partners (same order) and, for N >= 1, the offset of
    each shell's first pair in ``pos``.
    """
    ns, ms = _quantum_numbers(n_max)
    zero = np.nonzero(ms == 0)[0]
    pos = np.nonzero(ms > 0)[0]
    neg = ns[pos] ** 2 + ns[pos] - ms[pos]
    nn = np.arange(1, n_max + 1)
    return zero, pos, neg, (nn - 1) * nn // 2


def sum_over_m(values: np.ndarray, n_max: int) -> np.ndarray:
    """Sum a per-state array over M within each N shell (leading axis = basis).

    Each +M/-M pair is added first, so mirror-image inputs (M -> -M) give
    bitwise identical sums.
    """
    zero, pos, neg, starts = mirror_partners(n_max)
    out = values[zero].copy()
    if n_max >= 1:
        out[1:] += np.add.reduceat(values[pos] + values[neg], starts, axis=0)
    return out


# ------------------------------------------------------------- wavefunction
@dataclass
class Wavefunction:
    """Coefficients of a rotational wave packet in the |N, M> basis."""

    coefficients: np.ndarray
    n_max: int

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.shape != ((self.n_max + 1) ** 2,):
            raise ValueError(
                f"coefficient vector of length {self.coefficients.shape} does not match n_max={self.n_max}"
            )

    @classmethod
    def basis_state(cls, n_max: int, n: int, m: int = 0) -> "Wavefunction":
        c = np.zeros((n_max + 1) ** 2, dtype=complex)
        c[BasisIndex(n_max).index(n, m)] = 1.0
        return cls(c, n_max)

    @classmethod
    def from_components(cls, n_max: int, components: dict[tuple[int, int], complex], normalize=True):
        c = np.zeros((n_max + 1) ** 2, dtype=complex)
        basis = BasisIndex(n_max)
        for (n, m), a in components.items():
            c[basis.index(n, m)] += a
        psi = cls(c, n_max)
        return psi.normalized() if normalize else psi

    @property
    def basis(self) -> BasisIndex:
        return BasisIndex(self.n_max)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalized(self) -> "Wavefunction":
        return Wavefunction(self.coefficients / self.norm(), self.n_max)

    def overlap(self, other: "Wavefunction") -> complex:
        return complex(np.vdot(self.coefficients, other.coefficients))

    def expectation(self, operator) -> float:
        mat = operator.matrix if isinstance(operator, AngularOperator) else operator
        return float(np.real(np.vdot(self.coefficients, mat @ self.coefficients)))

    def resized(self, n_max: int) -> "Wavefunction":
        """Embed into (or truncate to) a basis with a different ``n_max``."""
        c = np.zeros((n_max + 1) ** 2, dtype=complex)
        k = min(c.size, self.coefficients.size)
        c[:k] = self.coefficients[:k]
        return Wavefunction(c, n_max)

    def populations(self) -> np.ndarray:
        return population_by_n(self)

    # serialization -------------------------------------------------------
    def to_text(self) -> str:
        """Text snapshot: one ``N M re im`` line per basis state."""
        basis = self.basis
        lines = [f"# n_max {self.n_max}", "# N M re im"]
        for n, m, a in zip(basis.n, basis.m, self.coefficients):
            lines.append(f"{n} {m} {a.real:.17g} {a.imag:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Wavefunction":
        n_max = None
        rows = []
        for line in text.splitlines():
            if line.startswith("# n_max"):
                n_max = int(line.split()[2])
            elif line.strip() and not line.startswith("#"):
                n, m, re, im = line.split()
                rows.append((int(n), int(m), float(re) + 1j * float(im)))
        if n_max is None:
            raise ValueError("snapshot lacks '# n_max' header")
        c = np.zeros((n_max + 1) ** 2, dtype=complex)
        for n, m, a in rows:
            c[n * n + n + m] = a
        return cls(c, n_max)

    def save(self, path) -> None:
        np.savez(path, coefficients=self.coefficients, n_max=self.n_max)

    @classmethod
    def load(cls, path) -> "Wavefunction":
        with np.load(path) as data:
            return cls(data["coefficients"], int(data["n_max"]))


# ----------------------------------------------------------------- operators
@dataclass(frozen=True)
class AngularOperator:
    """Sparse operator on the |N, M> basis with its selection-rule stamp."""

    matrix: sp.csr_matrix
    n_max: int
    delta_n: tuple[int, ...]
    delta_m: tuple[int, ...]
    label: str = ""

    def stamp_violations(self) -> int:
        """Number of nonzeros outside the declared Delta N / Delta M."""
        coo = self.matrix.tocoo()
        ns, ms = _quantum_numbers(self.n_max)
        dn = ns[coo.row] - ns[coo.col]
        dm = ms[coo.row] - ms[coo.col]
        ok = np.isin(dn, self.delta_n) & np.isin(dm, self.delta_m)
        return int(np.count_nonzero(~ok & (coo.data != 0)))

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def __matmul__(self, other):
        return self.matrix @ other


def cos2_z_elements(n, m):
    """Closed-form <N,M|cos^2 theta|N,M> and <N+2,M|cos^2 theta|N,M>."""
    n = np.asarray(n, dtype=float)
    m = np.asarray(m, dtype=float)
    diag = 1.0 / 3.0 + (2.0 / 3.0) * (n * (n + 1) - 3 * m * m) / ((2 * n - 1) * (2 * n + 3))
    up = np.sqrt(((n + 1) ** 2 - m * m) * ((n + 2) ** 2 - m * m)) / (
        (2 * n + 3) * np.sqrt((2 * n + 1) * (2 * n + 5))
    )
    return diag, up


@lru_cache(maxsize=16)
def _cos2_z(n_max: int) -> sp.csr_matrix:
    ns, ms = _quantum_numbers(n_max)
    diag, up = cos2_z_elements(ns, ms)
    rows = [np.arange(ns.size)]
    cols = [np.arange(ns.size)]
    vals = [diag]
    sel = ns + 2 <= n_max
    i = np.nonzero(sel)[0]
    j = (ns[i] + 2) ** 2 + (ns[i] + 2) + ms[i]
    rows += [j, i]
    cols += [i, j]
    vals += [up[i], up[i]]
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(ns.size, ns.size)
    ).tocsr()
    mat.sort_indices()
    return mat


def jy_matrix_block(j: int) -> np.ndarray:
    """Dense J_y in the |j, m> basis, m = -j..j (Condon-Shortley)."""
    m = np.arange(-j, j)
    # <m+1|J_+|m>
    jp = np.sqrt(j * (j + 1) - m * (m + 1))
    jplus = np.diag(jp, -1).astype(complex)
    return (jplus - jplus.conj().T) / 2j


@lru_cache(maxsize=None)
def wigner_small_d(j: int, beta: float) -> np.ndarray:
    """Wigner d^j_{m'm}(beta) as a real (2j+1)x(2j+1) matrix, rows m', cols m."""
    generator = np.real(-1j * jy_matrix_block(j))  # -i J_y is real antisymmetric
    return scipy.linalg.expm(beta * generator)


@lru_cache(maxsize=16)
def _cos2_x(n_max: int) -> sp.csr_matrix:
    """cos^2 of the angle to the lab x axis, built by rotating the z operator."""
    vz = _cos2_z(n_max)
    blocks = {}
    for n in range(n_max + 1):
        d_n = wigner_small_d(n, np.pi / 2)
        for n2 in (n, n + 2):
            if n2 > n_max:
                continue
            d_n2 = wigner_small_d(n2, np.pi / 2)
            sub = vz[n2 * n2 : (n2 + 1) ** 2, n * n : (n + 1) ** 2].toarray()
            blocks[(n2, n)] = d_n2 @ sub @ d_n.T
    ns, ms = _quantum_numbers(n_max)
    rows, cols, vals = [], [], []
    for (n2, n), blk in blocks.items():
        m2 = np.arange(-n2, n2 + 1)[:, None]
        m1 = np.arange(-n, n + 1)[None, :]
        keep = np.isin(m2 - m1, (-2, 0, 2)) & (blk != 0)
        r, c = np.nonzero(keep)
        gi = n2 * n2 + r
        gj = n * n + c
        rows.append(gi)
        cols.append(gj)
        vals.append(blk[r, c])
        if n2 != n:
            rows.append(gj)
            cols.append(gi)
            vals.append(blk[r, c])
    size = ns.size
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()
    mat = 0.5 * (mat + mat.T)
    mat.sort_indices()
    return mat


def z_rotation_phases(n_max: int, angle: float) -> np.ndarray:
    """Diagonal of exp(-i angle J_z)."""
    return np.exp(-1j * angle * _quantum_numbers(n_max)[1])


def cos2_matrix(n_max: int, polarization=LAB_Z) -> AngularOperator:
    """Matrix of cos^2 of the angle between the molecular axis and the field.

    Parameters
    ----------
    polarization : "z" or float
        ``"z"`` for a field along the lab z axis; a number is the in-plane
        (xy) polarization angle phi_p in radians.
    """
    if n_max < 2:
        raise ValueError("cos2_matrix needs n_max >= 2")
    if polarization is None or polarization == LAB_Z:
        return AngularOperator(_cos2_z(n_max), n_max, (-2, 0, 2), (0,), "cos2_z")
    phi = float(polarization)
    vx = _cos2_x(n_max)
    if phi % np.pi == 0:
        mat = vx.astype(complex)
    else:
        ph = z_rotation_phases(n_max, phi)
        mat = sp.diags(ph) @ vx @ sp.diags(ph.conj())
        mat = sp.csr_matrix(mat)
        # exact phases for Delta M = 0, +-2 keep the matrix Hermitian
        mat = 0.5 * (mat + mat.conj().T)
    return AngularOperator(sp.csr_matrix(mat), n_max, (-2, 0, 2), (-2, 0, 2), f"cos2_phi={phi:.6g}")


def jz_matrix(n_max: int) -> AngularOperator:
    ms = _quantum_numbers(n_max)[1].astype(float)
    return AngularOperator(sp.diags(ms).tocsr(), n_max, (0,), (0,), "jz")


# ---------------------------------------------------------------- observables
def _coeffs(psi):
    if isinstance(psi, Wavefunction):
        return psi.coefficients, psi.n_max
    raise TypeError("expected a Wavefunction")


def population_by_n(psi: Wavefunction) -> np.ndarray:
    """Shell populations sum_M |c_{N,M}|^2, indexed by N."""
    c, n_max = _coeffs(psi)
    return sum_over_m(np.abs(c) ** 2, n_max)


def coherence_array(c: np.ndarray, n_max: int, delta_m: int, weights=None) -> np.ndarray:
    """sum_M conj(c_{N+2, M+dM}) c_{N, M} for every N = 0..n_max-2.

    ``c`` may be a batch with shape (basis, k); the result is then the
    ``weights``-weighted sum over columns.
    """
    if delta_m not in (-2, 0, 2):
        raise ValueError("delta_m must be 0 or +-2")
    ns, ms = _quantum_numbers(n_max)
    src = np.nonzero((ns + 2 <= n_max))[0]
    dst = (ns[src] + 2) ** 2 + (ns[src] + 2) + ms[src] + delta_m
    prod = np.conj(c[dst]) * c[src]
    if prod.ndim == 2:
        prod = prod @ (np.ones(prod.shape[1]) if weights is None else np.asarray(weights))
    starts = np.arange(n_max - 1) ** 2
    return np.add.reduceat(prod, starts) if n_max >= 2 else np.zeros(0, complex)


def coherence(psi: Wavefunction, n: int, delta_m: int = 0) -> complex:
    """Coherence between shells N and N+2 summed over M (target M' = M + dM)."""
    c, n_max = _coeffs(psi)
    if n + 2 > n_max or n < 0:
        raise ValueError(f"need 0 <= N and N+2 <= n_max={n_max}")
    return complex(coherence_array(c, n_max, delta_m)[n])


def shell_jz(c: np.ndarray, n_max: int, weights=None) -> np.ndarray:
    """sum_M M |c_{N,M}|^2 for each N (weighted over a batch)."""
    p = np.abs(c) ** 2
    if p.ndim == 2:
        p = p @ (np.ones(p.shape[1]) if weights is None else np.asarray(weights))
    return jz_by_n(p, n_max)


def jz_by_n(p: np.ndarray, n_max: int) -> np.ndarray:
    """sum_{M>0} M (p_{N,M} - p_{N,-M}) per shell; exactly odd under M -> -M."""
    zero, pos, neg, starts = mirror_partners(n_max)
    ms = _quantum_numbers(n_max)[1]
    out = np.zeros(n_max + 1)
    if n_max >= 1:
        out[1:] = np.add.reduceat(ms[pos] * (p[pos] - p[neg]), starts)
    return out


def free_phases(n_max: int, molecule: MoleculeSpec, dt: float) -> np.ndarray:
    ns = _quantum_numbers(n_max)[0]
    return np.exp(-1j * CM_TO_RAD_PS * energy(molecule, np.arange(n_max + 1)) * dt)[ns]


def angular_density(psi: Wavefunction, phi, t: float = 0.0, molecule: MoleculeSpec | None = None,
                    theta: float = np.pi / 2, marginal: bool = False):
    """Probability density of the molecular axis versus in-plane angle phi.

    The default is the slice at ``theta`` (pi/2: the plane of rotation).
    With ``marginal=True`` the density is integrated over theta with the
    sin(theta) weight instead. If ``t`` is nonzero the packet is first
    evolved freely for ``t`` ps using ``molecule``'s energies.

    Returns ``(density, normalized)``; ``normalized`` integrates to one over
    the grid with the trapezoidal rule on a periodic grid.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0:
        raise ValueError("empty phi grid")
    c, n_max = _coeffs(psi)
    if t:
        if molecule is None:
            raise ValueError("free evolution needs the molecule")
        c = c * free_phases(n_max, molecule, t)
    if marginal:
        x, w = roots_legendre(n_max + 1)
        thetas = np.arccos(x)
        ylm = _ylm_table(n_max, thetas)  # (ntheta, basis)
        ms = _quantum_numbers(n_max)[1]
        dens = np.zeros(phi.size)
        for k in range(thetas.size):
            amp = (ylm[k] * c) @ np.exp(1j * np.outer(ms, phi))
            dens += w[k] * np.abs(amp) ** 2
    else:
        amp = spherical_harmonics(n_max, np.full(phi.shape, theta), phi) @ c
        dens = np.abs(amp) ** 2
    total = dens.mean() * 2 * np.pi
    return dens, dens / total if total > 0 else dens


# --------------------------------------------------------- spherical harmonics
def _ylm_table(n_max, thetas):
    """Y_{N,M}(theta, 0) for every basis state; shape (len(thetas), basis)."""
    ns, ms = _quantum_numbers(n_max)
    return sph_harm_y(ns[None, :], ms[None, :], np.asarray(thetas)[:, None], 0.0)


def spherical_harmonics(n_max, theta, phi) -> np.ndarray:
    """Y_{N,M}(theta_k, phi_k) for each point k and basis state; shape (k, basis)."""
    ns, ms = _quantum_numbers(n_max)
    theta = np.atleast_1d(theta)
    phi = np.atleast_1d(phi)
    return sph_harm_y(ns[None, :], ms[None, :], theta[:, None], phi[:, None])


@dataclass
class GridTransform:
    """Gauss-Legendre (cos theta) x uniform (phi) quadrature grid.

    ``forward`` evaluates a wave packet on the grid, ``inverse`` projects
    grid values back onto the basis. Round trips are exact when the grid
    integrates polynomials of degree 2 n_max exactly.
    """

    n_max: int
    n_theta: int
    n_phi: int
    theta: np.ndarray = field(init=False)
    phi: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)
    _y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_theta < self.n_max + 1 or self.n_phi < 2 * self.n_max + 1:
            raise ValueError(
                f"quadrature too coarse for n_max={self.n_max}: need n_theta >= {self.n_max + 1} "
                f"and n_phi >= {2 * self.n_max + 1}"
            )
        x, wx = roots_legendre(self.n_theta)
        phis = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        th, ph = np.meshgrid(np.arccos(x), phis, indexing="ij")
        self.theta = th.ravel()
        self.phi = ph.ravel()
        self.weights = np.repeat(wx, self.n_phi) * (2 * np.pi / self.n_phi)
        self._y = spherical_harmonics(self.n_max, self.theta, self.phi)

    @classmethod
    def for_degree(cls, n_max: int, extra: int = 0) -> "GridTransform":
        """Smallest grid exact for products of degree 2 n_max + extra."""
        deg = 2 * n_max + extra
        return cls(n_max, deg // 2 + 1, deg + 1)

    def forward(self, psi: Wavefunction) -> np.ndarray:
        return self._y @ psi.coefficients

    def inverse(self, values: np.ndarray) -> Wavefunction:
        return Wavefunction(self._y.conj().T @ (self.weights * values), self.n_max)

    def integrate(self, values: np.ndarray) -> complex:
        return complex(np.sum(self.weights * values))

    def axis_cos2(self, polarization=LAB_Z) -> np.ndarray:
        """cos^2 of the angle between each grid direction and the field."""
        if polarization is None or polarization == LAB_Z:
            return np.cos(self.theta) ** 2
        phi_p = float(polarization)
        return (np.sin(self.theta) * np.cos(self.phi - phi_p)) ** 2
