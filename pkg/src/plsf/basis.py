"""Stokes eigenfunction basis on the periodic torus.

On the torus the Leray projector commutes with the Laplacian, so the
Stokes eigenfunctions are exactly the divergence-free Fourier modes with
eigenvalues |k|^2.  The real basis convention is: for every half-space
representative wavevector n (first nonzero component positive) and every
polarization vector orthogonal to it (one in 2D, two in 3D), a cosine and
a sine field, each of unit L^2 norm:

    a_cos(x) = sqrt(2 / L^d) e cos(k.x),   a_sin(x) = sqrt(2 / L^d) e sin(k.x).

Entries are ordered by ascending eigenvalue with ties broken by the
lexicographic wavevector order, then polarization index, then cosine
before sine, so the sequence is reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, GridMismatchError
from .fields import SpectralVelocity, representative_modes
from .grid import TorusGrid


@dataclass(frozen=True)
class BasisEntry:
    eigenvalue: float
    wavevector: tuple[int, ...]
    polarization: int
    trig: str  # "cos" | "sin"
    direction: np.ndarray = field(repr=False, compare=False)


def _polarizations(n: tuple[int, ...]) -> list[np.ndarray]:
    """Deterministic orthonormal polarization vectors orthogonal to n."""
    nv = np.asarray(n, dtype=np.float64)
    if len(n) == 2:
        e = np.array([-nv[1], nv[0]]) / np.linalg.norm(nv)
        return [e]
    ref = np.array([0.0, 0.0, 1.0])
    if n[0] == 0 and n[1] == 0:
        ref = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(nv, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nv, e1)
    e2 /= np.linalg.norm(e2)
    return [e1, e2]


class StokesBasis:
    """The first N real Stokes eigenfunctions in the canonical order."""

    def __init__(self, grid: TorusGrid, entries: list[BasisEntry]):
        self.grid = grid
        self.entries = list(entries)
        d = grid.dim
        N = len(self.entries)
        self._mode_flat = np.empty(N, dtype=np.int64)
        self._E = np.empty((N, d), dtype=np.float64)
        self._is_cos = np.empty(N, dtype=bool)
        self.eigenvalues = np.empty(N, dtype=np.float64)
        for j, ent in enumerate(self.entries):
            idx = tuple(x % grid.M for x in ent.wavevector)
            self._mode_flat[j] = np.ravel_multi_index(idx, grid.shape)
            self._E[j] = ent.direction
            self._is_cos[j] = ent.trig == "cos"
            self.eigenvalues[j] = ent.eigenvalue
        self._scale = np.sqrt(2.0 * grid.volume)

    @property
    def size(self) -> int:
        return len(self.entries)

    # -- coefficient transforms ------------------------------------------

    def project_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """Inner products (f, a^r) straight from spectral coefficients."""
        flat = coeffs.reshape(self.grid.dim, -1)
        sub = flat[:, self._mode_flat]  # (d, N)
        amp = np.einsum("nd,dn->n", self._E, sub)
        return self._scale * np.where(self._is_cos, amp.real, -amp.imag)

    def project(self, v: SpectralVelocity) -> np.ndarray:
        if v.grid != self.grid:
            raise GridMismatchError(f"{v.grid!r} vs {self.grid!r}")
        return self.project_coeffs(v.coeffs)

    def synthesize_coeffs(self, c: np.ndarray) -> np.ndarray:
        """Spectral coefficients of sum_r c_r a^r."""
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (self.size,):
            raise ValueError(f"coefficient vector must have length {self.size}")
        d = self.grid.dim
        buf = np.zeros((d, int(np.prod(self.grid.shape))), dtype=np.complex128)
        amp = np.where(self._is_cos, c, -1j * c) / self._scale
        for i in range(d):
            np.add.at(buf[i], self._mode_flat, amp * self._E[:, i])
        buf = buf.reshape((d,) + self.grid.shape)
        return buf + np.conj(self.grid.reflect(buf))

    def synthesize(self, c: np.ndarray, validate: bool = False) -> SpectralVelocity:
        return SpectralVelocity(self.grid, self.synthesize_coeffs(c), validate=validate)

    def entry_field(self, r: int) -> SpectralVelocity:
        """Materialize basis entry r as a unit-norm velocity field."""
        unit = np.zeros(self.size)
        unit[r] = 1.0
        return self.synthesize(unit)

    def truncate(self, N: int) -> "StokesBasis":
        if N < 0 or N > self.size:
            raise CapacityError(N, self.size)
        return StokesBasis(self.grid, self.entries[:N])


def _all_entries(grid: TorusGrid) -> list[BasisEntry]:
    ksc_sq = (2.0 * np.pi / grid.L) ** 2
    entries = []
    for n in representative_modes(grid):
        lam = ksc_sq * float(sum(x * x for x in n))
        for pol, e in enumerate(_polarizations(n)):
            for trig in ("cos", "sin"):
                entries.append(BasisEntry(lam, n, pol, trig, e))
    return entries


def basis_capacity(grid: TorusGrid) -> int:
    """Number of admissible real divergence-free modes on the grid."""
    return (grid.dim - 1) * 2 * len(representative_modes(grid))


def make_basis(grid: TorusGrid, N: int) -> StokesBasis:
    """First N basis entries under the canonical ordering."""
    entries = _all_entries(grid)
    if N < 0 or N > len(entries):
        raise CapacityError(N, len(entries))
    return StokesBasis(grid, entries[:N])


def full_basis(grid: TorusGrid) -> StokesBasis:
    return make_basis(grid, basis_capacity(grid))


def count_modes_below(grid: TorusGrid, lambda_cut: float) -> int:
    """Number of basis entries with eigenvalue <= lambda_cut."""
    entries = _all_entries(grid)
    return sum(1 for e in entries if e.eigenvalue <= lambda_cut)
