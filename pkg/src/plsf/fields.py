"""Divergence-free spectral velocity fields and the operations on them.

A `SpectralVelocity` is an immutable band-limited vector field that is
real (Hermitian-symmetric coefficients), incompressible (k . c(k) = 0)
and mean-free (c(0) = 0).  `TensorField` holds pointwise tensor samples
on the oversampled physical grid; nonlinear quantities are always formed
there and integrated with the uniform-grid rule.
"""

from __future__ import annotations

import struct
from functools import cached_property

import numpy as np

from .errors import FieldInvariantError, GridMismatchError
from .grid import TorusGrid

CHECKPOINT_MAGIC = b"PLSF"
CHECKPOINT_VERSION = 1

# Divergence at or below this relative level counts as already solenoidal,
# which makes the projection an exact fixed point on its own output.
_SOLENOIDAL_RTOL = 1e-13


class SpectralVelocity:
    """Band-limited, real, divergence-free, mean-free velocity field."""

    def __init__(self, grid: TorusGrid, coeffs: np.ndarray, validate: bool = True):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (grid.dim,) + grid.shape:
            raise FieldInvariantError(
                f"coefficient array has shape {coeffs.shape}, "
                f"expected {(grid.dim,) + grid.shape}"
            )
        coeffs = coeffs * grid.band_mask
        coeffs[(slice(None),) + (0,) * grid.dim] = 0.0
        if validate:
            _check_invariants(grid, coeffs)
        coeffs.setflags(write=False)
        self.grid = grid
        self.coeffs = coeffs

    @classmethod
    def zero(cls, grid: TorusGrid) -> "SpectralVelocity":
        return cls(grid, np.zeros((grid.dim,) + grid.shape, np.complex128), validate=False)

    @classmethod
    def from_physical(cls, grid: TorusGrid, samples: np.ndarray) -> "SpectralVelocity":
        """Build from real samples on the *native* M^dim grid.

        The samples are transformed, truncated to the band, Hermitian
        symmetrized and Leray projected, so the result always satisfies
        the type invariants whatever the input.
        """
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape != (grid.dim,) + grid.shape:
            raise FieldInvariantError(
                f"sample array has shape {samples.shape}, "
                f"expected {(grid.dim,) + grid.shape}"
            )
        axes = tuple(range(1, 1 + grid.dim))
        c = np.fft.fftn(samples, axes=axes) / float(grid.M**grid.dim)
        c = c * grid.band_mask
        c = 0.5 * (c + np.conj(grid.reflect(c)))
        return leray_project(grid, c)

    @cached_property
    def physical(self) -> np.ndarray:
        """Real samples on the padded grid, shape (dim,) + padded_shape."""
        return self.grid.to_physical(self.coeffs)

    @cached_property
    def _gradient(self) -> "TensorField":
        g = self.grid
        k = g.wavevectors
        ghat = 1j * k[np.newaxis, :] * self.coeffs[:, np.newaxis]
        return TensorField(g, g.to_physical(ghat), symmetric=False)

    @cached_property
    def _sym_gradient(self) -> "TensorField":
        vals = self._gradient.values
        sym = 0.5 * (vals + np.swapaxes(vals, 0, 1))
        return TensorField(self.grid, sym, symmetric=True)

    def __add__(self, other: "SpectralVelocity") -> "SpectralVelocity":
        _require_same_grid(self, other)
        return SpectralVelocity(self.grid, self.coeffs + other.coeffs, validate=False)

    def __sub__(self, other: "SpectralVelocity") -> "SpectralVelocity":
        _require_same_grid(self, other)
        return SpectralVelocity(self.grid, self.coeffs - other.coeffs, validate=False)

    def __mul__(self, a: float) -> "SpectralVelocity":
        return SpectralVelocity(self.grid, self.coeffs * float(a), validate=False)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SpectralVelocity(grid={self.grid!r})"


class TensorField:
    """Pointwise d x d tensor samples on the padded physical grid."""

    def __init__(self, grid: TorusGrid, values: np.ndarray, symmetric: bool = False):
        values = np.asarray(values, dtype=np.float64)
        d = grid.dim
        if values.shape != (d, d) + grid.padded_shape:
            raise FieldInvariantError(
                f"tensor array has shape {values.shape}, "
                f"expected {(d, d) + grid.padded_shape}"
            )
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.symmetric = bool(symmetric)

    def __repr__(self):
        return f"TensorField(grid={self.grid!r}, symmetric={self.symmetric})"


def _require_same_grid(f, g):
    if f.grid != g.grid:
        raise GridMismatchError(f"{f.grid!r} vs {g.grid!r}")


def _check_invariants(grid: TorusGrid, coeffs: np.ndarray, rtol: float = 1e-10):
    scale = float(np.max(np.abs(coeffs)))
    if scale == 0.0:
        return
    herm = coeffs - np.conj(grid.reflect(coeffs))
    if float(np.max(np.abs(herm))) > rtol * scale:
        raise FieldInvariantError("coefficients are not Hermitian-symmetric")
    div = np.sum(grid.wavevectors * coeffs, axis=0)
    kmax = 2.0 * np.pi / grid.L * (grid.M // 2)
    if float(np.max(np.abs(div))) > rtol * scale * kmax:
        raise FieldInvariantError("field is not divergence-free")


# -- differential operators and projection ------------------------------


def sym_gradient(v: SpectralVelocity) -> TensorField:
    """Strain-rate tensor, the symmetric part of the velocity gradient."""
    return v._sym_gradient


def gradient(v: SpectralVelocity) -> TensorField:
    """Full velocity gradient with entries (i, j) -> d v_i / d x_j."""
    return v._gradient


def grad_sym_gradient_samples(v: SpectralVelocity) -> np.ndarray:
    """Samples of the strain-rate gradient, shape (d, d, d) + padded_shape.

    Entry (s, i, j) holds d_s D_ij; used by the weighted second-order
    dissipation functional.
    """
    g = v.grid
    k = g.wavevectors
    ghat = 1j * k[np.newaxis, :] * v.coeffs[:, np.newaxis]
    dhat = 0.5 * (ghat + np.swapaxes(ghat, 0, 1))
    ddhat = 1j * k[np.newaxis, np.newaxis, :] * dhat[:, :, np.newaxis]
    # axes: (i, j, s) -> reorder to (s, i, j)
    return np.moveaxis(g.to_physical(ddhat), 2, 0)


def hessian_samples(v: SpectralVelocity) -> np.ndarray:
    """Second-derivative samples, shape (d, d, d) + padded_shape.

    Entry (i, j, k) holds d_j d_k v_i.
    """
    g = v.grid
    k = g.wavevectors
    hhat = -(
        k[np.newaxis, :, np.newaxis]
        * k[np.newaxis, np.newaxis, :]
        * v.coeffs[:, np.newaxis, np.newaxis]
    )
    return g.to_physical(hhat)


def leray_project(grid: TorusGrid, coeffs: np.ndarray) -> SpectralVelocity:
    """Project arbitrary real spectral data onto divergence-free fields.

    Per mode k != 0 the output is f(k) - k (k . f(k)) / |k|^2; the mean
    mode is zeroed.  If the input is already solenoidal at rounding level
    it is passed through unchanged, which makes a second application an
    exact fixed point of the first.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.shape != (grid.dim,) + grid.shape:
        raise FieldInvariantError(
            f"coefficient array has shape {coeffs.shape}, "
            f"expected {(grid.dim,) + grid.shape}"
        )
    coeffs = coeffs * grid.band_mask
    k = grid.wavevectors
    kdotf = np.sum(k * coeffs, axis=0)
    scale = float(np.max(np.abs(coeffs)))
    kmax = 2.0 * np.pi / grid.L * (grid.M // 2)
    if scale == 0.0 or float(np.max(np.abs(kdotf))) <= _SOLENOIDAL_RTOL * scale * kmax:
        return SpectralVelocity(grid, coeffs, validate=False)
    ksq = grid.k_squared.copy()
    ksq[(0,) * grid.dim] = 1.0
    out = coeffs - k * (kdotf / ksq)[np.newaxis]
    return SpectralVelocity(grid, out, validate=False)


# -- norms and inner products --------------------------------------------


def _samples_and_grid(f):
    if isinstance(f, SpectralVelocity):
        return f.physical, f.grid
    if isinstance(f, TensorField):
        return f.values, f.grid
    raise TypeError(f"expected SpectralVelocity or TensorField, got {type(f)!r}")


def pointwise_magnitude(samples: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Euclidean/Frobenius magnitude over the leading tensor axes."""
    lead = samples.ndim - grid.dim
    if lead == 0:
        return np.abs(samples)
    return np.sqrt(np.sum(samples**2, axis=tuple(range(lead))))


def lp_norm(f, q: float, grid: TorusGrid | None = None) -> float:
    """L^q(Omega) norm by quadrature on the padded grid, q >= 1.

    Accepts a SpectralVelocity, a TensorField, or a raw sample array on
    the padded grid together with its grid.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if isinstance(f, np.ndarray):
        if grid is None:
            raise ValueError("raw sample arrays need an explicit grid")
        samples = f
    else:
        samples, grid = _samples_and_grid(f)
    mag = pointwise_magnitude(samples, grid)
    if q == 2.0:
        total = float(np.sum(mag**2))
        return float(np.sqrt(total * grid.quad_weight))
    total = float(np.sum(mag**q))
    return float((total * grid.quad_weight) ** (1.0 / q))


def inner_product(f, g) -> float:
    """Quadrature of the pointwise (full tensor) contraction of f and g."""
    fs, fgrid = _samples_and_grid(f)
    gs, ggrid = _samples_and_grid(g)
    if fgrid != ggrid:
        raise GridMismatchError(f"{fgrid!r} vs {ggrid!r}")
    if fs.shape != gs.shape:
        raise GridMismatchError(f"field shapes differ: {fs.shape} vs {gs.shape}")
    return float(np.sum(fs * gs) * fgrid.quad_weight)


def l2_norm_spectral(v: SpectralVelocity) -> float:
    """Coefficient-sum (Parseval) form of the L^2 norm."""
    return float(np.sqrt(v.grid.volume * np.sum(np.abs(v.coeffs) ** 2)))


# -- canonical initial data ----------------------------------------------


def taylor_green(grid: TorusGrid, amplitude: float = 1.0, band: int = 1) -> SpectralVelocity:
    """Classical Taylor-Green cellular vortex, exactly divergence-free."""
    if band < 1 or band > grid.M // 2 - 1:
        raise ValueError(f"band must be in [1, {grid.M // 2 - 1}], got {band}")
    kap = 2.0 * np.pi * band / grid.L
    x = grid.points(padded=False)
    a = float(amplitude)
    if grid.dim == 2:
        u = a * np.sin(kap * x[0]) * np.cos(kap * x[1])
        w = -a * np.cos(kap * x[0]) * np.sin(kap * x[1])
        samples = np.stack([u, w])
    else:
        u = a * np.sin(kap * x[0]) * np.cos(kap * x[1]) * np.cos(kap * x[2])
        w = -a * np.cos(kap * x[0]) * np.sin(kap * x[1]) * np.cos(kap * x[2])
        samples = np.stack([u, w, np.zeros_like(u)])
    return SpectralVelocity.from_physical(grid, samples)


def random_solenoidal(
    grid: TorusGrid,
    band: int,
    decay: float = 2.0,
    seed=0,
    amplitude: float = 1.0,
) -> SpectralVelocity:
    """Random band-limited solenoidal field, reproducible from the seed.

    Independent complex Gaussian coefficients with power-law decay
    |n|^(-decay) inside |n| <= band, Hermitian-symmetrized, Leray
    projected and rescaled to the requested L^2 norm.  `seed` is anything
    numpy's default_rng accepts (int, SeedSequence, Generator).
    """
    if band < 1 or band > grid.M // 2 - 1:
        raise ValueError(f"band must be in [1, {grid.M // 2 - 1}], got {band}")
    rng = np.random.default_rng(seed)
    shape = (grid.dim,) + grid.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    nsq = np.sum(grid.mode_grid.astype(np.float64) ** 2, axis=0)
    keep = (nsq > 0) & (nsq <= float(band) ** 2)
    with np.errstate(divide="ignore"):
        weight = np.where(keep, nsq ** (-decay / 2.0), 0.0)
    c = raw * weight[np.newaxis]
    c = 0.5 * (c + np.conj(grid.reflect(c)))
    v = leray_project(grid, c)
    norm = l2_norm_spectral(v)
    if norm == 0.0:
        raise FieldInvariantError("random field degenerated to zero")
    return v * (float(amplitude) / norm)


# -- checkpoint format -----------------------------------------------------
#
# Little-endian layout:
#   magic "PLSF" (4 bytes) | version u32 | dim u32 | M u32 | L f64 |
#   mode_count u64 | mode_count * dim * (re f64, im f64)
# Coefficients are stored for the canonical half-space representative
# wavevectors in the documented basis order (eigenvalue, then
# lexicographic wavevector); the conjugate modes are implied.

_HEADER = struct.Struct("<4sIIIdQ")


def representative_modes(grid: TorusGrid) -> list[tuple[int, ...]]:
    """Half-space representative wavevectors in canonical order.

    A representative has its first nonzero component positive; the order
    is ascending |n|^2 with lexicographic tie-break.
    """
    half = grid.M // 2 - 1
    rng = range(-half, half + 1)
    reps = []
    if grid.dim == 2:
        lattice = ((i, j) for i in rng for j in rng)
    else:
        lattice = ((i, j, k) for i in rng for j in rng for k in rng)
    for n in lattice:
        nz = next((x for x in n if x != 0), 0)
        if nz > 0:
            reps.append(n)
    reps.sort(key=lambda n: (sum(x * x for x in n), n))
    return reps


def save_checkpoint(path, v: SpectralVelocity) -> None:
    grid = v.grid
    reps = representative_modes(grid)
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                CHECKPOINT_MAGIC, CHECKPOINT_VERSION, grid.dim, grid.M, grid.L, len(reps)
            )
        )
        buf = np.empty((len(reps), grid.dim), dtype=np.complex128)
        for row, n in enumerate(reps):
            idx = tuple(x % grid.M for x in n)
            buf[row] = v.coeffs[(slice(None),) + idx]
        inter = np.empty((len(reps), grid.dim, 2), dtype="<f8")
        inter[..., 0] = buf.real
        inter[..., 1] = buf.imag
        fh.write(inter.tobytes())


def load_checkpoint(path, dealias_factor: float = 1.5) -> SpectralVelocity:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FieldInvariantError(f"truncated checkpoint header in {path}")
        magic, version, dim, M, L, count = _HEADER.unpack(header)
        if magic != CHECKPOINT_MAGIC:
            raise FieldInvariantError(f"{path} is not a PLSF checkpoint")
        if version != CHECKPOINT_VERSION:
            raise FieldInvariantError(f"unsupported checkpoint version {version}")
        grid = TorusGrid(dim, M, L, dealias_factor=dealias_factor)
        reps = representative_modes(grid)
        if count != len(reps):
            raise FieldInvariantError(
                f"checkpoint stores {count} modes, grid admits {len(reps)}"
            )
        data = np.frombuffer(fh.read(count * dim * 16), dtype="<f8")
        if data.size != count * dim * 2:
            raise FieldInvariantError(f"truncated checkpoint payload in {path}")
    flat = data.reshape(count, dim, 2)
    coeffs = np.zeros((dim,) + grid.shape, dtype=np.complex128)
    for row, n in enumerate(reps):
        idx = tuple(x % M for x in n)
        coeffs[(slice(None),) + idx] = flat[row, :, 0] + 1j * flat[row, :, 1]
    # representatives and their mirrors are disjoint, so summing with the
    # reflected conjugate fills exactly the unset half
    coeffs = coeffs + np.conj(grid.reflect(coeffs))
    return SpectralVelocity(grid, coeffs)
