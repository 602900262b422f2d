"""Periodic torus grids and the spectral transform conventions.

Conventions used throughout the package:

* Fields live on the torus (0, L)^dim with dim in {2, 3}.
* A spectral coefficient array stores "analytic" Fourier coefficients in
  numpy fftn layout, one block of shape (M,)*dim per vector/tensor
  component, so that

      f(x) = sum_n c(n) * exp(i k_n . x),      k_n = (2*pi/L) * n.

* Retained wavevectors are the integer multi-indices with
  |n_i| <= M/2 - 1 per axis.  The Nyquist index n_i = -M/2 present in the
  fftn layout is always kept at zero: the retained set is then closed
  under negation, which is what makes real fields representable.
* Physical samples of nonlinear quantities are taken on an oversampled
  grid with padded_M = ceil(dealias_factor * M) points per axis (rounded
  up to even).  With the default factor 3/2, quadrature of products of up
  to three band-limited factors is alias-free, hence agrees with the
  exact integral of the underlying trigonometric polynomial.
* Quadrature is the uniform-grid (periodic trapezoidal) rule with weight
  (L / padded_M)^dim, spectrally exact for band-limited integrands.

All reductions use numpy's fixed pairwise summation, so norms are
reproducible bit-for-bit for a given platform and array shape.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np


class TorusGrid:
    """Uniform periodic grid on (0, L)^dim with spectral transforms."""

    def __init__(self, dim: int, M: int, L: float, dealias_factor: float = 1.5):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        if M < 8 or M % 2 != 0:
            raise ValueError(f"M must be an even integer >= 8, got {M}")
        if not (L > 0):
            raise ValueError(f"L must be positive, got {L}")
        if not (dealias_factor >= 1):
            raise ValueError(f"dealias_factor must be >= 1, got {dealias_factor}")
        self.dim = int(dim)
        self.M = int(M)
        self.L = float(L)
        self.dealias_factor = float(dealias_factor)
        Mp = math.ceil(self.dealias_factor * self.M)
        self.padded_M = Mp + (Mp % 2)

    # -- basic geometry -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.dim

    @property
    def padded_shape(self) -> tuple[int, ...]:
        return (self.padded_M,) * self.dim

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def volume(self) -> float:
        return self.L**self.dim

    @property
    def quad_weight(self) -> float:
        """Quadrature weight of one padded-grid point."""
        return (self.L / self.padded_M) ** self.dim

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wavenumbers along one axis in fftn layout."""
        return np.rint(np.fft.fftfreq(self.M) * self.M).astype(np.int64)

    @cached_property
    def mode_grid(self) -> np.ndarray:
        """Integer multi-indices, shape (dim,) + shape."""
        axes = np.meshgrid(*([self.modes] * self.dim), indexing="ij")
        return np.stack(axes)

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """k = (2*pi/L) * n, shape (dim,) + shape."""
        return (2.0 * np.pi / self.L) * self.mode_grid.astype(np.float64)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return np.sum(self.wavevectors**2, axis=0)

    @cached_property
    def band_mask(self) -> np.ndarray:
        """True where every |n_i| <= M/2 - 1 (Nyquist excluded)."""
        half = self.M // 2
        return np.all(np.abs(self.mode_grid) <= half - 1, axis=0)

    def points(self, padded: bool = True) -> np.ndarray:
        """Physical sample coordinates, shape (dim,) + grid shape."""
        n = self.padded_M if padded else self.M
        x = np.arange(n) * (self.L / n)
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))

    # -- padding / truncation -------------------------------------------
    #
    # The band occupies one low and one high index block per axis, so pad
    # and truncate move 2^dim contiguous corner blocks; plain slicing is
    # much faster than fancy indexing here.

    @cached_property
    def _corner_blocks(self):
        half = self.M // 2
        Mp = self.padded_M
        src = (slice(0, half), slice(self.M - (half - 1), self.M))
        dst = (slice(0, half), slice(Mp - (half - 1), Mp))
        pairs = []
        for choice in np.ndindex(*([2] * self.dim)):
            pairs.append(
                (tuple(src[c] for c in choice), tuple(dst[c] for c in choice))
            )
        return pairs

    def pad_spectral(self, coeffs: np.ndarray) -> np.ndarray:
        """Embed native-band coefficients into the padded spectral layout."""
        extra = coeffs.ndim - self.dim
        out = np.zeros(coeffs.shape[:extra] + self.padded_shape, dtype=np.complex128)
        for src, dst in self._corner_blocks:
            out[(Ellipsis,) + dst] = coeffs[(Ellipsis,) + src]
        return out

    def truncate_spectral(self, padded: np.ndarray) -> np.ndarray:
        """Restrict padded-layout coefficients to the native band."""
        extra = padded.ndim - self.dim
        out = np.zeros(padded.shape[:extra] + self.shape, dtype=np.complex128)
        for src, dst in self._corner_blocks:
            out[(Ellipsis,) + src] = padded[(Ellipsis,) + dst]
        return out

    # -- transforms ------------------------------------------------------
    #
    # Fields here are spectra of real data (Hermitian-symmetric), so both
    # directions run through the real-input FFT half-spectrum.

    @cached_property
    def _lead_blocks(self):
        """Corner blocks over the leading dim-1 spatial axes only."""
        half = self.M // 2
        Mp = self.padded_M
        src = (slice(0, half), slice(self.M - (half - 1), self.M))
        dst = (slice(0, half), slice(Mp - (half - 1), Mp))
        pairs = []
        for choice in np.ndindex(*([2] * (self.dim - 1))):
            pairs.append(
                (tuple(src[c] for c in choice), tuple(dst[c] for c in choice))
            )
        return pairs

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        """Sample band-limited Hermitian coefficients on the padded grid."""
        cp = self.pad_spectral(coeffs)
        axes = tuple(range(cp.ndim - self.dim, cp.ndim))
        half = cp[..., : self.padded_M // 2 + 1]
        return np.fft.irfftn(half, s=self.padded_shape, axes=axes) * float(
            self.padded_M**self.dim
        )

    def to_spectral(self, samples: np.ndarray) -> np.ndarray:
        """Forward transform real padded-grid samples, truncated to the band."""
        axes = tuple(range(samples.ndim - self.dim, samples.ndim))
        ch = np.fft.rfftn(samples, axes=axes) / float(self.padded_M**self.dim)
        half = self.M // 2
        extra = samples.ndim - self.dim
        out = np.zeros(samples.shape[:extra] + self.shape, dtype=np.complex128)
        # last-axis modes 0 .. half-1 read off the half spectrum directly
        for src, dst in self._lead_blocks:
            out[(Ellipsis,) + src + (slice(0, half),)] = ch[
                (Ellipsis,) + dst + (slice(0, half),)
            ]
        # negative last-axis modes come from the Hermitian mirror:
        # c(n_lead, -j) = conj(ch(-n_lead, j)) for j = 1 .. half-1
        neg = ch[..., 1:half]
        for ax in range(neg.ndim - self.dim, neg.ndim - 1):
            neg = np.roll(np.flip(neg, axis=ax), 1, axis=ax)
        neg = np.conj(neg)
        for src, dst in self._lead_blocks:
            out[(Ellipsis,) + src + (slice(self.M - (half - 1), self.M),)] = neg[
                (Ellipsis,) + dst + (slice(None, None, -1),)
            ]
        return out

    def reflect(self, coeffs: np.ndarray) -> np.ndarray:
        """Return the array g with g(n) = coeffs(-n) in fftn layout."""
        out = coeffs
        for ax in range(coeffs.ndim - self.dim, coeffs.ndim):
            out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
        return out

    # -- identity ---------------------------------------------------------

    def _key(self):
        return (self.dim, self.M, self.L, self.dealias_factor)

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return (
            f"TorusGrid(dim={self.dim}, M={self.M}, L={self.L}, "
            f"dealias_factor={self.dealias_factor})"
        )
