"""Faedo-Galerkin dynamics for the power-law system.

The velocity is expanded in the first N Stokes eigenfunctions,
v = sum_r c_r(t) a^r, and the coefficients evolve by

    dc_r/dt = (div sigma(Dv) - conv(v), a^r),

where conv is the skew-symmetric convection ((v.grad v) + div(v (x) v))/2.
Forming both halves pointwise on the same oversampled grid makes the
convection contribution to d/dt ||v||_2^2 vanish identically (exact
antisymmetry of the discrete trilinear form), so the semi-discrete energy
balance d/dt ||v||_2^2 + 2 rho_tilde = 0 is a machine-checkable identity
rather than an approximation casualty.

Time integration is an embedded explicit Dormand-Prince 5(4) pair with a
PI step controller; the 5th-order solution is propagated.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import constitutive as law
from .basis import StokesBasis, basis_capacity, count_modes_below, make_basis
from .constitutive import FluidParams
from .errors import GridMismatchError, StiffnessError
from .fields import (
    SpectralVelocity,
    gradient,
    hessian_samples,
    load_checkpoint,
    lp_norm,
    random_solenoidal,
    taylor_green,
)
from .grid import TorusGrid

CSV_COLUMNS = ("t", "energy", "rho", "rho_tilde", "grad_p_norm", "Ip")
CSV_D2_COLUMN = "d2_p_norm"


@dataclass
class GalerkinState:
    """Coefficients of v^N = sum_r c_r a^r at time t."""

    basis: StokesBasis
    c: np.ndarray
    t: float = 0.0

    def velocity(self) -> SpectralVelocity:
        return self.basis.synthesize(self.c)


def project_initial_data(v0: SpectralVelocity, basis: StokesBasis) -> GalerkinState:
    """Orthogonal projection of v0 onto span{a^1 .. a^N} at t = 0."""
    if v0.grid != basis.grid:
        raise GridMismatchError(f"{v0.grid!r} vs {basis.grid!r}")
    return GalerkinState(basis, basis.project(v0), 0.0)


# -- right-hand side -------------------------------------------------------


def _rhs_parts(basis: StokesBasis, params: FluidParams, c: np.ndarray):
    """Stress and convection projections, each as a length-N vector."""
    g = basis.grid
    d = g.dim
    k = g.wavevectors
    vhat = basis.synthesize_coeffs(c)
    ghat = 1j * k[np.newaxis, :] * vhat[:, np.newaxis]
    # one batched inverse transform for v and its gradient
    phys = g.to_physical(
        np.concatenate([vhat, ghat.reshape((d * d,) + g.shape)])
    )
    V = phys[:d]
    G = phys[d:].reshape((d, d) + g.padded_shape)  # G[i, j] = d_j v_i
    D = 0.5 * (G + np.swapaxes(G, 0, 1))
    dd_sq = np.sum(D**2, axis=(0, 1))
    sigma = law._stress_factor(dd_sq, params)[np.newaxis, np.newaxis] * D
    w1 = np.einsum("j...,ij...->i...", V, G)  # v . grad v, pointwise
    zij = V[:, np.newaxis] * V[np.newaxis, :]  # v (x) v, pointwise

    # one batched forward transform for sigma, v (x) v, and v . grad v
    fwd = g.to_spectral(
        np.concatenate(
            [
                sigma.reshape((d * d,) + g.padded_shape),
                zij.reshape((d * d,) + g.padded_shape),
                w1,
            ]
        )
    )
    sig_hat = fwd[: d * d].reshape((d, d) + g.shape)
    z_hat = fwd[d * d : 2 * d * d].reshape((d, d) + g.shape)
    w1_hat = fwd[2 * d * d :]
    ik = 1j * k[np.newaxis, :]
    div_sig = np.sum(ik * sig_hat, axis=1)
    conv_hat = 0.5 * (w1_hat + np.sum(ik * z_hat, axis=1))

    return basis.project_coeffs(div_sig), basis.project_coeffs(conv_hat)


def galerkin_rhs(state: GalerkinState, params: FluidParams) -> np.ndarray:
    """dc/dt for the Galerkin system."""
    visc, conv = _rhs_parts(state.basis, params, state.c)
    return visc - conv


def galerkin_rhs_parts(state: GalerkinState, params: FluidParams):
    """(stress projection, convection projection); rhs = first - second."""
    return _rhs_parts(state.basis, params, state.c)


def state_functionals(state: GalerkinState, params: FluidParams, record_d2: bool = False):
    """All scalar functionals one trajectory sample records.

    energy and rho use the exact coefficient sums (basis orthonormality
    and the eigenvalue relation); the nonlinear functionals go through
    the shared quadrature kernels.
    """
    c = state.c
    energy = float(np.dot(c, c))
    rho = float(np.dot(state.basis.eigenvalues * c, c))
    v = state.basis.synthesize(c)
    out = {
        "energy": energy,
        "rho": rho,
        "rho_tilde": law.rho_tilde(v, params),
        "grad_p_norm": lp_norm(gradient(v), params.p),
        "Ip": law.I_p(v, params) if params.mu > 0 else float("nan"),
    }
    if record_d2:
        out[CSV_D2_COLUMN] = lp_norm(hessian_samples(v), params.p, grid=v.grid)
    return out


# -- adaptive Dormand-Prince 5(4) ------------------------------------------

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)

# classical quartic dense-output polynomial of the Dormand-Prince pair:
# y(t0 + theta*dt) = y0 + dt * sum_s k_s * sum_j P[s][j] * theta^(j+1)
_DP_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


@dataclass
class StepSegment:
    """One accepted step with its stages, for dense output inside it."""

    t0: float
    dt: float
    y0: np.ndarray
    stages: np.ndarray  # (7, N)

    @property
    def t1(self) -> float:
        return self.t0 + self.dt

    def interpolate(self, t: float) -> np.ndarray:
        theta = (t - self.t0) / self.dt
        powers = theta ** np.arange(1, 5)
        weights = _DP_P @ powers
        return self.y0 + self.dt * (weights @ self.stages)


@dataclass
class StepController:
    """Embedded-pair error control with a PI step-size law.

    `last_segment` holds the stages of the most recent accepted step so
    callers can densely sample inside it.
    """

    rtol: float = 1e-8
    atol: float = 1e-12
    dt_min: float = 1e-12
    dt_max: float = float("inf")
    safety: float = 0.9
    dt: float | None = None
    err_prev: float = 1.0
    naccept: int = 0
    nreject: int = 0
    last_segment: StepSegment | None = None

    def __post_init__(self):
        if self.rtol <= 0 or self.atol < 0 or self.dt_min <= 0:
            raise ValueError("tolerances must be positive")

    def error_norm(self, err: np.ndarray, y0: np.ndarray, y1: np.ndarray) -> float:
        sc = self.atol + self.rtol * np.maximum(np.abs(y0), np.abs(y1))
        return float(np.sqrt(np.mean((err / sc) ** 2)))

    def accept_factor(self, err_norm: float) -> float:
        if err_norm == 0.0:
            return 5.0
        fac = self.safety * err_norm ** (-0.7 / 5.0) * self.err_prev ** (0.4 / 5.0)
        return float(np.clip(fac, 0.2, 5.0))


def _initial_dt(f0: np.ndarray, y0: np.ndarray, ctrl: StepController, horizon: float) -> float:
    sc = ctrl.atol + ctrl.rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / sc) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / sc) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-3 * horizon if horizon > 0 else 1e-6
    else:
        h = 0.01 * d0 / d1
    return float(np.clip(h, ctrl.dt_min, min(ctrl.dt_max, horizon or h)))


def advance(
    state: GalerkinState,
    params: FluidParams,
    ctrl: StepController,
    dt_cap: float | None = None,
) -> GalerkinState:
    """One accepted adaptive step; ctrl carries the step-size state."""

    def f(y):
        visc, conv = _rhs_parts(state.basis, params, y)
        return visc - conv

    y0 = state.c
    k1 = f(y0)
    if ctrl.dt is None:
        ctrl.dt = _initial_dt(k1, y0, ctrl, dt_cap if dt_cap is not None else 1.0)
    dt = min(ctrl.dt, ctrl.dt_max)
    if dt_cap is not None:
        dt = min(dt, dt_cap)
    while True:
        ks = [k1]
        for row in _DP_A[1:]:
            yi = y0 + dt * sum(a * k for a, k in zip(row, ks) if a != 0.0)
            ks.append(f(yi))
        y5 = y0 + dt * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0.0)
        err = dt * sum(
            (b5 - b4) * k for b5, b4, k in zip(_DP_B5, _DP_B4, ks) if b5 != b4
        )
        err_norm = ctrl.error_norm(err, y0, y5)
        if err_norm <= 1.0:
            capped = dt_cap is not None and dt >= dt_cap
            proposal = dt * ctrl.accept_factor(err_norm)
            if capped:
                # keep growing from the controller's own proposal, not the cap
                proposal = max(proposal, ctrl.dt)
            ctrl.dt = min(proposal, ctrl.dt_max)
            ctrl.err_prev = max(err_norm, 1e-4)
            ctrl.naccept += 1
            ctrl.last_segment = StepSegment(state.t, dt, y0, np.array(ks))
            return GalerkinState(state.basis, y5, state.t + dt)
        ctrl.nreject += 1
        dt = dt * max(0.1, ctrl.safety * err_norm ** (-0.2))
        if dt < ctrl.dt_min:
            raise StiffnessError(state.t, dt, err_norm)
        ctrl.dt = dt


# -- trajectory runs --------------------------------------------------------


@dataclass
class SolverConfig:
    """Everything one trajectory run needs; mirrors the config file schema."""

    dim: int = 2
    M: int = 64
    L: float = 2 * np.pi
    dealias: float = 1.5
    p: float = 1.9
    mu: float = 1.0
    N: int | None = None
    lambda_cut: float | None = None
    record_d2: bool = False
    T: float = 1.0
    rtol: float = 1e-8
    atol: float = 1e-12
    dt_min: float = 1e-12
    sample_dt: float | None = None
    init_kind: str = "taylor_green"
    seed: int = 0
    band: int = 1
    amplitude: float = 1.0
    decay: float = 2.0
    path: str | None = None

    def build_grid(self) -> TorusGrid:
        return TorusGrid(self.dim, self.M, self.L, dealias_factor=self.dealias)

    def build_params(self) -> FluidParams:
        return FluidParams(self.p, self.mu)

    def resolve_N(self, grid: TorusGrid) -> int:
        if self.N is not None:
            return self.N
        if self.lambda_cut is not None:
            return count_modes_below(grid, self.lambda_cut)
        return basis_capacity(grid)

    def build_initial(self, grid: TorusGrid) -> SpectralVelocity:
        if self.init_kind == "taylor_green":
            return taylor_green(grid, amplitude=self.amplitude, band=self.band)
        if self.init_kind == "random_band":
            return random_solenoidal(
                grid, band=self.band, decay=self.decay, seed=self.seed,
                amplitude=self.amplitude,
            )
        if self.init_kind == "checkpoint":
            if not self.path:
                raise ValueError("checkpoint initial data needs a path")
            v = load_checkpoint(self.path, dealias_factor=self.dealias)
            if v.grid != grid:
                raise GridMismatchError(f"checkpoint grid {v.grid!r} vs run grid {grid!r}")
            return v
        raise ValueError(f"unknown init kind {self.init_kind!r}")


@dataclass
class TrajectoryRecord:
    """Scalar time series of one Galerkin run; everything the energy-gap
    diagnostics consume."""

    p: float
    mu: float
    N: int
    times: np.ndarray
    energy: np.ndarray
    rho: np.ndarray
    rho_tilde: np.ndarray
    grad_p_norm: np.ndarray
    Ip: np.ndarray
    d2_p_norm: np.ndarray | None = None
    steps: int = 0
    rejections: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.times.size >= 2 and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh) -> None:
        cols = list(CSV_COLUMNS) + ([CSV_D2_COLUMN] if self.d2_p_norm is not None else [])
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        arrays = [self.times, self.energy, self.rho, self.rho_tilde,
                  self.grad_p_norm, self.Ip]
        if self.d2_p_norm is not None:
            arrays.append(self.d2_p_norm)
        for row in zip(*arrays):
            writer.writerow([repr(float(x)) for x in row])

    def csv_bytes(self) -> bytes:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue().encode()

    @classmethod
    def from_csv(cls, path, p: float = float("nan"), mu: float = float("nan"),
                 N: int = -1) -> "TrajectoryRecord":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            base = list(CSV_COLUMNS)
            if header[: len(base)] != base:
                raise ValueError(f"{path} does not follow the trajectory CSV contract")
            has_d2 = len(header) > len(base) and header[len(base)] == CSV_D2_COLUMN
            rows = [[float(x) for x in row] for row in reader if row]
        data = np.asarray(rows, dtype=np.float64)
        if data.size == 0:
            raise ValueError(f"{path} holds no samples")
        return cls(
            p=p, mu=mu, N=N,
            times=data[:, 0], energy=data[:, 1], rho=data[:, 2],
            rho_tilde=data[:, 3], grad_p_norm=data[:, 4], Ip=data[:, 5],
            d2_p_norm=data[:, 6] if has_d2 else None,
        )


def run_trajectory(config: SolverConfig, collect_states_at=None):
    """Integrate on [0, T] and record every functional at each accepted
    step plus the configured sampling cadence.

    Cadence samples are evaluated on the integrator's dense-output
    interpolant, so the sampling never perturbs the step sequence.
    Deterministic for a fixed config (the only randomness is the seeded
    initial data).  When `collect_states_at` is given, also returns the
    spectral coefficient arrays at those times.
    """
    grid = config.build_grid()
    params = config.build_params()
    N = config.resolve_N(grid)
    basis = make_basis(grid, N)
    state = project_initial_data(config.build_initial(grid), basis)

    targets = set()
    T = float(config.T)
    if config.sample_dt:
        n_samples = int(np.floor(T / config.sample_dt + 1e-9))
        targets.update(k * config.sample_dt for k in range(1, n_samples + 1))
    collect = sorted(float(t) for t in collect_states_at) if collect_states_at else []
    collect_set = set(collect)
    targets.update(collect)
    targets.add(T)
    target_list = sorted(t for t in targets if 0.0 < t <= T)

    ctrl = StepController(rtol=config.rtol, atol=config.atol, dt_min=config.dt_min)
    rows = []
    seen_times = set()
    states = {}

    def record_coeffs(t: float, c: np.ndarray):
        if t in seen_times:
            return
        seen_times.add(t)
        st = GalerkinState(basis, c, t)
        rows.append((t, state_functionals(st, params, record_d2=config.record_d2)))
        if t in collect_set:
            states[t] = basis.synthesize_coeffs(c)

    record_coeffs(0.0, state.c)
    pending = list(target_list)
    while state.t < T:
        t_prev = state.t
        state = advance(state, params, ctrl, dt_cap=T - t_prev)
        if abs(state.t - T) <= 1e-12 * max(1.0, T):
            state.t = T
        seg = ctrl.last_segment
        while pending and pending[0] < state.t:
            record_coeffs(pending[0], seg.interpolate(pending[0]))
            pending.pop(0)
        record_coeffs(state.t, state.c)
        while pending and pending[0] <= state.t:
            pending.pop(0)

    record_obj = _rows_to_record(config, params, N, rows, ctrl)
    if collect_states_at is None:
        return record_obj
    ordered = [states[t] for t in sorted(states)]
    return record_obj, ordered


def _rows_to_record(config, params, N, rows, ctrl) -> TrajectoryRecord:
    # accepted steps may coincide with cadence snaps; drop exact duplicates
    seen = set()
    uniq = []
    for t, vals in rows:
        if t not in seen:
            seen.add(t)
            uniq.append((t, vals))
    times = np.array([t for t, _ in uniq])
    get = lambda key: np.array([vals[key] for _, vals in uniq])
    return TrajectoryRecord(
        p=params.p, mu=params.mu, N=N,
        times=times,
        energy=get("energy"),
        rho=get("rho"),
        rho_tilde=get("rho_tilde"),
        grad_p_norm=get("grad_p_norm"),
        Ip=get("Ip"),
        d2_p_norm=get(CSV_D2_COLUMN) if config.record_d2 else None,
        steps=ctrl.naccept,
        rejections=ctrl.nreject,
    )
