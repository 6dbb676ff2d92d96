"""Downlink training: beam grids, pilot scheduling, and gain re-estimation.

The base station cannot measure downlink gains directly, so it sounds the
extracted paths with a short burst of precoded pilot symbols.  Each pilot
symbol is one beam pointed at a grid direction; each user correlates the
received pilots against its known path geometry and solves a small least
squares problem for the downlink gains.  The scheduler trims the beam list
until every user is still predicted (in closed form) to meet the target
estimation accuracy, which keeps the training overhead proportional to the
actual scattering geometry instead of the antenna count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sysmodel import SystemConfig, steering_vector


@dataclass(frozen=True)
class AngleGrid:
    """Uniform angle grid with one point per antenna, and its steering matrix.

    ``steering[:, j]`` is the array response of grid point ``j + 1`` (grid
    points are 1-based, vertical index major).  ``conj(steering[:, j]) /
    sqrt(M)`` is the unit-power beam aimed at that point.
    """

    thetas: np.ndarray
    phis: np.ndarray
    steering: np.ndarray

    @property
    def size(self) -> int:
        return self.steering.shape[1]


def grid_point(index: int, cfg: SystemConfig) -> tuple[float, float]:
    """Return the (theta, phi) pair of 1-based grid point ``index``.

    The flat index runs vertical-major: index = (i_v - 1) * M_h + i_h with
    i_v in 1..M_v and i_h in 1..M_h.
    """
    if not 1 <= index <= cfg.M:
        raise ValueError(f"grid index {index} outside 1..{cfg.M}")
    i_v = math.ceil(index / cfg.M_h)
    i_h = index - cfg.M_h * (i_v - 1)
    theta = math.pi / cfg.M_v * (i_v - cfg.M_v / 2 - 1)
    phi = math.pi / cfg.M_h * (i_h - cfg.M_h / 2 - 1)
    return theta, phi


def build_angle_grid(cfg: SystemConfig) -> AngleGrid:
    """Tabulate all M = M_v * M_h grid points and their steering vectors."""
    thetas = math.pi / cfg.M_v * (np.arange(1, cfg.M_v + 1) - cfg.M_v / 2 - 1)
    phis = math.pi / cfg.M_h * (np.arange(1, cfg.M_h + 1) - cfg.M_h / 2 - 1)
    cols = np.empty((cfg.M, cfg.M), dtype=np.complex128)
    for j in range(cfg.M):
        th, ph = grid_point(j + 1, cfg)
        cols[:, j] = steering_vector(th, ph, cfg)
    return AngleGrid(thetas=thetas, phis=phis, steering=cols)


def projected_power(
    theta: float, phi: float, theta_bar: float, phi_bar: float, cfg: SystemConfig
) -> float:
    """Normalized power a path at (theta, phi) leaks into a beam aimed at
    (theta_bar, phi_bar): |a(theta, phi)^T a*(theta_bar, phi_bar)|^2 / M.

    Equals M when the angles coincide and decays with beam-space distance.
    """
    a = steering_vector(theta, phi, cfg)
    b = steering_vector(theta_bar, phi_bar, cfg)
    return float(np.abs(np.dot(a, b.conj())) ** 2) / cfg.M


def optimal_grid_point(theta: float, phi: float, grid: AngleGrid, cfg: SystemConfig) -> int:
    """1-based index of the grid point capturing the most power from
    (theta, phi).  Ties resolve to the lowest index.
    """
    corr = grid.steering.conj().T @ steering_vector(theta, phi, cfg)
    return int(np.argmax(np.abs(corr) ** 2)) + 1


def pilot_subcarriers(cfg: SystemConfig) -> np.ndarray:
    """Indices of the subcarriers that carry pilots (every ``pilot_spacing``)."""
    return np.arange(0, cfg.N, cfg.pilot_spacing)


@dataclass(frozen=True)
class TrainingPlan:
    """Output of the beam scheduler.

    grid_indices: kept grid points (1-based), in scan order (ascending
        weight, index as tie-break).
    beams: (M, T_p) matrix of unit-power beams, one column per kept point.
    pilot_subcarriers: subcarrier indices each pilot symbol occupies.
    weights: number of distinct users that marked each kept point.
    feasible: False when even the full marked set fails some user's
        accuracy prediction; the plan then keeps every marked point.
    """

    grid_indices: tuple
    beams: np.ndarray
    pilot_subcarriers: np.ndarray
    weights: tuple
    feasible: bool

    @property
    def T_p(self) -> int:
        return len(self.grid_indices)


@dataclass(frozen=True)
class CoefficientMatrix:
    """Pilot observation model of one user: y = sqrt(P) * A g_dl + noise.

    Rows are pilot-symbol major: row t * N_p + i is symbol t, pilot
    subcarrier i.  Columns follow the user's estimated paths.  Singular
    values are cached because both the accuracy predictor and the gain
    estimator are functions of them alone.
    """

    matrix: np.ndarray
    singular_values: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.matrix.shape


def coefficient_matrix(paths, plan: TrainingPlan, cfg: SystemConfig) -> CoefficientMatrix:
    """Build the pilot coefficient matrix of one user.

    ``paths`` is any sequence of objects carrying theta/phi/tau attributes.
    Entry (t*N_p + i, l) is exp(j 2 pi (f_dl - f_ul) tau_l) * a^T(theta_l,
    phi_l) b_t * exp(j 2 pi n_i delta_f tau_l): the carrier shift, the beam
    gain, and the pilot-subcarrier delay phase of path l under symbol t.
    """
    if len(paths) == 0:
        raise ValueError("coefficient matrix needs at least one path")
    if plan.beams.shape[1] == 0:
        raise ValueError("coefficient matrix needs at least one beam")
    a = np.stack([steering_vector(p.theta, p.phi, cfg) for p in paths])
    taus = np.array([p.tau for p in paths])
    theta_gain = a @ plan.beams  # (L, T)
    pil = np.exp(2j * np.pi * cfg.delta_f * np.outer(plan.pilot_subcarriers, taus))
    shift = np.exp(2j * np.pi * cfg.carrier_shift * taus)
    mat = theta_gain.T[:, None, :] * pil[None, :, :] * shift[None, None, :]
    mat = mat.reshape(-1, len(paths))
    sv = np.linalg.svd(mat, compute_uv=False)
    return CoefficientMatrix(matrix=mat, singular_values=sv)


def predict_nmse(coef: CoefficientMatrix, g_ul: np.ndarray, cfg: SystemConfig) -> float:
    """Closed-form NMSE the pilot least squares will achieve, in expectation,
    at unit noise power: sum(1 / lambda_i^2) / (P ||g_ul||^2).

    Returns inf when the matrix is rank deficient (some gain direction is
    unobservable under the current beam set).
    """
    sv = coef.singular_values
    n_paths = coef.matrix.shape[1]
    gnorm2 = float(np.sum(np.abs(np.asarray(g_ul)) ** 2))
    if gnorm2 == 0.0:
        raise ValueError("uplink gain vector has zero norm")
    if len(sv) < n_paths:
        return math.inf
    tol = sv[0] * max(coef.matrix.shape) * np.finfo(np.float64).eps
    if sv[-1] <= tol:
        return math.inf
    return float(np.sum(1.0 / sv**2)) / (cfg.P * gnorm2)


def check_success(coef: CoefficientMatrix, g_ul: np.ndarray, cfg: SystemConfig) -> bool:
    """True when the predicted NMSE is strictly below the target delta."""
    return predict_nmse(coef, g_ul, cfg) < cfg.delta


class _UserState:
    """Per-user precomputation for the scheduler's repeated feasibility probes.

    The Gram matrix of the coefficient matrix factors over beams, pilot
    subcarriers, and carrier shift, so probing a beam subset costs one small
    (L x L) eigendecomposition instead of rebuilding the full matrix.
    """

    __slots__ = ("theta_gain", "pilot_gram", "shift_outer", "gnorm2", "n_paths")

    def __init__(self, paths, order, grid: AngleGrid, cfg: SystemConfig):
        self.n_paths = len(paths)
        self.gnorm2 = float(sum(abs(p.gain) ** 2 for p in paths))
        if self.n_paths == 0:
            return
        a = np.stack([steering_vector(p.theta, p.phi, cfg) for p in paths])
        taus = np.array([p.tau for p in paths])
        beams_all = grid.steering[:, [j - 1 for j in order]].conj() / math.sqrt(cfg.M)
        self.theta_gain = a @ beams_all  # (L, S) over the full scan order
        pil = np.exp(2j * np.pi * cfg.delta_f * np.outer(pilot_subcarriers(cfg), taus))
        self.pilot_gram = pil.conj().T @ pil  # (L, L)
        shift = np.exp(2j * np.pi * cfg.carrier_shift * taus)
        self.shift_outer = np.outer(shift.conj(), shift)

    def subset_nmse(self, cols: np.ndarray, cfg: SystemConfig) -> float:
        """Predicted NMSE when only the scan-order columns ``cols`` are kept."""
        if self.n_paths == 0:
            return 0.0
        if self.gnorm2 == 0.0:
            return math.inf
        if len(cols) == 0:
            return math.inf
        tg = self.theta_gain[:, cols]
        gram = (tg.conj() @ tg.T) * self.pilot_gram * self.shift_outer
        eig = np.linalg.eigvalsh(gram)
        n_rows = len(cols) * _n_pilots(cfg)
        tol = eig[-1] * max(self.n_paths, n_rows) * np.finfo(np.float64).eps
        if eig[0] <= tol:
            return math.inf
        return float(np.sum(1.0 / eig)) / (cfg.P * self.gnorm2)


def _n_pilots(cfg: SystemConfig) -> int:
    return len(pilot_subcarriers(cfg))


def schedule_beams(
    users_paths: Sequence[Sequence],
    grid: AngleGrid,
    cfg: SystemConfig,
    continue_scan: bool = False,
) -> TrainingPlan:
    """Pick the beam directions to train, trimming redundant ones.

    Each user marks the grid point nearest (in beam-space power) to each of
    its estimated paths.  Marked points are scanned in ascending order of
    weight (number of distinct users marking them, index as tie-break), and
    a point is dropped when every user is still predicted to meet the
    accuracy target delta without it.  By default the scan stops at the
    first indispensable point; with ``continue_scan`` it keeps probing the
    remaining points, which can only shorten the plan further.
    """
    marks: dict[int, int] = {}
    for paths in users_paths:
        mine = {optimal_grid_point(p.theta, p.phi, grid, cfg) for p in paths}
        for j in mine:
            marks[j] = marks.get(j, 0) + 1
    order = sorted(marks, key=lambda j: (marks[j], j))
    states = [_UserState(paths, order, grid, cfg) for paths in users_paths]

    all_cols = np.arange(len(order))
    feasible = all(st.subset_nmse(all_cols, cfg) < cfg.delta for st in states)

    removed: set[int] = set()
    if feasible:
        for s in range(len(order)):
            trial = np.array(
                [j for j in range(len(order)) if j not in removed and j != s],
                dtype=np.intp,
            )
            if all(st.subset_nmse(trial, cfg) < cfg.delta for st in states):
                removed.add(s)
            elif not continue_scan:
                break

    kept = [order[s] for s in range(len(order)) if s not in removed]
    beams = grid.steering[:, [j - 1 for j in kept]].conj() / math.sqrt(cfg.M)
    return TrainingPlan(
        grid_indices=tuple(kept),
        beams=beams,
        pilot_subcarriers=pilot_subcarriers(cfg),
        weights=tuple(marks[j] for j in kept),
        feasible=feasible,
    )


def simulate_downlink_training(
    true_paths,
    plan: TrainingPlan,
    cfg: SystemConfig,
    noise_seed=None,
) -> np.ndarray:
    """Received pilot samples of one user over the whole training burst.

    Returns a (T_p * N_p,) vector, pilot-symbol major, matching the row
    order of :func:`coefficient_matrix`.
    """
    coef = coefficient_matrix(true_paths, plan, cfg)
    g_dl = np.array([p.g_dl for p in true_paths])
    y = math.sqrt(cfg.P) * coef.matrix @ g_dl
    if noise_seed is not None:
        rng = noise_seed if isinstance(noise_seed, np.random.Generator) else np.random.default_rng(noise_seed)
        y = y + (rng.standard_normal(len(y)) + 1j * rng.standard_normal(len(y))) / math.sqrt(2.0)
    return y


def estimate_downlink_gains(
    y: np.ndarray, coef: CoefficientMatrix, cfg: SystemConfig
) -> np.ndarray:
    """Least squares downlink gains from the pilot observations:
    (1 / sqrt(P)) (A^H A)^{-1} A^H y.

    Raises when the coefficient matrix is rank deficient; the scheduler is
    responsible for never producing such a plan.
    """
    n_paths = coef.matrix.shape[1]
    g, _, rank, _ = np.linalg.lstsq(coef.matrix, np.asarray(y), rcond=None)
    if rank < n_paths:
        raise np.linalg.LinAlgError(
            f"coefficient matrix rank {rank} < {n_paths} paths; gains unidentifiable"
        )
    return g / math.sqrt(cfg.P)
