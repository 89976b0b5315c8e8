"""Mean-field variational inference for group factor analysis with missing data.

The approximate posterior factorises as q(Z) prod_m q(W_m) q(alpha_m) q(tau_m):

* q(z_n) = N(mu_z[:, n], sigma_z[n])              one K x K covariance per observation
* q(w_j^m) = N(mu_w[m][j], sigma_w[m][j])         one K x K covariance per variable
* q(alpha_k^m) = Gamma(alpha_a[m], alpha_b[m][k])  ARD precision per factor and modality
* q(tau_j^m) = Gamma(tau_a[m][j], tau_b[m][j])     noise precision per variable

Only observed entries enter the sums of each update. ``O_n`` (observed
variables of observation n) and ``O_j`` (observed observations of variable j)
are read off the boolean masks.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .dataset import DataError, GroupedDataset

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)
ACTIVE_RVAR = 1e-6
_JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class NumericalError(ArithmeticError):
    """A covariance lost positive definiteness or the bound became non-finite."""

    def __init__(self, message: str, iteration: int | None = None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


@dataclass
class Hyperparams:
    a_alpha: float = 1e-14
    b_alpha: float = 1e-14
    a_tau: float = 1e-14
    b_tau: float = 1e-14
    K: int = 15
    tol: float = 1e-6
    max_iters: int = 5000
    restarts: int = 10
    rotation_opt: bool = False

    def __post_init__(self):
        for name in ("a_alpha", "b_alpha", "a_tau", "b_tau", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be at least 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- linear algebra -----------------------------------------------------------


def inv_pd(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse and log-determinant of the inverse for a stack of SPD matrices.

    Matrices whose Cholesky factorisation fails are retried with diagonal
    jitter growing from 1e-10 to 1e-6 of their mean diagonal.
    """
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        L = _cholesky_jittered(P)
    Linv = np.linalg.inv(L)
    S = np.swapaxes(Linv, -1, -2) @ Linv
    logdet = -2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)
    return S, logdet


def _cholesky_jittered(P: np.ndarray) -> np.ndarray:
    flat = P.reshape(-1, *P.shape[-2:])
    L = np.empty_like(flat)
    eye = np.eye(P.shape[-1])
    for i, A in enumerate(flat):
        try:
            L[i] = np.linalg.cholesky(A)
            continue
        except np.linalg.LinAlgError:
            pass
        scale = np.trace(A) / A.shape[0]
        for eps in _JITTERS:
            try:
                L[i] = np.linalg.cholesky(A + eps * scale * eye)
                break
            except np.linalg.LinAlgError:
                continue
        else:
            raise NumericalError("matrix is not positive definite even after jitter")
    return L.reshape(P.shape)


# -- data view ----------------------------------------------------------------


class Observed:
    """Arrays derived once from a dataset: zero-filled values, masks, counts."""

    def __init__(self, data: GroupedDataset):
        self.data = data
        self.N = data.n_observations
        self.dims = data.dims
        self.X = [m.filled() for m in data]
        self.mask = [m.mask for m in data]
        self.maskf = [m.mask.astype(float) for m in data]
        self.complete = [m.complete for m in data]
        self.n_obs = [m.mask.sum(axis=1).astype(float) for m in data]
        self.sq_norm = [(x**2).sum(axis=1) for x in self.X]

    @property
    def M(self) -> int:
        return len(self.X)


def as_observed(data: GroupedDataset | Observed) -> Observed:
    return data if isinstance(data, Observed) else Observed(data)


# -- variational state ----------------------------------------------------------


@dataclass
class VariationalState:
    mu_z: np.ndarray  # K x N
    sigma_z: np.ndarray  # N x K x K
    logdet_z: np.ndarray  # N, log|sigma_z[n]|
    mu_w: list[np.ndarray]  # D_m x K
    sigma_w: list[np.ndarray]  # D_m x K x K
    logdet_w: list[np.ndarray]  # D_m
    alpha_a: list[float]
    alpha_b: list[np.ndarray]  # K
    tau_a: list[np.ndarray]  # D_m
    tau_b: list[np.ndarray]  # D_m
    hp: Hyperparams = field(default_factory=Hyperparams)

    @property
    def K(self) -> int:
        return self.mu_z.shape[0]

    @property
    def N(self) -> int:
        return self.mu_z.shape[1]

    @property
    def M(self) -> int:
        return len(self.mu_w)

    @property
    def dims(self) -> list[int]:
        return [w.shape[0] for w in self.mu_w]

    def E_tau(self, m: int) -> np.ndarray:
        return self.tau_a[m] / self.tau_b[m]

    def E_ln_tau(self, m: int) -> np.ndarray:
        return digamma(self.tau_a[m]) - np.log(self.tau_b[m])

    def E_alpha(self, m: int) -> np.ndarray:
        return self.alpha_a[m] / self.alpha_b[m]

    def E_ln_alpha(self, m: int) -> np.ndarray:
        return digamma(self.alpha_a[m]) - np.log(self.alpha_b[m])

    def E_zz(self) -> np.ndarray:
        """<z_n z_n^T> for every n, shape N x K x K."""
        return self.sigma_z + np.einsum("kn,ln->nkl", self.mu_z, self.mu_z)

    def E_ww(self, m: int) -> np.ndarray:
        """<w_j^T w_j> (outer product of the row) for every row j, shape D_m x K x K."""
        mu = self.mu_w[m]
        return self.sigma_w[m] + np.einsum("jk,jl->jkl", mu, mu)

    def E_wk_wk(self, m: int) -> np.ndarray:
        """<w_k^T w_k> for every factor column k of modality m."""
        return np.einsum("jkk->k", self.sigma_w[m]) + (self.mu_w[m] ** 2).sum(axis=0)

    def copy(self) -> "VariationalState":
        return VariationalState(
            self.mu_z.copy(),
            self.sigma_z.copy(),
            self.logdet_z.copy(),
            [a.copy() for a in self.mu_w],
            [a.copy() for a in self.sigma_w],
            [a.copy() for a in self.logdet_w],
            list(self.alpha_a),
            [a.copy() for a in self.alpha_b],
            [a.copy() for a in self.tau_a],
            [a.copy() for a in self.tau_b],
            self.hp,
        )


def init_state(data: GroupedDataset | Observed, hp: Hyperparams, seed: int) -> VariationalState:
    """Random starting point.

    Loading means are ``0.1 * N(0, 1)``, latent means ``N(0, 1)``, all
    covariances identity. Gamma shapes take their closed-form values and
    rates sit at the prior.
    """
    obs = as_observed(data)
    if obs.N < 1 or obs.M < 1:
        raise DataError("empty dataset")
    K, N = hp.K, obs.N
    if K > N:
        logger.warning("K=%d exceeds N=%d; surplus factors should be switched off by ARD", K, N)
    rng = np.random.default_rng(seed)
    mu_z = rng.standard_normal((K, N))
    mu_w = [0.1 * rng.standard_normal((D, K)) for D in obs.dims]
    eye = np.eye(K)
    return VariationalState(
        mu_z=mu_z,
        sigma_z=np.broadcast_to(eye, (N, K, K)).copy(),
        logdet_z=np.zeros(N),
        mu_w=mu_w,
        sigma_w=[np.broadcast_to(eye, (D, K, K)).copy() for D in obs.dims],
        logdet_w=[np.zeros(D) for D in obs.dims],
        alpha_a=[hp.a_alpha + D / 2.0 for D in obs.dims],
        alpha_b=[np.full(K, hp.b_alpha) for _ in obs.dims],
        tau_a=[hp.a_tau + n / 2.0 for n in obs.n_obs],
        tau_b=[np.full(D, hp.b_tau) for D in obs.dims],
        hp=hp,
    )


# -- coordinate updates -----------------------------------------------------------


def latent_posterior(
    state: VariationalState, obs: Observed, modalities: Sequence[int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """q(Z) given the listed modalities only; returns (mu, sigma, logdet)."""
    K, N = state.K, obs.N
    shared = np.eye(K)
    per_n = None
    lin = np.zeros((K, N))
    for m in modalities:
        tau = state.E_tau(m)
        if obs.complete[m]:
            mu_w = state.mu_w[m]
            shared = shared + np.einsum("j,jkl->kl", tau, state.sigma_w[m]) + (mu_w * tau[:, None]).T @ mu_w
        else:
            tww = tau[:, None, None] * state.E_ww(m)
            contrib = (obs.maskf[m].T @ tww.reshape(len(tau), K * K)).reshape(N, K, K)
            per_n = contrib if per_n is None else per_n + contrib
        lin += (state.mu_w[m] * tau[:, None]).T @ obs.X[m]
    if per_n is None:
        S, logdet = inv_pd(shared[None])
        sigma = np.broadcast_to(S, (N, K, K)).copy()
        logdet = np.full(N, logdet[0])
        mu = S[0] @ lin
    else:
        sigma, logdet = inv_pd(per_n + shared)
        mu = np.einsum("nkl,ln->kn", sigma, lin)
    return mu, sigma, logdet


def update_qz(state: VariationalState, data: GroupedDataset | Observed) -> VariationalState:
    obs = as_observed(data)
    mu, sigma, logdet = latent_posterior(state, obs, range(obs.M))
    return dataclasses.replace(state, mu_z=mu, sigma_z=sigma, logdet_z=logdet)


def _zz_sums(state: VariationalState, obs: Observed, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row sums over observed n of <z_n z_n^T> and of sigma_z[n]; D_m x K x K each."""
    K, D = state.K, obs.dims[m]
    if obs.complete[m]:
        sz = state.sigma_z.sum(axis=0)
        ezz = sz + state.mu_z @ state.mu_z.T
        return np.broadcast_to(ezz, (D, K, K)), np.broadcast_to(sz, (D, K, K))
    M = obs.maskf[m]
    sz = (M @ state.sigma_z.reshape(obs.N, K * K)).reshape(D, K, K)
    mm = (M @ np.einsum("kn,ln->nkl", state.mu_z, state.mu_z).reshape(obs.N, K * K)).reshape(D, K, K)
    return sz + mm, sz


def _shared_inverse(alpha: np.ndarray, tau: np.ndarray, A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverses and log-determinants of diag(alpha) + tau_j A for every j.

    One eigendecomposition of diag(alpha)^-1/2 A diag(alpha)^-1/2 serves all
    rows, instead of one factorisation per row.
    """
    d = 1.0 / np.sqrt(alpha)
    B = d[:, None] * A * d[None, :]
    lam, U = np.linalg.eigh(0.5 * (B + B.T))
    lam = np.maximum(lam, 0.0)
    G = d[:, None] * U
    scale = 1.0 / (1.0 + tau[:, None] * lam[None, :])  # D x K
    S = (G[None] * scale[:, None, :]) @ G.T
    logdet = np.log(scale).sum(axis=1) - np.log(alpha).sum()
    return S, logdet


def update_qw(state: VariationalState, data: GroupedDataset | Observed) -> VariationalState:
    obs = as_observed(data)
    mu_w, sigma_w, logdet_w = [], [], []
    for m in range(obs.M):
        tau = state.E_tau(m)
        lin = tau[:, None] * (obs.X[m] @ state.mu_z.T)  # D x K
        if obs.complete[m]:
            S, ld = _shared_inverse(state.E_alpha(m), tau, _zz_sums(state, obs, m)[0][0])
        else:
            ezz, _ = _zz_sums(state, obs, m)
            S, ld = inv_pd(np.diag(state.E_alpha(m))[None] + tau[:, None, None] * ezz)
        mu_w.append(np.einsum("jk,jkl->jl", lin, S))
        sigma_w.append(S)
        logdet_w.append(ld)
    return dataclasses.replace(state, mu_w=mu_w, sigma_w=sigma_w, logdet_w=logdet_w)


def update_qalpha(state: VariationalState) -> VariationalState:
    hp = state.hp
    alpha_a = [hp.a_alpha + D / 2.0 for D in state.dims]
    alpha_b = [hp.b_alpha + 0.5 * state.E_wk_wk(m) for m in range(state.M)]
    return dataclasses.replace(state, alpha_a=alpha_a, alpha_b=alpha_b)


def expected_sq_residual(state: VariationalState, data: GroupedDataset | Observed, m: int) -> np.ndarray:
    """Per-variable sum over observed n of E[(x_jn - w_j z_n)^2]."""
    obs = as_observed(data)
    mu_w = state.mu_w[m]
    if obs.complete[m]:
        # expanded square: no D x N temporaries, which matters for wide modalities
        sz = state.sigma_z.sum(axis=0)
        ezz = sz + state.mu_z @ state.mu_z.T
        cross = ((obs.X[m] @ state.mu_z.T) * mu_w).sum(axis=1)
        quad = np.einsum("jk,kl,jl->j", mu_w, ezz, mu_w)
        trace = np.einsum("jkl,lk->j", state.sigma_w[m], ezz)
        return np.maximum(obs.sq_norm[m] - 2 * cross + quad, 0.0) + trace
    resid = np.where(obs.mask[m], obs.X[m] - mu_w @ state.mu_z, 0.0)
    ezz, sz = _zz_sums(state, obs, m)
    quad = np.einsum("jk,jkl,jl->j", mu_w, sz, mu_w)
    trace = np.einsum("jkl,jlk->j", state.sigma_w[m], ezz)
    return (resid**2).sum(axis=1) + quad + trace


def update_qtau(state: VariationalState, data: GroupedDataset | Observed) -> VariationalState:
    obs = as_observed(data)
    hp = state.hp
    tau_a, tau_b = [], []
    for m in range(obs.M):
        sq = expected_sq_residual(state, obs, m)
        b = hp.b_tau + 0.5 * sq
        if not np.all(b > 0):
            raise NumericalError(f"non-positive noise rate in modality {m}")
        tau_a.append(hp.a_tau + obs.n_obs[m] / 2.0)
        tau_b.append(b)
    return dataclasses.replace(state, tau_a=tau_a, tau_b=tau_b)


def rotate_latent_space(state: VariationalState, data: GroupedDataset | Observed) -> VariationalState:
    """Hook for a bound-maximising linear transformation of the latent space.

    Not implemented: returns ``state`` unchanged.
    """
    return state


# -- lower bound ----------------------------------------------------------------


def _gamma_expected_log_density(a, b, E_x, E_ln_x):
    return a * np.log(b) - gammaln(a) + (a - 1) * E_ln_x - b * E_x


def elbo_terms(state: VariationalState, data: GroupedDataset | Observed) -> dict[str, float]:
    """The individual expectations that make up the lower bound."""
    obs = as_observed(data)
    hp = state.hp
    K, N = state.K, state.N
    t = dict.fromkeys(
        ("log_px", "log_pz", "log_pw", "log_palpha", "log_ptau", "log_qz", "log_qw", "log_qalpha", "log_qtau"),
        0.0,
    )
    t["log_pz"] = -0.5 * (np.einsum("nkk->", state.sigma_z) + (state.mu_z**2).sum()) - 0.5 * N * K * LOG_2PI
    t["log_qz"] = -0.5 * (state.logdet_z.sum() + N * K * (1 + LOG_2PI))
    for m in range(state.M):
        D = state.dims[m]
        E_tau, E_ln_tau = state.E_tau(m), state.E_ln_tau(m)
        E_alpha, E_ln_alpha = state.E_alpha(m), state.E_ln_alpha(m)
        sq = expected_sq_residual(state, obs, m)
        t["log_px"] += float(np.sum(0.5 * obs.n_obs[m] * (E_ln_tau - LOG_2PI) - 0.5 * E_tau * sq))
        t["log_pw"] += float(
            0.5 * D * E_ln_alpha.sum() - 0.5 * np.sum(E_alpha * state.E_wk_wk(m)) - 0.5 * D * K * LOG_2PI
        )
        t["log_palpha"] += float(np.sum(_gamma_expected_log_density(hp.a_alpha, hp.b_alpha, E_alpha, E_ln_alpha)))
        t["log_ptau"] += float(np.sum(_gamma_expected_log_density(hp.a_tau, hp.b_tau, E_tau, E_ln_tau)))
        t["log_qw"] += float(-0.5 * (state.logdet_w[m].sum() + D * K * (1 + LOG_2PI)))
        t["log_qalpha"] += float(
            np.sum(_gamma_expected_log_density(state.alpha_a[m], state.alpha_b[m], E_alpha, E_ln_alpha))
        )
        t["log_qtau"] += float(np.sum(_gamma_expected_log_density(state.tau_a[m], state.tau_b[m], E_tau, E_ln_tau)))
    return {k: float(v) for k, v in t.items()}


def elbo(state: VariationalState, data: GroupedDataset | Observed) -> float:
    t = elbo_terms(state, data)
    value = (
        t["log_px"] + t["log_pz"] + t["log_pw"] + t["log_palpha"] + t["log_ptau"]
        - t["log_qz"] - t["log_qw"] - t["log_qalpha"] - t["log_qtau"]
    )
    if not np.isfinite(value):
        raise NumericalError("lower bound is not finite")
    return value


# -- fitting ----------------------------------------------------------------


def relative_variance(mu_w: np.ndarray) -> np.ndarray:
    """Share of the total squared loading norm carried by each factor column."""
    norms = (mu_w**2).sum(axis=0)
    total = norms.sum()
    return norms / total if total > 0 else np.zeros_like(norms)


def active_factors(state: VariationalState, threshold: float = ACTIVE_RVAR) -> list[int]:
    rvar = np.array([relative_variance(w) for w in state.mu_w])
    return [int(k) for k in np.flatnonzero((rvar > threshold).any(axis=0))]


@dataclass
class FitResult:
    state: VariationalState
    elbo_trace: np.ndarray
    converged: bool
    iterations: int
    seed: int
    active_factors: list[int]
    hp: Hyperparams
    tag: str = "gfa"

    @property
    def final_elbo(self) -> float:
        return float(self.elbo_trace[-1])

    def mean_tau(self) -> list[float]:
        return [float(self.state.E_tau(m).mean()) for m in range(self.state.M)]


def sweep(state: VariationalState, obs: Observed) -> VariationalState:
    """One round of updates: W, Z, (rotation), alpha, tau."""
    state = update_qw(state, obs)
    state = update_qz(state, obs)
    if state.hp.rotation_opt:
        state = rotate_latent_space(state, obs)
    state = update_qalpha(state)
    return update_qtau(state, obs)


def _check_fit_input(data: GroupedDataset) -> None:
    if data.n_observations < 2:
        raise DataError("need at least two observations")
    for m in data:
        if not m.mask.any():
            raise DataError(f"modality {m.name!r} has no observed entries")


def fit(data: GroupedDataset, hp: Hyperparams | None = None, seed: int = 0) -> FitResult:
    """Run variational EM until the relative change of the bound drops below ``hp.tol``."""
    hp = hp or Hyperparams()
    _check_fit_input(data)
    obs = Observed(data)
    state = init_state(obs, hp, seed)
    trace: list[float] = []
    converged = False
    for it in range(hp.max_iters):
        try:
            state = sweep(state, obs)
            L = elbo(state, obs)
        except NumericalError as err:
            raise NumericalError(str(err), iteration=it) from err
        except np.linalg.LinAlgError as err:
            raise NumericalError(str(err), iteration=it) from err
        trace.append(L)
        if it > 0 and abs(L - trace[-2]) < hp.tol * abs(L):
            converged = True
            break
    if not converged:
        logger.info("seed %d: no convergence after %d iterations", seed, hp.max_iters)
    return FitResult(
        state=state,
        elbo_trace=np.array(trace),
        converged=converged,
        iterations=len(trace),
        seed=seed,
        active_factors=active_factors(state),
        hp=hp,
    )


class RestartsFailed(NumericalError):
    def __init__(self, errors: dict[int, Exception]):
        detail = "; ".join(f"seed {s}: {e}" for s, e in errors.items())
        super().__init__(f"all {len(errors)} restarts failed ({detail})")
        self.errors = errors


def select_best(results: Sequence[FitResult]) -> FitResult:
    """Largest final bound; ties go to the lowest seed."""
    return min(results, key=lambda r: (-r.final_elbo, r.seed))


def fit_restarts(
    data: GroupedDataset,
    hp: Hyperparams | None = None,
    seeds: Sequence[int] | None = None,
    jobs: int = 1,
) -> tuple[FitResult, list[FitResult]]:
    """Fit once per seed and keep the run with the largest lower bound."""
    hp = hp or Hyperparams()
    seeds = list(range(hp.restarts)) if seeds is None else list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")

    def one(seed):
        try:
            return fit(data, hp, seed)
        except NumericalError as err:
            return err

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, seeds))
    else:
        outcomes = [one(s) for s in seeds]
    results = [o for o in outcomes if isinstance(o, FitResult)]
    if not results:
        raise RestartsFailed({s: o for s, o in zip(seeds, outcomes)})
    for s, o in zip(seeds, outcomes):
        if not isinstance(o, FitResult):
            logger.warning("restart with seed %d failed: %s", s, o)
    return select_best(results), results
