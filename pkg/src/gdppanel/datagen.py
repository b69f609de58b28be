"""Synthetic panels: ARMA processes, the AR(1)-around-a-mean covariate design,
and the non-private pooled OLS baselines used for comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidInputError
from .regression import PanelDataset

__all__ = [
    "ArmaSpec",
    "SimModel",
    "GroundTruth",
    "PooledOLS",
    "simulate_arma",
    "gen_panel",
    "gen_arrays",
    "pooled_ols_with_errors",
    "pooled_ols_arrays",
]


@dataclass(frozen=True)
class ArmaSpec:
    """``eps_t = sum phi_k eps_{t-k} + r_t + sum theta_k r_{t-k}``, ``r_t ~ N(0, sd^2)``."""

    ar_coeffs: tuple[float, ...] = ()
    ma_coeffs: tuple[float, ...] = ()
    innovation_sd: float = 1.0
    mean: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "ar_coeffs", tuple(float(c) for c in self.ar_coeffs))
        object.__setattr__(self, "ma_coeffs", tuple(float(c) for c in self.ma_coeffs))
        if not self.innovation_sd >= 0.0:
            raise InvalidInputError("innovation_sd must be >= 0")
        if not self.is_causal():
            raise InvalidInputError(f"AR polynomial of {self.ar_coeffs} has roots on or inside the unit circle")

    @property
    def p(self) -> int:
        return len(self.ar_coeffs)

    @property
    def q(self) -> int:
        return len(self.ma_coeffs)

    def is_causal(self) -> bool:
        if not self.ar_coeffs:
            return True
        # roots of 1 - phi_1 x - ... - phi_p x^p
        poly = np.r_[-np.array(self.ar_coeffs[::-1]), 1.0]
        roots = np.roots(poly)
        return bool(np.all(np.abs(roots) > 1.0 + 1e-10))

    @property
    def burn_in(self) -> int:
        return max(200, 50 * (self.p + self.q))

    def state_space(self) -> tuple[np.ndarray, np.ndarray]:
        """Transition matrix and innovation loading of the companion form."""
        m = max(self.p, self.q + 1)
        F = np.zeros((m, m))
        F[: self.p, 0] = self.ar_coeffs
        F[:-1, 1:] = np.eye(m - 1)
        g = np.zeros(m)
        g[0] = 1.0
        g[1 : self.q + 1] = self.ma_coeffs
        return F, g

    def stationary_state_cov(self) -> np.ndarray:
        F, g = self.state_space()
        P = linalg.solve_discrete_lyapunov(F, self.innovation_sd**2 * np.outer(g, g))
        return 0.5 * (P + P.T)


def _sqrt_psd(P: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(P)
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_arma(spec: ArmaSpec, T: int, rng, size=(), init: str = "burn-in") -> np.ndarray:
    """Draw ``T`` consecutive values of a stationary causal ARMA process.

    Parameters
    ----------
    spec : ArmaSpec
    T : int
    rng : numpy.random.Generator
    size : tuple
        Leading shape for independent series; the result has shape
        ``size + (T,)``.
    init : {"burn-in", "stationary"}
        ``"burn-in"`` starts from a zero state and discards
        ``spec.burn_in`` steps. ``"stationary"`` draws the initial state
        from its exact stationary distribution.
    """
    if T < 1:
        raise InvalidInputError("T must be >= 1")
    size = tuple(np.atleast_1d(size).astype(int)) if size != () else ()
    F, g = spec.state_space()
    m = F.shape[0]
    if init == "burn-in":
        state = np.zeros(size + (m,))
        burn = spec.burn_in
    elif init == "stationary":
        L = _sqrt_psd(spec.stationary_state_cov())
        state = rng.standard_normal(size + (m,)) @ L.T
        burn = 0
    else:
        raise InvalidInputError(f"unknown init {init!r}")
    shocks = rng.standard_normal(size + (burn + T,)) * spec.innovation_sd
    out = np.empty(size + (T,))
    Ft = F.T
    for t in range(burn + T):
        state = state @ Ft + shocks[..., t, None] * g
        if t >= burn:
            out[..., t - burn] = state[..., 0]
    return out + spec.mean


@dataclass(frozen=True)
class SimModel:
    """Panel design: ``x_it = m_i + u_it`` with ``u`` an ARMA deviation process,
    ``y_it = (beta + z_i theta)' x_it + eps_it``."""

    n: int
    T: int
    d: int = 4
    beta: tuple[float, ...] | None = None
    beta_range: tuple[float, float] = (-20.0, 20.0)
    covariate_mean_sd: float = 3.0
    covariate: ArmaSpec = field(default_factory=lambda: ArmaSpec((0.5,), ()))
    error: ArmaSpec = field(default_factory=lambda: ArmaSpec((0.5,), (0.5,)))
    group_fraction: float | None = None
    theta: tuple[float, ...] | None = None
    init: str = "stationary"

    def __post_init__(self):
        if self.n < 2 or self.T < 1 or self.d < 1:
            raise InvalidInputError("need n >= 2, T >= 1, d >= 1")
        for name in ("beta", "theta"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(x) for x in np.atleast_1d(v))
                if len(v) != self.d:
                    raise InvalidInputError(f"{name} must have length d={self.d}")
                object.__setattr__(self, name, v)
        if self.group_fraction is not None and not 0.0 <= self.group_fraction <= 1.0:
            raise InvalidInputError("group_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    beta: np.ndarray
    theta: np.ndarray | None
    z: np.ndarray | None


def gen_arrays(model: SimModel, rng):
    """Draw one balanced panel as arrays.

    Returns
    -------
    X : ndarray, shape (n, T, d)
    Y : ndarray, shape (n, T)
    truth : GroundTruth
    """
    n, T, d = model.n, model.T, model.d
    if model.beta is None:
        beta = rng.uniform(model.beta_range[0], model.beta_range[1], size=d)
    else:
        beta = np.array(model.beta)
    m = rng.standard_normal((n, d)) * model.covariate_mean_sd
    u = simulate_arma(model.covariate, T, rng, size=(n, d), init=model.init)
    X = m[:, None, :] + np.swapaxes(u, 1, 2)
    eps = simulate_arma(model.error, T, rng, size=(n,), init=model.init)
    Y = X @ beta + eps
    z = theta = None
    if model.group_fraction is not None:
        n1 = int(round(model.group_fraction * n))
        z = np.zeros(n, dtype=np.int8)
        z[rng.permutation(n)[:n1]] = 1
        theta = np.zeros(d) if model.theta is None else np.array(model.theta)
        Y = Y + z[:, None] * (X @ theta)
    return X, Y, GroundTruth(beta, theta, z)


def gen_panel(model: SimModel, rng) -> tuple[PanelDataset, GroundTruth]:
    """Draw one panel from ``model`` and return it with the true parameters."""
    X, Y, truth = gen_arrays(model, rng)
    return PanelDataset.balanced(X, Y, truth.z), truth


@dataclass(frozen=True)
class PooledOLS:
    """Pooled OLS fit with classical and cluster-robust covariances."""

    beta: np.ndarray
    classical_cov: np.ndarray
    clustered_cov: np.ndarray


def pooled_ols_with_errors(panel: PanelDataset) -> PooledOLS:
    """Non-private pooled OLS with ``s^2 (X'X)^{-1}`` and user-clustered covariance.

    The clustered covariance is ``(X'X)^{-1} (sum_i X_i' e_i e_i' X_i) (X'X)^{-1}``,
    i.e. ``Q^{-1} W Q^{-1} / n`` with ``Q`` and ``W`` the per-user averages.

    Raises
    ------
    InvalidInputError
        If the pooled Gram matrix is singular.
    """
    X, Y = panel.stacked()
    starts = np.cumsum([0] + [u.T for u in panel.users[:-1]])
    return pooled_ols_arrays(X, Y, starts)


def pooled_ols_arrays(X, Y, starts) -> PooledOLS:
    """As :func:`pooled_ols_with_errors` on stacked rows; ``starts`` are the first row of each user."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    N, d = X.shape
    G = X.T @ X
    try:
        if np.linalg.cond(G) > 1e14:
            raise np.linalg.LinAlgError
        Ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError:
        raise InvalidInputError("pooled design matrix is singular") from None
    beta = Ginv @ (X.T @ Y)
    resid = Y - X @ beta
    s2 = float(resid @ resid) / max(N - d, 1)
    scores = np.add.reduceat(X * resid[:, None], np.asarray(starts, dtype=np.intp), axis=0)
    clustered = Ginv @ (scores.T @ scores) @ Ginv
    return PooledOLS(beta, s2 * Ginv, 0.5 * (clustered + clustered.T))
