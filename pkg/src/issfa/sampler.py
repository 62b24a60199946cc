"""Gibbs/Metropolis kernel for the structured sparse factor model.

One sweep resamples, in order: every feature row S_k; shared activations
Z_{t,k} (with the active weight redrawn from its conditional); each
observation's unique-feature block (Metropolis with prior proposals and the
features marginalised, then an exact joint feature draw); and finally the
scalars sigma2, theta, alpha, beta and the per-column nu_k, tau_k.

Randomness is drawn from per-(sweep, phase, index) substreams derived from a
single root seed, so per-row computations are schedule independent: the
parallelisable phases are pure reads per row, and results do not depend on
the order rows would be processed in.
"""

from __future__ import annotations

import logging
import warnings
from math import exp, log, log1p, sqrt

import numpy as np

from .ibp import beta_move_log_likelihood_ratio, harmonic, shared_prior_odds
from .model import Hyperparams, ModelState
from .spectral import AffineCurve, SpectralPrecision

logger = logging.getLogger(__name__)

_LOG_2PI = log(2.0 * np.pi)

# phase tags for rng substream derivation
_PH_FEATURES, _PH_ACTIVATION, _PH_UNIQUE, _PH_SCALARS, _PH_HELDOUT = range(5)


def substream(root_seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for a (phase, index, ...) path under one root seed."""
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=tuple(key)))


# ---------------------------------------------------------------------------
# theta (spatial parameter) log posterior in xi = ln theta, affine curve
# ---------------------------------------------------------------------------

def theta_log_posterior(xi, kplus, gamma, phi1, phi2, m_xi, r_xi):
    """ln f(xi | S) up to a constant, for h_i = theta1 + theta2 * gamma_i.

    phi1 = sum_k S_k S_k^T and phi2 = sum_k S_k L S_k^T are the sufficient
    statistics of the feature rows; the prior is independent normals on xi.
    """
    th = np.exp(xi)
    h = th[0] + th[1] * gamma
    if np.any(h <= 0):
        return -np.inf
    out = 0.5 * kplus * np.sum(np.log(h)) - 0.5 * (th[0] * phi1 + th[1] * phi2)
    out -= 0.5 * np.sum(np.asarray(r_xi) * (xi - np.asarray(m_xi)) ** 2)
    return float(out)


def theta_grad(xi, kplus, gamma, phi1, phi2, m_xi, r_xi):
    """Gradient of theta_log_posterior in xi (chain rule d/dxi = theta d/dtheta)."""
    th = np.exp(xi)
    h = th[0] + th[1] * gamma
    g1 = th[0] * (0.5 * kplus * np.sum(1.0 / h) - 0.5 * phi1)
    g2 = th[1] * (0.5 * kplus * np.sum(gamma / h) - 0.5 * phi2)
    prior = np.asarray(r_xi) * (xi - np.asarray(m_xi))
    return np.array([g1, g2]) - prior


def theta_hessian(xi, kplus, gamma, phi1, phi2, m_xi, r_xi):
    """Hessian of theta_log_posterior in xi (d^2/dxi^2 = theta d/dtheta + theta^2 d^2/dtheta^2)."""
    th = np.exp(xi)
    h = th[0] + th[1] * gamma
    inv = 1.0 / h
    g1 = th[0] * (0.5 * kplus * np.sum(inv) - 0.5 * phi1)
    g2 = th[1] * (0.5 * kplus * np.sum(gamma * inv) - 0.5 * phi2)
    h11 = g1 - th[0] ** 2 * 0.5 * kplus * np.sum(inv**2) - r_xi[0]
    h22 = g2 - th[1] ** 2 * 0.5 * kplus * np.sum((gamma * inv) ** 2) - r_xi[1]
    h12 = -th[0] * th[1] * 0.5 * kplus * np.sum(gamma * inv**2)
    return np.array([[h11, h12], [h12, h22]])


def theta_map(xi0, kplus, gamma, phi1, phi2, m_xi, r_xi, max_iter=200):
    """MAP of the xi posterior: Levenberg-damped Newton with backtracking.

    The objective mixes a convex log-sum-exp term with concave exponential
    terms, so the raw Hessian can be indefinite away from the mode; damping
    shifts its top eigenvalue below zero to keep every step an ascent
    direction. Returns (xi_hat, converged); the gradient tolerance scales
    with the problem size K * V.
    """
    args = (kplus, gamma, phi1, phi2, m_xi, r_xi)
    xi = np.asarray(xi0, dtype=float).copy()
    f = theta_log_posterior(xi, *args)
    gtol = 1e-8 * kplus * gamma.size + 1e-9
    for _ in range(max_iter):
        g = theta_grad(xi, *args)
        gmax = np.max(np.abs(g))
        if gmax < gtol:
            return xi, True
        hess = theta_hessian(xi, *args)
        lam_max = float(np.linalg.eigvalsh(hess)[-1])
        if lam_max > -1e-12:
            hess = hess - (lam_max + 1e-6 * (1.0 + abs(lam_max))) * np.eye(2)
        step = np.linalg.solve(hess, -g)
        norm = np.linalg.norm(step)
        if norm > 5.0:
            step *= 5.0 / norm
        scale, improved = 1.0, False
        for _ in range(60):
            cand = xi + scale * step
            fc = theta_log_posterior(cand, *args)
            if fc > f:
                xi, f, improved = cand, fc, True
                break
            scale *= 0.5
        if not improved:
            # numerically stationary: accept if the gradient is merely small
            return xi, bool(gmax < 1e4 * gtol)
    return xi, bool(np.max(np.abs(theta_grad(xi, *args))) < 1e4 * gtol)


# ---------------------------------------------------------------------------
# unique-feature marginal and joint feature draw
# ---------------------------------------------------------------------------

def unique_marginal_log_density(
    d: np.ndarray, weight_sq_sum: float, sigma2: float, prec: SpectralPrecision
) -> float:
    """ln N(d; 0, sigma2 I + weight_sq_sum * Q^{-1}), evaluated spectrally.

    The covariance shares Q's eigenvectors with eigenvalues sigma2 + s / h_i,
    so only one forward transform of the residual d is needed.
    """
    c = prec.transform.forward(d)
    cov = sigma2 + weight_sq_sum / prec.eigenvalues()
    return float(-0.5 * (d.size * _LOG_2PI + np.sum(np.log(cov)) + np.sum(c * c / cov)))


def _unique_posterior_coefficients(a, d_coef, sigma2, h):
    """Posterior mean, in the coefficient domain, of n stacked feature rows.

    The joint precision (a a^T / sigma2 + h_i I_n) per spectral index i is a
    rank-one update of a scaled identity; the mean is a_j c_i / (sigma2 h_i + |a|^2).
    """
    denom = sigma2 * h + float(a @ a)
    return np.outer(a, d_coef / denom)


def _unique_cov_apply(a, sigma2, prec, u):
    """Apply the joint posterior covariance of stacked unique features to rows of u.

    u has shape (n, V) in the data domain; returns (n, V). Used by the dense
    oracle tests to materialise the covariance column by column.
    """
    h = prec.eigenvalues()
    cu = prec.transform.forward(u)
    asq = float(a @ a)
    denom = h * (sigma2 * h + asq)
    w = a @ cu  # (V,) inner products per spectral index
    out = cu / h
    if asq > 0:
        out -= np.outer(a, w / denom)
    return prec.transform.inverse(out)


def _draw_unique_rows(a, d_coef, sigma2, prec, rng):
    """Exact joint draw of n feature rows given their weights a and residual coefficients.

    Mean plus a square root of (a a^T / sigma2 + h_i I)^{-1} applied per
    spectral index; the square root of I - kappa aa^T/|a|^2 is analytic.
    """
    h = prec.eigenvalues()
    n = a.size
    coef = _unique_posterior_coefficients(a, d_coef, sigma2, h)
    z = rng.standard_normal((n, h.size))
    asq = float(a @ a)
    if asq > 0:
        denom = sigma2 * h + asq
        shrink = 1.0 - np.sqrt(sigma2 * h / denom)  # (V,)
        ahat = a / sqrt(asq)
        z = z - np.outer(ahat, shrink * (ahat @ z))
    coef += z / np.sqrt(h)
    return prec.transform.inverse(coef)


def _log_rl(ssq, sr0, r0sq, sigma2, nu_k, tau_k):
    """ln r_l: likelihood log odds of activating a shared feature, from scalars.

    ssq = s s^T, sr0 = s r0, r0sq = r0 r0 with r0 the residual excluding this
    entry's contribution; the weight is marginalised over N(tau_k, 1/nu_k).
    """
    sr1 = sr0 - tau_k * ssq
    r1sq = r0sq - 2.0 * tau_k * sr0 + tau_k * tau_k * ssq
    return (
        -0.5 * log1p(ssq / (sigma2 * nu_k))
        - r1sq / (2.0 * sigma2)
        + sr1 * sr1 / (2.0 * sigma2 * (sigma2 * nu_k + ssq))
        + r0sq / (2.0 * sigma2)
    )


def _bernoulli_from_log_odds(log_odds: float, u: float) -> bool:
    if log_odds >= 0:
        return u < 1.0 / (1.0 + exp(-log_odds))
    e = exp(log_odds)
    return u < e / (1.0 + e)


class IssfaGibbs:
    """Owns the data, the model state, the residual cache, and the sweep schedule.

    The residual R = Y - (A o Z) S is updated incrementally by every move and
    recomputed in full every ``refresh_every`` sweeps to bound float drift.
    """

    def __init__(
        self,
        y: np.ndarray,
        state: ModelState,
        prec: SpectralPrecision,
        hyper: Hyperparams,
        seed: int = 0,
        refresh_every: int = 50,
    ):
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        if self.y.ndim != 2:
            raise ValueError(f"data must be a T x V matrix, got shape {self.y.shape}")
        if state.n_rows != self.y.shape[0] or state.n_dims != self.y.shape[1]:
            raise ValueError("state dimensions do not match the data")
        if prec.size != self.y.shape[1]:
            raise ValueError("precision size does not match the data dimension")
        if len(hyper.m_xi) != prec.curve.param_count:
            raise ValueError("xi prior length does not match the curve parameter count")
        self.state = state
        self.hyper = hyper
        self.prec = prec.with_theta(np.exp(state.xi))
        self.root_seed = int(seed)
        self.refresh_every = int(refresh_every)
        self.sweeps_done = 0
        self.diagnostics = {
            "unique_proposals": 0,
            "unique_accepts": 0,
            "unique_clamped": 0,
            "beta_accepts": 0,
            "beta_proposals": 0,
            "theta_mh_accepts": 0,
            "theta_mh_proposals": 0,
            "theta_map_failures": 0,
        }
        self.m = state.Z.sum(axis=0).astype(np.int64)
        self.R = np.empty_like(self.y)
        self.refresh_residuals()

    # -- residual cache -----------------------------------------------------

    def refresh_residuals(self) -> None:
        np.subtract(self.y, self.state.reconstruction(), out=self.R)

    def residual_error(self) -> float:
        """Max abs deviation of the cache from a direct recomputation."""
        return float(np.max(np.abs(self.R - (self.y - self.state.reconstruction()))))

    def train_sse(self) -> float:
        return float(np.einsum("ij,ij->", self.R, self.R))

    def set_data(self, y: np.ndarray) -> None:
        """Replace the observations (used by the prior-data Geweke loop)."""
        if y.shape != self.y.shape:
            raise ValueError(f"data shape {y.shape} != {self.y.shape}")
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.refresh_residuals()

    def _substream(self, *key: int) -> np.random.Generator:
        return substream(self.root_seed, *key)

    # -- feature rows (S) ---------------------------------------------------

    def feature_row_posterior(self, k: int) -> tuple[float, np.ndarray]:
        """(c, rhs) of the conditional S_k ~ N((cI+Q)^{-1} rhs, (cI+Q)^{-1})."""
        st = self.state
        w = st.A[:, k] * st.Z[:, k]
        c0 = float(w @ w)
        rhs = (self.R.T @ w + c0 * st.S[k]) / st.sigma2
        return c0 / st.sigma2, rhs

    def update_feature_row(self, k: int, rng: np.random.Generator) -> None:
        st = self.state
        c, rhs = self.feature_row_posterior(k)
        s_new = self.prec.sample_shifted(c, rhs, rng)
        delta = st.S[k] - s_new
        active = np.nonzero(st.Z[:, k])[0]
        if active.size:
            self.R[active] += np.outer(st.A[active, k], delta)
        st.S[k] = s_new

    # -- shared activations and weights --------------------------------------

    def activation_log_odds(self, t: int, k: int) -> float:
        """ln r_l + ln r_p for flipping Z[t, k]; requires the feature to be shared."""
        st = self.state
        m_minus = int(self.m[k]) - int(st.Z[t, k])
        if m_minus == 0:
            raise ValueError(f"feature {k} is unique to observation {t}; not a shared update")
        s = st.S[k]
        r0 = self.R[t] + st.A[t, k] * st.Z[t, k] * s
        ssq = float(s @ s)
        lrl = _log_rl(ssq, float(s @ r0), float(r0 @ r0), st.sigma2, st.nu[k], st.tau[k])
        lrp = log(shared_prior_odds(m_minus, st.beta, st.n_rows))
        return lrl + lrp

    def weight_posterior(self, t: int, k: int) -> tuple[float, float]:
        """(mean, variance) of the conditional for A[t, k] given Z[t, k] = 1."""
        st = self.state
        s = st.S[k]
        r0 = self.R[t] + st.A[t, k] * st.Z[t, k] * s
        lam = st.nu[k] + float(s @ s) / st.sigma2
        mean = (float(s @ r0) / st.sigma2 + st.nu[k] * st.tau[k]) / lam
        return mean, 1.0 / lam

    def update_weight(self, t: int, k: int, rng: np.random.Generator) -> None:
        st = self.state
        if not st.Z[t, k]:
            raise ValueError(f"A[{t},{k}] is inactive; weights are only resampled where Z=1")
        mean, var = self.weight_posterior(t, k)
        a_new = mean + sqrt(var) * rng.standard_normal()
        self.R[t] += (st.A[t, k] - a_new) * st.S[k]
        st.A[t, k] = a_new

    def _shared_activation_phase(self, sweep_key: int) -> None:
        """Resample Z[t, k] (weight marginalised) then A[t, k] for all shared pairs.

        Organised column-major: one R @ s product per column, then scalar
        algebra per row, with the row residual vectors updated in a batch at
        the end of each column. Each row consumes its own rng substream so the
        result is independent of how rows would be scheduled.
        """
        st = self.state
        t_rows, kplus = st.Z.shape
        if kplus == 0:
            return
        rngs = [self._substream(sweep_key, _PH_ACTIVATION, t) for t in range(t_rows)]
        rowsq = np.einsum("ij,ij->i", self.R, self.R)
        sigma2 = st.sigma2
        log_denom_base = st.beta + t_rows - 1
        for k in range(kplus):
            s = st.S[k]
            ssq = float(s @ s)
            sr = self.R @ s
            nu_k, tau_k = float(st.nu[k]), float(st.tau[k])
            deltas = np.zeros(t_rows)
            zcol = st.Z[:, k]
            acol = st.A[:, k]
            for t in range(t_rows):
                z_cur = int(zcol[t])
                m_minus = int(self.m[k]) - z_cur
                if m_minus == 0:
                    continue  # unique feature owned by t; handled in the unique phase
                a_cur = float(acol[t])
                sr_t = float(sr[t])
                sr0 = sr_t + a_cur * ssq
                r0sq = float(rowsq[t]) + 2.0 * a_cur * sr_t + a_cur * a_cur * ssq
                lo = _log_rl(ssq, sr0, r0sq, sigma2, nu_k, tau_k)
                lo += log(m_minus / (log_denom_base - m_minus))
                rng_t = rngs[t]
                if _bernoulli_from_log_odds(lo, rng_t.random()):
                    lam = nu_k + ssq / sigma2
                    mean = (sr0 / sigma2 + nu_k * tau_k) / lam
                    a_new = mean + rng_t.standard_normal() / sqrt(lam)
                    z_new = 1
                else:
                    a_new, z_new = 0.0, 0
                delta = a_cur - a_new
                if z_new != z_cur:
                    zcol[t] = z_new
                    self.m[k] += z_new - z_cur
                if delta != 0.0:
                    acol[t] = a_new
                    rowsq[t] += 2.0 * delta * sr_t + delta * delta * ssq
                    sr[t] = sr_t + delta * ssq
                    deltas[t] = delta
            touched = np.nonzero(deltas)[0]
            if touched.size:
                self.R[touched] += np.outer(deltas[touched], s)

    # -- unique features -----------------------------------------------------

    def _unique_columns(self, t: int) -> np.ndarray:
        st = self.state
        return np.nonzero((self.m == 1) & (st.Z[t] == 1))[0]

    def propose_unique_features(self, t: int, rng: np.random.Generator) -> bool:
        """Metropolis replacement of observation t's unique-feature block.

        Proposes (n, tau_j, nu_j, a_j) from the priors, accepts on the ratio of
        feature-marginalised likelihoods, and on acceptance draws the new
        feature rows jointly from their exact conditional. Returns acceptance.
        """
        st = self.state
        hp = self.hyper
        t_rows = st.n_rows
        old_cols = self._unique_columns(t)
        a_old = st.A[t, old_cols]
        d = self.R[t] + a_old @ st.S[old_cols] if old_cols.size else self.R[t].copy()

        rate = st.alpha * st.beta / (st.beta + t_rows - 1)
        n_new = int(rng.poisson(rate))
        if n_new > hp.max_new_features:
            n_new = hp.max_new_features
            self.diagnostics["unique_clamped"] += 1
        tau_new = hp.m_tau + rng.standard_normal(n_new) / sqrt(hp.r_tau)
        nu_new = rng.gamma(hp.e_nu, 1.0 / hp.f_nu, size=n_new)
        a_new = tau_new + rng.standard_normal(n_new) / np.sqrt(nu_new)

        d_coef = self.prec.transform.forward(d)
        h = self.prec.eigenvalues()

        def marginal(ssum: float) -> float:
            cov = st.sigma2 + ssum / h
            return -0.5 * (d.size * _LOG_2PI + np.sum(np.log(cov)) + np.sum(d_coef * d_coef / cov))

        log_psi = marginal(float(a_new @ a_new)) - marginal(float(a_old @ a_old))
        self.diagnostics["unique_proposals"] += 1
        accept = log(max(rng.random(), 1e-300)) < log_psi
        if accept:
            self.diagnostics["unique_accepts"] += 1
            if n_new or old_cols.size:
                self._apply_unique_block(t, old_cols, n_new, tau_new, nu_new, a_new, d, d_coef, rng)
        # Gibbs refresh of the owner's unique weights improves mixing between
        # (rarely accepted) block moves and is an exact conditional update.
        for k in self._unique_columns(t):
            self.update_weight(t, int(k), rng)
        return accept

    def _apply_unique_block(self, t, old_cols, n_new, tau_new, nu_new, a_new, d, d_coef, rng):
        st = self.state
        keep = np.ones(st.kplus, dtype=bool)
        keep[old_cols] = False
        if n_new:
            s_rows = _draw_unique_rows(a_new, d_coef, st.sigma2, self.prec, rng)
            z_cols = np.zeros((st.n_rows, n_new), dtype=np.uint8)
            z_cols[t] = 1
            a_cols = np.zeros((st.n_rows, n_new))
            a_cols[t] = a_new
            st.Z = np.ascontiguousarray(np.concatenate([st.Z[:, keep], z_cols], axis=1))
            st.A = np.ascontiguousarray(np.concatenate([st.A[:, keep], a_cols], axis=1))
            st.S = np.ascontiguousarray(np.concatenate([st.S[keep], s_rows], axis=0))
            st.nu = np.concatenate([st.nu[keep], nu_new])
            st.tau = np.concatenate([st.tau[keep], tau_new])
            self.m = np.concatenate([self.m[keep], np.ones(n_new, dtype=np.int64)])
            self.R[t] = d - a_new @ s_rows
        else:
            st.Z = np.ascontiguousarray(st.Z[:, keep])
            st.A = np.ascontiguousarray(st.A[:, keep])
            st.S = np.ascontiguousarray(st.S[keep])
            st.nu = st.nu[keep]
            st.tau = st.tau[keep]
            self.m = self.m[keep]
            self.R[t] = d

    # -- scalar conditionals ---------------------------------------------------

    def update_noise(self, rng: np.random.Generator) -> None:
        st = self.state
        shape = 0.5 * st.n_rows * st.n_dims + self.hyper.a
        scale = self.hyper.b + 0.5 * self.train_sse()
        st.sigma2 = scale / rng.gamma(shape)

    def update_alpha(self, rng: np.random.Generator) -> None:
        st = self.state
        rate = self.hyper.f_alpha + harmonic(st.beta, st.n_rows)
        st.alpha = rng.gamma(st.kplus + self.hyper.e_alpha, 1.0 / rate)

    def update_beta(self, rng: np.random.Generator) -> None:
        st = self.state
        hp = self.hyper
        psi = log(st.beta)
        psi_new = psi + hp.s_beta * rng.standard_normal()
        beta_new = exp(psi_new)
        l_ratio = beta_move_log_likelihood_ratio(self.m, st.n_rows, st.alpha, beta_new, st.beta)
        log_acc = l_ratio + hp.e_beta * (psi_new - psi) + hp.f_beta * (st.beta - beta_new)
        self.diagnostics["beta_proposals"] += 1
        if log(max(rng.random(), 1e-300)) < log_acc:
            st.beta = beta_new
            self.diagnostics["beta_accepts"] += 1

    def update_theta(self, rng: np.random.Generator) -> None:
        """Laplace (optionally Metropolis-corrected) draw of xi = ln theta."""
        st = self.state
        hp = self.hyper
        if st.kplus == 0:
            return
        if not isinstance(self.prec.curve, AffineCurve):
            raise ValueError("theta updates require the affine curve h = theta1 + theta2*gamma")
        gamma = self.prec.curve.gamma
        coef = self.prec.transform.forward(st.S)
        csq = coef * coef
        phi1 = float(np.sum(csq))
        phi2 = float(np.sum(csq @ gamma)) if csq.ndim == 2 else float(np.sum(gamma * csq))
        args = (st.kplus, gamma, phi1, phi2, hp.m_xi, hp.r_xi)

        xi_hat, ok = theta_map(st.xi, *args)
        if not ok:
            self.diagnostics["theta_map_failures"] += 1
            logger.warning("theta MAP search did not converge; keeping current xi")
            return
        neg_h = -theta_hessian(xi_hat, *args)
        try:
            chol = np.linalg.cholesky(neg_h)
        except np.linalg.LinAlgError:
            self.diagnostics["theta_map_failures"] += 1
            logger.warning("theta Hessian not negative definite at MAP; keeping current xi")
            return
        xi_prop = xi_hat + np.linalg.solve(chol.T, rng.standard_normal(2))
        if hp.theta_mh:
            self.diagnostics["theta_mh_proposals"] += 1

            def prop_logq(x):
                return -0.5 * float((x - xi_hat) @ neg_h @ (x - xi_hat))

            log_acc = (
                theta_log_posterior(xi_prop, *args)
                - theta_log_posterior(st.xi, *args)
                + prop_logq(st.xi)
                - prop_logq(xi_prop)
            )
            if not log(max(rng.random(), 1e-300)) < log_acc:
                return
            self.diagnostics["theta_mh_accepts"] += 1
        st.xi = xi_prop
        self.prec = self.prec.with_theta(np.exp(xi_prop))

    def update_weight_precisions(self, rng: np.random.Generator) -> None:
        st = self.state
        hp = self.hyper
        for k in range(st.kplus):
            active = st.Z[:, k].astype(bool)
            dev = st.A[active, k] - st.tau[k]
            shape = hp.e_nu + 0.5 * self.m[k]
            rate = hp.f_nu + 0.5 * float(dev @ dev)
            st.nu[k] = rng.gamma(shape, 1.0 / rate)

    def update_weight_means(self, rng: np.random.Generator) -> None:
        st = self.state
        hp = self.hyper
        for k in range(st.kplus):
            active = st.Z[:, k].astype(bool)
            lam = st.nu[k] * self.m[k] + hp.r_tau
            mean = (st.nu[k] * float(st.A[active, k].sum()) + hp.r_tau * hp.m_tau) / lam
            st.tau[k] = mean + rng.standard_normal() / sqrt(lam)

    # -- composition -----------------------------------------------------------

    def prune_empty_columns(self) -> None:
        st = self.state
        keep = self.m > 0
        if np.all(keep):
            return
        st.Z = np.ascontiguousarray(st.Z[:, keep])
        st.A = np.ascontiguousarray(st.A[:, keep])
        st.S = np.ascontiguousarray(st.S[keep])
        st.nu = st.nu[keep]
        st.tau = st.tau[keep]
        self.m = self.m[keep]

    def sweep(self) -> dict:
        """One full pass over all conditionals; returns cheap per-sweep scalars."""
        st = self.state
        key = self.sweeps_done
        for k in range(st.kplus):
            self.update_feature_row(k, self._substream(key, _PH_FEATURES, k))
        self._shared_activation_phase(key)
        for t in range(st.n_rows):
            self.propose_unique_features(t, self._substream(key, _PH_UNIQUE, t))
        rng = self._substream(key, _PH_SCALARS, 0)
        self.update_noise(rng)
        self.update_theta(rng)
        self.update_alpha(rng)
        self.update_beta(rng)
        self.update_weight_precisions(rng)
        self.update_weight_means(rng)
        self.prune_empty_columns()
        self.sweeps_done += 1
        if self.refresh_every and self.sweeps_done % self.refresh_every == 0:
            self.refresh_residuals()
        return {
            "kplus": st.kplus,
            "sigma2": st.sigma2,
            "alpha": st.alpha,
            "beta": st.beta,
            "theta": tuple(np.exp(st.xi)),
            "train_sse": self.train_sse(),
        }

    # -- holdout inference -------------------------------------------------------

    def heldout_infer(
        self, y_holdout: np.ndarray, inner_sweeps: int, stream_key: int = 0
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Infer activations and weights for unseen rows with everything else frozen.

        Each holdout row is treated as an extra exchangeable observation given
        the training activations: the prior odds for feature k use the training
        count m_k with T+1 effective rows. No new unique features are proposed.
        Returns (Z_h, A_h, reconstruction).
        """
        st = self.state
        y_h = np.ascontiguousarray(y_holdout, dtype=np.float64)
        n_h = y_h.shape[0]
        kplus = st.kplus
        z_h = np.zeros((n_h, kplus), dtype=np.uint8)
        a_h = np.zeros((n_h, kplus))
        if kplus == 0 or inner_sweeps < 1:
            return z_h, a_h, np.zeros_like(y_h)
        r_h = y_h.copy()
        sigma2 = st.sigma2
        t_eff = st.n_rows + 1
        rngs = [
            self._substream(stream_key, _PH_HELDOUT, t) for t in range(n_h)
        ]
        for _ in range(inner_sweeps):
            rowsq = np.einsum("ij,ij->i", r_h, r_h)
            for k in range(kplus):
                s = st.S[k]
                ssq = float(s @ s)
                sr = r_h @ s
                nu_k, tau_k = float(st.nu[k]), float(st.tau[k])
                lrp = log(shared_prior_odds(int(self.m[k]), st.beta, t_eff))
                deltas = np.zeros(n_h)
                for t in range(n_h):
                    a_cur = float(a_h[t, k])
                    sr_t = float(sr[t])
                    sr0 = sr_t + a_cur * ssq
                    r0sq = float(rowsq[t]) + 2.0 * a_cur * sr_t + a_cur * a_cur * ssq
                    lo = _log_rl(ssq, sr0, r0sq, sigma2, nu_k, tau_k) + lrp
                    rng_t = rngs[t]
                    if _bernoulli_from_log_odds(lo, rng_t.random()):
                        lam = nu_k + ssq / sigma2
                        mean = (sr0 / sigma2 + nu_k * tau_k) / lam
                        a_new = mean + rng_t.standard_normal() / sqrt(lam)
                        z_h[t, k] = 1
                    else:
                        a_new = 0.0
                        z_h[t, k] = 0
                    delta = a_cur - a_new
                    if delta != 0.0:
                        a_h[t, k] = a_new
                        rowsq[t] += 2.0 * delta * sr_t + delta * delta * ssq
                        sr[t] = sr_t + delta * ssq
                        deltas[t] = delta
                touched = np.nonzero(deltas)[0]
                if touched.size:
                    r_h[touched] += np.outer(deltas[touched], s)
        return z_h, a_h, a_h @ st.S


# ---------------------------------------------------------------------------
# initial states
# ---------------------------------------------------------------------------

def draw_prior_state(
    t_rows: int, prec: SpectralPrecision, hyper: Hyperparams, rng: np.random.Generator
) -> ModelState:
    """A full draw of the latent state from the prior (no data involved)."""
    from .ibp import sample_ibp

    alpha = rng.gamma(hyper.e_alpha, 1.0 / hyper.f_alpha)
    beta = rng.gamma(hyper.e_beta, 1.0 / hyper.f_beta)
    z = sample_ibp(alpha, beta, t_rows, rng).entries
    kplus = z.shape[1]
    xi = np.asarray(hyper.m_xi) + rng.standard_normal(len(hyper.m_xi)) / np.sqrt(hyper.r_xi)
    prec = prec.with_theta(np.exp(xi))
    nu = rng.gamma(hyper.e_nu, 1.0 / hyper.f_nu, size=kplus)
    tau = hyper.m_tau + rng.standard_normal(kplus) / sqrt(hyper.r_tau)
    a = np.zeros((t_rows, kplus))
    for k in range(kplus):
        active = z[:, k].astype(bool)
        a[active, k] = tau[k] + rng.standard_normal(int(active.sum())) / sqrt(nu[k])
    s = prec.sample(rng, size=kplus) if kplus else np.zeros((0, prec.size))
    sigma2 = hyper.b / rng.gamma(hyper.a)
    return ModelState(Z=z, A=a, S=s, sigma2=sigma2, alpha=alpha, beta=beta,
                      nu=nu, tau=tau, xi=xi)


def initial_state_kmeans(
    y: np.ndarray,
    prec: SpectralPrecision,
    hyper: Hyperparams,
    rng: np.random.Generator,
    n_clusters: int = 15,
    detect_sd: float = 2.0,
) -> ModelState:
    """K-means feature initialisation with detection-thresholded activations.

    Observations are smoothed by keeping the lowest-eigenvalue eighth of the
    transform coefficients (raw rows are noise dominated at realistic sizes),
    cluster centres become unit-normalised feature rows, and Z[t, k] switches
    on where the projection of row t onto feature k exceeds ``detect_sd``
    noise standard deviations. The noise scale comes from the discarded
    high-frequency coefficients; active weights start at the one-feature
    least-squares coefficient; xi starts at its MAP given the initial
    features. Empty columns are dropped.
    """
    from sklearn.cluster import KMeans

    t_rows, v = y.shape
    gamma = prec.curve.gamma
    n_keep = min(v, max(16, v // 8))
    order = np.argsort(gamma, kind="stable")
    smooth_idx = order[:n_keep]
    coef = prec.transform.forward(y)
    if n_keep < v:
        noise_idx = order[n_keep:]
        sigma2 = float(np.mean(coef[:, noise_idx] ** 2))
        mask = np.zeros(v)
        mask[smooth_idx] = 1.0
        y_smooth = prec.transform.inverse(coef * mask)
    else:
        sigma2 = max(float(np.var(y)), 1e-6)
        y_smooth = y

    n_clusters = min(n_clusters, t_rows)
    km = KMeans(n_clusters=n_clusters, n_init=4, random_state=int(rng.integers(2**31 - 1)))
    km.fit(y_smooth)
    s = km.cluster_centers_.astype(np.float64)
    norms = np.linalg.norm(s, axis=1)
    keep = norms > 1e-12
    s = s[keep] / norms[keep, None]

    proj = y @ s.T  # unit feature rows: the LS coefficient per (row, feature)
    z = (np.abs(proj) > detect_sd * np.sqrt(sigma2)).astype(np.uint8)
    a = np.where(z, proj, 0.0)
    keep_cols = z.sum(axis=0) > 0
    z, a, s = z[:, keep_cols], a[:, keep_cols], s[keep_cols]
    kplus = s.shape[0]

    # xi starts at the prior mean; fitting it to the band-limited cluster
    # centres would bias the smoothness parameter high before any data enters
    xi = np.asarray(hyper.m_xi, dtype=float).copy()
    nu = np.full(kplus, hyper.e_nu / hyper.f_nu)
    tau = np.full(kplus, hyper.m_tau)
    return ModelState(Z=z, A=a, S=s, sigma2=max(sigma2, 1e-6), alpha=1.0, beta=1.0,
                      nu=nu, tau=tau, xi=xi)


def initial_state_empty(t_rows: int, prec: SpectralPrecision, hyper: Hyperparams) -> ModelState:
    """A featureless starting state; the sampler grows K+ from the unique phase."""
    return ModelState(
        Z=np.zeros((t_rows, 0), dtype=np.uint8),
        A=np.zeros((t_rows, 0)),
        S=np.zeros((0, prec.size)),
        sigma2=1.0,
        alpha=1.0,
        beta=1.0,
        nu=np.zeros(0),
        tau=np.zeros(0),
        xi=np.asarray(hyper.m_xi, dtype=float).copy(),
    )
