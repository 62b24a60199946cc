"""Spectrally parameterised precision matrices over fast orthogonal transforms.

A precision matrix Q(theta) = U diag(h(theta)) U^T is represented by an
orthonormal transform U (applied as a fast operator, never materialised),
a base eigenvalue vector gamma, and a spectral curve h mapping parameters
theta to eigenvalues. Density evaluation, gradients, exact sampling and
shifted solves (cI + Q)^{-1} all run in the coefficient domain, so cost is
dominated by the transform itself.
"""

from __future__ import annotations

import numpy as np
import scipy.fft


class SpectralError(ValueError):
    """Raised for invalid dimensions, non-positive-definite curves, or singular shifts."""


def laplacian_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues 2 - 2cos(k pi / n), k = 0..n-1, of the free-boundary path Laplacian.

    These are the eigenvalues matching the orthonormal DCT-II eigenvectors:
    gamma_0 = 0 (constant vector), nondecreasing, bounded above by 4.
    """
    if n < 1:
        raise SpectralError(f"axis size must be >= 1, got {n}")
    return 2.0 - 2.0 * np.cos(np.arange(n) * np.pi / n)


def fully_connected_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues of the fully connected graph Laplacian n*I - 11^T: 0 once, then n.

    Index order matches the Haar transform layout (constant coefficient first).
    """
    if n < 1:
        raise SpectralError(f"axis size must be >= 1, got {n}")
    g = np.full(n, float(n))
    g[0] = 0.0
    return g


def kronecker_sum_eigenvalues(*gammas: np.ndarray) -> np.ndarray:
    """Eigenvalues of a Kronecker sum L1 (+) L2 [(+) L3], row-major over axes.

    Entry (i, j[, l]) of the raveled output is gamma1_i + gamma2_j [+ gamma3_l],
    matching the coefficient layout of the separable transforms below.
    """
    if not 1 <= len(gammas) <= 3:
        raise SpectralError(f"expected 1 to 3 eigenvalue vectors, got {len(gammas)}")
    out = np.asarray(gammas[0], dtype=float)
    for g in gammas[1:]:
        out = np.add.outer(out, np.asarray(g, dtype=float))
    return out.ravel()


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _haar_forward_axis(x: np.ndarray, axis: int) -> np.ndarray:
    """Full-depth orthonormal Haar DWT along one axis (size must be a power of two)."""
    out = np.moveaxis(x.astype(float, copy=True), axis, -1)
    m = out.shape[-1]
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    while m > 1:
        half = m // 2
        even = out[..., 0:m:2].copy()
        odd = out[..., 1:m:2].copy()
        out[..., :half] = (even + odd) * inv_sqrt2
        out[..., half:m] = (even - odd) * inv_sqrt2
        m = half
    return np.moveaxis(out, -1, axis)


def _haar_inverse_axis(c: np.ndarray, axis: int) -> np.ndarray:
    out = np.moveaxis(c.astype(float, copy=True), axis, -1)
    n = out.shape[-1]
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    m = 2
    while m <= n:
        half = m // 2
        approx = out[..., :half].copy()
        detail = out[..., half:m].copy()
        out[..., 0:m:2] = (approx + detail) * inv_sqrt2
        out[..., 1:m:2] = (approx - detail) * inv_sqrt2
        m *= 2
    return np.moveaxis(out, -1, axis)


class OrthoTransform:
    """Orthonormal transform U applied as a fast linear operator.

    ``forward`` computes U^T v (analysis: vector to coefficients) and
    ``inverse`` computes U c (synthesis). Inputs may be a single vector of
    length ``size`` or a batch of shape (B, size); rows transform independently.

    Kinds: "dct" (separable DCT-II on a 1-3 axis grid, diagonalising the
    Kronecker-sum grid Laplacian) and "haar" (separable full-depth Haar DWT,
    every axis a power of two).
    """

    def __init__(self, kind: str, dims: tuple[int, ...]):
        if kind not in ("dct", "haar"):
            raise SpectralError(f"unknown transform kind {kind!r}")
        dims = tuple(int(d) for d in dims)
        if not 1 <= len(dims) <= 3:
            raise SpectralError(f"need 1 to 3 axes, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise SpectralError(f"axis sizes must be >= 1, got {dims}")
        if kind == "haar" and not all(_is_power_of_two(d) for d in dims):
            raise SpectralError(f"haar axes must be powers of two, got {dims}")
        self.kind = kind
        self.dims = dims
        self.size = int(np.prod(dims))

    def __repr__(self) -> str:
        return f"OrthoTransform({self.kind!r}, dims={self.dims})"

    def _apply(self, v: np.ndarray, forward: bool) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        batched = v.ndim == 2
        if v.shape[-1] != self.size:
            raise SpectralError(f"expected trailing axis {self.size}, got {v.shape}")
        lead = (v.shape[0],) if batched else ()
        x = v.reshape(lead + self.dims)
        axes = tuple(range(len(lead), x.ndim))
        if self.kind == "dct":
            fn = scipy.fft.dctn if forward else scipy.fft.idctn
            x = fn(x, type=2, norm="ortho", axes=axes)
        else:
            step = _haar_forward_axis if forward else _haar_inverse_axis
            for ax in axes:
                x = step(x, ax)
        return x.reshape(v.shape)

    def forward(self, v: np.ndarray) -> np.ndarray:
        """U^T v: coefficients of v in the transform basis."""
        return self._apply(v, forward=True)

    def inverse(self, c: np.ndarray) -> np.ndarray:
        """U c: reconstruct a vector from coefficients."""
        return self._apply(c, forward=False)

    def base_eigenvalues(self) -> np.ndarray:
        """Graph-Laplacian eigenvalues aligned with this transform's coefficient layout.

        Path Laplacian per axis for "dct" (grid graph), fully connected graph
        per axis for "haar", composed by the Kronecker-sum rule.
        """
        per_axis = laplacian_eigenvalues if self.kind == "dct" else fully_connected_eigenvalues
        return kronecker_sum_eigenvalues(*(per_axis(d) for d in self.dims))


def dct_transform(*dims: int) -> OrthoTransform:
    return OrthoTransform("dct", dims)


def haar_transform(*dims: int) -> OrthoTransform:
    return OrthoTransform("haar", dims)


class SpectralCurve:
    """Maps parameters theta in R_+^P to eigenvalues h(theta) in R^V.

    Subclasses define ``values`` (the eigenvalues) and ``grad`` (the P x V
    Jacobian d h_i / d theta_p). All curves here are positive whenever every
    theta_p > 0, which is what makes Q(theta) positive definite.
    """

    param_count: int
    gamma: np.ndarray  # base eigenvalues the curve is built on

    def values(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_theta(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.param_count,):
            raise SpectralError(
                f"theta must have shape ({self.param_count},), got {theta.shape}"
            )
        return theta


class AffineCurve(SpectralCurve):
    """h_i(theta) = theta_1 + theta_2 * gamma_i: a shifted, scaled graph Laplacian."""

    param_count = 2

    def __init__(self, gamma: np.ndarray):
        self.gamma = np.asarray(gamma, dtype=float)
        if np.any(self.gamma < 0):
            raise SpectralError("base eigenvalues must be nonnegative")

    def values(self, theta):
        theta = self._check_theta(theta)
        return theta[0] + theta[1] * self.gamma

    def grad(self, theta):
        self._check_theta(theta)
        return np.stack([np.ones_like(self.gamma), self.gamma])


class IsotropicCurve(SpectralCurve):
    """h_i(theta) = theta_1: Q = theta_1 * I, one free parameter."""

    param_count = 1

    def __init__(self, size: int):
        self.gamma = np.zeros(int(size))

    def values(self, theta):
        theta = self._check_theta(theta)
        return np.full(self.gamma.shape, theta[0])

    def grad(self, theta):
        self._check_theta(theta)
        return np.ones((1, self.gamma.size))


class ScaleCurve(SpectralCurve):
    """h_i(theta) = theta_1 * gamma_i: a pure Laplacian rescaling (PSD when gamma_0 = 0)."""

    param_count = 1

    def __init__(self, gamma: np.ndarray):
        self.gamma = np.asarray(gamma, dtype=float)

    def values(self, theta):
        theta = self._check_theta(theta)
        return theta[0] * self.gamma

    def grad(self, theta):
        self._check_theta(theta)
        return self.gamma[None, :].copy()


class _PowerSumCurve(SpectralCurve):
    def __init__(self, base: SpectralCurve, n: int, m: int | None):
        if n < 0 or (m is not None and m < 0):
            raise SpectralError("powers must be nonnegative")
        self.base = base
        self.n = int(n)
        self.m = None if m is None else int(m)
        self.param_count = base.param_count
        self.gamma = base.gamma

    def values(self, theta):
        h = self.base.values(theta)
        out = h**self.n
        if self.m is not None:
            out = out + h**self.m
        return out

    def grad(self, theta):
        h = self.base.values(theta)
        dh = self.base.grad(theta)
        coef = self.n * h ** (self.n - 1) if self.n > 0 else np.zeros_like(h)
        if self.m is not None and self.m > 0:
            coef = coef + self.m * h ** (self.m - 1)
        return coef[None, :] * dh


class _ParamMixCurve(SpectralCurve):
    def __init__(self, base: SpectralCurve):
        self.base = base
        self.param_count = 2 * base.param_count
        self.gamma = base.gamma

    def values(self, theta):
        theta = self._check_theta(theta)
        p = self.base.param_count
        return self.base.values(theta[:p]) + self.base.values(theta[p:])

    def grad(self, theta):
        theta = self._check_theta(theta)
        p = self.base.param_count
        return np.concatenate([self.base.grad(theta[:p]), self.base.grad(theta[p:])])


def curve_power_sum(curve: SpectralCurve, n: int, m: int | None = None) -> SpectralCurve:
    """Combinator h'_i = h_i^n (+ h_i^m): Q^n (+ Q^m) shares Q's eigenvectors.

    With n = 1 and m omitted the curve is returned unchanged.
    """
    if n == 1 and m is None:
        return curve
    return _PowerSumCurve(curve, n, m)


def curve_param_mix(curve: SpectralCurve) -> SpectralCurve:
    """Combinator h'(theta') = h(theta_(1)) + h(theta_(2)) for Q(theta_(1)) + Q(theta_(2)).

    The returned curve has 2P parameters; theta' is the concatenation
    (theta_(1), theta_(2)) of two parameter vectors of the base curve.
    """
    return _ParamMixCurve(curve)


_LOG_2PI = np.log(2.0 * np.pi)


class SpectralPrecision:
    """Q(theta) = U diag(h(theta)) U^T with all operations in the coefficient domain.

    theta positivity is checked at construction; the sampler works in
    xi = ln theta so positivity is structural there. Instances are treated as
    immutable: use ``with_theta`` when the parameter moves.
    """

    def __init__(self, transform: OrthoTransform, curve: SpectralCurve, theta: np.ndarray):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (curve.param_count,):
            raise SpectralError(
                f"theta must have shape ({curve.param_count},), got {theta.shape}"
            )
        if np.any(theta <= 0):
            raise SpectralError(f"theta must be positive, got {theta}")
        if curve.gamma.size != transform.size:
            raise SpectralError(
                f"curve is over {curve.gamma.size} eigenvalues, transform has {transform.size}"
            )
        h = curve.values(theta)
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise SpectralError("curve produced nonpositive or nonfinite eigenvalues")
        self.transform = transform
        self.curve = curve
        self.theta = theta
        self._h = h

    @property
    def size(self) -> int:
        return self.transform.size

    def with_theta(self, theta: np.ndarray) -> "SpectralPrecision":
        return SpectralPrecision(self.transform, self.curve, theta)

    def eigenvalues(self) -> np.ndarray:
        return self._h

    def logdet(self) -> float:
        """ln det Q = sum_i ln h_i(theta)."""
        return float(np.sum(np.log(self._h)))

    def log_density(self, s: np.ndarray) -> float:
        """ln N(s; 0, Q^{-1}) including the -(V/2) ln 2pi constant."""
        c = self.transform.forward(s)
        v = self.size
        return float(-0.5 * v * _LOG_2PI + 0.5 * self.logdet() - 0.5 * np.sum(self._h * c * c))

    def grad_log_density_theta(self, s: np.ndarray) -> np.ndarray:
        """Gradient of log_density with respect to theta (shape (P,))."""
        c = self.transform.forward(s)
        dh = self.curve.grad(self.theta)
        return 0.5 * dh @ (1.0 / self._h) - 0.5 * dh @ (c * c)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Exact draw(s) from N(0, Q^{-1}): s = U D^{-1/2} z.

        ``size`` draws rows of a (size, V) matrix; None draws a single vector.
        """
        shape = (self.size,) if size is None else (size, self.size)
        z = rng.standard_normal(shape)
        return self.transform.inverse(z / np.sqrt(self._h))

    def _shifted_eigs(self, c: float) -> np.ndarray:
        if c < 0:
            raise SpectralError(f"shift must be nonnegative, got {c}")
        eigs = c + self._h
        if np.any(eigs <= 0):
            raise SpectralError("shifted system c + h_i is singular or indefinite")
        return eigs

    def solve_shifted(self, c: float, rhs: np.ndarray) -> np.ndarray:
        """(cI + Q)^{-1} rhs, computed entirely in the spectral domain."""
        eigs = self._shifted_eigs(c)
        return self.transform.inverse(self.transform.forward(rhs) / eigs)

    def sample_shifted(self, c: float, rhs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw from N((cI+Q)^{-1} rhs, (cI+Q)^{-1})."""
        eigs = self._shifted_eigs(c)
        coef = self.transform.forward(rhs) / eigs
        coef += rng.standard_normal(self.size) / np.sqrt(eigs)
        return self.transform.inverse(coef)

    def quadratic_form(self, s: np.ndarray) -> float:
        """s^T Q s = sum_i h_i (U^T s)_i^2."""
        c = self.transform.forward(s)
        return float(np.sum(self._h * c * c))


def base_quadratic_form(s: np.ndarray, transform: OrthoTransform, gamma: np.ndarray) -> float:
    """s^T L s via coefficients: sum_i gamma_i (U^T s)_i^2."""
    c = transform.forward(s)
    return float(np.sum(np.asarray(gamma) * c * c))
