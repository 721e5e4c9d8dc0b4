"""Joint time dynamics of the period effects with observation weights.

Per gender the common period effect follows a random walk with drift and
the country effect an AR(1) with intercept; the four innovations of one
year are jointly Gaussian with covariance C.  Stacking both genders gives
per-year observations Y_t = (dK^M, kappa^M_t, dK^F, kappa^F_t) that are
linear in the six mean parameters Psi = (theta^M, c^M, phi^M, theta^F,
c^F, phi^F).  The weighted Gaussian log-likelihood is maximized exactly
by alternating a weighted GLS step for Psi with the closed-form weighted
covariance update, then verified with a quasi-Newton polish.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .data import YearRange, GENDERS
from .errors import ConvergenceError, ParseError, ValidationError

#: Convergence tolerance on the per-iteration log-likelihood change (a
#: log-likelihood delta is the log of the likelihood ratio).
FIT_TOL = 1e-12

#: The iterates themselves must also settle to within this, relative to
#: 1 + the largest parameter magnitude: the likelihood is second-order
#: flat at the optimum, so a small delta alone does not pin the
#: GLS/moment fixed point down.
PARAM_TOL = 1e-13

#: Maximum alternating iterations.
MAX_FIT_ITER = 10_000

#: The polish step must not find improvement beyond this.
POLISH_TOL = 1e-8

#: Minimum effective observations: six mean parameters plus a PD covariance.
MIN_EFFECTIVE_OBS = 7

#: Ridge added to a singular covariance iterate, relative to its trace.
RIDGE_SCALE = 1e-12

PSI_NAMES = ("theta_M", "c_M", "phi_M", "theta_F", "c_F", "phi_F")

LOG_2PI = float(np.log(2.0 * np.pi))


class InstabilityWarning(UserWarning):
    """An estimated AR(1) coefficient has modulus >= 1."""


@dataclass(frozen=True)
class PeriodEffectSeries:
    """Per-gender K and kappa paths over one calibration window."""

    years: YearRange
    K: dict
    kappa: dict

    def __post_init__(self):
        nt = len(self.years)
        for table in (self.K, self.kappa):
            if set(table) != set(GENDERS):
                raise ValidationError(f"period effects must cover genders {GENDERS}")
            for gender, arr in table.items():
                if np.asarray(arr).shape != (nt,):
                    raise ValidationError(
                        f"period effects for {gender} must have length {nt}"
                    )


@dataclass(frozen=True)
class ObservationRow:
    """One year's stacked observation: Y in R^4, design X in R^(4x6)."""

    year: int
    Y: np.ndarray
    X: np.ndarray


def build_design(series: PeriodEffectSeries) -> list[ObservationRow]:
    """Rows for t_min+1 .. t_max; exactly |T|-1 of them.

    Row layout (male block first):
        Y = (K^M_t - K^M_{t-1}, kappa^M_t, K^F_t - K^F_{t-1}, kappa^F_t)
        X = [[1, 0,          0, 0, 0,          0],
             [0, 1, kappa^M_{t-1}, 0, 0,          0],
             [0, 0,          0, 1, 0,          0],
             [0, 0,          0, 0, 1, kappa^F_{t-1}]]
    """
    K_m = np.asarray(series.K["M"], dtype=float)
    K_f = np.asarray(series.K["F"], dtype=float)
    k_m = np.asarray(series.kappa["M"], dtype=float)
    k_f = np.asarray(series.kappa["F"], dtype=float)
    rows = []
    for j in range(1, len(series.years)):
        Y = np.array([K_m[j] - K_m[j - 1], k_m[j], K_f[j] - K_f[j - 1], k_f[j]])
        X = np.zeros((4, 6))
        X[0, 0] = 1.0
        X[1, 1] = 1.0
        X[1, 2] = k_m[j - 1]
        X[2, 3] = 1.0
        X[3, 4] = 1.0
        X[3, 5] = k_f[j - 1]
        rows.append(ObservationRow(int(series.years.first + j), Y, X))
    return rows


@dataclass(frozen=True)
class TimeSeriesFit:
    """Weighted MLE of (Psi, C) plus diagnostics.

    `stationary` reports whether each gender's AR(1) coefficient has
    modulus < 1; no clamping is applied.
    """

    psi: np.ndarray
    C: np.ndarray
    weights: np.ndarray
    loglik: float
    iterations: int
    ridged: bool = False

    def param(self, name: str) -> float:
        return float(self.psi[PSI_NAMES.index(name)])

    @property
    def stationary(self) -> dict:
        return {"M": abs(self.param("phi_M")) < 1.0,
                "F": abs(self.param("phi_F")) < 1.0}

    def drift(self, gender: str) -> float:
        return self.param(f"theta_{gender}")

    def ar_intercept(self, gender: str) -> float:
        return self.param(f"c_{gender}")

    def ar_coefficient(self, gender: str) -> float:
        return self.param(f"phi_{gender}")


def _stack(rows):
    Ys = np.stack([r.Y for r in rows])
    Xs = np.stack([r.X for r in rows])
    return Ys, Xs


def _check_pd(C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.shape != (4, 4) or not np.allclose(C, C.T, atol=1e-12):
        raise ValidationError("covariance must be symmetric 4x4")
    try:
        np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("covariance is not positive definite") from exc
    return C


def loglik(psi, C, rows, weights=None) -> float:
    """Weighted Gaussian log-likelihood
    -0.5 * sum_t w_t * (4 log 2pi + log|C| + r_t' C^-1 r_t).

    With unit weights this is the unweighted likelihood whose per-row
    constant is 2 log 2pi + 0.5 log|C|.
    """
    C = _check_pd(C)
    psi = np.asarray(psi, dtype=float)
    Ys, Xs = _stack(rows)
    w = np.ones(len(rows)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(rows),):
        raise ValidationError("one weight per observation row required")
    resid = Ys - Xs @ psi
    Cinv = np.linalg.inv(C)
    _, logdet = np.linalg.slogdet(C)
    quad = np.einsum("ti,ij,tj->t", resid, Cinv, resid)
    return float(-0.5 * np.sum(w * (4.0 * LOG_2PI + logdet + quad)))


def _gls_step(Ys, Xs, w, C):
    Cinv = np.linalg.inv(C)
    lhs = np.einsum("t,tki,kl,tlj->ij", w, Xs, Cinv, Xs)
    rhs = np.einsum("t,tki,kl,tl->i", w, Xs, Cinv, Ys)
    return np.linalg.solve(lhs, rhs)


def _cov_step(Ys, Xs, w, psi, *, warn=True):
    resid = Ys - Xs @ psi
    C = np.einsum("t,ti,tj->ij", w, resid, resid) / np.sum(w)
    C = 0.5 * (C + C.T)
    ridged = False
    # Ridge fallback: resurrect a singular iterate instead of crashing.
    if np.linalg.matrix_rank(C, tol=1e-12 * max(np.trace(C), 1e-300)) < 4:
        tr = np.trace(C)
        if tr <= 0:
            raise ValidationError("degenerate residuals: zero covariance iterate")
        C = C + RIDGE_SCALE * tr * np.eye(4)
        ridged = True
        if warn:
            warnings.warn("covariance iterate singular; ridge applied",
                          RuntimeWarning, stacklevel=3)
    return C, ridged


def _pack(psi, C):
    L = np.linalg.cholesky(C)
    tril = L[np.tril_indices(4)]
    return np.concatenate([psi, tril])


def _unpack(theta):
    psi = theta[:6]
    L = np.zeros((4, 4))
    L[np.tril_indices(4)] = theta[6:]
    return psi, L @ L.T


def fit_weighted_mle(rows, weights=None, *, tol=FIT_TOL,
                     max_iter=MAX_FIT_ITER, polish=True) -> TimeSeriesFit:
    """Maximize the weighted likelihood by alternating exact steps.

    Given C, Psi is the weighted GLS solution; given Psi, C is the
    weighted residual second moment.  Iterates from C = I until the
    log-likelihood change drops below `tol` and the iterates settle
    (PARAM_TOL), so the returned pair is a fixed point of both exact
    steps to near machine precision.  A quasi-Newton
    polish over (Psi, chol(C)) then verifies that no improvement beyond
    POLISH_TOL remains; if one is found (flat or miscoverged case) the
    alternation restarts from the polished point so the returned fit is
    always an exact GLS/moment fixed point.
    """
    rows = list(rows)
    w = np.ones(len(rows)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(rows),):
        raise ValidationError("one weight per observation row required")
    if np.any(w < 0) or np.any(w > 1):
        raise ValidationError("weights must lie in [0, 1]")
    if np.sum(w) < MIN_EFFECTIVE_OBS:
        raise ValidationError(
            f"need >= {MIN_EFFECTIVE_OBS} effective observations, "
            f"got sum(w) = {np.sum(w):g}"
        )
    Ys, Xs = _stack(rows)

    def alternate(psi, C):
        current = loglik(psi, C, rows, w)
        ridged_any = False
        for it in range(1, max_iter + 1):
            psi_prev, C_prev = psi, C
            psi = _gls_step(Ys, Xs, w, C)
            C, ridged = _cov_step(Ys, Xs, w, psi)
            ridged_any = ridged_any or ridged
            new = loglik(psi, C, rows, w)
            step = max(np.abs(psi - psi_prev).max(), np.abs(C - C_prev).max())
            scale = 1.0 + max(np.abs(psi).max(), np.abs(C).max())
            if abs(new - current) < tol and step <= PARAM_TOL * scale:
                return psi, C, new, it, ridged_any
            current = new
        raise ConvergenceError(
            f"time-series fit did not converge in {max_iter} iterations",
            last_iterate={"psi": psi, "C": C, "loglik": current},
        )

    psi0 = _gls_step(Ys, Xs, w, np.eye(4))
    C0, _ = _cov_step(Ys, Xs, w, psi0, warn=False)
    psi, C, ll, iters, ridged = alternate(psi0, C0)

    if polish:
        def neg(theta):
            p, cov = _unpack(theta)
            try:
                return -loglik(p, cov, rows, w)
            except (ValidationError, np.linalg.LinAlgError):
                return np.inf

        for _ in range(3):
            res = optimize.minimize(neg, _pack(psi, C), method="L-BFGS-B")
            if res.success and -res.fun > ll + POLISH_TOL:
                warnings.warn(
                    "polish improved the alternating fit; re-alternating",
                    RuntimeWarning, stacklevel=2,
                )
                p2, C2 = _unpack(res.x)
                psi, C, ll, extra, r2 = alternate(p2, C2)
                iters += extra
                ridged = ridged or r2
            else:
                break

    return TimeSeriesFit(psi=psi, C=C, weights=w, loglik=ll,
                         iterations=iters, ridged=ridged)


def psi_covariance(fit: TimeSeriesFit, rows) -> np.ndarray:
    """Asymptotic covariance of Psi: (sum_t w_t X' C^-1 X)^-1."""
    Ys, Xs = _stack(list(rows))
    Cinv = np.linalg.inv(fit.C)
    info = np.einsum("t,tki,kl,tlj->ij", fit.weights, Xs, Cinv, Xs)
    return np.linalg.inv(info)


# ---------------------------------------------------------------------------
# Fit CSV round trip
# ---------------------------------------------------------------------------

def export_fit_csv(path, fit: TimeSeriesFit):
    """Write `param,value` rows: six mean parameters plus the ten distinct
    covariance entries C_ij (upper triangle, 1-based)."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("param", "value"))
        for name, value in zip(PSI_NAMES, fit.psi):
            writer.writerow((name, format(float(value), ".17g")))
        for i in range(4):
            for j in range(i, 4):
                writer.writerow((f"C_{i + 1}{j + 1}",
                                 format(float(fit.C[i, j]), ".17g")))


def import_fit_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back (psi, C) from export_fit_csv output."""
    path = Path(path)
    with path.open(newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or tuple(rows[0]) != ("param", "value"):
        raise ParseError(f"{path}: expected header param,value")
    values = {name: float(value) for name, value in rows[1:] if name}
    try:
        psi = np.array([values[name] for name in PSI_NAMES])
        C = np.zeros((4, 4))
        for i in range(4):
            for j in range(i, 4):
                C[i, j] = C[j, i] = values[f"C_{i + 1}{j + 1}"]
    except KeyError as exc:
        raise ParseError(f"{path}: missing entry {exc}") from exc
    return psi, C
