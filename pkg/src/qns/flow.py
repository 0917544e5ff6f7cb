"""Population gradient-flow dynamics of the Gram matrices.

The weight Gram ``G_W = W W.T`` and the alignment Gram
``G_U = Theta.T U U.T Theta`` each solve a matrix Riccati ODE

    dG/dt = (0.5 / T) (S G + G S - 2 G M G)

whose solution is available in closed form.  Both closed forms share the
algebraic shape ``G(t) = A - B (G0 + C)^{-1} B`` with diagonal A, B, C
satisfying ``B^2 = A C``; for a factored initialization ``G0 = F F.T`` this
collapses (push-through identity) to

    G(t) = sqrt(A) . X (I + X.T X)^{-1} X.T . sqrt(A),   X = C^{-1/2} F,

which is evaluated through an SVD of X.  That route stays numerically stable
for singular initializations and late times, where the naive inverse is
hopeless.  The RK4 integrator is kept fully independent as a numerical
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .linalg import check_symmetric
from .model import PowerLawSpectrum

__all__ = [
    "FlowParams",
    "EffectiveScales",
    "GramTrajectory",
    "gram_rhs_weight",
    "gram_rhs_align",
    "closed_form_align_gram",
    "closed_form_weight_gram",
    "align_curves",
    "weight_risk_curve",
    "integrate_rk4",
    "effective_scales",
    "theory_alignment",
    "theory_risk_curve",
    "theory_limit_risk",
]


class FlowNumericsError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowParams:
    """Spectrum and dimensions of one flow, with the two natural timescales.

    ``t_w = r_s`` governs the weight Gram and ``t_u = sqrt(r_s) ||lam||_2``
    the alignment Gram.  ``lambdas`` may be any positive decreasing vector;
    use :meth:`from_spectrum` for the power-law teacher.
    """

    lambdas: np.ndarray
    d: int
    r_s: int
    t_w: float = field(init=False)
    t_u: float = field(init=False)

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 1 or np.any(lam <= 0):
            raise ValueError("lambdas must be a positive vector")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "t_w", float(self.r_s))
        object.__setattr__(self, "t_u", float(np.sqrt(self.r_s) * np.linalg.norm(lam)))

    @staticmethod
    def from_spectrum(spectrum: PowerLawSpectrum, d: int, r_s: int) -> "FlowParams":
        return FlowParams(lambdas=spectrum.lambdas, d=d, r_s=r_s)

    @property
    def r(self) -> int:
        return self.lambdas.size

    @property
    def frob(self) -> float:
        return float(np.linalg.norm(self.lambdas))


@dataclass(frozen=True)
class EffectiveScales:
    """Effective learning-rate multiplier, timescale, and student width."""

    kappa_eff: float
    t_eff: float
    r_eff: int


@dataclass(frozen=True)
class GramTrajectory:
    ts: np.ndarray       # (n,)
    grams: np.ndarray    # (n, r, r)

    def diag(self) -> np.ndarray:
        return np.einsum("tii->ti", self.grams)


# ---------------------------------------------------------------------------
# Riccati right-hand sides


def gram_rhs_align(g: np.ndarray, params: FlowParams) -> np.ndarray:
    """dG = (0.5/T_U) (L G + G L - 2 G L G) for the r x r alignment Gram."""
    g = check_symmetric(g)
    lam = params.lambdas
    if g.shape[0] != lam.size:
        raise ValueError(f"alignment Gram must be {lam.size} x {lam.size}")
    lg = lam[:, None] * g
    glg = g @ lg
    rhs = lg + lg.T - (glg + glg.T)
    return (0.5 / params.t_u) * rhs


def gram_rhs_weight(g: np.ndarray, params: FlowParams) -> np.ndarray:
    """dG = (0.5/(||L|| sqrt(r_s))) (M G + G M - (2||L||/sqrt(r_s)) G^2).

    ``M`` is the teacher target in its eigenbasis, i.e. ``diag(lambdas, 0)``
    of size d x d.
    """
    g = check_symmetric(g)
    if g.shape[0] != params.d:
        raise ValueError(f"weight Gram must be {params.d} x {params.d}")
    lam_e = np.zeros(params.d)
    lam_e[: params.r] = params.lambdas
    frob = params.frob
    mg = lam_e[:, None] * g
    g2 = g @ g
    g2 = 0.5 * (g2 + g2.T)
    rhs = mg + mg.T - (2.0 * frob / np.sqrt(params.r_s)) * g2
    return (0.5 / (frob * np.sqrt(params.r_s))) * rhs


# ---------------------------------------------------------------------------
# Closed forms


def _factor_psd(g0: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Factor ``g0 = F F.T`` (columns may be fewer than n for low rank)."""
    g0 = check_symmetric(g0)
    w, v = np.linalg.eigh(g0)
    scale = max(abs(w[-1]), 1.0)
    if w[0] < -1e-10 * scale:
        raise ValueError(f"initialization is not PSD: min eigenvalue {w[0]:.3e}")
    w = np.maximum(w, 0.0)
    keep = w > tol * scale
    if not np.any(keep):
        return np.zeros((g0.shape[0], 1))
    return v[:, keep] * np.sqrt(w[keep])


_EXP_CLAMP = 1400.0  # exp(x/2) overflows past ~1418; saturated modes clamp here


def _core_curve(
    f: np.ndarray, rates: np.ndarray, sqrt_a_of_t, t: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared closed-form core.

    Returns ``(sqrt_a, u, h)`` so that ``G(t) = D U diag(h) U.T D`` with
    ``D = diag(sqrt_a)``.  ``rates`` are the per-mode exponential rates
    (lambda/T); ``sqrt_a_of_t`` supplies the diagonal sqrt(A) factor.
    """
    tx = np.minimum(t * rates, _EXP_CLAMP)
    # C^{-1/2} = sqrt(expm1(t x)) for positive rates, sqrt(t/T) handled by caller
    inv_sqrt_c = np.sqrt(np.expm1(tx))
    x = inv_sqrt_c[:, None] * f
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    h = s**2 / (1.0 + s**2)
    return sqrt_a_of_t(t), u, h


def _align_parts(g0, t, params):
    f = _factor_psd(g0)
    rates = params.lambdas / params.t_u

    def sqrt_a(tt):
        return 1.0 / np.sqrt(-np.expm1(-np.minimum(tt * rates, _EXP_CLAMP)))

    return _core_curve(f, rates, sqrt_a, t)


def closed_form_align_gram(g0: np.ndarray, t: float, params: FlowParams) -> np.ndarray:
    """Alignment-Gram flow solution at time ``t`` from PSD init ``g0``.

    Equals the limit of the RK4-integrated ODE; evaluated through the stable
    factored form, so rank-deficient ``g0`` (r_s < r) is fine at any horizon.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    g0 = check_symmetric(g0)
    if g0.shape[0] != params.r:
        raise ValueError(f"alignment Gram must be {params.r} x {params.r}")
    if t == 0.0:
        return g0.copy()
    sa, u, h = _align_parts(g0, t, params)
    m = (sa[:, None] * u) * np.sqrt(h)
    out = m @ m.T
    if not np.all(np.isfinite(out)):
        raise FlowNumericsError(f"alignment closed form overflowed at t={t}")
    return 0.5 * (out + out.T)


def align_curves(g0: np.ndarray, ts: np.ndarray, params: FlowParams) -> np.ndarray:
    """Diagonal of the alignment Gram on a time grid; shape (len(ts), r)."""
    g0 = check_symmetric(g0)
    out = np.empty((len(ts), params.r))
    for i, t in enumerate(np.asarray(ts, dtype=float)):
        if t == 0.0:
            out[i] = np.diag(g0)
            continue
        sa, u, h = _align_parts(g0, t, params)
        rows = (u * np.sqrt(h)) ** 2
        out[i] = sa**2 * rows.sum(axis=1)
    return out


def _weight_diagonals(params: FlowParams, t: float):
    """Rates, sqrt(A), and C^{-1/2} for the weight-Gram closed form.

    The target has d - r zero modes; their ``x/(1-exp(-t x/T))`` limits are
    ``T/t``, evaluated analytically instead of by epsilon-perturbation.
    """
    d, t_w = params.d, params.t_w
    lam_tilde = np.zeros(d)
    lam_tilde[: params.r] = np.sqrt(params.r_s) / params.frob * params.lambdas
    rates = lam_tilde / t_w
    tx = np.minimum(t * rates, _EXP_CLAMP)
    pos = lam_tilde > 0
    sqrt_a = np.empty(d)
    inv_sqrt_c = np.empty(d)
    sqrt_a[pos] = np.sqrt(lam_tilde[pos] / (-np.expm1(-tx[pos])))
    inv_sqrt_c[pos] = np.sqrt(np.expm1(tx[pos]) / lam_tilde[pos])
    sqrt_a[~pos] = math.sqrt(t_w / t)
    inv_sqrt_c[~pos] = math.sqrt(t / t_w)
    return sqrt_a, inv_sqrt_c


def closed_form_weight_gram(
    g0: np.ndarray | None,
    t: float,
    params: FlowParams,
    w0: np.ndarray | None = None,
) -> np.ndarray:
    """Weight-Gram flow solution at time ``t`` (teacher eigenbasis).

    Supply either the full d x d PSD ``g0`` or, preferably, the d x r_s
    factor ``w0`` with ``g0 = w0 w0.T``; the factored route costs
    O(d r_s^2).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if w0 is None:
        if g0 is None:
            raise ValueError("need g0 or w0")
        f = _factor_psd(g0)
    else:
        f = np.asarray(w0, dtype=float)
    if f.shape[0] != params.d:
        raise ValueError(f"weight factor must have {params.d} rows")
    if t == 0.0:
        return f @ f.T if g0 is None else check_symmetric(g0).copy()
    sqrt_a, inv_sqrt_c = _weight_diagonals(params, t)
    x = inv_sqrt_c[:, None] * f
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    h = s**2 / (1.0 + s**2)
    m = (sqrt_a[:, None] * u) * np.sqrt(h)
    out = m @ m.T
    if not np.all(np.isfinite(out)):
        raise FlowNumericsError(f"weight closed form overflowed at t={t}")
    return 0.5 * (out + out.T)


def weight_gram_diag(
    w0: np.ndarray, ts: np.ndarray, params: FlowParams, idx: np.ndarray | list[int]
) -> np.ndarray:
    """Selected diagonal entries of the weight-Gram flow; shape (len(ts), len(idx)).

    Costs O(d r_s^2) per grid point like the risk curve; used to attribute
    risk decrements to individual teacher directions.
    """
    w0 = np.asarray(w0, dtype=float)
    idx = np.asarray(idx, dtype=int)
    out = np.empty((len(ts), len(idx)))
    for i, t in enumerate(np.asarray(ts, dtype=float)):
        if t == 0.0:
            out[i] = np.sum(w0[idx] ** 2, axis=1)
            continue
        sqrt_a, inv_sqrt_c = _weight_diagonals(params, t)
        x = inv_sqrt_c[:, None] * w0
        u, s, _ = np.linalg.svd(x, full_matrices=False)
        h = s**2 / (1.0 + s**2)
        rows = (u[idx] * np.sqrt(h)) ** 2
        out[i] = sqrt_a[idx] ** 2 * rows.sum(axis=1)
    return out


def weight_risk_curve(w0: np.ndarray, ts: np.ndarray, params: FlowParams) -> np.ndarray:
    """Normalized population risk along the flow from ``W(0) = w0``.

    ``R(t) = || diag(lam,0) - (||lam||/sqrt(r_s)) G_W(t) ||_F^2 / ||lam||^2``
    evaluated in O(d r_s^2) per grid point via the factored closed form.
    """
    w0 = np.asarray(w0, dtype=float)
    lam_e = np.zeros(params.d)
    lam_e[: params.r] = params.lambdas
    frob_sq = params.frob**2
    c0 = params.frob / np.sqrt(params.r_s)
    out = np.empty(len(ts))
    for i, t in enumerate(np.asarray(ts, dtype=float)):
        if t == 0.0:
            gram = w0.T @ w0
            tw = lam_e[:, None] * w0
            cross = float(np.sum(w0 * tw))
            gw_sq = float(np.sum(gram**2))
        else:
            sqrt_a, inv_sqrt_c = _weight_diagonals(params, t)
            x = inv_sqrt_c[:, None] * w0
            u, s, _ = np.linalg.svd(x, full_matrices=False)
            h = s**2 / (1.0 + s**2)
            du = sqrt_a[:, None] * u
            # G_W = DU diag(h) DU.T ; only traces are needed
            k = du.T @ du
            hk = h[:, None] * k
            gw_sq = float(np.sum(hk * hk.T))
            rows = (du * np.sqrt(h)) ** 2
            cross = float(lam_e @ rows.sum(axis=1))
        r = 1.0 - 2.0 * (c0 / frob_sq) * cross + (c0**2 / frob_sq) * gw_sq
        out[i] = max(r, 0.0)
    return out


# ---------------------------------------------------------------------------
# RK4 oracle


def integrate_rk4(
    rhs,
    g0: np.ndarray,
    t_end: float,
    dt: float | None = None,
    record_every: int = 1,
    params: FlowParams | None = None,
) -> GramTrajectory:
    """Classical RK4 on ``dG/dt = rhs(G)``, recording every k-th step.

    The default step is ``min(0.01, 0.1 * T_U / lambda_1)`` when ``params``
    is given (stability for the stiffest mode).  Aborts with the step index
    on non-finite state.
    """
    if dt is None:
        if params is None:
            raise ValueError("need dt or params to choose a step size")
        dt = min(0.01, 0.1 * params.t_u / float(params.lambdas[0]))
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = check_symmetric(g0).copy()
    n_steps = max(int(round(t_end / dt)), 1)
    h = t_end / n_steps  # uniform step landing exactly on t_end
    ts = [0.0]
    grams = [g.copy()]
    for step in range(1, n_steps + 1):
        k1 = rhs(g)
        k2 = rhs(g + 0.5 * h * k1)
        k3 = rhs(g + 0.5 * h * k2)
        k4 = rhs(g + h * k3)
        g = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        g = 0.5 * (g + g.T)
        if not np.all(np.isfinite(g)):
            raise FlowNumericsError(f"RK4 state became non-finite at step {step}")
        if step % record_every == 0 or step == n_steps:
            ts.append(step * h)
            grams.append(g.copy())
    return GramTrajectory(ts=np.array(ts), grams=np.array(grams))


# ---------------------------------------------------------------------------
# Theory curves


def effective_scales(d: int, r_s: int, r: int, alpha: float) -> EffectiveScales:
    """Effective width/timescale of the staircase limit.

    kappa_eff = r^alpha below the 1/2 boundary and 1 above it;
    T_eff = sqrt(r_s) ||lam||_F log(d/r_s);
    r_eff = floor(r_s (1 - log^{-1/8} d)) ^ r below, r_s above.
    """
    if alpha == 0.5:
        raise ValueError("alpha = 0.5 sits on the regime boundary; not supported")
    if r_s < 1 or r < 1 or d < 2:
        raise ValueError("need d >= 2, r >= 1, r_s >= 1")
    spectrum = PowerLawSpectrum(r=r, alpha=alpha)
    t_eff = float(np.sqrt(r_s) * spectrum.frob * np.log(d / r_s))
    if alpha < 0.5:
        kappa = float(r**alpha)
        r_eff = int(min(math.floor(r_s * (1.0 - math.log(d) ** (-1.0 / 8.0))), r))
        r_eff = max(r_eff, 1)
    else:
        kappa = 1.0
        r_eff = r_s
    return EffectiveScales(kappa_eff=kappa, t_eff=t_eff, r_eff=r_eff)


def theory_alignment(
    t: float, j: int, scales: EffectiveScales, spectrum: PowerLawSpectrum
) -> float:
    """Limit alignment of direction j at rescaled time t: a 0/1 step at 1/lambda_j.

    ``t`` is measured so the transition of direction j sits at
    ``1/(lambda_j kappa_eff)``; exactly at the transition the post-transition
    value is returned.
    """
    if not 1 <= j <= min(scales.r_eff, spectrum.r):
        raise ValueError(f"direction j={j} beyond effective width {scales.r_eff}")
    lam_j = spectrum.lambdas[j - 1]
    return 1.0 if t * scales.kappa_eff >= 1.0 / lam_j else 0.0


def theory_risk_curve(
    t: float, scales: EffectiveScales, spectrum: PowerLawSpectrum
) -> float:
    """Limit staircase risk: 1 - sum of lambda_j^2 already past transition."""
    k = min(scales.r_eff, spectrum.r)
    lam = spectrum.lambdas[:k]
    learned = t * scales.kappa_eff >= 1.0 / lam
    return float(1.0 - np.sum(lam[learned] ** 2) / spectrum.frob_sq)


def theory_limit_risk(
    t: float,
    alpha: float,
    phi_or_rs: float,
    regime: str,
    c: float = 1.0,
    r: int | None = None,
) -> float:
    """Asymptotic risk limits of the two regimes.

    heavy (alpha < 0.5): ``(1 - c t^{(1-2a)/a})_+ v (1 - phi^{1-2a})_+`` with
    the undetermined constant ``c`` exposed as a fit parameter (alpha = 0
    degenerates to ``1 - min(c t, phi, 1)``).

    light (alpha > 0.5): the exact partial-sum limit
    ``1 - sum_{j <= t^{1/a} ^ r_s} j^{-2a} / Z`` where ``Z`` sums j^{-2a} to
    ``r`` (infinity when ``r`` is None, via the zeta function).
    """
    if regime not in ("heavy", "light"):
        raise ValueError("regime must be 'heavy' or 'light'")
    if t < 0:
        raise ValueError("t must be >= 0")
    if regime == "heavy":
        if not 0 <= alpha < 0.5:
            raise ValueError("heavy regime needs alpha in [0, 0.5)")
        phi = float(phi_or_rs)
        plateau = max(1.0 - phi ** (1.0 - 2.0 * alpha), 0.0)
        if alpha == 0.0:
            return 1.0 - min(c * t, phi, 1.0)
        moving = max(1.0 - c * t ** ((1.0 - 2.0 * alpha) / alpha), 0.0)
        return max(moving, plateau)
    if alpha <= 0.5:
        raise ValueError("light regime needs alpha > 0.5")
    r_s = int(phi_or_rs)
    if r is None:
        from scipy.special import zeta

        z = float(zeta(2.0 * alpha, 1.0))
    else:
        z = float(np.sum(np.arange(1, r + 1, dtype=float) ** (-2.0 * alpha)))
    k = min(int(math.floor(t ** (1.0 / alpha))), r_s)
    if r is not None:
        k = min(k, r)
    if k < 1:
        return 1.0
    j = np.arange(1, k + 1, dtype=float)
    return float(1.0 - np.sum(j ** (-2.0 * alpha)) / z)
