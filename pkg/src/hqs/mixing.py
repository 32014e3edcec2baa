"""Contraction η of bath windows, local-rapid-mixing fits and bound helpers.

For a window ``T_[t, t']`` of the bath dynamics and a region ``A`` of the bath,
η is the largest operator-norm distance between ``T*(O)`` and its completely
depolarized projection over operators ``O`` on ``A`` with ``‖O‖ ≤ 1``.  The
supremum is not computed exactly; :func:`eta` returns a certified interval.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .circuits import PreparationPlan
from .core import PAULI_MATRICES, DenseOperator, QubitId, embed, kron_all
from .engine import pullback_window

FLOOR = 1e-14


def _pauli_basis(n: int) -> list[np.ndarray]:
    """Frobenius-orthonormal Pauli basis (identity first), little-endian."""
    d = 1 << n
    return [kron_all([PAULI_MATRICES[c] for c in p]) / math.sqrt(d)
            for p in itertools.product("IXYZ", repeat=n)]


def _labels(n: int) -> list[str]:
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n)]


@dataclass(frozen=True, eq=False)
class BathSuperoperator:
    """Matrix of ``O -> T*_[t, t'](O)`` from operators on ``ball`` to operators on ``region``.

    ``matrix[i, j] = Tr[P̂_i T*(P̂_j)]`` in normalized Pauli bases (identity
    first) of the region (rows) and the ball (columns).
    """

    matrix: np.ndarray
    window: tuple[int, int]
    ball: tuple[QubitId, ...]
    region: tuple[QubitId, ...]

    @property
    def din(self) -> int:
        return 1 << len(self.ball)

    @property
    def dout(self) -> int:
        return 1 << len(self.region)

    def apply(self, op: np.ndarray) -> np.ndarray:
        """Image of a ``din x din`` matrix as a ``dout x dout`` matrix on the region."""
        bin_, bout = _pauli_basis(len(self.ball)), _pauli_basis(len(self.region))
        c = np.array([np.vdot(b, op) for b in bin_])
        y = self.matrix @ c
        return sum(yi * b for yi, b in zip(y, bout))

    def is_unital(self, atol: float = 1e-10) -> bool:
        e = np.zeros(self.matrix.shape[0])
        e[0] = math.sqrt(self.dout / self.din)  # I_A maps to I_R
        return bool(np.abs(self.matrix[:, 0] - e).max() <= atol)


def identity_superoperator(ball: Sequence[QubitId], window=(1, 0)) -> BathSuperoperator:
    n = len(ball)
    return BathSuperoperator(np.eye(4 ** n, dtype=complex), window, tuple(ball), tuple(ball))


def bath_superoperator(plan: PreparationPlan, t: int, t_prime: int, ball: Sequence[QubitId],
                       region: Sequence[QubitId] | None = None,
                       ceiling: int | None = None) -> BathSuperoperator:
    """Superoperator of the bath-dynamics dual over rows ``t..t_prime``.

    Args:
        plan: The preparation plan.
        t, t_prime: Window; ``t_prime = t - 1`` is the empty window.
        ball: Bath qubits the input operators live on.
        region: Bath qubits allowed to carry the output (defaults to ``ball``).
            A column whose image has weight outside the region raises
            :class:`ValueError` instead of being truncated.
    """
    ball = tuple(ball)
    region = ball if region is None else tuple(region)
    if not set(ball) <= set(plan.bath) or not set(ball) <= set(region) or not set(region) <= set(plan.bath):
        raise ValueError("ball must lie inside the region, which must lie inside the bath")
    if not (1 <= t <= t_prime + 1 and t_prime <= plan.ly):
        raise ValueError(f"window [{t}, {t_prime}] outside [1, {plan.ly}]")
    if t_prime < t:
        m = np.zeros((4 ** len(region), 4 ** len(ball)), dtype=complex)
        in_basis = _pauli_basis(len(ball))
        out_basis = _pauli_basis(len(region))
        for j, b in enumerate(in_basis):
            img = embed(DenseOperator(ball, b), region).matrix
            m[:, j] = [np.vdot(o, img) for o in out_basis]
        return BathSuperoperator(m, (t, t_prime), ball, region)
    in_basis = _pauli_basis(len(ball))
    out_basis = _pauli_basis(len(region))
    m = np.zeros((len(out_basis), len(in_basis)), dtype=complex)
    for j, b in enumerate(in_basis):
        reg = pullback_window(plan, DenseOperator(ball, b), t, t_prime, ceiling)
        img = reg.to_operator()
        outside = [q for q in img.support if q not in region]
        if outside:
            img = _strip_identity(img, outside)
        img = embed(img, region).matrix
        m[:, j] = [np.vdot(o, img) for o in out_basis]
    return BathSuperoperator(m, (t, t_prime), ball, region)


def _strip_identity(op: DenseOperator, qubits: Sequence[QubitId]) -> DenseOperator:
    from .core import partial_trace

    keep = [q for q in op.support if q not in qubits]
    red = partial_trace(op, keep).scale(1 / (1 << len(qubits)))
    if np.abs(embed(red, op.support).matrix - op.matrix).max() > 1e-10:
        raise ValueError(f"image leaves the region (acts on {[str(q) for q in qubits]}); "
                         "use a larger region (e.g. the full bath)")
    return red


# --------------------------------------------------------------------------
# η interval


@dataclass
class EtaInterval:
    lower: float
    upper: float
    lower_hermitian: float = 0.0
    lower_general: float = 0.0
    witness: str = ""


def _traceless_block(sop: BathSuperoperator) -> np.ndarray:
    return sop.matrix[1:, 1:]


def _opnorm(m: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    u, s, vh = np.linalg.svd(m)
    return float(s[0]), u[:, 0], vh[0].conj()


def eta(sop: BathSuperoperator, restarts: int = 64, iterations: int = 200, step: float = 0.1,
        seed: int = 0) -> EtaInterval:
    """Certified interval [lower, upper] for η of a window.

    ``lower`` maximizes ‖(id − Φ)T*(O)‖ over the Pauli basis and over projected
    gradient ascent with unit-norm renormalization (Hermitian and general
    starts, reported separately); ``upper`` is ``√d`` times the spectral norm of
    the traceless block, capped at 2.
    """
    k, r = len(sop.ball), len(sop.region)
    din = 1 << k
    block = _traceless_block(sop)
    upper = min(2.0, math.sqrt(din) * (float(np.linalg.norm(block, 2)) if block.size else 0.0))
    bin_, bout = _pauli_basis(k), _pauli_basis(r)
    bin_arr = np.array(bin_)  # (4^k, din, din)
    bout_arr = np.array(bout)

    def image(o: np.ndarray) -> np.ndarray:
        c = np.einsum("kij,ij->k", bin_arr.conj(), o)
        y = block @ c[1:]
        return np.einsum("k,kij->ij", y, bout_arr[1:])

    def adjoint(y_op: np.ndarray) -> np.ndarray:
        y = np.einsum("kij,ij->k", bout_arr[1:].conj(), y_op)
        c = block.conj().T @ y
        return np.einsum("k,kij->ij", c, bin_arr[1:])

    # Pauli witnesses (Paulis have unit operator norm)
    labels = _labels(k)
    best_pauli, witness = 0.0, labels[0]
    for j in range(1, len(bin_)):
        v = _opnorm(image(bin_[j] * math.sqrt(din)))[0]
        if v > best_pauli:
            best_pauli, witness = v, labels[j]
    rng = np.random.default_rng(seed)
    best = {True: best_pauli, False: best_pauli}
    if upper > 1e-12 and restarts > 0:
        for trial in range(restarts):
            herm = trial % 2 == 0
            o = rng.normal(size=(din, din)) + 1j * rng.normal(size=(din, din))
            if herm:
                o = o + o.conj().T
            o /= _opnorm(o)[0]
            for _ in range(iterations):
                val, u, v = _opnorm(image(o))
                best[herm] = max(best[herm], val)
                g = adjoint(np.outer(u, v.conj()))
                if herm:
                    g = (g + g.conj().T) / 2
                o = o + step * g
                o /= _opnorm(o)[0]
            best[herm] = max(best[herm], _opnorm(image(o))[0])
    lower = max(best.values())
    upper = max(upper, lower)  # guards rounding; the chain makes lower <= upper exact
    return EtaInterval(lower, upper, best[True], best[False], witness)


def segment(plan: PreparationPlan, start: int, length: int) -> tuple[QubitId, ...]:
    """Contiguous run of ``length`` bath qubits starting at column ``start``."""
    b = plan.bath
    if length < 1 or start < 0 or start + length > len(b):
        raise ValueError("segment outside the bath")
    return tuple(b[start:start + length])


# --------------------------------------------------------------------------
# Fitting


@dataclass
class MixingReport:
    """η values over (ℓ, elapsed) with the fitted local-rapid-mixing constants."""

    eta_values: dict
    c: float
    alpha: float
    gamma: float
    delta: float
    ell0: int
    classified: bool
    exact_mixing: bool = False
    gamma_unconstrained: bool = False
    residuals: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"c = {self.c!r}", f"alpha = {self.alpha!r}", f"gamma = {self.gamma!r}",
                 f"delta = {self.delta!r}", f"ell0 = {self.ell0}", f"classified = {self.classified}",
                 f"exact_mixing = {self.exact_mixing}", f"gamma_unconstrained = {self.gamma_unconstrained}",
                 "", "ell,elapsed,lower,upper"]
        for (ell, el), v in sorted(self.eta_values.items()):
            lo, up = (v.lower, v.upper) if isinstance(v, EtaInterval) else (v, v)
            lines.append(f"{ell},{el},{lo!r},{up!r}")
        return "\n".join(lines) + "\n"


def _value(v) -> float:
    return v.upper if isinstance(v, EtaInterval) else float(v)


def fit_mixing(eta_series: Mapping[tuple[int, int], float], tol: float = 0.1) -> MixingReport:
    """Fit η ≈ c ℓ^α e^{−γ t} + Δ.

    Δ̂ starts as the median of the last quartile (in elapsed time) of the
    series; c, α, γ come from a log-linear least-squares fit on points above
    2Δ̂, refined jointly with Δ by a bounded nonlinear least-squares fit.
    """
    pts = sorted((int(ell), int(t), _value(v)) for (ell, t), v in eta_series.items())
    if not pts:
        raise ValueError("empty series")
    ells = sorted({p[0] for p in pts})
    ell0 = max(ells)
    for ell in ells:
        if len({p[1] for p in pts if p[0] == ell}) < 3:
            raise ValueError("need at least 3 distinct elapsed times per length scale")
    eta_arr = np.array([p[2] for p in pts])
    if np.all(np.abs(eta_arr) <= FLOOR):
        return MixingReport(dict(eta_series), 0.0, 0.0, math.inf, 0.0, ell0, True, exact_mixing=True)
    times = np.array([p[1] for p in pts])
    cutoff = np.quantile(np.unique(times), 0.75)
    delta = float(np.median(eta_arr[times >= cutoff]))
    ell_arr = np.array([p[0] for p in pts], dtype=float)
    use = eta_arr > 2 * delta
    use &= eta_arr > FLOOR
    if use.sum() < 2:
        # pure plateau: nothing decays above the noise floor
        classified = bool(np.all(eta_arr <= delta * (1 + tol) + 1e-12))
        return MixingReport(dict(eta_series), 0.0, 0.0, 0.0, delta, ell0, classified,
                            gamma_unconstrained=True)
    y = np.log(np.maximum(eta_arr[use] - delta, FLOOR))
    cols = [np.ones(use.sum()), -times[use].astype(float)]
    vary_alpha = len(set(ell_arr[use])) > 1
    if vary_alpha:
        cols.insert(1, np.log(ell_arr[use]))
    a = np.stack(cols, axis=1)
    sol, *_ = np.linalg.lstsq(a, y, rcond=None)
    logc = sol[0]
    alpha = sol[1] if vary_alpha else 0.0
    gamma = sol[-1]

    def model(theta, ell, t):
        lc, al, ga, de = theta
        return np.exp(lc) * ell ** al * np.exp(-ga * t) + de

    def resid(theta):
        return np.log(model(theta, ell_arr, times) + FLOOR) - np.log(eta_arr + FLOOR)

    lb = np.array([-np.inf, -np.inf if vary_alpha else -1e-12, -np.inf, 0.0])
    ub = np.array([np.inf, np.inf if vary_alpha else 1e-12, np.inf, max(eta_arr.max(), FLOOR)])
    res = None
    for d0 in (min(delta, eta_arr.min()), 0.0):
        x0 = np.clip(np.array([logc, alpha, gamma, d0]), lb + 1e-15, ub - 1e-15)
        cand = least_squares(resid, x0, bounds=(lb, ub), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if res is None or cand.cost < res.cost:
            res = cand
    logc, alpha, gamma, delta = res.x
    c = float(np.exp(logc))
    pred = model(res.x, ell_arr, times)
    classified = bool(np.all(eta_arr <= pred * (1 + tol) + 1e-12)) and gamma > 0 and c > 0
    return MixingReport(dict(eta_series), c, float(alpha), float(gamma), float(delta), ell0, classified,
                        residuals=list(map(float, resid(res.x))))


def predicted_bound(epsilon: float, ell_y: int, delta: float, C: float = 1.0, op_norm: float = 1.0) -> float:
    """C (ε log²(1/ε) + ℓ_y Δ) ‖O‖; ε = 0 gives the Δ term alone."""
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    main = 0.0 if epsilon == 0 else epsilon * math.log(1 / epsilon) ** 2
    return C * (main + ell_y * delta) * op_norm


def eta_series(plan: PreparationPlan, ells: Sequence[int], windows: Sequence[tuple[int, int]],
               start: int = 0, full_region: bool = True, **eta_kw) -> dict:
    """η intervals for each segment length ℓ and window ``(t, t')``; keys (ℓ, t'−t+1)."""
    out = {}
    for ell in ells:
        ball = segment(plan, start, ell)
        region = plan.bath if full_region else ball
        for t, tp in windows:
            sop = bath_superoperator(plan, t, tp, ball, region)
            out[(ell, tp - t + 1)] = eta(sop, **eta_kw)
    return out
