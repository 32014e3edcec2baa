"""Invariant batteries behind ``hqs verify``.

Each battery runs with fixed seeds and returns a list of :class:`Check`
records; a battery passes when every record does.  The same functions are
used by the test-suite so that the CLI and the tests cannot drift apart.
"""

from __future__ import annotations

import itertools
import math
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field

import numpy as np

from .circuits import (
    Gate,
    GateNoise,
    MeasNoise,
    NoiseSpec,
    StateNoise,
    apply_noise,
    noisy_gate,
    noisy_pauli,
    noisy_state,
    surface_code_plan,
    surface_code_transition,
    trivial_plan,
    trivial_state_transition,
)
from .core import (
    DenseOperator,
    PauliString,
    QuantumChannel,
    QubitId,
    append_state_channel,
    apply_channel,
    apply_dual,
    bath,
    depolarizing_projector,
    dual_channel,
    embed,
    kron_all,
    operator_norm,
    partial_trace,
    random_channel,
    random_density,
    random_operator,
    random_unitary,
    system,
    trace_norm,
    trace_out_channel,
    unitary_channel,
)
from .engine import heisenberg_pullback, run_forward, trim_identity
from .live import LiveRegister
from .locality import (
    DeviceLayout,
    build_interaction_graph,
    graph_distance,
    grow_support,
    transition_graph,
)

SUITES = ("duality", "locality", "lemmas", "stabilizer", "mixing")


@dataclass
class Check:
    name: str
    passed: bool
    value: float = 0.0
    tolerance: float = 0.0
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        """Machine-readable: one ``key=value`` header then one CSV line per check."""
        lines = [f"suite={self.suite} passed={self.passed} checks={len(self.checks)} seconds={self.seconds:.2f}",
                 "name,passed,value,tolerance,detail"]
        for c in self.checks:
            lines.append(f"{c.name},{c.passed},{c.value:.3e},{c.tolerance:.1e},{c.detail}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def _q(n: int, reg: Callable = bath) -> tuple[QubitId, ...]:
    return tuple(reg(i) for i in range(n))


# --------------------------------------------------------------------------
# Duality


def _duality_gap(ch, rho: DenseOperator, obs: DenseOperator) -> float:
    lhs = np.trace(embed(apply_channel(ch, rho), obs.support).matrix @ obs.matrix)
    pulled = apply_dual(dual_channel(ch), obs)
    rhs = np.trace(rho.matrix @ embed(pulled, rho.support).matrix)
    return abs(lhs - rhs)


def _channel_families(rng: np.random.Generator) -> dict[str, Callable[[], tuple]]:
    """Family name -> factory of (channel, ρ on the domain, O on the codomain)."""

    def rand_ch():
        n = int(rng.integers(1, 3))
        m = int(rng.integers(1, 3))
        dom, cod = _q(n), _q(m, lambda i: system(1, i))
        ch = random_channel(rng, dom, cod, rank=int(rng.integers(1, 4)))
        return ch, random_density(rng, dom), random_operator(rng, cod)

    def unitary():
        n = int(rng.integers(1, 4))
        dom = _q(n)
        return unitary_channel(random_unitary(rng, n), dom), random_density(rng, dom), random_operator(rng, dom)

    def append():
        dom = _q(int(rng.integers(1, 3)))
        new = _q(int(rng.integers(1, 3)), lambda i: system(1, i))
        ch = append_state_channel(random_density(rng, new), dom)
        return ch, random_density(rng, dom), random_operator(rng, ch.codomain)

    def trace_out():
        dom = _q(3)
        k = int(rng.integers(1, 3))
        ch = trace_out_channel(dom, dom[-k:])
        return ch, random_density(rng, dom), random_operator(rng, ch.codomain)

    def depol():
        dom = _q(int(rng.integers(1, 3)))
        return depolarizing_projector(dom), random_density(rng, dom), random_operator(rng, dom)

    return {"random-channel": rand_ch, "unitary": unitary, "append-state": append,
            "trace-out": trace_out, "depolarizing": depol}


def _transition_duality(rng, corpus: list, trials: int) -> float:
    """Forward and backward engine passes against each other, round-robin over ``corpus``."""
    worst = 0.0
    for i in range(trials):
        tm = corpus[i % len(corpus)]
        rho = random_density(rng, tm.bath)
        cod = tm.codomain
        k = int(rng.integers(1, len(cod) + 1))
        obs = random_operator(rng, tuple(cod[j] for j in sorted(rng.choice(len(cod), k, replace=False))))
        reg = LiveRegister.from_operator(rho)
        run_forward(reg, tm, keep=obs.support)
        out = reg.to_operator()
        lhs = np.trace(out.matrix @ embed(obs, out.support).matrix)
        pulled = heisenberg_pullback(obs, tm, trim=False)
        rhs = np.trace(rho.matrix @ embed(pulled, tm.bath).matrix)
        worst = max(worst, abs(lhs - rhs))
    return worst


def verify_duality(trials: int = 100, seed: int = 0, tol: float = 1e-10) -> SuiteReport:
    """|Tr[T(ρ)O] − Tr[ρ T*(O)]| over random triples for every channel family."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rep = SuiteReport("duality")
    for name, make in _channel_families(rng).items():
        worst = max(_duality_gap(*make()) for _ in range(trials))
        rep.checks.append(Check(f"duality[{name}]", worst <= tol, worst, tol))
    # noisy gates, each family, through the engine's own superoperators
    for fam in GateNoise:
        worst = 0.0
        for k in range(trials):
            q = _q(2)
            g = noisy_gate(Gate(("CNOT", "SWAP")[k % 2], q), NoiseSpec(0.05, fam, seed=seed), (k,))
            ch = QuantumChannel(g.channel_kraus(), q, q)
            worst = max(worst, _duality_gap(ch, random_density(rng, q), random_operator(rng, q)))
        rep.checks.append(Check(f"duality[noisy-gate:{fam.value}]", worst <= tol, worst, tol))
    # whole transitions, ideal and noisy
    corpus = [surface_code_transition(3, t, 4) for t in range(1, 5)]
    corpus += [apply_noise(surface_code_transition(3, 3, 4), NoiseSpec(0.05, seed=seed)),
               trivial_state_transition(3, 1),
               trivial_state_transition(3, 1, swap=False, bath_unitary=random_unitary(rng, 2))]
    worst = _transition_duality(rng, corpus, trials)
    rep.checks.append(Check("duality[transition-map]", worst <= tol, worst, tol, f"{len(corpus)} maps"))
    rep.seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# Locality


def numeric_support(op: DenseOperator, atol: float = 1e-10) -> frozenset:
    return frozenset(trim_identity(op, atol).support)


def pullback_corpus(seed: int = 0) -> list[tuple[str, object, str, DenseOperator]]:
    """(label, transition, device layout, operator) cases for support containment."""
    rng = np.random.default_rng(seed)
    cases = []
    lx, ly = 3, 4
    tms = [(f"surface-code t={t}", surface_code_transition(lx, t, ly), DeviceLayout.SURFACE_CODE)
           for t in range(1, ly + 1)]
    u = random_unitary(rng, 2)
    tms += [(f"trivial t={t}", trivial_state_transition(lx, t), DeviceLayout.LADDER) for t in (1, 2)]
    tms += [("trivial no-swap", trivial_state_transition(lx, 2, swap=False, bath_unitary=u), DeviceLayout.LADDER)]
    for label, tm, layout in tms:
        sites = list(tm.codomain)
        for q in sites:
            for c in "XZ":
                cases.append((label, tm, layout, PauliString({q: c}).to_operator()))
        for a, b in itertools.pairwise(sites):
            cases.append((label, tm, layout, random_operator(rng, (a, b), hermitian=True)))
    return cases


def support_containment(seed: int = 0) -> tuple[int, list[str], list[str]]:
    """Check supp T*(O) ⊆ B_D(supp O) in the interaction graph and in the gate graph.

    Returns (number of cases, violations of the interaction-graph ball,
    violations of the gate-graph light cone).
    """
    bad_ball, bad_cone = [], []
    graphs = {}
    cases = pullback_corpus(seed)
    for label, tm, layout, op in cases:
        key = (tm.row, layout, label)
        if key not in graphs:
            g = build_interaction_graph(tm.row, len(tm.bath), 4, layout)
            graphs[key] = (g, transition_graph(tm))
        g, cone = graphs[key]
        sup = numeric_support(heisenberg_pullback(op, tm, trim=False))
        D = tm.depth
        if not sup <= grow_support(op.support, D, g):
            bad_ball.append(f"{label}:{[str(q) for q in op.support]}")
        if not sup <= grow_support(op.support, D, cone):
            bad_cone.append(f"{label}:{[str(q) for q in op.support]}")
    return len(cases), bad_ball, bad_cone


def verify_locality(seed: int = 0) -> SuiteReport:
    t0 = time.perf_counter()
    rep = SuiteReport("locality")
    g = build_interaction_graph(3, 3, 4, DeviceLayout.SURFACE_CODE)
    verts = sorted(g.vertices)
    sym = all(graph_distance(g, u, v) == graph_distance(g, v, u) for u in verts for v in verts)
    rep.checks.append(Check("distance-symmetric", sym))
    tri = all(graph_distance(g, u, w) <= graph_distance(g, u, v) + graph_distance(g, v, w)
              for u, v, w in itertools.product(verts[::3], verts[::2], verts[::3]))
    rep.checks.append(Check("triangle-inequality", tri))
    edges_ok = all(graph_distance(g, *tuple(e)) == 1 for e in g.edges)
    rep.checks.append(Check("edges-at-distance-1", edges_ok))
    n, bad_ball, bad_cone = support_containment(seed)
    rep.checks.append(Check("support-in-interaction-ball", not bad_ball, len(bad_ball), 0,
                            f"{n} pullbacks"))
    rep.checks.append(Check("support-in-gate-light-cone", not bad_cone, len(bad_cone), 0,
                            f"{n} pullbacks"))
    rep.seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# Lemmas


def _perturb(rng, rho: np.ndarray, eps: float) -> np.ndarray:
    """ρ̃ = (1 − s)ρ + sσ with s chosen so that ‖ρ − ρ̃‖₁ ≤ ε."""
    sigma = random_density(rng, (bath(0),)).matrix
    dist = trace_norm(rho - sigma)
    s = min(1.0, eps / dist) * rng.uniform(0.5, 1.0) if dist > 0 else 0.0
    return (1 - s) * rho + s * sigma


def lemma_product_states(trials: int = 1000, seed: int = 1) -> float:
    """max over trials of |Tr[(ρ − ρ̃)O]| − ε‖O‖|supp O|; must be ≤ 1e-10."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        n = int(rng.integers(1, 5))
        eps = 10 ** rng.uniform(-4, 0)
        qs = _q(n)
        rs = [random_density(rng, (q,)).matrix for q in qs]
        rt = [_perturb(rng, r, eps) for r in rs]
        k = int(rng.integers(1, n + 1))
        sup = tuple(sorted(rng.choice(n, size=k, replace=False)))
        op = embed(random_operator(rng, tuple(qs[i] for i in sup)), qs)
        diff = kron_all(rs[::-1]) - kron_all(rt[::-1])
        lhs = abs(np.trace(diff @ op.matrix))
        worst = max(worst, lhs - eps * operator_norm(op) * k)
    return float(worst)


def lemma_partial_products(trials: int = 1000, seed: int = 2) -> float:
    """max of ‖Tr_X[(ω − ω̃)O]‖ − ε‖O‖|supp_X O|; must be ≤ 1e-10."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        ny, nx = int(rng.integers(1, 3)), int(rng.integers(1, 4))
        eps = 10 ** rng.uniform(-4, 0)
        Y = _q(ny)
        X = _q(nx, lambda i: system(1, i))
        ws = [random_density(rng, (q,)).matrix for q in X]
        wt = [_perturb(rng, w, eps) for w in ws]
        k = int(rng.integers(1, nx + 1))
        xs = tuple(X[i] for i in sorted(rng.choice(nx, size=k, replace=False)))
        op = embed(random_operator(rng, Y + xs), Y + X)
        diff = DenseOperator(X, kron_all(ws[::-1]) - kron_all(wt[::-1]))
        prod = embed(diff, Y + X) @ op
        red = partial_trace(prod, Y)
        worst = max(worst, operator_norm(red) - eps * operator_norm(op) * k)
    return float(worst)


def lemma_measurement(seed: int = 3) -> float:
    """max of ‖O − Õ‖ − |supp O|ε over Pauli strings, ε grid and both families."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for fam in MeasNoise:
        for eps in (1e-4, 1e-3, 1e-2, 0.1, 0.3):
            for _ in range(25):
                n = int(rng.integers(1, 5))
                P = PauliString({bath(i): "XYZ"[rng.integers(3)] for i in range(n)})
                spec = NoiseSpec(eps, None, None, fam, seed=int(rng.integers(1 << 30)))
                d = operator_norm(P.to_operator().matrix - noisy_pauli(P, spec).matrix)
                worst = max(worst, d - n * eps)
    return float(worst)


def lemma_state_noise(seed: int = 4) -> float:
    """max of ‖ω̃ − ω‖₁ − ε for every preparation label and state family."""
    from .core import projector

    worst = -np.inf
    for fam in StateNoise:
        for eps in (1e-4, 1e-2, 0.5, 1.0):
            for lab in "01+-":
                w = projector(lab)
                worst = max(worst, trace_norm(noisy_state(w, NoiseSpec(eps, None, fam, None)) - w) - eps)
    return float(worst)


def pullback_noise_constants(eps_grid=(1e-4, 1e-3, 1e-2), seed: int = 5) -> dict:
    """K(ε) = max_O ‖T*(O) − T̃*(O)‖ / (ε‖O‖(r + D)²) per gate family.

    The transition is a bulk surface-code step; operators are single-site
    Paulis (r = 0) and random operators on adjacent pairs (r = 1), with r
    measured in the transition's gate graph.
    """
    rng = np.random.default_rng(seed)
    tm = surface_code_transition(3, 2, 4)
    D = tm.depth
    ops = [(PauliString({q: c}).to_operator(), 0) for q in (tm.bath[1], tm.system[0]) for c in "XZ"]
    for a, b in ((tm.bath[0], tm.bath[1]), (tm.system[1], tm.system[2]), (tm.bath[2], tm.system[2])):
        ops.append((random_operator(rng, (a, b), hermitian=True), 1))
    ideal = [embed(heisenberg_pullback(o, tm, trim=False), tm.bath) for o, _ in ops]
    out = {}
    for fam in GateNoise:
        ks = {}
        for eps in eps_grid:
            noisy_tm = apply_noise(tm, NoiseSpec(eps, fam, StateNoise.MIX_WITH_MAXIMALLY_MIXED, None, seed=seed))
            k = 0.0
            for (o, r), ref in zip(ops, ideal):
                got = embed(heisenberg_pullback(o, noisy_tm, trim=False), tm.bath)
                k = max(k, operator_norm(got.matrix - ref.matrix) / (eps * operator_norm(o) * (r + D) ** 2))
            ks[eps] = k
        out[fam.value] = ks
    return out


def verify_lemmas(seed: int = 0, trials: int = 1000) -> SuiteReport:
    t0 = time.perf_counter()
    rep = SuiteReport("lemmas")
    tol = 1e-10
    v = lemma_product_states(trials, seed + 1)
    rep.checks.append(Check("product-state-perturbation", v <= tol, v, tol, f"{trials} trials"))
    v = lemma_partial_products(trials, seed + 2)
    rep.checks.append(Check("partial-trace-perturbation", v <= tol, v, tol, f"{trials} trials"))
    n, bad, _ = support_containment(seed)
    rep.checks.append(Check("pullback-support-containment", not bad, len(bad), 0, f"{n} pullbacks"))
    v = lemma_measurement(seed + 3)
    rep.checks.append(Check("measurement-noise", v <= 1e-12, v, 1e-12))
    v = lemma_state_noise(seed + 4)
    rep.checks.append(Check("state-noise", v <= 1e-12, v, 1e-12))
    for fam, ks in pullback_noise_constants(seed=seed + 5).items():
        vals = np.array(list(ks.values()))
        ratio = float(vals.max() / vals.min()) if vals.min() > 0 else math.inf
        rep.checks.append(Check(f"pullback-noise-constant[{fam}]", ratio <= 2.0, ratio, 2.0,
                                " ".join(f"K({e:g})={k:.3g}" for e, k in ks.items())))
    rep.seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# Stabilizer


def verify_stabilizer(lx: int = 5, ly: int = 4) -> SuiteReport:
    from .stabilizer import check_row_annihilation, encoding_report

    t0 = time.perf_counter()
    rep = SuiteReport("stabilizer")
    r = encoding_report(lx, ly)
    ok = all(v == 1 for v in r["generators"])
    rep.checks.append(Check(f"generators-plus-one[lx={lx}]", ok, float(min(r["generators"])), 0,
                            f"{len(r['generators'])} generators"))
    ok = all(v == 1 for v in r["logical_z"])
    rep.checks.append(Check(f"logical-z[lx={lx}]", ok, float(min(r["logical_z"]))))
    a = check_row_annihilation(lx)
    rep.checks.append(Check(f"row-annihilation[lx={lx}]", a.ok, len(a.survivors), 2,
                            "survivors " + "|".join(sorted(a.survivors))))
    rep.seconds = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# Mixing


def verify_mixing(seed: int = 0) -> SuiteReport:
    from .mixing import (
        bath_superoperator,
        eta,
        fit_mixing,
        identity_superoperator,
        segment,
    )

    t0 = time.perf_counter()
    rep = SuiteReport("mixing")
    plan = surface_code_plan(3, 5)
    worst = 0.0
    for ell in (1, 2):
        for t, tp in ((2, 2), (2, 3)):
            sop = bath_superoperator(plan, t, tp, segment(plan, 0, ell), plan.bath)
            worst = max(worst, eta(sop, restarts=8, iterations=50, seed=seed).upper)
    rep.checks.append(Check("surface-code-eta-zero", worst <= 1e-10, worst, 1e-10))
    tp = trivial_plan(3, 4, "0", "+")
    sop = bath_superoperator(tp, 2, 2, tp.bath, tp.bath)
    v = eta(sop, restarts=4, iterations=20, seed=seed).upper
    rep.checks.append(Check("trivial-eta-zero", v <= 1e-12, v, 1e-12))
    iv = eta(identity_superoperator(segment(plan, 0, 1)), restarts=4, iterations=50, seed=seed)
    ok = 1 - 1e-9 <= iv.lower <= iv.upper <= 2
    rep.checks.append(Check("identity-window-interval", ok, iv.lower, 1.0, f"[{iv.lower:.4f},{iv.upper:.4f}]"))
    series = {(1, t): 0.8 * math.exp(-0.5 * t) + 1e-4 for t in range(1, 16)}
    fit = fit_mixing(series)
    ok = abs(fit.gamma - 0.5) <= 0.025 and fit.classified
    rep.checks.append(Check("fit-synthetic-gamma", ok, fit.gamma, 0.025))
    rep.seconds = time.perf_counter() - t0
    return rep


def run_suite(name: str, seed: int = 0) -> SuiteReport:
    runners = {"duality": verify_duality, "locality": verify_locality, "lemmas": verify_lemmas,
               "stabilizer": verify_stabilizer, "mixing": verify_mixing}
    if name not in runners:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    if name == "stabilizer":
        return runners[name]()
    return runners[name](seed=seed)


__all__ = [
    "SUITES",
    "Check",
    "SuiteReport",
    "lemma_measurement",
    "lemma_partial_products",
    "lemma_product_states",
    "numeric_support",
    "pullback_noise_constants",
    "run_suite",
    "support_containment",
    "verify_duality",
    "verify_lemmas",
    "verify_locality",
    "verify_mixing",
    "verify_stabilizer",
]
