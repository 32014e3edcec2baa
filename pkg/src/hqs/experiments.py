"""ε-sweeps, bound fits and size-independence tables.

Configuration files are flat ``key = value`` text (``#`` comments, lists as
comma-separated values).  Recognized keys::

    model        surface-code | trivial
    lx, ly       lattice size
    pauli        Pauli letters, one per site or a single letter broadcast
    sites        row:col list; a row may be written relative to ly as ly-k
    gate_noise   DepolarizeAfterGate | CoherentOverrotation | MixWithFixedChannel | none
    state_noise  MixWithOrthogonal | MixWithMaximallyMixed | none
    meas_noise   Shrink | RotateAxis | none
    eps_min, eps_max, eps_points, eps_log     grid (defaults 1e-4, 1e-1, 12, true)
    eps_values   explicit grid, overrides the four keys above (may contain 0)
    seeds        list of integer seeds (default 0)
    delta        plateau Δ used in the bound column (default 0)
    ly_list      ly values for size-independence
    epsilon      fixed ε for size-independence (default 1e-3)
    target, bath_init, order, output
"""

from __future__ import annotations

import concurrent.futures as cf
import io
import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import TextIO

import numpy as np

from .circuits import (
    GateNoise,
    MeasNoise,
    NoiseSpec,
    StateNoise,
    surface_code_plan,
    trivial_plan,
)
from .core import PauliString, system
from .engine import expectation_local, forward_peak, noisy_expectation
from .live import CeilingError, dense_ceiling
from .mixing import predicted_bound

SCHEMA = "# hqs-sweep schema=1"
COLUMNS = ("epsilon", "lx", "ly", "seed", "observable", "noiseless", "noisy", "deviation", "bound")
MODELS = ("surface-code", "trivial")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# --------------------------------------------------------------------------
# Configuration


def _family(enum_cls, text: str):
    if text.lower() in ("none", "off", ""):
        return None
    try:
        return enum_cls(text)
    except ValueError:
        names = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"unknown noise family {text!r}; expected one of {names} or none") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


_ROW = re.compile(r"^(?:(ly)\s*(?:-\s*(\d+))?|(\d+))$")


def resolve_row(expr: str, ly: int) -> int:
    """``"3"`` -> 3, ``"ly"`` -> ly, ``"ly-2"`` -> ly − 2."""
    m = _ROW.match(expr.strip())
    if not m:
        raise ConfigError(f"bad row expression {expr!r}")
    if m.group(3) is not None:
        return int(m.group(3))
    return ly - int(m.group(2) or 0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration (see module docstring for keys)."""

    model: str = "surface-code"
    lx: int = 3
    ly: int = 4
    pauli: str = "Z"
    sites: tuple[tuple[str, int], ...] = (("1", 0),)
    gate_family: GateNoise | None = GateNoise.DEPOLARIZE_AFTER_GATE
    state_family: StateNoise | None = StateNoise.MIX_WITH_MAXIMALLY_MIXED
    meas_family: MeasNoise | None = MeasNoise.SHRINK
    eps_min: float = 1e-4
    eps_max: float = 1e-1
    eps_points: int = 12
    eps_log: bool = True
    eps_values: tuple[float, ...] | None = None
    seeds: tuple[int, ...] = (0,)
    delta: float = 0.0
    ly_list: tuple[int, ...] = ()
    epsilon: float = 1e-3
    target: str = "0"
    bath_init: str = "0"
    order: str = "XZ"
    output: str | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}")
        if self.lx < 2 or self.ly < 1:
            raise ConfigError("lattice must have lx >= 2 and ly >= 1")
        if self.model == "surface-code" and (self.lx < 3 or self.lx % 2 == 0 or self.ly < 3):
            raise ConfigError("surface code needs odd lx >= 3 and ly >= 3")
        if self.eps_values is None:
            if not self.eps_min > 0:
                raise ConfigError("eps_min must be > 0")
            if self.eps_points < 2:
                raise ConfigError("eps_points must be >= 2")
            if not self.eps_min < self.eps_max <= 1:
                raise ConfigError("need 0 < eps_min < eps_max <= 1")
        elif not self.eps_values or any(not 0 <= e <= 1 for e in self.eps_values):
            raise ConfigError("eps_values must be a non-empty list in [0, 1]")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("epsilon must lie in [0, 1]")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if self.order not in ("XZ", "ZX"):
            raise ConfigError("order must be XZ or ZX")
        if len(self.pauli) not in (1, len(self.sites)) or set(self.pauli) - set("XYZ"):
            raise ConfigError("pauli must be letters from XYZ, one per site or a single letter")
        for ly in (self.ly, *self.ly_list):
            self.observable(ly)  # support check

    @property
    def grid(self) -> tuple[float, ...]:
        if self.eps_values is not None:
            return tuple(self.eps_values)
        if self.eps_log:
            return tuple(float(x) for x in np.logspace(math.log10(self.eps_min), math.log10(self.eps_max),
                                                       self.eps_points))
        return tuple(float(x) for x in np.linspace(self.eps_min, self.eps_max, self.eps_points))

    def observable(self, ly: int | None = None) -> PauliString:
        ly = self.ly if ly is None else ly
        letters = self.pauli * len(self.sites) if len(self.pauli) == 1 else self.pauli
        letter_of = {}
        for a, (r, c) in zip(letters, self.sites):
            row = resolve_row(r, ly)
            if not (1 <= row <= ly and 0 <= c < self.lx):
                raise ConfigError(f"site {r}:{c} -> ({row}, {c}) outside the {self.lx}x{ly} lattice")
            q = system(row, c)
            if q in letter_of:
                raise ConfigError(f"site {row}:{c} listed twice")
            letter_of[q] = a
        return PauliString(letter_of)

    def noise(self, epsilon: float, seed: int) -> NoiseSpec:
        return NoiseSpec(epsilon, self.gate_family, self.state_family, self.meas_family, seed)

    def plan(self, ly: int | None = None):
        ly = self.ly if ly is None else ly
        if self.model == "surface-code":
            return surface_code_plan(self.lx, ly, self.order)
        return trivial_plan(self.lx, ly, self.target, self.bath_init)

    def echo(self) -> list[str]:
        """``key=value`` lines reproducing this config."""
        fam = lambda f: "none" if f is None else f.value
        items = [("model", self.model), ("lx", self.lx), ("ly", self.ly), ("pauli", self.pauli),
                 ("sites", ",".join(f"{r}:{c}" for r, c in self.sites)),
                 ("gate_noise", fam(self.gate_family)), ("state_noise", fam(self.state_family)),
                 ("meas_noise", fam(self.meas_family))]
        if self.eps_values is not None:
            items.append(("eps_values", ",".join(repr(e) for e in self.eps_values)))
        else:
            items += [("eps_min", repr(self.eps_min)), ("eps_max", repr(self.eps_max)),
                      ("eps_points", self.eps_points), ("eps_log", str(self.eps_log).lower())]
        items += [("seeds", ",".join(map(str, self.seeds))), ("delta", repr(self.delta))]
        if self.ly_list:
            items += [("ly_list", ",".join(map(str, self.ly_list))), ("epsilon", repr(self.epsilon))]
        if self.model == "trivial":
            items += [("target", self.target), ("bath_init", self.bath_init)]
        else:
            items.append(("order", self.order))
        return [f"{k}={v}" for k, v in items]


_PARSERS = {
    "model": str,
    "lx": int,
    "ly": int,
    "pauli": lambda s: s.strip().upper(),
    "eps_min": float,
    "eps_max": float,
    "eps_points": int,
    "eps_log": _bool,
    "eps_values": lambda s: tuple(float(x) for x in s.split(",")),
    "seeds": lambda s: tuple(int(x) for x in s.split(",")),
    "delta": float,
    "ly_list": lambda s: tuple(int(x) for x in s.split(",")),
    "epsilon": float,
    "target": str,
    "bath_init": str,
    "order": str,
    "output": str,
}


def _sites(text: str) -> tuple[tuple[str, int], ...]:
    out = []
    for tok in text.split(","):
        try:
            r, c = tok.split(":")
            resolve_row(r, 1_000_000)
            out.append((r.strip(), int(c)))
        except ValueError:
            raise ConfigError(f"bad site {tok!r}; expected row:col") from None
    return tuple(out)


def parse_config(text: str) -> ExperimentConfig:
    """Typed parse of flat ``key = value`` text."""
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key == "sites":
                kw["sites"] = _sites(value)
            elif key == "gate_noise":
                kw["gate_family"] = _family(GateNoise, value)
            elif key == "state_noise":
                kw["state_family"] = _family(StateNoise, value)
            elif key == "meas_noise":
                kw["meas_family"] = _family(MeasNoise, value)
            elif key in _PARSERS:
                kw[key] = _PARSERS[key](value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return ExperimentConfig(**kw)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


# --------------------------------------------------------------------------
# Sweep


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    lx: int
    ly: int
    seed: int
    observable: str
    noiseless: float
    noisy: float
    deviation: float
    bound: float

    def csv(self) -> str:
        return ",".join([repr(self.epsilon), str(self.lx), str(self.ly), str(self.seed), self.observable,
                         repr(self.noiseless), repr(self.noisy), repr(self.deviation), repr(self.bound)])


@dataclass
class SweepResult:
    rows: list[SweepRow]
    C: float = math.nan
    residual: float = math.nan
    slope: float = math.nan
    flags: tuple[str, ...] = ()

    @property
    def smallest_eps_deviation(self) -> dict[int, float]:
        """Deviation at the smallest grid point, per seed."""
        eps = min(r.epsilon for r in self.rows)
        return {r.seed: r.deviation for r in self.rows if r.epsilon == eps}


def observable_id(P: PauliString) -> str:
    """Compact, comma-free id such as ``ZZZZ@2:0;2:1;3:0;3:1``."""
    qs = sorted(P.support)
    return "".join(P.letters[q] for q in qs) + "@" + ";".join(f"{q.row}:{q.col}" for q in qs)


def check_feasible(config: ExperimentConfig, ly: int | None = None) -> int:
    """Dry run of the live-register schedule; raises :class:`CeilingError` if too large."""
    peak = forward_peak(config.plan(ly), config.observable(ly).support)
    if peak > dense_ceiling():
        raise CeilingError(f"geometry needs {peak} live qubits, above the ceiling {dense_ceiling()}")
    return peak


def _point(args) -> SweepRow:
    config, eps, seed, clean = args
    plan = config.plan()
    P = config.observable()
    noisy = noisy_expectation(plan, P, config.noise(eps, seed))
    bound = predicted_bound(min(eps, 1 - 1e-15), config.ly, config.delta)
    return SweepRow(eps, config.lx, config.ly, seed, observable_id(P), clean, noisy, abs(clean - noisy), bound)


def csv_header(config: ExperimentConfig, now: datetime | None = None) -> str:
    now = now or datetime.now(timezone.utc)
    lines = [SCHEMA, f"# generated {now.isoformat(timespec='seconds')}"]
    lines += [f"# config {line}" for line in config.echo()]
    lines.append(",".join(COLUMNS))
    return "\n".join(lines) + "\n"


def run_sweep(config: ExperimentConfig, jobs: int = 1, out: TextIO | None = None) -> SweepResult:
    """Deviation over the ε grid for every seed; rows are written to ``out`` as they complete in order."""
    check_feasible(config)
    clean = expectation_local(config.plan(), config.observable())
    tasks = [(config, eps, seed, clean) for eps in config.grid for seed in config.seeds]
    if out is not None:
        out.write(csv_header(config))
        out.flush()
    rows = []
    if jobs <= 1:
        results: Iterable[SweepRow] = map(_point, tasks)
        pool = None
    else:
        pool = cf.ProcessPoolExecutor(max_workers=jobs)
        results = pool.map(_point, tasks)
    try:
        for row in results:  # ordered: the single writer never reorders points
            rows.append(row)
            if out is not None:
                out.write(row.csv() + "\n")
                out.flush()
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    res = SweepResult(rows)
    fit = fit_bound(res)
    res.C, res.residual, res.slope, res.flags = fit.C, fit.residual, fit.slope, fit.flags
    return res


def sweep_csv(result: SweepResult, config: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(csv_header(config))
    for r in result.rows:
        buf.write(r.csv() + "\n")
    return buf.getvalue()


def csv_body(text: str) -> str:
    """The CSV without the timestamp line (what determinism compares)."""
    return "".join(ln for ln in text.splitlines(keepends=True) if not ln.startswith("# generated"))


def read_sweep_csv(text: str) -> SweepResult:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SCHEMA:
        got = lines[0].strip() if lines else "<empty>"
        raise ValueError(f"unsupported sweep schema {got!r}; expected {SCHEMA!r}")
    body = [ln for ln in lines[1:] if ln and not ln.startswith("#")]
    if not body or tuple(body[0].split(",")) != COLUMNS:
        raise ValueError("sweep CSV columns do not match the schema")
    rows = []
    for ln in body[1:]:
        f = ln.split(",")
        rows.append(SweepRow(float(f[0]), int(f[1]), int(f[2]), int(f[3]), f[4],
                             float(f[5]), float(f[6]), float(f[7]), float(f[8])))
    return SweepResult(rows)


# --------------------------------------------------------------------------
# Bound fit


@dataclass(frozen=True)
class BoundFit:
    C: float
    slope: float
    residual: float
    ratios: tuple[float, ...] = ()
    flags: tuple[str, ...] = ()


def fit_bound(result: SweepResult | str, delta: float = 0.0, floor: float = 1e-13) -> BoundFit:
    """C = max deviation / (ε log²(1/ε) + ℓ_y Δ) and the log-log slope of deviation vs ε.

    ``result`` may also be the text of a sweep CSV, whose schema is checked.
    """
    if isinstance(result, str):
        result = read_sweep_csv(result)
    rows = [r for r in result.rows if 0 < r.epsilon < 1]
    if not rows or all(r.deviation == 0 for r in result.rows):
        return BoundFit(0.0, math.nan, math.nan, flags=("all_zero",))
    ratios = []
    for r in rows:
        den = r.epsilon * math.log(1 / r.epsilon) ** 2 + r.ly * delta
        ratios.append(r.deviation / den if den > 0 else math.inf)
    flags = []
    use = [r for r in rows if r.deviation > floor]
    if len({r.epsilon for r in use}) < 4:
        flags.append("insufficient_points")
        slope = residual = math.nan
    else:
        x = np.log([r.epsilon for r in use])
        y = np.log([r.deviation for r in use])
        coef, res, *_ = np.polyfit(x, y, 1, full=True)
        slope = float(coef[0])
        residual = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return BoundFit(float(max(ratios)), slope, residual, tuple(ratios), tuple(flags))


def local_slope(result: SweepResult, eps_lo: float, eps_hi: float, floor: float = 1e-13) -> float:
    """Least-squares slope of log deviation vs log ε restricted to [eps_lo, eps_hi]."""
    pts = [(r.epsilon, r.deviation) for r in result.rows
           if eps_lo * (1 - 1e-12) <= r.epsilon <= eps_hi * (1 + 1e-12) and r.deviation > floor]
    if len({e for e, _ in pts}) < 2:
        return math.nan
    x, y = np.log(np.array(pts).T)
    return float(np.polyfit(x, y, 1)[0])


# --------------------------------------------------------------------------
# Size independence


@dataclass
class SizeTable:
    epsilon: float
    rows: list[tuple[int, str, float]] = field(default_factory=list)

    @property
    def deviations(self) -> np.ndarray:
        return np.array([d for _, _, d in self.rows])

    @property
    def spread(self) -> float:
        d = self.deviations
        return float(d.max() - d.min()) if d.size else 0.0

    @property
    def relative_spread(self) -> float:
        m = float(self.deviations.mean()) if self.rows else 0.0
        return self.spread / m if m > 0 else 0.0

    def to_text(self) -> str:
        lines = [f"epsilon={self.epsilon!r}", f"max_spread={self.spread!r}",
                 f"relative_spread={self.relative_spread!r}", "ly,observable,deviation"]
        lines += [f"{ly},{obs},{d!r}" for ly, obs, d in self.rows]
        return "\n".join(lines) + "\n"


def size_independence(config: ExperimentConfig, ly_list: Sequence[int] | None = None,
                      epsilon: float | None = None) -> SizeTable:
    """Deviation at fixed ε for each ℓ_y; rows may be given relative to ℓ_y (``ly-2``)."""
    lys = tuple(ly_list if ly_list is not None else config.ly_list)
    eps = config.epsilon if epsilon is None else epsilon
    if len(lys) < 3:
        raise ConfigError("size independence needs at least 3 values of ly")
    table = SizeTable(eps)
    seed = config.seeds[0]
    for ly in lys:
        cfg = replace(config, ly=ly, ly_list=())
        check_feasible(cfg)
        plan, P = cfg.plan(), cfg.observable()
        clean = expectation_local(plan, P)
        noisy = noisy_expectation(plan, P, cfg.noise(eps, seed))
        table.rows.append((ly, observable_id(P), abs(clean - noisy)))
    return table


GNUPLOT_STUB = """# gnuplot script for an hqs sweep CSV
set datafile separator ','
set logscale xy
set xlabel 'epsilon'
set ylabel 'deviation'
set key top left
plot '{csv}' using 1:8 every ::1 with linespoints title 'deviation', \\
     '{csv}' using 1:9 every ::1 with lines title 'eps log^2(1/eps)'
"""


def gnuplot_script(csv_path: str) -> str:
    return GNUPLOT_STUB.format(csv=csv_path)


__all__ = [
    "COLUMNS",
    "SCHEMA",
    "BoundFit",
    "ConfigError",
    "ExperimentConfig",
    "SizeTable",
    "SweepResult",
    "SweepRow",
    "check_feasible",
    "csv_body",
    "fit_bound",
    "gnuplot_script",
    "load_config",
    "local_slope",
    "observable_id",
    "parse_config",
    "read_sweep_csv",
    "resolve_row",
    "run_sweep",
    "size_independence",
    "sweep_csv",
]
