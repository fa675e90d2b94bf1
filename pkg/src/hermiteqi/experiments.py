"""Experiment drivers behind the command line: configs, presets and CSV reports."""
from __future__ import annotations

import csv
import json
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import testfunctions
from .derivatives import differentiate_generator, evaluate_qi_derivative
from .interpolant import (
    ErrorReport,
    QIConfig,
    boundary_distance,
    evaluate_anisotropic_qi,
    evaluate_harmonic_qi,
    evaluate_qi,
    sample_on_window,
    truncation_radius,
)
from .moments import GeneratingFunction, QPolynomial, anisotropy_factor, build_hermite_generator, verify_moment_conditions
from .saturation import anisotropic_epsilon, epsilon_bound, predict_harmonic_saturation, sigma_direct
from .special import IndexSet, as_index, order, zero

KINDS = ("converge", "harmonic", "saturation", "moments-check", "deriv")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


# --- generator presets ---------------------------------------------------
@dataclass
class Scheme:
    """A resolved quasi-interpolation scheme.

    ``kind`` is ``"hermite"`` (general Q with a Hermite-Gaussian generator) or
    ``"operator"`` (Gaussian kernel with powers of a second-order operator,
    the Laplacian when ``B`` is None).
    """

    name: str
    kind: str
    n: int
    N: int
    Q: QPolynomial | None = None
    H: GeneratingFunction | None = None
    M: int = 1
    B: np.ndarray | None = None

    def channels(self) -> list:
        if self.kind == "hermite":
            return list(self.Q.coeffs)
        tag = "lap" if self.B is None else "B"
        return [zero(self.n)] + [f"{tag}:{s}" for s in range(1, self.M)]

    def describe(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "n": self.n, "N": self.N}
        if self.Q is not None:
            d["Q"] = self.Q.to_record()["coeffs"]
        if self.H is not None:
            d["H"] = self.H.to_record()["coeffs"]
        if self.kind == "operator":
            d["M"] = self.M
            d["B"] = None if self.B is None else self.B.tolist()
        return d


def _frac(v) -> Fraction:
    """Exact rational from an int, a string like ``"-1/4"`` or a decimal float."""
    if isinstance(v, (int, str)):
        return Fraction(v)
    return Fraction(str(v))


def resolve_scheme(gen: dict, n: int) -> Scheme:
    """Build a scheme from a ``[generator]`` table.

    Presets: ``laguerre-M``, ``example1-a`` (1-D, order 2, ``Q = 1 + a t``),
    ``example2-M1`` (``a1 = 1/2``), ``example2-M2`` (``a2 = -1/4``),
    ``laplacian-M``, ``anisotropic-M`` (needs ``B``), or ``custom`` with
    ``N`` and a ``q`` table mapping ``"i,j"`` keys to coefficients.
    """
    preset = str(gen.get("preset", "custom"))
    m = re.fullmatch(r"(laguerre|laplacian|anisotropic)-(\d+)", preset)
    if m:
        kind, M = m.group(1), int(m.group(2))
        if M < 1:
            raise ConfigError(f"generator.preset: order parameter must be >= 1 in {preset!r}")
        if kind == "laguerre":
            Q = QPolynomial.unit(n, 2 * M)
            return Scheme(preset, "hermite", n, 2 * M, Q, build_hermite_generator(Q))
        if kind == "laplacian":
            return Scheme(preset, "operator", n, 2 * M, M=M)
        if "B" not in gen:
            raise ConfigError("generator.B is required for the anisotropic preset")
        B = np.array(gen["B"], dtype=float)
        if B.shape != (n, n):
            raise ConfigError(f"generator.B must be {n}x{n}")
        try:
            anisotropy_factor(B)
        except ValueError as exc:
            raise ConfigError(f"generator.B: {exc}") from None
        return Scheme(preset, "operator", n, 2 * M, M=M, B=B)
    m = re.fullmatch(r"example1(?:-(.+))?", preset)
    if m:
        if n != 1:
            raise ConfigError("generator.preset example1 is one-dimensional")
        a = _frac(m.group(1) if m.group(1) else gen.get("a", 0))
        Q = QPolynomial(1, 2, {(0,): 1, (1,): a})
        return Scheme(f"example1-{a}", "hermite", 1, 2, Q, build_hermite_generator(Q))
    if preset in ("example2-M1", "example2-M2"):
        if n != 1:
            raise ConfigError(f"generator.preset {preset} is one-dimensional")
        coeffs = {(0,): 1, (1,): Fraction(1, 2)} if preset.endswith("M1") else {(0,): 1, (2,): Fraction(-1, 4)}
        Q = QPolynomial(1, 4, coeffs)
        return Scheme(preset, "hermite", 1, 4, Q, build_hermite_generator(Q))
    if preset == "custom":
        if "N" not in gen or "q" not in gen:
            raise ConfigError("generator: a custom generator needs N and q")
        try:
            Q = QPolynomial(n, int(gen["N"]), {k: _frac(v) for k, v in gen["q"].items()})
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"generator.q: {exc}") from None
        return Scheme("custom", "hermite", n, Q.N, Q, build_hermite_generator(Q))
    raise ConfigError(f"generator.preset: unknown preset {preset!r}")


def scheme_floor_terms(scheme: Scheme, D: float, tail_tol: float = 1e-16) -> dict:
    """Per-beta saturation constants: the floor is ``sum scale^|beta| sup|d^beta u| eps_beta``."""
    if scheme.kind == "hermite":
        return epsilon_bound(scheme.H, scheme.Q, D, tail_tol).per_beta
    B = np.eye(scheme.n) if scheme.B is None else scheme.B
    return anisotropic_epsilon(B, D, scheme.M, tail_tol)


def saturation_floor(scheme: Scheme, fn, D: float, scale: float, box, tail_tol: float = 1e-16) -> float:
    terms = scheme_floor_terms(scheme, D, tail_tol)
    return sum(scale ** order(b) * fn.deriv_sup(b, box) * e for b, e in terms.items())


def evaluate_scheme(scheme: Scheme, data, cfg: QIConfig, x, threads=None):
    if scheme.kind == "hermite":
        return evaluate_qi(scheme.H, scheme.Q, data, cfg, x, threads=threads)
    kind = "lap" if scheme.B is None else "B"
    return evaluate_anisotropic_qi(scheme.B, data, scheme.M, cfg, x, threads=threads, kind=kind)


def scheme_degree(scheme: Scheme) -> int:
    return scheme.H.degree if scheme.kind == "hermite" else 0


def window(box, cfg: QIConfig, degree: int, n: int, B=None) -> list[tuple[float, float]]:
    """Sampling box covering the truncation radius around every point of ``box``."""
    R = cfg.radius(degree, n) * cfg.scale
    if B is None:
        reach = np.full(n, R)
    else:
        Tinv = np.linalg.inv(anisotropy_factor(np.asarray(B, dtype=float)))
        reach = R * np.sqrt(np.sum(Tinv * Tinv, axis=1))
    return [(a - r - 2 * cfg.h, b + r + 2 * cfg.h) for (a, b), r in zip(box, reach)]


# --- spec ----------------------------------------------------------------
@dataclass
class ExperimentSpec:
    kind: str
    function: str = "cos"
    generator: dict = field(default_factory=lambda: {"preset": "laguerre-1"})
    h: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    D: list = field(default_factory=lambda: [2.0])
    eval_box: list = field(default_factory=lambda: [[-1.0, 1.0]])
    eval_points: int = 41
    n: int = 1
    tail_tol: float = 1e-16
    seed: int = 0
    options: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Everything that determines the output (thread count excluded on purpose)."""
        d = asdict(self)
        return d


def _positive_list(raw: dict, key: str, default):
    vals = raw.get(key, default)
    if not isinstance(vals, list):
        vals = [vals]
    try:
        vals = [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"grid.{key}: expected a list of numbers, got {vals!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise ConfigError(f"grid.{key}: values must be positive, got {vals}")
    return vals


def spec_from_dict(raw: dict) -> ExperimentSpec:
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind: expected one of {KINDS}, got {kind!r}")
    fn = raw.get("function", {})
    if isinstance(fn, str):
        fn = {"id": fn}
    grid = raw.get("grid", {})
    ev = raw.get("eval", {})
    n = int(fn.get("n", 2 if fn.get("id") == "exp-cos-2d" else 1))
    box = ev.get("box", [[-1.0, 1.0]] * n)
    if len(box) != n or any(len(b) != 2 or not b[0] < b[1] for b in box):
        raise ConfigError(f"eval.box: need {n} intervals [lo, hi] with lo < hi, got {box}")
    points = int(ev.get("points", 41))
    if points < 1:
        raise ConfigError("eval.points must be >= 1")
    tail = float(raw.get("tail_tol", 1e-16))
    if not 0 < tail < 1:
        raise ConfigError("tail_tol must lie in (0, 1)")
    spec = ExperimentSpec(
        kind=kind,
        function=str(fn.get("id", "cos")),
        generator=dict(raw.get("generator", {"preset": "laguerre-1"})),
        h=_positive_list(grid, "h", [0.2, 0.1, 0.05]),
        D=_positive_list(grid, "D", [2.0]),
        eval_box=[[float(a), float(b)] for a, b in box],
        eval_points=points,
        n=n,
        tail_tol=tail,
        seed=int(raw.get("seed", 0)),
        options=dict(raw.get("options", {})),
        checks=dict(raw.get("checks", {})),
    )
    if kind in ("converge", "harmonic", "deriv"):
        try:
            testfunctions.resolve(spec.function, n)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"function.id: {exc}") from None
        resolve_scheme(spec.generator, n)
    return spec


def load_spec(path: str, overrides: dict | None = None) -> ExperimentSpec:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    return spec_from_dict(raw)


# --- output helpers --------------------------------------------------------
def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: str, header: list[str], rows, config: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# config: " + json.dumps(config, sort_keys=True, default=str) + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])


def eval_grid(box, points: int) -> np.ndarray:
    axes = [np.linspace(a, b, points) for a, b in box]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))


def log2_slopes(hs, errs, flags=None) -> list:
    """Slopes ``log2(e_i / e_{i+1}) / log2(h_i / h_{i+1})``; None where suppressed."""
    out = [None]
    for i in range(1, len(hs)):
        if flags is not None and (flags[i] or flags[i - 1]):
            out.append(None)
        elif errs[i] <= 0 or errs[i - 1] <= 0:
            out.append(None)
        else:
            out.append(math.log(errs[i - 1] / errs[i]) / math.log(hs[i - 1] / hs[i]))
    return out


@dataclass
class Outcome:
    """Result of one experiment: summary lines, failed checks and written files."""

    kind: str
    summary: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def _base_config(spec: ExperimentSpec, **extra) -> dict:
    cfg = spec.resolved()
    cfg.update(extra)
    return cfg


# --- converge ----------------------------------------------------------------
def run_converge(spec: ExperimentSpec, out_dir: str, threads=None) -> Outcome:
    fn = testfunctions.resolve(spec.function, spec.n)
    scheme = resolve_scheme(spec.generator, spec.n)
    x = eval_grid(spec.eval_box, spec.eval_points)
    res = Outcome("converge")
    rows = []
    floor_factor = float(spec.options.get("floor_factor", 10.0))
    for D in spec.D:
        errs, floors, flags, radii = [], [], [], []
        for h in spec.h:
            cfg = QIConfig(h, D, scheme.N, spec.tail_tol)
            B = scheme.B if scheme.kind == "operator" else None
            win = window(spec.eval_box, cfg, scheme_degree(scheme), spec.n, B)
            data = sample_on_window(fn.closures(scheme.channels()), h, win)
            approx = evaluate_scheme(scheme, data, cfg, x, threads=threads)
            rep = ErrorReport(x, approx, fn(x), {"h": h, "D": D})
            tag = f"h{h:g}_D{D:g}"
            path = os.path.join(out_dir, f"converge_errors_{tag}.csv")
            rep.to_csv(path, _base_config(spec, h_value=h, D_value=D, scheme=scheme.describe()))
            res.files.append(path)
            floor = saturation_floor(scheme, fn, D, cfg.scale, spec.eval_box, spec.tail_tol)
            errs.append(rep.sup_norm)
            floors.append(floor)
            flags.append(rep.sup_norm <= floor_factor * floor)
            radii.append(cfg.radius(scheme_degree(scheme), spec.n))
        slopes = log2_slopes(spec.h, errs, flags)
        for h, e, f, fl, s, r in zip(spec.h, errs, floors, flags, slopes, radii):
            rows.append([h, D, h * math.sqrt(D), e, f, fl, s, r])
        res.data[D] = {"h": list(spec.h), "errors": errs, "floors": floors, "flags": flags, "slopes": slopes}
        res.summary.append(f"D={D:g}: sup errors " + ", ".join(f"{e:.3e}" for e in errs)
                           + "; slopes " + ", ".join("-" if s is None else f"{s:.2f}" for s in slopes[1:])
                           + "; floor-flagged " + ", ".join(str(int(f)) for f in flags))
        expect = spec.checks.get("slope")
        if expect is not None:
            tol = float(spec.checks.get("slope_tol", 0.4))
            for s in slopes[1:]:
                if s is not None and abs(s - expect) > tol:
                    res.failures.append(f"D={D:g}: slope {s:.3f} outside {expect} +/- {tol}")
        if spec.checks.get("below_floor"):
            for h, e, f in zip(spec.h, errs, floors):
                if e > f:
                    res.failures.append(f"D={D:g}, h={h:g}: error {e:.3e} above floor {f:.3e}")
    path = os.path.join(out_dir, "converge.csv")
    write_csv(path, ["h", "D", "h_sqrtD", "sup_error", "floor", "floor_flag", "slope", "radius"], rows,
              _base_config(spec, scheme=scheme.describe()))
    res.files.insert(0, path)
    return res


# --- harmonic ----------------------------------------------------------------
def _harmonic_one(fn, D, h, spec, B, x, threads, precision):
    cfg_tol = spec.tail_tol
    extended = precision == "extended" or (precision == "auto" and 2 * math.exp(-math.pi ** 2 * D) < 1e-14)
    dtype = np.longdouble if extended else np.float64
    if extended:
        cfg_tol = min(cfg_tol, 1e-22)
    cfg = QIConfig(h, D, 2, cfg_tol)
    win = window(spec.eval_box, cfg, 0, spec.n, B)
    data = sample_on_window({zero(spec.n): fn}, h, win, dtype=dtype)
    xl = x.astype(dtype)
    approx = evaluate_harmonic_qi(data, cfg, xl, B=B, threads=threads)
    err = np.asarray(approx - fn(xl), dtype=float)
    return cfg, data, err, extended


def run_harmonic(spec: ExperimentSpec, out_dir: str, threads=None) -> Outcome:
    import warnings

    fn = testfunctions.resolve(spec.function, spec.n)
    if not fn.has_extension:
        raise ConfigError(f"function.id: {spec.function} has no analytic extension")
    B = spec.generator.get("B")
    B = None if B is None else np.array(B, dtype=float)
    precision = str(spec.options.get("precision", "auto"))
    x = eval_grid(spec.eval_box, spec.eval_points)
    res = Outcome("harmonic")
    rows = []
    for D in spec.D:
        sups = []
        for h in spec.h:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                cfg, data, err, extended = _harmonic_one(fn, D, h, spec, B, x, threads, precision)
            coarse = any("harmonic-limit" in str(w.message) for w in caught)
            if B is None:
                pred = predict_harmonic_saturation(fn.extension, x, h, D)
            else:
                pred = np.full(len(x), np.nan)
            dist = boundary_distance(data, x) / cfg.scale
            tag = f"h{h:g}_D{D:g}"
            path = os.path.join(out_dir, f"harmonic_grid_{tag}.csv")
            grid_rows = [[*p, e, abs(e), q, e - q, d] for p, e, q, d in zip(x, err, pred, dist)]
            write_csv(path, [f"x{j + 1}" for j in range(spec.n)] + ["error", "abs_error", "predicted", "error_minus_predicted",
                                                                  "dist_over_h_sqrtD"],
                      grid_rows, _base_config(spec, h_value=h, D_value=D, extended_precision=extended,
                                              tail_tol_used=cfg.tail_tol, radius=cfg.radius(0, spec.n)))
            res.files.append(path)
            sup = float(np.max(np.abs(err)))
            sup_pred = float(np.max(np.abs(pred))) if B is None else float("nan")
            dev = float(np.max(np.abs(err - pred)) / sup_pred) if B is None else float("nan")
            sups.append(sup)
            rows.append([D, h, h * math.sqrt(D), sup, sup_pred, dev, extended, coarse])
        ratio = max(sups) / min(sups) if min(sups) > 0 else float("inf")
        res.data[D] = {"h": list(spec.h), "sup": sups, "ratio": ratio}
        res.summary.append(f"D={D:g}: sup errors " + ", ".join(f"{s:.3e}" for s in sups) + f"; max/min ratio {ratio:.3f}")
        lim = spec.checks.get("h_ratio")
        if lim is not None and ratio > float(lim):
            res.failures.append(f"D={D:g}: h-dependence ratio {ratio:.3f} exceeds {lim}")
    if len(spec.D) >= 2:
        h0 = spec.h[0]
        sup_at = [next(r[3] for r in rows if r[0] == D and r[1] == h0) for D in spec.D]
        slope = float(np.polyfit(spec.D, np.log(sup_at), 1)[0])
        res.data["D_slope"] = slope
        res.summary.append(f"log sup-error vs D slope at h={h0:g}: {slope:.3f} (reference {-math.pi ** 2:.3f})")
        tol = spec.checks.get("D_slope_rel")
        if tol is not None and abs(slope + math.pi ** 2) > float(tol) * math.pi ** 2:
            res.failures.append(f"D slope {slope:.3f} not within {tol} of -pi^2")
    lim = spec.checks.get("prediction_rel")
    if lim is not None:
        for r in rows:
            if r[5] == r[5] and r[5] > float(lim) and r[0] in spec.checks.get("prediction_D", spec.D):
                res.failures.append(f"D={r[0]:g}, h={r[1]:g}: measured vs predicted deviation {r[5]:.3f}")
    path = os.path.join(out_dir, "harmonic.csv")
    write_csv(path, ["D", "h", "h_sqrtD", "sup_error", "sup_predicted", "rel_deviation", "extended_precision", "coarse"],
              rows, _base_config(spec))
    res.files.insert(0, path)
    return res


# --- saturation --------------------------------------------------------------
def run_saturation(spec: ExperimentSpec, out_dir: str, threads=None) -> Outcome:
    n = spec.n
    maxb = int(spec.options.get("max_order", 2))
    samples = int(spec.options.get("samples", 64))
    betas = [as_index(b) for b in spec.options["betas"]] if "betas" in spec.options else list(IndexSet(n, maxb))
    g = np.arange(samples) / samples
    xi = np.stack(np.meshgrid(*([g] * n), indexing="ij"), axis=-1).reshape(-1, n)
    res = Outcome("saturation")
    rows = []
    for D in spec.D:
        for beta in betas:
            from .saturation import sigma_series

            s = sigma_series(beta, xi, D, tail_tol=spec.tail_tol)
            direct = sigma_direct(beta, xi, D, tail_tol=spec.tail_tol, threads=threads)
            amp = float(np.max(np.abs(s.value)))
            diff = float(np.max(np.abs(np.asarray(direct) - s.value)))
            imag = float(np.max(np.abs(s.imag_residual)))
            rows.append([D, ",".join(map(str, beta)), amp, diff, imag, s.cutoff,
                         truncation_radius(spec.tail_tol, order(beta), n)])
            expect = spec.checks.get("amplitude")
            if expect is not None and order(beta) == 0:
                rel = float(spec.checks.get("amplitude_rel", 0.01))
                if abs(amp - float(expect)) > rel * abs(float(expect)):
                    res.failures.append(f"D={D:g}: sigma_0 amplitude {amp:.4e} not within {rel} of {expect}")
            ptol = spec.checks.get("poisson_tol")
            if ptol is not None and diff > float(ptol):
                res.failures.append(f"D={D:g}, beta={beta}: Poisson mismatch {diff:.3e}")
        res.summary.append(f"D={D:g}: sigma_0 amplitude {rows[-len(betas)][2]:.4e}")
    path = os.path.join(out_dir, "saturation.csv")
    write_csv(path, ["D", "beta", "sup_amplitude", "poisson_diff", "imag_residual", "cutoff", "radius"], rows,
              _base_config(spec))
    res.files.append(path)
    return res


# --- moments-check -------------------------------------------------------------
def run_moments_check(spec: ExperimentSpec, out_dir: str, threads=None) -> Outcome:
    count = int(spec.options.get("count", 50))
    nmax = int(spec.options.get("n_max", 3))
    Nmin, Nmax = int(spec.options.get("N_min", 2)), int(spec.options.get("N_max", 6))
    tol = float(spec.checks.get("tol", 1e-10))
    qtol = float(spec.checks.get("quad_tol", 1e-8))
    quad = bool(spec.options.get("quadrature", True))
    rng = np.random.default_rng(spec.seed)
    res = Outcome("moments-check")
    rows = []
    for case in range(count):
        n = int(rng.integers(1, nmax + 1))
        N = int(rng.integers(Nmin, Nmax + 1))
        Q = QPolynomial.random(n, N, rng)
        H = build_hermite_generator(Q)
        closed = verify_moment_conditions(H, Q, tol=tol, method="closed-form")
        qres = verify_moment_conditions(H, Q, tol=qtol, method="quadrature") if quad else None
        ok = closed.passed and (qres is None or qres.passed)
        rows.append([case, n, N, json.dumps(Q.to_record()["coeffs"], sort_keys=True), closed.max_residual,
                     None if qres is None else qres.max_residual, ok])
        if not ok:
            res.failures.append(f"case {case} (n={n}, N={N}): residual {closed.max_residual:.3e}"
                                + ("" if qres is None else f", quadrature {qres.max_residual:.3e}"))
    res.summary.append(f"{count} random Q checked, {count - len(res.failures)} passed; "
                       f"max residual {max(r[4] for r in rows):.3e}")
    path = os.path.join(out_dir, "moments_check.csv")
    write_csv(path, ["case", "n", "N", "Q", "max_residual", "max_residual_quadrature", "passed"], rows,
              _base_config(spec))
    res.files.append(path)
    return res


# --- deriv ---------------------------------------------------------------------
def run_deriv(spec: ExperimentSpec, out_dir: str, threads=None) -> Outcome:
    fn = testfunctions.resolve(spec.function, spec.n)
    scheme = resolve_scheme(spec.generator, spec.n)
    if scheme.kind != "hermite":
        raise ConfigError("generator: deriv needs a Hermite-Gaussian generator preset")
    beta = as_index(spec.options.get("beta", [1] + [0] * (spec.n - 1)))
    if len(beta) != spec.n:
        raise ConfigError("options.beta has the wrong dimension")
    step = float(spec.options.get("fd_step", 1e-4))
    x = eval_grid(spec.eval_box, spec.eval_points)
    res = Outcome("deriv")
    rows = []
    G = differentiate_generator(scheme.H, beta)
    for D in spec.D:
        errs, fds = [], []
        for h in spec.h:
            cfg = QIConfig(h, D, scheme.N, spec.tail_tol)
            win = window([[a - 4 * step, b + 4 * step] for a, b in spec.eval_box], cfg, G.degree, spec.n)
            data = sample_on_window(fn.closures(scheme.channels()), h, win)
            approx = evaluate_qi_derivative(scheme.H, scheme.Q, data, cfg, x, beta, threads=threads)
            exact = fn.deriv(beta, x)
            err = float(np.max(np.abs(approx - exact)))
            fd = _finite_difference(lambda p: evaluate_qi(scheme.H, scheme.Q, data, cfg, p, threads=threads), x, beta, step)
            fd_dev = float(np.max(np.abs(fd - approx)) / max(1.0, float(np.max(np.abs(approx)))))
            errs.append(err)
            fds.append(fd_dev)
        slopes = log2_slopes(spec.h, errs)
        for h, e, s, f in zip(spec.h, errs, slopes, fds):
            rows.append([D, h, ",".join(map(str, beta)), e, s, f])
        res.data[D] = {"h": list(spec.h), "errors": errs, "slopes": slopes, "fd": fds}
        res.summary.append(f"D={D:g}: derivative errors " + ", ".join(f"{e:.3e}" for e in errs)
                           + "; slopes " + ", ".join(f"{s:.2f}" for s in slopes[1:] if s is not None)
                           + f"; identity check max {max(fds):.2e}")
        ftol = spec.checks.get("identity_tol")
        if ftol is not None and max(fds) > float(ftol):
            res.failures.append(f"D={D:g}: operator identity deviation {max(fds):.3e} > {ftol}")
        expect = spec.checks.get("slope")
        if expect is not None:
            tol = float(spec.checks.get("slope_tol", 0.4))
            for s in slopes[1:]:
                if s is not None and abs(s - float(expect)) > tol:
                    res.failures.append(f"D={D:g}: derivative slope {s:.3f} outside {expect} +/- {tol}")
    path = os.path.join(out_dir, "deriv.csv")
    write_csv(path, ["D", "h", "beta", "sup_error", "slope", "identity_check"], rows,
              _base_config(spec, scheme=scheme.describe()))
    res.files.append(path)
    return res


def _finite_difference(f, x, beta, step):
    """Central difference of order |beta| by repeated application along each axis."""
    x = np.asarray(x, dtype=float)

    def apply(g, axis):
        def inner(p):
            e = np.zeros(p.shape[-1])
            e[axis] = step
            return (g(p + e) - g(p - e)) / (2 * step)
        return inner

    g = f
    for axis, k in enumerate(beta):
        for _ in range(k):
            g = apply(g, axis)
    return np.asarray(g(x))


RUNNERS = {
    "converge": run_converge,
    "harmonic": run_harmonic,
    "saturation": run_saturation,
    "moments-check": run_moments_check,
    "deriv": run_deriv,
}


def run(spec: ExperimentSpec, out_dir: str, threads=None) -> Outcome:
    os.makedirs(out_dir, exist_ok=True)
    return RUNNERS[spec.kind](spec, out_dir, threads=threads)
