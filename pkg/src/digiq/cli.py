"""Command-line harness: ``digiq <subcommand> [options]``.

Every run is described by a :class:`RunConfig` (from a JSON file, flags, or
both; flags win) and produces one JSON report.  Exit codes: 0 when every
numeric contract check passes, 2 when one fails, 1 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .chebyshev import ExpmJob, expm_apply
from .decompose import edge_color_decompose
from .errors import ConfigError, DigiqError, MaxIterationsExceeded, SingularOperator
from .fixedpoint import FixedPointFormat
from .invexp import inverse_apply
from .mmio import parse_matrix_market
from .nrsolve import NRConfig, solve
from .operators import FAMILIES, SparseOperator, make_family
from .pauli import PauliString, PauliSum, chernoff_plan, operator_expectation
from .physics import GroundStateJob, ThermalJob, expectation_ratio, ground_state_project, thermal_sweep
from .state import DigitalState, dump_binary, export_csv, from_vector, load_binary, load_csv

__all__ = ["RunConfig", "Report", "SCHEMA", "SCHEMA_VERSION", "load_config", "run", "emit_report",
           "read_report", "main"]

SCHEMA = "digiq.report"
SCHEMA_VERSION = 1
SUBCOMMANDS = ("solve", "expm", "inverse-exp", "measure", "groundstate", "thermal", "decompose")
THREADS_ENV = "DIGIQ_THREADS"
_OUTPUT_FIELDS = ("report", "state_out", "csv")


@dataclass
class RunConfig:
    """One reproducible run.

    The operator comes from exactly one of ``family`` (with ``params``) or
    ``matrix`` (a Matrix Market path).  ``vector`` is ``ones``, ``uniform``,
    ``random``, ``basis:<j>`` or a ``.csv``/``.bin`` state file.
    ``format`` is ``"auto"``, ``"Q<q>.<f>"`` or ``[q, f]``.
    """

    subcommand: str
    family: str | None = None
    params: dict = field(default_factory=dict)
    matrix: str | None = None
    vector: str = "ones"
    eps: float = 1e-6
    eps0: float = 1e-8
    eps_m: float = 0.01
    delta: float = 0.5
    t: float = 1.0
    beta: float = 1.0
    T: float = 5.0
    kappa: float | None = None
    gap: float | None = None
    format: object = "auto"
    seed: int = 0
    observable: list = field(default_factory=list)
    mode: str = "exact"
    alpha: object = "optimal"
    max_iterations: int = 100_000
    threads: int | None = None
    report: str | None = None
    state_out: str | None = None
    csv: str | None = None

    def validate(self) -> None:
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}", field="subcommand")
        needs_op = self.subcommand != "measure"
        if needs_op and (self.family is None) == (self.matrix is None):
            raise ConfigError("give exactly one operator source: family or matrix", field="family")
        if self.family is not None and self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {sorted(FAMILIES)}",
                              field="family")
        for name in ("eps", "eps0", "eps_m", "delta"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not 0 < v < 1 + (name == "delta"):
                raise ConfigError(f"{name}={v!r} out of range", field=name)
        for name in ("t", "beta", "T"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v < 0:
                raise ConfigError(f"{name}={v!r} must be non-negative", field=name)
        if self.mode not in ("exact", "sampled"):
            raise ConfigError(f"unknown measurement mode {self.mode!r}", field="mode")
        if self.subcommand in ("measure",) and not self.observable:
            raise ConfigError("measure needs an observable", field="observable")
        resolve_format(self.format)
        parse_observable(self.observable)

    @property
    def fmt(self):
        return resolve_format(self.format)


@dataclass
class Report:
    subcommand: str
    seed: int
    inputs: dict
    operator: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    histories: dict = field(default_factory=dict)
    wall_time: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def satisfied(self) -> bool:
        return all(c["ok"] for c in self.checks)

    def check(self, name: str, value: float, bound: float, ok: bool | None = None) -> None:
        ok = bool(value <= bound) if ok is None else bool(ok)
        self.checks.append({"name": name, "value": value, "bound": bound, "ok": ok})

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "library_version": __version__,
            "backend": kernels.BACKEND,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "inputs": self.inputs,
            "operator": self.operator,
            "derived": self.derived,
            "results": self.results,
            "contract": {"satisfied": self.satisfied, "checks": self.checks},
            "histories": self.histories,
            "notes": self.notes,
            "wall_time": self.wall_time,
        }


# --- config ------------------------------------------------------------------

_FMT_RE = re.compile(r"^Q(\d+)\.(\d+)$")


def resolve_format(spec):
    if spec == "auto" or spec is None:
        return "auto"
    if isinstance(spec, FixedPointFormat):
        return spec
    try:
        if isinstance(spec, str):
            m = _FMT_RE.match(spec.strip())
            if not m:
                raise ValueError(spec)
            q, f = int(m.group(1)), int(m.group(2))
        else:
            q, f = (int(v) for v in spec)
        return FixedPointFormat(q, f)
    except (ValueError, TypeError, DigiqError) as exc:
        raise ConfigError(f"bad register format {spec!r}: use 'auto', 'Q<q>.<f>' or [q, f]",
                          field="format") from exc


def parse_observable(spec) -> PauliSum | None:
    """``[[coef, "XZI"], ...]`` or ``["XZI", ...]`` into a :class:`PauliSum`."""
    if not spec:
        return None
    terms = []
    try:
        for item in spec:
            if isinstance(item, str):
                terms.append((1.0, PauliString(item)))
            else:
                coef, label = item
                terms.append((float(coef), PauliString(label)))
        return PauliSum(tuple(terms))
    except (ValueError, TypeError, DigiqError) as exc:
        raise ConfigError(f"bad observable {spec!r}: {exc}", field="observable") from exc


def _field_line(text: str, name: str) -> int | None:
    m = re.search(r'"' + re.escape(name) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config; malformed input raises :class:`ConfigError` with line/field."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc.msg}", line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object", line=1)
    known = {f.name for f in fields(RunConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown field {key!r}", field=key, line=_field_line(text, key))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "subcommand" not in raw:
        raise ConfigError("missing subcommand", field="subcommand")
    cfg = RunConfig(**raw)
    try:
        cfg.validate()
    except ConfigError as exc:
        if exc.field and exc.line is None:
            raise ConfigError(exc.message, exc.field, _field_line(text, exc.field)) from None
        raise
    return cfg


# --- inputs ------------------------------------------------------------------

def build_operator(cfg: RunConfig) -> SparseOperator:
    if cfg.matrix is not None:
        return parse_matrix_market(cfg.matrix)
    params = dict(cfg.params)
    if cfg.family == "random_hermitian":
        params.setdefault("seed", cfg.seed)
    try:
        return make_family(cfg.family, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {cfg.family}: {exc}", field="params") from None


def build_vector(cfg: RunConfig, dim: int):
    spec = cfg.vector
    if spec == "ones":
        return np.ones(dim, dtype=complex)
    if spec == "uniform":
        return np.ones(dim, dtype=complex) / math.sqrt(dim)
    if spec == "random":
        v = np.random.default_rng(cfg.seed).standard_normal(dim).astype(complex)
        return v / np.linalg.norm(v)
    if spec.startswith("basis:"):
        try:
            j = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad basis index in {spec!r}", field="vector") from None
        if not 0 <= j < dim:
            raise ConfigError(f"basis index {j} outside [0, {dim})", field="vector")
        v = np.zeros(dim, dtype=complex)
        v[j] = 1
        return v
    p = Path(spec)
    if not p.exists():
        raise ConfigError(f"vector source {spec!r} is not a keyword or an existing file", field="vector")
    fmt = cfg.fmt if isinstance(cfg.fmt, FixedPointFormat) else FixedPointFormat()
    s = load_binary(p.read_bytes()) if p.suffix == ".bin" else load_csv(p.read_text(), fmt)
    return s


def _vec_values(v) -> np.ndarray:
    return v.values() if isinstance(v, DigitalState) else np.asarray(v, dtype=complex)


def _describe_operator(A: SparseOperator) -> dict:
    return {"family": A.family, "dim": A.dim, "nnz": A.nnz, "d": A.d, "hermitian": A.hermitian}


def _fmt_dict(fmt: FixedPointFormat) -> dict:
    return {"q_total": fmt.q_total, "f": fmt.f}


# --- subcommands -------------------------------------------------------------

def _run_decompose(cfg, rep):
    A = build_operator(cfg)
    rep.operator = _describe_operator(A)
    dec = edge_color_decompose(A)
    parts = [{"color": p.color, "blocks": len(p.blocks),
              "two_by_two": sum(1 for b in p.blocks if len(b.indices) == 2),
              "disjoint": p.index_sets_disjoint()} for p in dec.parts]
    rep.results = {"parts": dec.part_count, "part_detail": parts}
    rep.derived = {"d": A.d, "part_bound": max(1, 2 * A.d - 1)}
    rep.check("part_count", dec.part_count, max(1, 2 * A.d - 1))
    exact = dec.exact_dense() == {k: v for k, v in A.exact_entries.items() if v != (0, 0)}
    rep.check("exact_reconstruction", 0 if exact else 1, 0)
    rep.check("disjoint_blocks", 0 if all(p["disjoint"] for p in parts) else 1, 0)
    return None


def _run_solve(cfg, rep):
    A = build_operator(cfg)
    rep.operator = _describe_operator(A)
    b = build_vector(cfg, A.dim)
    alpha = cfg.alpha if isinstance(cfg.alpha, str) else float(cfg.alpha)
    nr = NRConfig(alpha_mode=alpha, eps=cfg.eps, max_iterations=cfg.max_iterations, fmt=cfg.fmt)
    try:
        res = solve(A, b, nr)
    except MaxIterationsExceeded as exc:
        rep.histories["residual"] = [float(v) for v in exc.residual_history]
        rep.check("fractional_residual", math.inf, cfg.eps, ok=False)
        rep.notes.append(str(exc))
        return None
    except SingularOperator as exc:
        rep.check("nonsingular", 1, 0, ok=False)
        rep.notes.append(str(exc))
        return None
    est = res.spectral
    rep.derived = {
        "alpha": res.alpha,
        "alpha_mode": str(alpha),
        "contraction_bound": res.contraction_bound,
        "apriori_index": res.apriori_index,
        "format": _fmt_dict(res.fmt),
        "formula_inputs": {
            "d": A.d, "eps": cfg.eps,
            "sigma_min_lower": est.sigma_min_lower if est else None,
            "sigma_max_upper": est.sigma_max_upper if est else None,
            "b_norm": res.b_norm,
        },
    }
    rep.results = {"iterations": res.iterations, "fractional_residual": res.fractional_residual,
                   "observed_contraction": res.contraction_estimate, "converged": res.converged}
    rep.histories["residual"] = list(res.residual_history)
    rep.check("fractional_residual", res.fractional_residual, cfg.eps)
    return res.solution


def _run_expm(cfg, rep):
    A = build_operator(cfg)
    rep.operator = _describe_operator(A)
    b = build_vector(cfg, A.dim)
    res = expm_apply(ExpmJob(A, cfg.t, cfg.eps0, fmt=cfg.fmt), b, return_info=True)
    rep.derived = {"r": res.r, "t_scaled": res.t_scaled, "log_prefactor": res.log_prefactor,
                   "format": _fmt_dict(res.fmt),
                   "formula_inputs": {"t": cfg.t, "eps0": cfg.eps0,
                                      "scale": float(res.record.scale) if res.record else None,
                                      "shift": float(res.record.shift) if res.record else None}}
    rep.results = {"tail_bound": res.tail_bound, "prefactor": res.prefactor, "products": res.products}
    rep.check("scaled_tail_bound", res.tail_bound, cfg.eps0 * res.prefactor)
    return res.state


def _run_inverse(cfg, rep):
    A = build_operator(cfg)
    rep.operator = _describe_operator(A)
    b = build_vector(cfg, A.dim)
    fmt = cfg.fmt if isinstance(cfg.fmt, FixedPointFormat) else None
    res = inverse_apply(A, b, cfg.eps, kappa=cfg.kappa, fmt=fmt, return_info=True)
    g = res.grid
    rep.derived = {"n_disc": g.n_disc, "h": g.h, "p": g.p, "p_prime": g.p_prime, "terms": g.size,
                   "r_tot": res.r_tot, "format": _fmt_dict(res.fmt),
                   "formula_inputs": {"eps": cfg.eps, "kappa": g.kappa, "spectral_bounds": list(g.bounds)}}
    rep.results = {"skipped_terms": res.skipped_terms, "skipped_mass": res.skipped_mass,
                   "error_budget": res.error_budget}
    rep.histories["r_j_histogram"] = [[k, v] for k, v in g.order_histogram().items()]
    if A.dim <= 1024:
        x = np.linalg.solve(A.dense(), _vec_values(b)[: A.dim])
        err = float(np.linalg.norm(res.state.values()[: A.dim] - x) / np.linalg.norm(x))
        rep.results["dense_oracle_fractional_error"] = err
        rep.check("fractional_error", err, res.error_budget)
    return res.state


def _run_measure(cfg, rep):
    O = parse_observable(cfg.observable)
    dim = 1 << O.n
    v = build_vector(cfg, dim)
    fmt = cfg.fmt if isinstance(cfg.fmt, FixedPointFormat) else FixedPointFormat()
    s = v if isinstance(v, DigitalState) else from_vector(v, fmt)
    mode = cfg.mode
    plan = chernoff_plan(cfg.delta, cfg.eps_m) if mode == "sampled" else None
    out = operator_expectation(s, O, mode=mode, plan=plan, seed=cfg.seed)
    rep.derived = {"K": O.K, "k": max(sig.k for _, sig in O.terms), "format": _fmt_dict(s.fmt)}
    if plan is not None:
        rep.derived.update({"m": plan.m, "formula_inputs": {"delta": plan.delta, "eps_m": plan.eps_m,
                                                            "p_bound": plan.p_bound}})
    rep.results = {"value": out.value, "error_bound": out.error_bound, "mode": out.mode}
    return None


def _run_groundstate(cfg, rep):
    H = build_operator(cfg)
    rep.operator = _describe_operator(H)
    psi = build_vector(cfg, H.dim)
    state, diag = ground_state_project(GroundStateJob(H, psi, cfg.T, cfg.eps, cfg.gap, cfg.fmt))
    rep.derived = {"segments": diag.segments, "products": diag.products, "format": _fmt_dict(diag.fmt),
                   "gap": diag.gap, "gap_source": diag.gap_source,
                   "formula_inputs": {"T": cfg.T, "eps": cfg.eps, "energy_lower": diag.energy_lower}}
    rep.results = {"log_norm": diag.log_norm, "log_scale": diag.log_scale,
                   "contamination_bound": diag.contamination_bound}
    O = parse_observable(cfg.observable)
    if O is not None:
        rep.results["ratios"] = {str(sig): expectation_ratio(state, PauliSum(((1.0, sig),)))
                                 for _, sig in O.terms}
        rep.results["observable_ratio"] = expectation_ratio(state, O)
    if diag.gap_source == "dense-oracle":
        rep.notes.append("gap taken from a dense eigensolve")
    rep.check("nonzero_state", 0 if diag.log_norm > -math.inf else 1, 0)
    return state


def _run_thermal(cfg, rep):
    H = build_operator(cfg)
    rep.operator = _describe_operator(H)
    O = parse_observable(cfg.observable) or PauliSum.identity(max(1, (H.dim - 1).bit_length()))
    res = thermal_sweep(ThermalJob(H, cfg.beta, O, cfg.eps, cfg.fmt), workers=cfg.threads or 1)
    rep.derived = {"sweep_size": res.sweep_size, "products": res.products,
                   "format": _fmt_dict(res.fmt) if res.fmt else None,
                   "formula_inputs": {"beta": cfg.beta, "eps": cfg.eps}}
    rep.results = {"value": res.value, "imag_residue": res.imag_residue}
    rep.notes.append("trace evaluated by an exact basis sweep; cost grows with the dimension")
    rep.check("finite", 0 if math.isfinite(res.value) else 1, 0)
    return None


_DISPATCH = {
    "decompose": _run_decompose,
    "solve": _run_solve,
    "expm": _run_expm,
    "inverse-exp": _run_inverse,
    "measure": _run_measure,
    "groundstate": _run_groundstate,
    "thermal": _run_thermal,
}


def run(cfg: RunConfig) -> tuple[Report, DigitalState | None]:
    """Execute one configured run; returns the report and the output state (if any)."""
    cfg.validate()
    if cfg.threads is None:
        env = os.environ.get(THREADS_ENV)
        cfg.threads = int(env) if env and env.isdigit() else 1
    # output destinations do not affect results, so identical runs report identically
    inputs = {k: v for k, v in asdict(cfg).items() if k not in _OUTPUT_FIELDS}
    rep = Report(cfg.subcommand, cfg.seed, inputs)
    t0 = time.perf_counter()
    state = _DISPATCH[cfg.subcommand](cfg, rep)
    rep.wall_time = time.perf_counter() - t0
    return rep, state


# --- output ------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)  # "inf", "-inf", "nan"
    return v


def emit_report(report: Report, path=None, csv_path=None) -> str:
    """Serialise ``report`` as JSON (floats as shortest round-trip decimals).

    With ``csv_path`` the first history series is also written as CSV, one
    row per entry after the header.
    """
    text = json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    if csv_path and report.histories:
        name, series = next(iter(report.histories.items()))
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if series and isinstance(series[0], list):
                w.writerow(["key", name])
                w.writerows(series)
            else:
                w.writerow(["index", name])
                w.writerows([i, repr(float(v))] for i, v in enumerate(series))
    return text


def read_report(text: str) -> dict:
    """Parse an emitted report, restoring non-finite floats."""
    def fix(v):
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        if isinstance(v, list):
            return [fix(x) for x in v]
        if v in ("inf", "-inf", "nan"):
            return float(v)
        return v
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ConfigError("not a digiq report", field="schema")
    return fix(doc)


# --- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _kv(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="digiq", description="Fixed-point digital-state linear algebra runs.")
    p.add_argument("--version", action="version", version=f"digiq {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run config (flags override its fields)")
        sp.add_argument("--family", choices=sorted(FAMILIES))
        sp.add_argument("--param", action="append", type=_kv, default=None, metavar="KEY=VALUE",
                        help="family parameter, repeatable")
        sp.add_argument("--matrix", help="Matrix Market operator file")
        sp.add_argument("--vector", help="ones | uniform | random | basis:<j> | state file")
        sp.add_argument("--epsilon", "--eps", dest="eps", type=float)
        sp.add_argument("--eps0", type=float)
        sp.add_argument("--eps-m", dest="eps_m", type=float)
        sp.add_argument("--delta", type=float)
        sp.add_argument("--t", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--T", dest="T", type=float)
        sp.add_argument("--kappa", type=float)
        sp.add_argument("--gap", type=float)
        sp.add_argument("--format", help="auto | Q<q>.<f>")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--observable", action="append", metavar="[COEF:]LABEL",
                        help="Pauli term, repeatable")
        sp.add_argument("--mode", choices=["exact", "sampled"])
        sp.add_argument("--alpha")
        sp.add_argument("--max-iterations", dest="max_iterations", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--report", help="write the JSON report here (default: stdout)")
        sp.add_argument("--state-out", dest="state_out", help="state dump (.bin or .csv)")
        sp.add_argument("--csv", help="history series as CSV")
    return p


def _observable_flags(items):
    out = []
    for it in items:
        if ":" in it:
            c, label = it.split(":", 1)
            try:
                out.append([float(c), label])
            except ValueError:
                raise ConfigError(f"bad observable coefficient in {it!r}", field="observable") from None
        else:
            out.append([1.0, it])
    return out


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    over = {k: v for k, v in vars(ns).items() if k not in ("config", "param", "observable")}
    if ns.param is not None:
        over["params"] = dict(ns.param)
    if ns.observable is not None:
        over["observable"] = _observable_flags(ns.observable)
    if ns.alpha is not None:
        try:
            over["alpha"] = float(ns.alpha)
        except ValueError:
            over["alpha"] = ns.alpha
    if ns.config:
        return load_config(ns.config, over)
    cfg = RunConfig(**{k: v for k, v in over.items() if v is not None})
    cfg.validate()
    return cfg


def _write_state(state: DigitalState, path: str) -> None:
    p = Path(path)
    if p.suffix == ".csv":
        p.write_text(export_csv(state))
    else:
        p.write_bytes(dump_binary(state))


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        cfg = config_from_args(ns)
        rep, state = run(cfg)
    except ConfigError as exc:
        print(f"digiq: usage error: {exc}", file=sys.stderr)
        return 1
    except DigiqError as exc:
        print(f"digiq: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"digiq: {exc}", file=sys.stderr)
        return 1
    text = emit_report(rep, cfg.report, cfg.csv)
    if cfg.report is None:
        sys.stdout.write(text)
    if cfg.state_out and state is not None:
        _write_state(state, cfg.state_out)
    return 0 if rep.satisfied else 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
