"""Dataset and config ingestion, report serialisation and text rendering."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import ConfigError, SchemaError
from .model import CaseControlSample, ConstraintSpec, ExternalSummary
from .solver import SolverConfig

OUTCOME_GUESSES = ("y", "outcome", "Outcome", "case")


# ---------------------------------------------------------------------------
# datasets

def read_table(path) -> pd.DataFrame:
    """Header-row delimited text; the delimiter is sniffed."""
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"dataset {path} does not exist")
    try:
        return pd.read_csv(path, sep=None, engine="python")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise SchemaError(f"cannot parse {path}: {exc}") from exc


def resolve_roles(frame: pd.DataFrame, outcome=None, covariates=None):
    """Pick the outcome and covariate columns, checking that they exist."""
    cols = list(frame.columns)
    if outcome is None:
        found = [c for c in OUTCOME_GUESSES if c in cols]
        if not found:
            raise SchemaError(f"no outcome column given and none of {OUTCOME_GUESSES} present")
        outcome = found[0]
    if outcome not in cols:
        raise SchemaError(f"outcome column {outcome!r} not in {cols}")
    if covariates is None:
        covariates = [c for c in cols if c != outcome]
    missing = [c for c in covariates if c not in cols]
    if missing:
        raise SchemaError(f"covariate columns {missing} not in {cols}")
    if not covariates:
        raise SchemaError("at least one covariate column is required")
    return outcome, list(covariates)


def validate_frame(frame: pd.DataFrame, outcome, covariates, source="data") -> pd.DataFrame:
    """Check for missing values and a strictly binary outcome."""
    sub = frame[[outcome] + list(covariates)]
    bad = sub.isna()
    if bad.to_numpy().any():
        lines = []
        for idx in np.flatnonzero(bad.to_numpy().any(axis=1))[:20]:
            cols = [c for c in sub.columns if bad.iloc[idx][c]]
            lines.append(f"  line {idx + 2}: missing {', '.join(cols)}")
        raise SchemaError(f"{source}: {int(bad.to_numpy().any(axis=1).sum())} rows with "
                          "missing values\n" + "\n".join(lines))
    y = sub[outcome]
    num = pd.to_numeric(y, errors="coerce")
    if num.isna().any() or not num.isin([0, 1]).all():
        odd = sorted({str(v) for v, ok in zip(y, num.isin([0, 1])) if not ok})
        raise SchemaError(f"{source}: outcome column {outcome!r} must be 0/1; found {odd[:5]}")
    X = sub[list(covariates)].apply(pd.to_numeric, errors="coerce")
    if X.isna().to_numpy().any():
        rows = np.flatnonzero(X.isna().to_numpy().any(axis=1))[:20]
        raise SchemaError(f"{source}: non-numeric covariate values on lines "
                          f"{', '.join(str(r + 2) for r in rows)}")
    out = X.copy()
    out.insert(0, outcome, num.astype(int))
    return out


def drop_zero_rows(frame: pd.DataFrame, columns) -> pd.DataFrame:
    """Remove rows where any listed column equals zero (zero coded as missing)."""
    if not columns:
        return frame
    keep = ~(frame[list(columns)] == 0).any(axis=1)
    return frame.loc[keep].reset_index(drop=True)


def standardize(frame: pd.DataFrame, covariates):
    """z-score covariates with the full-data mean and SD (ddof=1)."""
    out = frame.copy()
    moments = {}
    for c in covariates:
        m, s = float(frame[c].mean()), float(frame[c].std(ddof=1))
        if not s > 0:
            raise SchemaError(f"covariate {c!r} is constant; cannot standardize")
        out[c] = (frame[c] - m) / s
        moments[c] = {"mean": m, "sd": s}
    return out, moments


def to_sample(frame: pd.DataFrame, outcome, covariates) -> CaseControlSample:
    return CaseControlSample(frame[outcome].to_numpy(dtype=float),
                             frame[list(covariates)].to_numpy(dtype=float))


def load_dataset(path, outcome=None, covariates=None, standardize_covariates=False,
                 drop_zero=None) -> CaseControlSample:
    """Read, validate and optionally standardize a case-control data file."""
    frame = read_table(path)
    outcome, covariates = resolve_roles(frame, outcome, covariates)
    frame = validate_frame(frame, outcome, covariates, source=str(path))
    frame = drop_zero_rows(frame, drop_zero)
    if standardize_covariates:
        frame, _ = standardize(frame, covariates)
    return to_sample(frame, outcome, covariates)


# ---------------------------------------------------------------------------
# run config

def _marks(node, path, out):
    out[path] = node.start_mark
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = f"{path}.{k.value}" if path else str(k.value)
            out[p] = k.start_mark
            _marks(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _marks(item, f"{path}[{i}]", out)


@dataclass
class RunConfig:
    mode: str
    data: dict = field(default_factory=dict)
    constraint: dict = field(default_factory=lambda: {"kind": "identity"})
    external: dict = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulation: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None
    source: str | None = None
    marks: dict = field(default_factory=dict, repr=False)

    def where(self, path):
        m = self.marks.get(path)
        if m is None or self.source is None:
            return self.source
        return f"{self.source}:{m.line + 1}:{m.column + 1}"

    def error(self, path, message):
        return ConfigError(message, field=path, location=self.where(path))

    def constraint_spec(self, p) -> ConstraintSpec:
        try:
            return ConstraintSpec.from_dict(self.constraint, p)
        except (ValueError, KeyError, TypeError) as exc:
            raise self.error("constraint", str(exc)) from exc

    def external_summary(self, q) -> ExternalSummary:
        ext = self.external
        if "mu_tilde" not in ext:
            raise self.error("external.mu_tilde", "required for fit")
        mu = np.asarray(ext["mu_tilde"], dtype=float).reshape(-1)
        if mu.size != q:
            raise self.error("external.mu_tilde",
                             f"has length {mu.size} but the constraint has q={q}")
        weight = ext.get("weight", "optimal")
        if isinstance(weight, list):
            weight = np.asarray(weight, dtype=float)
        try:
            return ExternalSummary(mu, ext.get("n_external"), weight)
        except (ValueError, TypeError) as exc:
            raise self.error("external", str(exc)) from exc


MODES = ("fit", "simulate", "analyze")
_SECTIONS = {"mode", "data", "constraint", "external", "solver", "simulation",
             "analysis", "seed", "output"}


def _type_check(cfg, path, value, kind, desc):
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise cfg.error(path, f"must be {desc}, got {value!r}")


def parse_config(text: str, source="<config>") -> RunConfig:
    """Parse YAML run config text into a validated :class:`RunConfig`."""
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"not valid YAML ({getattr(exc, 'problem', exc)})", location=loc)
    marks = {}
    if node is not None:
        _marks(node, "", marks)
    cfg = RunConfig(mode="", source=source, marks=marks)
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", location=source)
    for key in raw:
        if key not in _SECTIONS:
            raise cfg.error(str(key), f"unknown field; expected one of {sorted(_SECTIONS)}")
    mode = raw.get("mode")
    if mode not in MODES:
        raise cfg.error("mode", f"must be one of {MODES}, got {mode!r}")
    cfg.mode = mode
    for sec in ("data", "constraint", "external", "simulation", "analysis"):
        if sec in raw:
            _type_check(cfg, sec, raw[sec], dict, "a mapping")
            setattr(cfg, sec, dict(raw[sec]))
    if "seed" in raw:
        _type_check(cfg, "seed", raw["seed"], int, "an integer")
        cfg.seed = raw["seed"]
    if "output" in raw:
        _type_check(cfg, "output", raw["output"], str, "a path string")
        cfg.output = raw["output"]
    if "solver" in raw:
        _type_check(cfg, "solver", raw["solver"], dict, "a mapping")
        known = {f.name for f in fields(SolverConfig)}
        for k in raw["solver"]:
            if k not in known:
                raise cfg.error(f"solver.{k}", f"unknown solver setting; expected one of {sorted(known)}")
        try:
            cfg.solver = SolverConfig(**raw["solver"])
        except (TypeError, ValueError) as exc:
            raise cfg.error("solver", str(exc)) from exc
    d = cfg.data
    if "covariates" in d:
        _type_check(cfg, "data.covariates", d["covariates"], list, "a list of column names")
    if "standardize" in d:
        _type_check(cfg, "data.standardize", d["standardize"], bool, "true or false")
    ext = cfg.external
    if "n_external" in ext and ext["n_external"] is not None:
        _type_check(cfg, "external.n_external", ext["n_external"], int, "a positive integer")
        if ext["n_external"] < 1:
            raise cfg.error("external.n_external", "must be a positive integer")
    if "mu_tilde" in ext:
        _type_check(cfg, "external.mu_tilde", ext["mu_tilde"], list, "a list of numbers")
    if "weight" in ext and not (ext["weight"] in ("optimal", "population")
                                or isinstance(ext["weight"], list)):
        raise cfg.error("external.weight", "must be 'optimal', 'population' or a matrix")
    sim = cfg.simulation
    if "reps" in sim:
        _type_check(cfg, "simulation.reps", sim["reps"], int, "a positive integer")
        if sim["reps"] < 1:
            raise cfg.error("simulation.reps", "must be a positive integer")
    if "estimators" in sim:
        _type_check(cfg, "simulation.estimators", sim["estimators"], list, "a list")
    an = cfg.analysis
    if "reps" in an:
        _type_check(cfg, "analysis.reps", an["reps"], int, "a positive integer")
    if mode == "fit" and "path" not in d:
        raise cfg.error("data.path", "required for mode 'fit'")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(), source=str(path))


def check_columns(cfg: RunConfig, frame: pd.DataFrame):
    """Config-level column check that reports the config position."""
    cols = list(frame.columns)
    out = cfg.data.get("outcome")
    if out is not None and out not in cols:
        raise cfg.error("data.outcome", f"column {out!r} not in dataset columns {cols}")
    for i, c in enumerate(cfg.data.get("covariates") or []):
        if c not in cols:
            raise cfg.error(f"data.covariates[{i}]", f"column {c!r} not in dataset columns {cols}")


# ---------------------------------------------------------------------------
# reports

def to_jsonable(obj):
    """Plain JSON types; NaN/inf become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_report(doc) -> str:
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(doc, prefix):
    """Write ``prefix.json`` and ``prefix.txt``; return both paths."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    doc = json.loads(dumps_report(doc))
    jpath = prefix.with_name(prefix.name + ".json")
    tpath = prefix.with_name(prefix.name + ".txt")
    jpath.write_text(dumps_report(doc))
    tpath.write_text(render_text(doc))
    return jpath, tpath


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())


def _fmt(x, digits=4):
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, int):
        return str(x)
    return f"{x:.{digits}f}"


def _table(header, rows):
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    lines = ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(r, widths)))
             for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _render_fit(doc):
    out = [f"fit report ({doc['inputs']['weight_mode']} weighting)",
           f"data: {doc['inputs']['data']}  n={doc['inputs']['n']}  n1={doc['inputs']['n1']}"
           f"  n0={doc['inputs']['n0']}",
           f"converged: {doc['fit']['converged']}  iterations: {doc['fit']['iterations']}"
           f"  gradient norm: {doc['fit']['gradient_norm']:.3e}", ""]
    rows = [[r["parameter"], _fmt(r["estimate"]), _fmt(r["se"]), _fmt(r["ci_low"]), _fmt(r["ci_high"])]
            for r in doc["estimates"]]
    out.append(_table(["parameter", "estimate", "se", "ci_low", "ci_high"], rows))
    if doc.get("mle"):
        out += ["", "prospective MLE (internal data only)"]
        rows = [[r["parameter"], _fmt(r["estimate"]), _fmt(r["se"])] for r in doc["mle"]]
        out.append(_table(["parameter", "estimate", "se"], rows))
    return "\n".join(out) + "\n"


def _render_mc(doc):
    s = doc["scheme"]
    out = [f"Monte Carlo: scheme {s['name']}  reps={doc['reps']}  seed={doc['master_seed']}"
           f"  N/n={s['external_multiplier']}  p={s['p_true']:.4f}  q={s['q_design']:.4f}"]
    if doc["flagged"]:
        out.append("WARNING: more than 2% of replications failed for some estimator")
    rows = []
    for est in sorted(doc["estimators"]):
        e = doc["estimators"][est]
        for par in sorted(e["params"]):
            m = e["params"][par]
            rows.append([est, par, _fmt(m["bias"]), _fmt(m["emp_sd"]), _fmt(m["mean_se"]),
                         _fmt(m["coverage"], 3), str(e["failed"])])
    out += ["", _table(["estimator", "parameter", "bias", "emp_sd", "mean_se", "coverage", "failed"],
                       rows)]
    return "\n".join(out) + "\n"


def _render_analysis(doc):
    meta = doc["metadata"]
    out = [f"real-data analysis: {meta['data']}  reps={meta['reps']}  seed={meta['seed']}",
           f"standardization: {meta['standardization']}"]
    params = doc["parameters"]
    rows = []
    for key, label, est_key, se_key in (("internal_mle", "internal CC MLE", "EST.A", "ESE.A"),
                                        ("mele_V", "MELE V", "EST.A", "ESE.A"),
                                        ("full_mle", "full-data MLE", "EST", "ESE")):
        r = doc["rows"][key]
        rows.append([label, est_key] + [_fmt(r["estimate"][p], 3) for p in params]
                    + [_fmt(r["case_prop"], 3)])
        rows.append(["", se_key] + [_fmt(r["se"][p], 3) for p in params] + [""])
    out += ["", _table(["method", ""] + params + ["case_prop"], rows)]
    return "\n".join(out) + "\n"


def render_text(doc) -> str:
    kind = doc.get("kind")
    if kind == "fit":
        return _render_fit(doc)
    if kind == "monte_carlo":
        return _render_mc(doc)
    if kind == "analysis":
        return _render_analysis(doc)
    raise SchemaError(f"unknown report kind {kind!r}")
