"""Run configuration: JSON ingestion, dotted overrides and static validation.

A config is a JSON object with the blocks ``model``, ``factors``,
``parameters`` and (per task) ``algorithm``, ``rounding``, ``design``,
``reference`` and ``point``. Every problem is reported as a
:class:`ValidationError` whose ``key`` is the dotted path of the offending
entry.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .design import ApproximateDesign, ExactDesign
from .engine import ForLionConfig
from .errors import ValidationError
from .expectation import BoxPrior, ParameterSample, read_parameter_sample
from .formula import parse_formula
from .model import ModelSpec
from .providers import InfoProvider, IntegralEWProvider, LocalProvider, SampleEWProvider
from .rounding import RoundingConfig
from .space import DesignSpace, Factor

SCHEMA_VERSION = 1
TASKS = ("design", "ew-design", "round", "efficiency", "info")

_TOP_KEYS = {
    "schema_version", "task", "seed", "model", "factors", "fixed_discrete_list",
    "parameters", "algorithm", "rounding", "design", "reference", "point",
}
_MODEL_KEYS = {"family", "link", "J", "formula"}
_PRIOR_KEYS = {"lower", "upper", "density", "cubature_reltol", "cubature_max_evals", "mode"}
_ROUNDING_KEYS = {"delta2", "grid", "N", "allocate_on", "allocation"}
_ALGORITHM_KEYS = {f.name for f in fields(ForLionConfig)} - {"seed"}


# --------------------------------------------------------------------------
# raw JSON handling


def load_raw(path) -> dict:
    """Read a config file; unreadable or non-JSON files raise ValidationError."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}", key="config") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})", key="config") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: top level must be a JSON object", key="config")
    return raw


def parse_value(text: str) -> Any:
    """JSON literal if it parses, else the plain string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: Sequence[tuple[str, Any]]) -> dict:
    """Copy of ``raw`` with each dotted key set to its value.

    Missing intermediate objects are created; a non-object on the path is an
    error.
    """
    out = copy.deepcopy(raw)
    for key, value in overrides:
        parts = key.split(".")
        if not all(parts):
            raise ValidationError(f"malformed override key {key!r}", key=key)
        node = out
        for i, part in enumerate(parts[:-1]):
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            elif not isinstance(nxt, dict):
                raise ValidationError(
                    f"cannot set {key!r}: {'.'.join(parts[: i + 1])} is not an object", key=key
                )
            node = nxt
        node[parts[-1]] = value
    return out


def config_hash(raw: dict) -> str:
    """sha256 of the canonical JSON form."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# typed config


@dataclass
class RunConfig:
    task: str
    seed: int
    space: DesignSpace
    model: ModelSpec
    mode: str  # "local" | "prior" | "samples"
    theta: np.ndarray | None
    prior: BoxPrior | None
    sample: ParameterSample | None
    prior_mode: str
    algorithm: ForLionConfig
    rounding: RoundingConfig | None
    allocate_on: str
    allocation: str
    design: ApproximateDesign | ExactDesign | None
    reference: ApproximateDesign | ExactDesign | None
    point: np.ndarray | None
    raw: dict

    def provider(self) -> InfoProvider:
        if self.mode == "local":
            return LocalProvider(self.model, self.theta)
        if self.mode == "prior":
            return IntegralEWProvider(self.model, self.prior, mode=self.prior_mode)
        return SampleEWProvider(self.model, self.sample)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


class _Collector:
    """Runs block builders and gathers their ValidationErrors."""

    def __init__(self):
        self.errors: list[ValidationError] = []

    def run(self, key: str, fn, *args):
        try:
            return fn(*args)
        except ValidationError as exc:
            if exc.key is None or exc.key == "" or not exc.key.startswith(key.split(".")[0]):
                exc = ValidationError(exc.message, key=key)
            self.errors.append(exc)
        except (TypeError, ValueError, KeyError) as exc:
            self.errors.append(ValidationError(f"malformed entry ({exc})", key=key))
        return None

    def add(self, message: str, key: str) -> None:
        self.errors.append(ValidationError(message, key=key))


def _unknown(c: _Collector, block: dict, allowed: set, prefix: str) -> None:
    for k in sorted(set(block) - allowed):
        c.add(f"unknown key {k!r}", f"{prefix}{k}")


def _need_object(c: _Collector, raw: dict, key: str) -> dict | None:
    v = raw.get(key)
    if v is None:
        return None
    if not isinstance(v, dict):
        c.add("must be a JSON object", key)
        return None
    return v


def _number(v, key: str, integer: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"expected a number, got {v!r}", key=key)
    if integer and int(v) != v:
        raise ValidationError(f"expected an integer, got {v!r}", key=key)
    return int(v) if integer else float(v)


def _vector(v, key: str, n: int | None = None) -> np.ndarray:
    if not isinstance(v, list):
        raise ValidationError("expected a list of numbers", key=key)
    out = np.array([_number(a, key) for a in v], dtype=float)
    if n is not None and out.size != n:
        raise ValidationError(f"expected {n} values, got {out.size}", key=key)
    if not np.all(np.isfinite(out)):
        raise ValidationError("values must be finite", key=key)
    return out


def _factor(i: int, spec) -> Factor:
    key = f"factors[{i}]"
    if not isinstance(spec, dict):
        raise ValidationError("must be an object", key=key)
    extra = set(spec) - {"name", "kind", "lower", "upper", "levels"}
    if extra:
        raise ValidationError(f"unknown key(s) {sorted(extra)}", key=key)
    name = spec.get("name")
    if not isinstance(name, str) or not name.isidentifier():
        raise ValidationError(f"factor name must be an identifier, got {name!r}", key=f"{key}.name")
    kind = spec.get("kind", "continuous")
    if kind == "continuous":
        lo = _number(spec.get("lower"), f"{key}.lower")
        hi = _number(spec.get("upper"), f"{key}.upper")
        if not lo < hi:
            raise ValidationError(f"lower ({lo}) must be < upper ({hi})", key=key)
        return Factor.continuous(name, lo, hi)
    if kind == "discrete":
        levels = _vector(spec.get("levels"), f"{key}.levels")
        if len(set(levels.tolist())) < 2:
            raise ValidationError("needs at least 2 distinct levels", key=f"{key}.levels")
        return Factor.discrete(name, levels.tolist())
    raise ValidationError(f"unknown kind {kind!r}", key=f"{key}.kind")


def _space(raw: dict) -> DesignSpace:
    facs = raw.get("factors")
    if not isinstance(facs, list) or not facs:
        raise ValidationError("need a non-empty list of factors", key="factors")
    factors = tuple(_factor(i, f) for i, f in enumerate(facs))
    try:
        return DesignSpace(factors, raw.get("fixed_discrete_list"))
    except ValidationError as exc:
        key = "fixed_discrete_list" if "combination" in exc.message or "fixed" in exc.message else "factors"
        raise ValidationError(exc.message, key=key) from None


def _model(block: dict, space: DesignSpace) -> ModelSpec:
    family = block.get("family")
    if family not in ("glm", "mlm"):
        raise ValidationError(f"family must be 'glm' or 'mlm', got {family!r}", key="model.family")
    link = block.get("link")
    if not isinstance(link, str):
        raise ValidationError("link must be a string", key="model.link")
    formula = block.get("formula")
    if family == "glm":
        if not isinstance(formula, str):
            raise ValidationError("a GLM formula is one string", key="model.formula")
        J = 2
    else:
        J = _number(block.get("J"), "model.J", integer=True)
        if not isinstance(formula, list) or not all(isinstance(t, str) for t in formula):
            raise ValidationError("an MLM formula is a list of J strings", key="model.formula")
        if len(formula) != J:
            raise ValidationError(f"MLM formula has {len(formula)} rows but J={J}", key="model.formula")
    try:
        f = parse_formula(formula, space)
    except ValidationError as exc:
        raise ValidationError(exc.message, key="model.formula") from None
    return ModelSpec(family, link, f, J)


def _prior(block: dict, p: int) -> BoxPrior:
    lo = _vector(block.get("lower"), "parameters.prior.lower", p)
    hi = _vector(block.get("upper"), "parameters.prior.upper", p)
    bad = np.flatnonzero(lo >= hi)
    if bad.size:
        raise ValidationError(
            f"lower must be < upper; violated at coordinate(s) {bad.tolist()}", key="parameters.prior"
        )
    kw = {}
    if "cubature_reltol" in block:
        kw["cubature_reltol"] = _number(block["cubature_reltol"], "parameters.prior.cubature_reltol")
    if "cubature_max_evals" in block:
        kw["cubature_max_evals"] = _number(
            block["cubature_max_evals"], "parameters.prior.cubature_max_evals", integer=True
        )
    return BoxPrior(lo, hi, block.get("density", "uniform-product"), **kw)


def _design(block, key: str, space: DesignSpace, base: Path):
    """An input design given inline or as a path to an earlier report."""
    if isinstance(block, dict) and "report" in block:
        path = base / block["report"]
        try:
            rep = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot load report {path}: {exc}", key=f"{key}.report") from None
        block = rep.get("design")
    if not isinstance(block, dict):
        raise ValidationError("expected {points, weights} or {points, counts}", key=key)
    pts = block.get("points")
    if not isinstance(pts, list) or not pts:
        raise ValidationError("points must be a non-empty list", key=f"{key}.points")
    P = np.array([_vector(r if isinstance(r, list) else [r], f"{key}.points", space.d) for r in pts])
    for i, x in enumerate(P):
        if not space.contains(x, atol=1e-9):
            raise ValidationError(f"point {x.tolist()} lies outside the design space", key=f"{key}.points[{i}]")
    if "counts" in block:
        n = _vector(block["counts"], f"{key}.counts", len(P))
        if np.any(n != np.round(n)) or np.any(n < 0) or n.sum() == 0:
            raise ValidationError("counts must be nonnegative integers", key=f"{key}.counts")
        return ExactDesign(P, n.astype(np.int64))
    w = _vector(block.get("weights"), f"{key}.weights", len(P))
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
        raise ValidationError(f"weights must be nonnegative and sum to 1 (sum {w.sum()!r})", key=f"{key}.weights")
    return ApproximateDesign(P, w / w.sum())


def _algorithm(block: dict, seed: int) -> ForLionConfig:
    kw = dict(block)
    if kw.get("initial_points") is not None:
        kw["initial_points"] = tuple(tuple(float(v) for v in r) for r in kw["initial_points"])
    return ForLionConfig(**kw, seed=seed)


def diagnose(raw: dict, base_dir=".") -> tuple[list[ValidationError], RunConfig | None]:
    """Full static validation. Returns (diagnostics, config or None)."""
    c = _Collector()
    base = Path(base_dir)
    _unknown(c, raw, _TOP_KEYS, "")

    sv = raw.get("schema_version", SCHEMA_VERSION)
    if sv != SCHEMA_VERSION:
        c.add(f"unsupported schema version {sv!r} (expected {SCHEMA_VERSION})", "schema_version")
    task = raw.get("task", "design")
    if task not in TASKS:
        c.add(f"unknown task {task!r}; one of {list(TASKS)}", "task")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        c.add(f"seed must be a nonnegative integer, got {seed!r}", "seed")
        seed = 0

    space = c.run("factors", _space, raw)

    model = None
    mblock = _need_object(c, raw, "model")
    if mblock is None and "model" not in raw:
        c.add("missing model block", "model")
    if mblock is not None:
        _unknown(c, mblock, _MODEL_KEYS, "model.")
        if space is not None:
            model = c.run("model", _model, mblock, space)

    # parameters: exactly one mode
    mode = theta = prior = sample = None
    prior_mode = "frozen"
    pblock = _need_object(c, raw, "parameters")
    if pblock is None and "parameters" not in raw:
        c.add("missing parameters block", "parameters")
    if pblock is not None:
        _unknown(c, pblock, {"theta", "prior", "samples"}, "parameters.")
        given = [k for k in ("theta", "prior", "samples") if k in pblock]
        if len(given) != 1:
            c.add(f"give exactly one of theta, prior, samples (got {given})", "parameters")
        elif model is not None:
            mode = {"theta": "local", "prior": "prior", "samples": "samples"}[given[0]]
            p = model.p
            if mode == "local":
                theta = c.run("parameters.theta", _vector, pblock["theta"], "parameters.theta", p)
            elif mode == "prior":
                pb = pblock["prior"]
                if not isinstance(pb, dict):
                    c.add("must be a JSON object", "parameters.prior")
                else:
                    _unknown(c, pb, _PRIOR_KEYS, "parameters.prior.")
                    prior_mode = pb.get("mode", "frozen")
                    if prior_mode not in ("frozen", "per-point"):
                        c.add(f"unknown mode {prior_mode!r}", "parameters.prior.mode")
                    prior = c.run("parameters.prior", _prior, pb, p)
            else:
                path = pblock["samples"]
                if not isinstance(path, str):
                    c.add("samples must be a path to a CSV file", "parameters.samples")
                else:
                    sample = c.run(
                        "parameters.samples", read_parameter_sample, base / path, p, model.formula.term_labels()
                    )

    if task in ("design", "ew-design"):
        if task == "design" and mode not in (None, "local"):
            c.add("task 'design' needs parameters.theta", "parameters")
        if task == "ew-design" and mode == "local":
            c.add("task 'ew-design' needs parameters.prior or parameters.samples", "parameters")

    algorithm = None
    ablock = raw.get("algorithm", {})
    if not isinstance(ablock, dict):
        c.add("must be a JSON object", "algorithm")
    else:
        bad = sorted(set(ablock) - _ALGORITHM_KEYS)
        for k in bad:
            c.add(f"unknown key {k!r}", f"algorithm.{k}")
        if not bad:
            algorithm = c.run("algorithm", _algorithm, ablock, seed)

    rounding = None
    allocate_on, allocation = "merged", "greedy"
    rblock = _need_object(c, raw, "rounding")
    if task == "round" and "rounding" not in raw:
        c.add("task 'round' needs a rounding block", "rounding")
    if rblock is not None:
        _unknown(c, rblock, _ROUNDING_KEYS, "rounding.")
        allocate_on = rblock.get("allocate_on", "merged")
        allocation = rblock.get("allocation", "greedy")
        if allocate_on not in ("merged", "rounded"):
            c.add(f"unknown value {allocate_on!r}", "rounding.allocate_on")
        if allocation not in ("greedy", "largest-remainder"):
            c.add(f"unknown value {allocation!r}", "rounding.allocation")
        for k in ("delta2", "grid", "N"):
            if k not in rblock:
                c.add("missing", f"rounding.{k}")
        if space is not None and all(k in rblock for k in ("delta2", "grid", "N")):
            rounding = c.run(
                "rounding",
                lambda: RoundingConfig.from_mapping(
                    space,
                    _number(rblock["delta2"], "rounding.delta2"),
                    rblock["grid"],
                    _number(rblock["N"], "rounding.N", integer=True),
                ),
            )

    design = reference = point = None
    if space is not None:
        if "design" in raw:
            design = c.run("design", _design, raw["design"], "design", space, base)
        if "reference" in raw:
            reference = c.run("reference", _design, raw["reference"], "reference", space, base)
        if "point" in raw:
            point = c.run("point", _vector, raw["point"], "point", space.d)
            if point is not None and not space.contains(point, atol=1e-9):
                c.add("point lies outside the design space", "point")
    if task in ("round", "efficiency") and "design" not in raw:
        c.add(f"task {task!r} needs an input design", "design")
    if task == "efficiency" and "reference" not in raw:
        c.add("task 'efficiency' needs a reference design", "reference")
    if task == "info" and "point" not in raw:
        c.add("task 'info' needs a point", "point")

    if c.errors:
        return c.errors, None
    cfg = RunConfig(
        task=task, seed=seed, space=space, model=model, mode=mode, theta=theta, prior=prior,
        sample=sample, prior_mode=prior_mode, algorithm=algorithm, rounding=rounding,
        allocate_on=allocate_on, allocation=allocation, design=design, reference=reference,
        point=point, raw=raw,
    )
    return [], cfg


def build(raw: dict, base_dir=".") -> RunConfig:
    """Validated RunConfig; raises the first diagnostic."""
    errors, cfg = diagnose(raw, base_dir)
    if errors:
        raise errors[0]
    return cfg


def load(path, overrides: Sequence[tuple[str, Any]] = ()) -> RunConfig:
    path = Path(path)
    return build(apply_overrides(load_raw(path), overrides), path.parent)


def validate(path) -> list[ValidationError]:
    """Diagnostics for a config file; empty when it is runnable.

    Raises:
        ValidationError: the file cannot be read or is not a JSON object.
    """
    path = Path(path)
    return diagnose(load_raw(path), path.parent)[0]
