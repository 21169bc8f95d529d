"""Run configuration: a small key/value tree with job blocks.

Format by example::

    # whole-line or trailing comments with '#'
    model kl_brownian            # iid_gaussian | kl_brownian | explicit
    dim 16
    output out/run1
    formats csv json

    functional bump = exp(-norm2())

    job density
      G norm2
      phi bump
      r_grid 1 3 5
      n 100000
      seed 7
      estimator both

Indented lines are parameters of the preceding ``job`` line.  Functionals
are referenced by defined name, by builtin name (``norm2``, ``bm_endpoint``,
``coordinate(k)``, ``linear(w1, w2, ...)``) or written inline as expressions.
Parsing validates everything it can statically and reports all errors, not
just the first.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .expressions import ExpressionError, parse_expression

JOB_KINDS = ("density", "surface", "ibp", "disintegrate", "hausdorff", "selftest")
ESTIMATORS = ("divergence", "mollified", "both")
BUILTIN_NAMES = ("norm2", "bm_endpoint")


@dataclass(frozen=True)
class ModelSpec:
    family: str
    dim: int
    spectrum: tuple[float, ...] | None = None


@dataclass(frozen=True)
class JobSpec:
    kind: str
    G: str | None = None
    phi: tuple[str, ...] = ()
    r: float | None = None
    r_grid: tuple[float, ...] = ()
    n: int = 100000
    seed: int = 0
    epsilon: float | None = None
    estimator: str = "both"
    bins: int = 0
    scheme: str = "quantile"
    k_list: tuple[int, ...] = ()
    trace: bool = False
    hausdorff: bool = False
    dump_particles: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    functionals: tuple[tuple[str, str], ...] = ()
    jobs: tuple[JobSpec, ...] = ()
    output: str = "out"
    formats: tuple[str, ...] = ("csv", "json")


@dataclass
class ConfigIssue:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


class ConfigError(ValueError):
    """All problems found in a configuration, not just the first."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


def _strip_comment(line: str) -> str:
    cut = line.find("#")
    return line if cut < 0 else line[:cut]


class _Collector:
    def __init__(self):
        self.issues: list[ConfigIssue] = []

    def error(self, line: int, message: str):
        self.issues.append(ConfigIssue(line, message))


_BOOL = {"true": True, "false": False}


def _parse_value(kind, text, line, errs, what):
    try:
        return kind(text)
    except ValueError:
        errs.error(line, f"{what}: cannot parse {text!r}")
        return None


def _validate_functional_text(source: str, defs: dict, dim: int, line: int,
                              errs: _Collector, what: str, family: str = ""):
    """Check that a functional reference resolves; record index errors."""
    text = source.strip()
    if text == "bm_endpoint" and family not in ("", "kl_brownian"):
        errs.error(line, f"{what}: bm_endpoint needs a kl_brownian model")
        return
    if text in defs or text in BUILTIN_NAMES:
        return
    if text.startswith("coordinate(") and text.endswith(")"):
        inner = text[len("coordinate("):-1]
        k = _parse_value(int, inner, line, errs, what)
        if k is not None and not 1 <= k <= dim:
            errs.error(line, f"{what}: coordinate({k}) out of range 1..{dim}")
        return
    if text.startswith("linear(") and text.endswith(")"):
        parts = [p for p in text[len("linear("):-1].split(",") if p.strip()]
        if len(parts) > dim:
            errs.error(line, f"{what}: linear() has {len(parts)} weights, dim is {dim}")
        for p in parts:
            _parse_value(float, p.strip(), line, errs, what)
        return
    try:
        parsed = parse_expression(text)
    except ExpressionError as e:
        errs.error(line, f"{what}: {e}")
        return
    for k, pos in parsed.xi_refs:
        if k > dim:
            errs.error(line, f"{what}: xi({k}) exceeds model dim {dim} "
                             f"(at position {pos})")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration; raises ConfigError listing every
    problem found."""
    errs = _Collector()
    model_family = None
    model_line = 0
    dim = None
    spectrum = None
    output = "out"
    formats = ("csv", "json")
    functionals: list[tuple[str, str]] = []
    defs: dict[str, str] = {}
    def_lines: dict[str, int] = {}
    jobs: list[tuple[int, str, dict]] = []  # (line, kind, {key: (line, value)})
    current: dict | None = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).rstrip()
        if not line.strip():
            continue
        indented = line[0] in " \t"
        parts = line.split()
        if indented:
            if current is None:
                errs.error(lineno, "indented parameter outside a job block")
                continue
            key, rest = parts[0], " ".join(parts[1:])
            current[key] = (lineno, rest)
            continue
        current = None
        key, rest = parts[0], " ".join(parts[1:])
        if key == "model":
            model_family = rest.strip()
            model_line = lineno
        elif key == "dim":
            dim = _parse_value(int, rest, lineno, errs, "dim")
        elif key == "spectrum":
            spectrum = tuple(v for v in
                             (_parse_value(float, p, lineno, errs, "spectrum")
                              for p in parts[1:]) if v is not None)
        elif key == "output":
            output = rest.strip()
        elif key == "formats":
            formats = tuple(parts[1:])
        elif key == "functional":
            if "=" not in rest:
                errs.error(lineno, "functional definition needs 'name = expression'")
                continue
            name, source = rest.split("=", 1)
            name = name.strip()
            source = source.strip()
            if not name.isidentifier():
                errs.error(lineno, f"bad functional name {name!r}")
                continue
            if name in defs or name in BUILTIN_NAMES:
                errs.error(lineno, f"functional {name!r} already defined")
                continue
            functionals.append((name, source))
            defs[name] = source
            def_lines[name] = lineno
        elif key == "job":
            kind = rest.strip()
            if kind not in JOB_KINDS:
                errs.error(lineno, f"unknown job kind {kind!r} "
                                   f"(expected one of {', '.join(JOB_KINDS)})")
                continue
            current = {}
            jobs.append((lineno, kind, current))
        else:
            errs.error(lineno, f"unknown key {key!r}")

    # ---- model ----
    if model_family is None:
        errs.error(1, "missing 'model' line")
        model_family = "iid_gaussian"
    if model_family == "explicit":
        if spectrum is None:
            errs.error(model_line, "explicit model needs a 'spectrum' line")
            spectrum = (1.0,)
        if any(v <= 0 for v in spectrum):
            errs.error(model_line, "spectrum entries must be positive")
        if dim is None:
            dim = len(spectrum)
        elif dim != len(spectrum):
            errs.error(model_line, f"dim {dim} does not match spectrum length "
                                   f"{len(spectrum)}")
    else:
        if model_family not in ("iid_gaussian", "kl_brownian"):
            errs.error(model_line, f"unknown model family {model_family!r}")
        if spectrum is not None:
            errs.error(model_line, "'spectrum' is only valid with model explicit")
        if dim is None:
            errs.error(model_line or 1, "missing 'dim' line")
            dim = 1
        elif dim <= 0:
            errs.error(model_line, f"dim must be positive, got {dim}")
            dim = 1
    # ---- functional sources ----
    for name, source in functionals:
        _validate_functional_text(source, {}, dim, def_lines.get(name, 0),
                                  errs, f"functional {name!r}", model_family)

    # ---- jobs ----
    job_specs: list[JobSpec] = []
    for job_line, kind, params in jobs:
        spec = {"kind": kind}
        taken = dict(params)

        def take(key, conv, what, default=None):
            if key not in taken:
                return default
            lineno, rest = taken.pop(key)
            return _parse_value(conv, rest, lineno, errs, what)

        def take_list(key, conv, what):
            if key not in taken:
                return ()
            lineno, rest = taken.pop(key)
            vals = tuple(v for v in (_parse_value(conv, p, lineno, errs, what)
                                     for p in rest.split()) if v is not None)
            return vals

        g_entry = taken.pop("G", None)
        spec["G"] = None
        if g_entry is not None:
            spec["G"] = g_entry[1].strip()
            _validate_functional_text(spec["G"], defs, dim, g_entry[0], errs, "G",
                                      model_family)
        phis: list[str] = []
        for key in ("phi", "phi_list"):
            entry = taken.pop(key, None)
            if entry is None:
                continue
            lineno, rest = entry
            items = rest.split() if key == "phi_list" else [rest.strip()]
            for item in items:
                _validate_functional_text(item, defs, dim, lineno, errs, "phi",
                                          model_family)
                phis.append(item)
        spec["phi"] = tuple(phis)
        spec["r"] = take("r", float, "r")
        spec["r_grid"] = take_list("r_grid", float, "r_grid")
        spec["n"] = take("n", int, "n", default=JobSpec.n)
        spec["seed"] = take("seed", int, "seed", default=JobSpec.seed)
        spec["epsilon"] = take("epsilon", float, "epsilon")
        spec["estimator"] = take("estimator", str, "estimator",
                                 default=JobSpec.estimator)
        spec["bins"] = take("bins", int, "bins", default=JobSpec.bins)
        spec["scheme"] = take("scheme", str, "scheme", default=JobSpec.scheme)
        spec["k_list"] = take_list("k_list", int, "k_list")
        for flag in ("trace", "hausdorff", "dump_particles"):
            entry = taken.pop(flag, None)
            if entry is None:
                spec[flag] = False
            elif entry[1].strip() in _BOOL:
                spec[flag] = _BOOL[entry[1].strip()]
            else:
                errs.error(entry[0], f"{flag}: expected true or false")
                spec[flag] = False
        for key, (lineno, _) in taken.items():
            errs.error(lineno, f"unknown job parameter {key!r}")

        # per-kind requirements, checked statically where possible
        need = lambda cond, msg: None if cond else errs.error(job_line, msg)
        if kind == "density":
            need(spec["G"] is not None, "density job needs G")
            need(len(spec["phi"]) >= 1, "density job needs phi")
            need(len(spec["r_grid"]) >= 1, "density job needs a nonempty r_grid")
        elif kind == "surface":
            need(spec["G"] is not None, "surface job needs G")
            need(spec["r"] is not None, "surface job needs r")
        elif kind == "ibp":
            need(spec["G"] is not None, "ibp job needs G")
            need(len(spec["phi"]) >= 1, "ibp job needs phi")
            need(len(spec["k_list"]) >= 1, "ibp job needs k_list")
            need(spec["r"] is not None or len(spec["r_grid"]) >= 1,
                 "ibp job needs r or r_grid")
        elif kind == "disintegrate":
            need(spec["G"] is not None, "disintegrate job needs G")
            need(spec["bins"] >= 2, "disintegrate job needs bins >= 2")
            if spec["bins"] >= 2:
                need(spec["n"] >= spec["bins"], "disintegrate needs n >= bins")
            need(spec["scheme"] in ("quantile", "fixed"),
                 f"unknown binning scheme {spec['scheme']!r}")
        elif kind == "hausdorff":
            need(spec["G"] is not None, "hausdorff job needs G")
            need(spec["r"] is not None, "hausdorff job needs r")
            need(dim <= 6, f"hausdorff quadrature supports dim <= 6, model has {dim}")
            if spec["G"] is not None:
                eligible = (spec["G"] in ("norm2", "bm_endpoint")
                            or spec["G"].startswith(("coordinate(", "linear(")))
                need(eligible, "hausdorff needs G in norm2 | bm_endpoint | "
                               "coordinate(k) | linear(...)")
        if spec["estimator"] not in ESTIMATORS:
            errs.error(job_line, f"unknown estimator {spec['estimator']!r}")
        if spec["n"] is not None and spec["n"] < 1:
            errs.error(job_line, "n must be >= 1")
        if spec["r_grid"] and any(b <= a for a, b in zip(spec["r_grid"],
                                                         spec["r_grid"][1:])):
            errs.error(job_line, "r_grid must be strictly increasing")
        if spec["epsilon"] is not None and spec["epsilon"] <= 0:
            errs.error(job_line, "epsilon must be positive")
        for k in spec["k_list"]:
            if not 1 <= k <= dim:
                errs.error(job_line, f"k_list entry {k} out of range 1..{dim}")
        job_specs.append(JobSpec(**spec))

    if errs.issues:
        raise ConfigError(errs.issues)
    return RunConfig(model=ModelSpec(family=model_family, dim=dim,
                                     spectrum=spectrum),
                     functionals=tuple(functionals), jobs=tuple(job_specs),
                     output=output, formats=formats)


def serialize_config(config: RunConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    lines = [f"model {config.model.family}", f"dim {config.model.dim}"]
    if config.model.spectrum is not None:
        lines.append("spectrum " + " ".join(repr(v) for v in config.model.spectrum))
    lines.append(f"output {config.output}")
    lines.append("formats " + " ".join(config.formats))
    for name, source in config.functionals:
        lines.append(f"functional {name} = {source}")
    defaults = {f.name: f.default for f in fields(JobSpec)}
    for job in config.jobs:
        lines.append(f"job {job.kind}")
        if job.G is not None:
            lines.append(f"  G {job.G}")
        if len(job.phi) == 1:
            lines.append(f"  phi {job.phi[0]}")
        elif job.phi:
            lines.append("  phi_list " + " ".join(job.phi))
        if job.r is not None:
            lines.append(f"  r {job.r!r}")
        if job.r_grid:
            lines.append("  r_grid " + " ".join(repr(v) for v in job.r_grid))
        for key in ("n", "seed"):
            value = getattr(job, key)
            if value != defaults[key]:
                lines.append(f"  {key} {value}")
        if job.epsilon is not None:
            lines.append(f"  epsilon {job.epsilon!r}")
        if job.estimator != defaults["estimator"]:
            lines.append(f"  estimator {job.estimator}")
        if job.bins != defaults["bins"]:
            lines.append(f"  bins {job.bins}")
        if job.scheme != defaults["scheme"]:
            lines.append(f"  scheme {job.scheme}")
        if job.k_list:
            lines.append("  k_list " + " ".join(str(k) for k in job.k_list))
        for flag in ("trace", "hausdorff", "dump_particles"):
            if getattr(job, flag):
                lines.append(f"  {flag} true")
    return "\n".join(lines) + "\n"
