"""Command-line front end.

    python -m tips <command> CONFIG.json [--set section.key=value ...]

Commands: estimate, sweep, gimh, smc, simulate, validate-potential. Any
emitted file can be passed back as CONFIG; its provenance block is used.
Exit codes: 0 ok, 2 bad config or input, 3 runtime failure, 4 exact oracle
required but unavailable.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rngmod
from .config import ConfigError, RunConfig, effective, load_config, resolve_file, set_override
from .core import (DegenerateWeightsWarning, FiniteCtmc, HopDistance, TargetSet, abs_distance,
                   forward_sampling_estimate, forward_simulate, indicator_distance)
from .estimator import SWEEP_COLUMNS, estimate_comparison_sweep, tips_estimate
from .gimh import (DEFAULT_PROPOSAL_SCALE, ExponentialPrior, chain_diagnostics, gimh_chain)
from .oracle import OracleUnavailable, enumerate_reachable, exact_transition_probability
from .proposal import Potential, ProposalConfig, validate_potential
from .rna import RnaModel, RnaModelParams, hamming, minimum_energy_structures, parse_dot_bracket
from .rna import rna_tuning_schedule
from .smc import ObservationSequence, smc_run
from .strings import (StringModel, StringModelParams, check_string, levenshtein_guide,
                      sample_stationary_string)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ORACLE = 0, 2, 3, 4
COMMANDS = ("estimate", "sweep", "gimh", "smc", "simulate", "validate-potential")
FINITE_POTENTIALS = {"indicator": indicator_distance, "absolute": abs_distance}


class Setup:
    """Model, potential and state codec built from the model section."""

    def __init__(self, cfg: RunConfig, overrides: dict | None = None):
        try:
            self._build(cfg, overrides)
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"model: {err}") from None

    def _build(self, cfg: RunConfig, overrides):
        m = cfg.model
        self.kind = m.kind
        overrides = overrides or {}
        if m.kind == "finite":
            check_names(overrides, m.parameters)
            self.model = finite_model(m.generator, {**m.parameters, **overrides}, m.stationary)
            if m.potential == "hops":
                self.potential = Potential(HopDistance(self.model))
            elif m.potential in FINITE_POTENTIALS:
                self.potential = Potential(FINITE_POTENTIALS[m.potential])
            else:
                raise ConfigError(f"model.potential must be one of {sorted(FINITE_POTENTIALS) + ['hops']}")
        elif m.kind == "string":
            fields = {k: getattr(m, k) for k in
                      ("theta_sub", "lambda_pt", "mu_pt", "lambda_ssm", "mu_ssm", "ssm_max_len")}
            check_names(overrides, fields)
            self.model = StringModel(StringModelParams(**{**fields, **overrides}))
            self.potential = levenshtein_guide()
        else:
            fields = {k: getattr(m, k) for k in
                      ("energy_per_pair", "kT_scale", "hairpin_min", "kawasaki_divisor")}
            subset = m.subset
            if isinstance(subset, str):
                subset = read_lines(subset)
            check_names(overrides, fields)
            allowed = None if subset is None else [parse_dot_bracket(s) for s in subset]
            self.model = RnaModel(m.sequence, RnaModelParams(**{**fields, **overrides}),
                                  allowed=allowed)
            self.potential = hamming()

    def state(self, value, what="state"):
        if value is None:
            raise ConfigError(f"{what} is required")
        try:
            if self.kind == "finite":
                if isinstance(value, bool) or not isinstance(value, (int, str)):
                    raise ValueError(f"bad state {value!r}")
                x = int(value)
                if not 0 <= x < self.model.n:
                    raise ValueError(f"state {x} outside 0..{self.model.n - 1}")
                return x
            if not isinstance(value, str):
                raise ValueError(f"bad state {value!r}")
            if self.kind == "string":
                return check_string(value)
            if value == "mfe":
                best = minimum_energy_structures(self.model)
                if len(best) != 1:
                    raise ValueError("minimum-energy structure is not unique")
                return best[0]
            return self.model.parse(value)
        except ValueError as err:
            raise ConfigError(f"{what}: {err}") from None

    def target(self, value, what="query.target"):
        if isinstance(value, list):
            if not value:
                raise ConfigError(f"{what} is empty")
            return TargetSet(self.state(v, what) for v in value)
        return self.state(value, what)

    def render(self, x):
        if self.kind == "finite":
            return int(x)
        return self.model.render(x)


def check_names(overrides: dict, fields: dict) -> None:
    unknown = sorted(set(overrides) - set(fields))
    if unknown:
        raise ConfigError(f"unknown model parameter {unknown[0]!r}")


def finite_model(generator, parameters: dict, stationary) -> FiniteCtmc:
    if not generator:
        raise ConfigError("model.generator is required for kind finite")
    n = len(generator)
    q = np.zeros((n, n))
    for i, row in enumerate(generator):
        if not isinstance(row, list) or len(row) != n:
            raise ConfigError("model.generator must be a square matrix")
        for j, v in enumerate(row):
            if i == j:
                continue
            if isinstance(v, str):
                if v not in parameters:
                    raise ConfigError(f"model.generator references unknown parameter {v!r}")
                v = parameters[v]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
                raise ConfigError(f"model.generator[{i}][{j}] must be a nonnegative rate")
            q[i, j] = v
    model = FiniteCtmc(q)
    if stationary is None:
        return model
    if stationary == "auto":
        pi = solve_stationary(model.q)
    else:
        pi = np.asarray(stationary, dtype=float)
        if pi.shape != (n,) or np.any(pi < 0) or abs(pi.sum() - 1) > 1e-9:
            raise ConfigError("model.stationary must be a pmf over the states")
    return FiniteCtmc(q, stationary=pi)


def solve_stationary(q: np.ndarray) -> np.ndarray:
    n = q.shape[0]
    a = np.vstack([q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(a, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def read_lines(path) -> list:
    try:
        with open(path) as fh:
            return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None


def proposal_config(cfg: RunConfig):
    e = cfg.estimator
    try:
        if e.schedule == "fixed":
            return ProposalConfig(e.alpha, e.beta, e.step_cap)
        if e.schedule == "rna":
            return lambda horizon: ProposalConfig(*rna_tuning_schedule(horizon), e.step_cap)
    except ValueError as err:
        raise ConfigError(f"estimator: {err}") from None
    raise ConfigError("estimator.schedule must be 'fixed' or 'rna'")


def exact_oracle(setup: Setup, start, target, mode: str):
    """Callable horizon -> exact probability, or None when unavailable and optional."""
    if mode == "off":
        return None
    try:
        if isinstance(target, TargetSet):
            raise OracleUnavailable("exact oracle needs a single target state")
        space = enumerate_reachable(setup.model, start)
        if not space.closed:
            raise OracleUnavailable("state space is not finite within the enumeration bound")
    except OracleUnavailable:
        if mode == "required":
            raise
        return None
    if target not in space.index:
        return lambda horizon: 0.0
    return lambda horizon: exact_transition_probability(space, start, target, horizon)


# output helpers

def fmt(v) -> str:
    """Shortest round-trip text for CSV cells."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {k: jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return jsonable(v.item())
    return v


def provenance(cfg: RunConfig, command: str, resolved: dict | None = None) -> dict:
    conf = effective(cfg)
    if isinstance(conf["model"].get("subset"), str):
        conf["model"]["subset"] = read_lines(conf["model"]["subset"])
    for section, values in (resolved or {}).items():
        conf[section].update(values)
    return {"artifact": "tips", "version": __version__, "command": command,
            "seed": cfg.execution.seed, "config": conf}


def dump_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=False) + "\n"


def csv_text(prov: dict, header, rows) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(jsonable(prov), separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in header])
    return buf.getvalue()


def emit(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)


# commands

def cmd_estimate(cfg: RunConfig, workers: int) -> int:
    setup = Setup(cfg)
    q, e = cfg.query, cfg.estimator
    start = setup.state(q.start, "query.start")
    target = setup.target(q.target)
    if q.horizon is None or q.horizon < 0:
        raise ConfigError("query.horizon must be a nonnegative number")
    if e.particles < 1:
        raise ConfigError("estimator.particles must be >= 1")
    seed = cfg.execution.seed
    c0 = time.process_time()
    out = {"command": "estimate", "method": e.method}
    if e.method == "exact":
        exact = exact_oracle(setup, start, target, "required")
        p = exact(q.horizon)
        out.update(estimate=p, log_estimate=math.log(p) if p > 0 else -math.inf)
    elif e.method in ("tips", "fs"):
        pc = proposal_config(cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateWeightsWarning)
            if e.method == "tips":
                cfg_h = pc(q.horizon) if callable(pc) else pc
                s = tips_estimate(setup.model, setup.potential, cfg_h, start, target, q.horizon,
                                  e.particles, seed=seed, workers=workers)
            else:
                s = forward_sampling_estimate(setup.model, start, target, q.horizon, e.particles,
                                              seed=seed, workers=workers, step_cap=e.step_cap)
        out.update(estimate=s.estimate, log_estimate=s.log_estimate, ess=s.ess,
                   weight_variance=s.weight_variance, standard_error=s.standard_error,
                   particles=s.particles, zero_weights=s.zero_weights)
    else:
        raise ConfigError("estimator.method must be tips, fs or exact for estimate")
    out["cpu_ms"] = 1000.0 * (time.process_time() - c0) if cfg.output.timing else None
    out["seed"] = seed
    out["provenance"] = provenance(cfg, "estimate")
    emit(dump_json(out), cfg.output.path)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, workers: int) -> int:
    setup = Setup(cfg)
    q, e = cfg.query, cfg.estimator
    start = setup.state(q.start, "query.start")
    target = setup.target(q.target)
    horizons = q.horizons if q.horizons is not None else ([q.horizon] if q.horizon is not None else None)
    if not horizons:
        raise ConfigError("query.horizons is required for sweep")
    counts = e.particle_counts if e.particle_counts is not None else [e.particles]
    if not counts or any(not isinstance(k, int) or k < 1 for k in counts):
        raise ConfigError("estimator.particle_counts must be positive integers")
    for m in e.methods:
        if m not in ("tips", "fs"):
            raise ConfigError(f"estimator.methods: unknown method {m!r}")
    if e.oracle not in ("auto", "required", "off"):
        raise ConfigError("estimator.oracle must be auto, required or off")
    exact = exact_oracle(setup, start, target, e.oracle)
    rows = estimate_comparison_sweep(setup.model, setup.potential, start, target, horizons, counts,
                                     cfg.execution.replicates, methods=tuple(e.methods),
                                     config=proposal_config(cfg), exact=exact,
                                     seed=cfg.execution.seed, workers=workers, step_cap=e.step_cap)
    if not cfg.output.timing:
        for r in rows:
            r["cpu_ms"] = None
    emit(csv_text(provenance(cfg, "sweep"), SWEEP_COLUMNS, rows), cfg.output.path)
    ok = any(r["status"] in ("ok", "degenerate") for r in rows)
    return EXIT_OK if ok else EXIT_RUNTIME


def load_dataset(setup: Setup, cfg: RunConfig) -> tuple[list, list]:
    raw = resolve_file(cfg.query.dataset)
    if not raw:
        raise ConfigError("query.dataset is empty")
    data = []
    for i, rec in enumerate(raw):
        if not isinstance(rec, dict) or set(rec) != {"start", "end", "horizon"}:
            raise ConfigError(f"query.dataset[{i}] must have exactly start, end, horizon")
        h = rec["horizon"]
        if isinstance(h, bool) or not isinstance(h, (int, float)) or h <= 0:
            raise ConfigError(f"query.dataset[{i}].horizon must be positive")
        data.append((setup.state(rec["start"], f"query.dataset[{i}].start"),
                     setup.state(rec["end"], f"query.dataset[{i}].end"), float(h)))
    return data, raw


def cmd_gimh(cfg: RunConfig, workers: int) -> int:
    setup = Setup(cfg)
    g, e = cfg.gimh, cfg.estimator
    data, raw = load_dataset(setup, cfg)
    if not g.parameters:
        raise ConfigError("gimh.parameters must name at least one parameter")
    if g.iterations < 0:
        raise ConfigError("gimh.iterations must be >= 0")
    if e.method not in ("tips", "fs"):
        raise ConfigError("estimator.method must be tips or fs for gimh")
    priors = {n: ExponentialPrior(p.prior_rate) for n, p in g.parameters.items()}
    init = {n: p.init for n, p in g.parameters.items()}
    for n, p in g.parameters.items():
        if p.prior_rate <= 0 or p.init <= 0:
            raise ConfigError(f"gimh.parameters.{n}: init and prior_rate must be positive")
    Setup(cfg, init)  # fail fast on unknown parameter names
    scale = g.proposal_scale if g.proposal_scale is not None else DEFAULT_PROPOSAL_SCALE
    result = gimh_chain(lambda th: Setup(cfg, th).model, data, priors, setup.potential,
                        proposal_config(cfg), e.particles, g.iterations, init,
                        seed=cfg.execution.seed, proposal_scale=scale, method=e.method,
                        include_stationary=g.include_stationary, init_retries=g.init_retries,
                        workers=workers)
    prov = provenance(cfg, "gimh", {"query": {"dataset": raw}})
    names = list(g.parameters)
    header = ["iter", "accepted", "log_z"] + names
    rows = [{"iter": r.iteration, "accepted": int(r.accepted), "log_z": r.log_z, **r.theta}
            for r in result.records]
    emit(csv_text(prov, header, rows), cfg.output.path)
    if len(result.records) >= 10:
        diag = chain_diagnostics(result, g.prefix_points)
    else:
        diag = {"iterations": len(result.records), "acceptance_rate": result.acceptance_rate,
                "stationary_used": result.stationary_used, "parameters": {},
                "note": "chain shorter than 10 iterations; no diagnostics"}
    diag["provenance"] = prov
    diag_path = cfg.output.diagnostics
    if diag_path is None and cfg.output.path is not None:
        diag_path = str(Path(cfg.output.path).with_suffix("")) + ".diagnostics.json"
    emit(dump_json(diag), diag_path)
    return EXIT_OK


def cmd_smc(cfg: RunConfig, workers: int) -> int:
    setup = Setup(cfg)
    e = cfg.estimator
    start = setup.state(cfg.query.start, "query.start")
    raw = resolve_file(cfg.query.observations)
    if not raw:
        raise ConfigError("query.observations is empty")
    pairs = []
    for i, rec in enumerate(raw):
        if not isinstance(rec, dict) or set(rec) != {"set", "horizon"}:
            raise ConfigError(f"query.observations[{i}] must have exactly set, horizon")
        if not isinstance(rec["set"], list) or not rec["set"]:
            raise ConfigError(f"query.observations[{i}].set must be a nonempty list")
        h = rec["horizon"]
        if isinstance(h, bool) or not isinstance(h, (int, float)) or h <= 0:
            raise ConfigError(f"query.observations[{i}].horizon must be positive")
        pairs.append(([setup.state(s, f"query.observations[{i}].set") for s in rec["set"]], h))
    if e.particles < 2:
        raise ConfigError("estimator.particles must be >= 2 for smc")
    if not 0 < e.ess_threshold <= 1:
        raise ConfigError("estimator.ess_threshold must lie in (0, 1]")
    obs = ObservationSequence.from_pairs(pairs)
    c0 = time.process_time()
    res = smc_run(setup.model, setup.potential, proposal_config(cfg), start, obs, e.particles,
                  e.ess_threshold, seed=cfg.execution.seed, workers=workers)
    out = {
        "command": "smc",
        "log_marginal": res.log_marginal,
        "particles": res.particles,
        "ess_trace": res.ess_trace,
        "resampling_events": res.resampling_log,
        "generations": [{"index": g.index, "ess": g.ess, "log_evidence_increment":
                         g.log_evidence_increment, "resampled": g.resampled_after}
                        for g in res.generations],
        "cpu_ms": 1000.0 * (time.process_time() - c0) if cfg.output.timing else None,
        "seed": cfg.execution.seed,
        "provenance": provenance(cfg, "smc", {"query": {"observations": raw}}),
    }
    emit(dump_json(out), cfg.output.path)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, workers: int) -> int:
    setup = Setup(cfg)
    s = cfg.simulate
    if s.count < 0:
        raise ConfigError("simulate.count must be >= 0")
    if not s.horizon > 0:
        raise ConfigError("simulate.horizon must be positive")
    fixed = None if s.start is None else setup.state(s.start, "simulate.start")
    model = setup.model
    if fixed is None and not model.has_stationary:
        raise ConfigError("simulate.start is required: the model has no stationary pmf")
    records = []
    for i in range(s.count):
        gen = rngmod.stream(cfg.execution.seed, rngmod.SIMULATE, i)
        if fixed is not None:
            x = fixed
        elif setup.kind == "string":
            x = sample_stationary_string(model.params, gen)
        else:
            pi = np.array([model.stationary(j) for j in range(model.n)])
            x = int(gen.choice(model.n, p=pi))
        traj = forward_simulate(model, x, s.horizon, gen, cfg.estimator.step_cap)
        records.append({"start": setup.render(x), "end": setup.render(traj.end), "horizon": s.horizon})
    out = {"records": records, "provenance": provenance(cfg, "simulate")}
    emit(dump_json(out), cfg.output.path)
    return EXIT_OK


def cmd_validate_potential(cfg: RunConfig, workers: int) -> int:
    setup = Setup(cfg)
    target = setup.target(cfg.query.target)
    anchor = setup.state(cfg.query.start, "query.start") if cfg.query.start is not None else \
        (next(iter(target)) if isinstance(target, TargetSet) else target)
    bound = 1000 if setup.kind == "string" else 2000
    space = enumerate_reachable(setup.model, anchor, bound)
    report = validate_potential(setup.model, setup.potential, target, space.states)
    out = {"command": "validate-potential", "ok": report.ok, "states_checked": len(space.states),
           "closed": space.closed, "errors": report.errors, "warnings": report.warnings,
           "rows": report.rows, "provenance": provenance(cfg, "validate-potential")}
    emit(dump_json(out), cfg.output.path)
    return EXIT_OK


HANDLERS = {"estimate": cmd_estimate, "sweep": cmd_sweep, "gimh": cmd_gimh, "smc": cmd_smc,
            "simulate": cmd_simulate, "validate-potential": cmd_validate_potential}


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tips", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", help="JSON config, or any file this tool emitted")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config field (value parsed as JSON)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--diagnostics", help="gimh diagnostics path")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        for assignment in args.set:
            set_override(cfg, assignment)
        if args.seed is not None:
            cfg.execution.seed = args.seed
        if args.out is not None:
            cfg.output.path = args.out
        if args.diagnostics is not None:
            cfg.output.diagnostics = args.diagnostics
        workers = args.workers or cfg.execution.workers or rngmod.default_workers()
        return HANDLERS[args.command](cfg, workers)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleUnavailable as err:
        print(f"oracle unavailable: {err}", file=sys.stderr)
        return EXIT_ORACLE
    except (RuntimeError, ValueError) as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
