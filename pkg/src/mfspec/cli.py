"""Configuration-driven command line front end.

Subcommands:
    spectrum   build the entropy/dimension spectrum and the backing curves
    ldp        plain/tilted Monte Carlo tail estimates (with exact oracle
               columns for the fair-coin digit-frequency setup)
    check      regularity diagnostics: uniform-mass measure check, variation
               decay, additivity defect, differentiability scan
    oracle     print closed-form reference values for scripting

Configuration is a single TOML file; unknown keys are errors, not warnings,
because a silently ignored key would invalidate numerical claims. Exit codes:
0 success, 2 enumeration budget exceeded, 3 validation failure. The effective
configuration (defaults applied, execution-only knobs like the shard count
excluded) is embedded in every JSON output so runs are reproducible.
"""

import argparse
import math
import os
import sys

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from . import io as mio
from .convex import GridFunction, UniformGrid, domain_endpoints
from .errors import BudgetExceededError, ConfigError
from .ldp import (
    binomial_range_probability,
    binomial_tail_oracle,
    gartner_ellis_check,
    sample_plain,
    sample_tilted,
)
from .observables import (
    AlternatingWeights,
    ConstantWeights,
    LocallyConstantBirkhoff,
    MarkovLocalEntropy,
    MatrixCocycle,
    TableWeights,
    WeightedBirkhoff,
    almost_additivity_defect,
    is_additive,
    is_almost_additive,
    variation,
)
from .pressure import DEFAULT_DEPTHS, mgf_curve, pressure_curve
from .spectra import (
    LABEL_EQUALITY,
    LABEL_UPPER_BOUND,
    besicovitch_oracle,
    binary_entropy,
    entropy_spectrum,
)
from .symbolic import DEFAULT_BUDGET, ReferenceMeasure, ShiftSpace, verify_ahlfors_bowen


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _check_keys(table: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {', '.join(unknown)}")


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}")


def build_space(cfg: dict) -> ShiftSpace:
    _check_keys(cfg, {"alphabet", "transition"}, "space")
    if "alphabet" not in cfg:
        raise ConfigError("[space] needs an 'alphabet' key")
    alphabet = cfg["alphabet"]
    if not isinstance(alphabet, int):
        raise ConfigError("[space] alphabet must be an integer")
    transition = cfg.get("transition")
    return ShiftSpace(alphabet, None if transition is None else np.array(transition))


def build_measure(cfg: dict, space: ShiftSpace, where: str = "measure") -> ReferenceMeasure:
    _check_keys(cfg, {"kind", "probs", "kernel", "stationary"}, where)
    kind = cfg.get("kind")
    if kind == "uniform":
        return ReferenceMeasure.uniform(space.alphabet_size)
    if kind == "bernoulli":
        if "probs" not in cfg:
            raise ConfigError(f"[{where}] bernoulli needs 'probs'")
        return ReferenceMeasure.bernoulli(cfg["probs"])
    if kind == "markov":
        if "kernel" not in cfg:
            raise ConfigError(f"[{where}] markov needs 'kernel'")
        return ReferenceMeasure.markov(cfg["kernel"], cfg.get("stationary"))
    if kind == "parry":
        return ReferenceMeasure.parry(space)
    raise ConfigError(f"[{where}] kind must be uniform|bernoulli|markov|parry, got {kind!r}")


def build_observable(cfg: dict, space: ShiftSpace):
    kind = cfg.get("kind")
    l = space.alphabet_size
    if kind == "birkhoff":
        _check_keys(cfg, {"kind", "window", "table"}, "observable")
        return LocallyConstantBirkhoff(l, int(cfg.get("window", 1)),
                                       np.array(cfg["table"], dtype=float))
    if kind == "weighted":
        _check_keys(cfg, {"kind", "window", "table", "weights"}, "observable")
        base = LocallyConstantBirkhoff(l, int(cfg.get("window", 1)),
                                       np.array(cfg["table"], dtype=float))
        return WeightedBirkhoff(base, build_weight_rule(cfg.get("weights", {})))
    if kind == "cocycle":
        _check_keys(cfg, {"kind", "window", "matrices", "norm"}, "observable")
        return MatrixCocycle(l, int(cfg.get("window", 1)),
                             np.array(cfg["matrices"], dtype=float),
                             cfg.get("norm", "sum"))
    if kind == "local_entropy":
        _check_keys(cfg, {"kind", "measure"}, "observable")
        inner = build_measure(cfg.get("measure", {}), space, "observable.measure")
        return MarkovLocalEntropy(inner)
    raise ConfigError(
        f"[observable] kind must be birkhoff|weighted|cocycle|local_entropy, got {kind!r}")


def build_weight_rule(cfg: dict):
    _check_keys(cfg, {"rule", "value", "gamma", "values", "tail"}, "observable.weights")
    rule = cfg.get("rule")
    if rule == "constant":
        return ConstantWeights(float(cfg.get("value", 1.0)))
    if rule == "alternating":
        return AlternatingWeights(float(cfg["gamma"]))
    if rule == "table":
        return TableWeights(tuple(float(v) for v in cfg["values"]),
                            float(cfg.get("tail", 0.0)))
    raise ConfigError(f"weights rule must be constant|alternating|table, got {rule!r}")


def build_q_grid(cfg: dict) -> UniformGrid:
    return UniformGrid(float(cfg.get("q_min", -20.0)),
                       float(cfg.get("q_max", 20.0)),
                       float(cfg.get("q_step", 0.05)))


def build_alpha_grid(cfg: dict):
    keys = [k for k in ("alpha_min", "alpha_max", "alpha_step") if k in cfg]
    if not keys:
        return None
    if len(keys) != 3:
        raise ConfigError("[grids] alpha_min, alpha_max, alpha_step must appear together")
    return UniformGrid(float(cfg["alpha_min"]), float(cfg["alpha_max"]),
                       float(cfg["alpha_step"]))


def resolve(cfg: dict, args) -> dict:
    """Validate the whole file and apply defaults; returns the effective config."""
    _check_keys(cfg, {"budget", "space", "measure", "observable", "grids",
                      "depths", "mc", "outputs"}, "top level")
    for section in ("space", "measure", "observable"):
        if section not in cfg:
            raise ConfigError(f"missing required section [{section}]")
    grids = cfg.get("grids", {})
    _check_keys(grids, {"q_min", "q_max", "q_step",
                        "alpha_min", "alpha_max", "alpha_step"}, "grids")
    depths_cfg = cfg.get("depths", {})
    _check_keys(depths_cfg, {"values"}, "depths")
    outputs = cfg.get("outputs", {})
    _check_keys(outputs, {"dir", "formats"}, "outputs")
    mc = cfg.get("mc")
    if mc is not None:
        _check_keys(mc, {"n", "interval", "samples", "seed", "shards",
                         "tilt", "sampler"}, "mc")

    budget = cfg.get("budget", DEFAULT_BUDGET)
    if args.budget is not None:
        budget = args.budget
    elif os.environ.get("MFSPEC_BUDGET"):
        budget = int(os.environ["MFSPEC_BUDGET"])

    shards = 1
    if mc is not None and "shards" in mc:
        shards = int(mc["shards"])
    if os.environ.get("MFSPEC_SHARDS"):
        shards = int(os.environ["MFSPEC_SHARDS"])
    if args.shards is not None:
        shards = args.shards

    formats = outputs.get("formats", ["csv", "json"])
    if args.format is not None:
        formats = ["csv", "json"] if args.format == "both" else [args.format]
    for fmt in formats:
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {fmt!r}")

    out_dir = args.out or outputs.get("dir", "out")

    resolved = {
        "budget": int(budget),
        "space": {
            "alphabet": cfg["space"].get("alphabet"),
            "transition": cfg["space"].get("transition"),
        },
        "measure": dict(cfg["measure"]),
        "observable": dict(cfg["observable"]),
        "grids": {
            "q_min": float(grids.get("q_min", -20.0)),
            "q_max": float(grids.get("q_max", 20.0)),
            "q_step": float(grids.get("q_step", 0.05)),
            "alpha_min": grids.get("alpha_min"),
            "alpha_max": grids.get("alpha_max"),
            "alpha_step": grids.get("alpha_step"),
        },
        "depths": list(depths_cfg.get("values", list(DEFAULT_DEPTHS))),
        "formats": sorted(formats),
    }
    if mc is not None:
        ns = mc.get("n", [])
        ns = [int(v) for v in (ns if isinstance(ns, list) else [ns])]
        ivs = mc.get("interval", [])
        if ivs and not isinstance(ivs[0], list):
            ivs = [ivs]
        seed = mc.get("seed", 0)
        if args.seed is not None:
            seed = args.seed
        resolved["mc"] = {
            "n": ns,
            "intervals": [[float(a), float(b)] for a, b in ivs],
            "samples": int(mc.get("samples", 10000)),
            "seed": int(seed),
            "sampler": mc.get("sampler", "both"),
            "tilt": mc.get("tilt", "auto"),
        }
    # execution-only knobs, not embedded in outputs
    resolved["_shards"] = shards
    resolved["_out_dir"] = out_dir
    return resolved


def _embeddable(resolved: dict) -> dict:
    return {k: v for k, v in resolved.items() if not k.startswith("_")}


# ---------------------------------------------------------------------------
# shared pipeline pieces
# ---------------------------------------------------------------------------

def _pipeline_objects(cfg: dict, resolved: dict):
    space = build_space(cfg["space"])
    measure = build_measure(cfg["measure"], space)
    spec = build_observable(cfg["observable"], space)
    if measure.alphabet_size != space.alphabet_size:
        raise ConfigError("measure and space disagree on the alphabet size")
    q_grid = build_q_grid(resolved["grids"])
    alpha_grid = build_alpha_grid({k: v for k, v in resolved["grids"].items()
                                   if v is not None})
    depths = resolved["depths"]
    if len(depths) < 3:
        raise ConfigError("[depths] needs at least 3 values")
    return space, measure, spec, q_grid, alpha_grid, depths


def solve_tilt(phi: GridFunction, target: float) -> float:
    """Invert the derivative of the limit log-MGF by bisection.

    The derivative is read off the curve as interpolated one-step slopes
    (nondecreasing by convexity). Targets outside the attainable slope range
    have no finite tilt and are rejected.
    """
    ends = domain_endpoints(phi)
    if not (ends.lower < target < ends.upper):
        raise ConfigError(
            f"tilt target {target} outside the attainable endpoints "
            f"({ends.lower:.6g}, {ends.upper:.6g})")
    qs = phi.grid.values()
    mids = 0.5 * (qs[:-1] + qs[1:])
    slopes = np.diff(phi.values) / phi.grid.step

    def slope_at(q: float) -> float:
        return float(np.interp(q, mids, slopes))

    lo, hi = float(mids[0]), float(mids[-1])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if slope_at(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _is_fair_coin_setup(spec, measure, space) -> bool:
    return (isinstance(spec, LocallyConstantBirkhoff)
            and spec.window == 1
            and space.is_full
            and space.alphabet_size == 2
            and measure.kind == "uniform"
            and np.array_equal(spec.table, np.array([0.0, 1.0])))


# ---------------------------------------------------------------------------
# subcommand runners
# ---------------------------------------------------------------------------

def run_spectrum(cfg: dict, resolved: dict) -> int:
    space, measure, spec, q_grid, alpha_grid, depths = _pipeline_objects(cfg, resolved)
    shards = resolved["_shards"]
    budget = resolved["budget"]
    curve = mgf_curve(spec, space, measure, q_grid=q_grid, depths=depths,
                      budget=budget, shards=shards)
    pcurve = pressure_curve(spec, space, q_grid=q_grid, depths=depths,
                            budget=budget, shards=shards)
    table = entropy_spectrum(spec, space, measure, q_grid=q_grid,
                             alpha_grid=alpha_grid, depths=depths,
                             budget=budget, shards=shards, curve=curve)
    out = resolved["_out_dir"]
    formats = resolved["formats"]
    if "csv" in formats:
        header, rows = mio.spectrum_rows(table)
        mio.write_csv_atomic(os.path.join(out, "spectrum.csv"), header, rows)
        header, rows = mio.curve_rows(curve)
        mio.write_csv_atomic(os.path.join(out, "mgf_curve.csv"), header, rows)
        header, rows = mio.curve_rows(pcurve)
        mio.write_csv_atomic(os.path.join(out, "pressure_curve.csv"), header, rows)
    if "json" in formats:
        mio.write_json_atomic(os.path.join(out, "spectrum.json"),
                              mio.spectrum_json(table, config=_embeddable(resolved)))
    return 0


def run_ldp(cfg: dict, resolved: dict) -> int:
    space, measure, spec, q_grid, _, depths = _pipeline_objects(cfg, resolved)
    if "mc" not in resolved:
        raise ConfigError("the ldp subcommand needs an [mc] section")
    mc = resolved["mc"]
    if not mc["n"] or not mc["intervals"]:
        raise ConfigError("[mc] needs n and interval")
    shards = resolved["_shards"]
    budget = resolved["budget"]
    sampler_kinds = mc["sampler"]
    if sampler_kinds not in ("plain", "tilted", "both"):
        raise ConfigError("[mc] sampler must be plain|tilted|both")
    want_tilted = sampler_kinds in ("tilted", "both")
    want_plain = sampler_kinds in ("plain", "both")

    phi = None
    if want_tilted:
        curve = mgf_curve(spec, space, measure, q_grid=q_grid, depths=depths,
                          budget=budget, shards=shards)
        phi = GridFunction(q_grid, curve.limit, provenance="mgf-limit")
        mean = float((phi.values[q_grid.index_of(0.0) + 1]
                      - phi.values[q_grid.index_of(0.0) - 1]) / (2 * q_grid.step))

    coin = _is_fair_coin_setup(spec, measure, space)
    estimates = []
    for n in mc["n"]:
        for a, b in mc["intervals"]:
            oracle = None
            if coin:
                k_min = max(0, math.ceil(a * n - 1e-9))
                k_max = min(n, math.floor(b * n + 1e-9))
                oracle = binomial_range_probability(n, k_min, k_max, 0.5) \
                    if k_min <= k_max else 0.0
            if want_plain:
                est = sample_plain(measure, spec, space, n, (a, b),
                                   mc["samples"], mc["seed"], shards=shards)
                estimates.append((est, None, oracle))
            if want_tilted:
                if mc["tilt"] == "auto":
                    target = min(max(mean, a), b)
                    q = solve_tilt(phi, target)
                else:
                    q = float(mc["tilt"])
                est = sample_tilted(measure, spec, space, n, (a, b), q,
                                    mc["samples"], mc["seed"], shards=shards)
                estimates.append((est, q, oracle))

    out = resolved["_out_dir"]
    formats = resolved["formats"]
    if "csv" in formats:
        header = ["n", "interval_lo", "interval_hi", "prob_estimate", "log_rate",
                  "log_rate_bound", "ci_95_rel", "sampler", "samples", "seed",
                  "tilt_q", "oracle_prob"]
        rows = []
        for est, q, oracle in estimates:
            rows.append([
                est.n, est.interval[0], est.interval[1], est.prob_estimate,
                est.log_rate if est.log_rate is not None else math.nan,
                est.log_rate_bound if est.log_rate_bound is not None else math.nan,
                est.ci_95_rel if est.ci_95_rel is not None else math.nan,
                est.sampler, est.samples, est.seed,
                q if q is not None else math.nan,
                oracle if oracle is not None else math.nan,
            ])
        mio.write_csv_atomic(os.path.join(out, "tail_estimates.csv"), header, rows)
    if "json" in formats:
        body = {
            "estimates": [
                dict(mio.tail_estimate_dict(est), tilt_q=q, oracle_prob=oracle)
                for est, q, oracle in estimates
            ],
            "config": _embeddable(resolved),
        }
        mio.write_json_atomic(os.path.join(out, "tail_estimates.json"), body)
    return 0


def run_check(cfg: dict, resolved: dict) -> int:
    space, measure, spec, q_grid, _, depths = _pipeline_objects(cfg, resolved)
    shards = resolved["_shards"]
    budget = resolved["budget"]
    checks = []

    ab = verify_ahlfors_bowen(measure, space, n_max=10, budget=budget)
    checks.append({
        "name": "ahlfors_bowen",
        "status": "pass" if ab.passed else "fail",
        "h_estimate": ab.h_estimate,
        "max_ratio_deviation": ab.max_ratio_deviation,
        "deviations": list(ab.deviations),
    })

    eps = float(space.alphabet_size) ** (-(spec.window - 1)) if spec.window > 1 else 1.0
    var_rows = []
    for n in (2, 4, 6, 8):
        var_rows.append({"n": n, "variation": variation(spec, n, eps, space, budget)})
    decays = [r["variation"] / r["n"] for r in var_rows]
    checks.append({
        "name": "weak_bowen_variation",
        "status": "pass" if decays[-1] <= decays[0] + 1e-9 else "fail",
        "epsilon": eps,
        "rows": var_rows,
    })

    if is_almost_additive(spec):
        defects = []
        for n, m in ((2, 2), (2, 3), (3, 3)):
            defects.append({"n": n, "m": m,
                            "defect": almost_additivity_defect(spec, n, m, space,
                                                               budget=budget)})
        worst = max(d["defect"] for d in defects)
        status = "pass" if (worst == 0.0 if is_additive(spec) else True) else "fail"
        checks.append({"name": "almost_additivity", "status": status,
                       "max_defect": worst, "rows": defects})
        additivity_ok = True
    else:
        checks.append({"name": "almost_additivity", "status": "not-applicable",
                       "max_defect": None, "rows": []})
        additivity_ok = False

    kinks_clean = False
    try:
        curve = mgf_curve(spec, space, measure, q_grid=q_grid, depths=depths,
                          budget=budget, shards=shards)
        report = gartner_ellis_check(curve)
        kinks_clean = report.differentiable_interior
        checks.append({"name": "differentiability",
                       "status": "pass" if kinks_clean else "kinks-detected",
                       "kinks": report.kinks})
    except ValueError as exc:
        checks.append({"name": "differentiability", "status": f"refused: {exc}",
                       "kinks": None})

    label = LABEL_EQUALITY if (ab.passed and additivity_ok and kinks_clean) \
        else LABEL_UPPER_BOUND
    body = {"checks": checks, "label": label, "config": _embeddable(resolved)}

    out = resolved["_out_dir"]
    formats = resolved["formats"]
    if "json" in formats:
        mio.write_json_atomic(os.path.join(out, "check_report.json"), body)
    if "csv" in formats:
        header = ["check", "status", "value"]
        rows = [["ahlfors_bowen", checks[0]["status"], checks[0]["max_ratio_deviation"]],
                ["weak_bowen_variation", checks[1]["status"],
                 max(r["variation"] for r in checks[1]["rows"])],
                ["almost_additivity", checks[2]["status"],
                 checks[2]["max_defect"] if checks[2]["max_defect"] is not None
                 else math.nan],
                ["differentiability", checks[3]["status"],
                 len(checks[3]["kinks"] or [])],
                ["label", label, ""]]
        mio.write_csv_atomic(os.path.join(out, "check_report.csv"), header, rows)
    return 0


def run_oracle(args) -> int:
    name = args.name
    vals = args.values
    if name == "besicovitch":
        dim, rate = besicovitch_oracle(float(vals[0]))
        print(f"dimension={mio.format_value(dim)} rate={mio.format_value(rate)}")
        return 0
    if name == "binomial-tail":
        n, k_min, p = int(vals[0]), int(vals[1]), float(vals[2])
        print(f"probability={mio.format_value(binomial_tail_oracle(n, k_min, p))}")
        return 0
    if name == "coin-mgf":
        q = float(vals[0])
        print(f"value={mio.format_value(math.log((1.0 + math.exp(q)) / 2.0))}")
        return 0
    if name == "coin-rate":
        a = float(vals[0])
        rate = math.inf if not (0.0 <= a <= 1.0) else math.log(2.0) - binary_entropy(a)
        print(f"value={mio.format_value(rate)}")
        return 0
    raise ConfigError(
        f"unknown oracle {name!r}; available: besicovitch, binomial-tail, "
        "coin-mgf, coin-rate")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); 2 means budget here
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mfspec", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "ldp", "check"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--shards", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--format", choices=["csv", "json", "both"], default=None)
    p = sub.add_parser("oracle")
    p.add_argument("name")
    p.add_argument("values", nargs="*")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "oracle":
            return run_oracle(args)
        cfg = load_config(args.config)
        resolved = resolve(cfg, args)
        if args.command == "spectrum":
            return run_spectrum(cfg, resolved)
        if args.command == "ldp":
            return run_ldp(cfg, resolved)
        return run_check(cfg, resolved)
    except BudgetExceededError as exc:
        print(f"mfspec: reason=budget detail={exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"mfspec: reason=validation detail={exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
