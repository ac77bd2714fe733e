"""
Copyright 2026 The hyperlb Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""
import argparse
import csv
import itertools
import logging
import math
import multiprocessing
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple
from pydantic import ValidationError
from analytic import (BoundParams, ExtensionParams, UpdateLaw, blocking_finite, blocking_limit, bound_curve,
                      extension_blocking_finite, extension_metrics, extension_open_closed_pmf,
                      messages_per_admitted_job, open_closed_pmf, throughput_bound)
from config import (POLICY_SWEEP_KEYS, ExperimentSpec, PolicyConfig, SimConfig, load_experiment)
from productform.network_spec import load_network, network_to_json
from productform.verification import DEFAULT_TOLERANCE, run_verification_suite, suite_networks
from simcore.audits import AuditError
from simcore.engine import run
from simcore.metrics import SUMMARY_FIELDS, Metrics, estimate_ci

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_AUDIT = 3

PRESET_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config", "presets")

Row = Dict[str, object]


class UsageError(Exception):
    pass


class CommandResult:
    """Rows of one command, their column order, and whether every audit or check passed."""

    def __init__(self, columns: Sequence[str], rows: List[Row], passed: bool = True):
        self.columns = list(columns)
        self.rows = rows
        self.passed = passed


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_csv(result: CommandResult, output: Optional[str] = None):
    """Write rows with a single header, 9 significant digits and LF line endings."""
    def _write(f):
        writer = csv.DictWriter(f, fieldnames=result.columns, lineterminator="\n")
        writer.writeheader()
        for row in result.rows:
            writer.writerow({k: format_value(row.get(k)) for k in result.columns})

    if output:
        with open(output, "w", newline="") as f:
            _write(f)
        logging.info(f"Wrote {len(result.rows)} rows to {output}")
    else:
        _write(sys.stdout)


def cmd_bound(deltas: Optional[Sequence[float]], Ks: Sequence[int],
              products: Optional[Sequence[float]] = None, max_delta: float = 2.0) -> CommandResult:
    """Throughput bound curves: one curve per K over the delta grid, and for every product a = delta*K the curve
    lambda*(a/K, K) over integer K up to max(Ks) with a/K <= max_delta.
    :except UsageError: on an empty grid
    """
    if not Ks or (not deltas and not products):
        raise UsageError("bound needs Ks and deltas or products")
    rows = []
    for K in Ks:
        for delta, value in zip(deltas or [], bound_curve(K, deltas or [])):
            rows.append({'curve': f"K={K}", 'delta': float(delta), 'K': K, 'lambda_star': value})
    for a in products or []:
        for K in range(max(1, math.ceil(a / max_delta)), max(Ks) + 1):
            rows.append({'curve': f"a={a:g}", 'delta': a / K, 'K': K,
                         'lambda_star': throughput_bound(BoundParams(delta=a / K, K=K))})
    return CommandResult(['curve', 'delta', 'K', 'lambda_star'], rows)


def cmd_pmf(N: int, lam: float, tau: Optional[float], K: int,
            extension: Optional[ExtensionParams] = None) -> CommandResult:
    """Open/closed distribution and finite-N blocking of the scheme, and of the extension when cool-downs are given."""
    rows = []
    if tau is not None:
        law = UpdateLaw(tau=tau, K=K)
        blocking = blocking_finite(N, lam, law)
        for n, p in enumerate(open_closed_pmf(N, lam, law)):
            rows.append({'scheme': f"baseline(K={K},tau={tau:g})", 'N': N, 'lambda': lam, 'n': n,
                         'probability': float(p), 'blocking': blocking})
    if extension is not None:
        blocking = extension_blocking_finite(N, lam, extension)
        for n, p in enumerate(extension_open_closed_pmf(N, lam, extension)):
            rows.append({'scheme': f"extension({extension.tau1:g},{extension.tau2:g},{extension.tau3:g})", 'N': N,
                         'lambda': lam, 'n': n, 'probability': float(p), 'blocking': blocking})
    if not rows:
        raise UsageError("pmf needs tau or tau1, tau2 and tau3")
    return CommandResult(['scheme', 'N', 'lambda', 'n', 'probability', 'blocking'], rows)


def cmd_extension(tau1s: Sequence[float], tau2s: Sequence[float], tau3s: Sequence[float]) -> CommandResult:
    """Maximum throughput, messages per admitted job and mean jobs ahead of the extension.
    Grids of length 1 are broadcast against the others, longer grids are zipped."""
    length = max(len(tau1s), len(tau2s), len(tau3s))
    grids = []
    for grid in (tau1s, tau2s, tau3s):
        if len(grid) not in (1, length):
            raise UsageError("extension grids must have length 1 or a common length")
        grids.append(list(grid) * length if len(grid) == 1 else list(grid))

    rows = []
    for tau1, tau2, tau3 in zip(*grids):
        lambda_star, u, q = extension_metrics(ExtensionParams(tau1=tau1, tau2=tau2, tau3=tau3))
        rows.append({'tau1': float(tau1), 'tau2': float(tau2), 'tau3': float(tau3), 'lambda_star_ext': lambda_star,
                     'u': u, 'q': q})
    return CommandResult(['tau1', 'tau2', 'tau3', 'lambda_star_ext', 'u', 'q'], rows)


def cmd_verify(max_states: int, tolerance: float = DEFAULT_TOLERANCE, network_files: Sequence[str] = (),
               population: Optional[int] = None, export_dir: Optional[str] = None) -> CommandResult:
    """Run the verification suite, plus the generic cross-checks on networks read from files.
    :param population: replaces N of every network read from a file
    :param export_dir: if set, the suite's own networks are also written there as JSON files
    """
    networks = {}
    for path in network_files:
        spec = load_network(path)
        networks[os.path.basename(path)] = spec.with_population(population) if population else spec
    if export_dir:
        os.makedirs(export_dir, exist_ok=True)
        for name, spec in suite_networks().items():
            path = os.path.join(export_dir, name.replace(" ", "_").replace("=", "") + ".json")
            with open(path, "w") as f:
                f.write(network_to_json(spec))
        logging.info(f"Wrote the suite networks to {export_dir}")

    report = run_verification_suite(tolerance=tolerance, max_states=max_states, networks=networks)
    rows = [{'check': x.name, 'passed': x.passed, 'residual': x.residual, 'detail': x.detail} for x in report.checks]
    worst = max(report.checks, key=lambda x: x.residual)
    logging.info(f"Verification: {len(report.checks)} checks, {len(report.failures)} failed, "
                 f"max residual {worst.residual:.3g} ({worst.name})")
    return CommandResult(['check', 'passed', 'residual', 'detail'], rows, passed=report.passed)


def analytic_overlays(config: SimConfig) -> Row:
    """Closed-form reference values for a simulated point."""
    scheme, lam, N = config.scheme, config.lam, config.N
    if scheme.kind == "extension":
        params = scheme.extension_params()
        lambda_star, u, q = extension_metrics(params)
        return {'lambda_star': lambda_star, 'blocking_limit': max(0.0, 1.0 - lambda_star / lam),
                'blocking_finite': extension_blocking_finite(N, lam, params), 'messages_per_job_analytic': u,
                'jobs_ahead_analytic': q, 'message_budget': 1.0 / min(params.tau2, params.tau3)}
    law = scheme.update_law()
    return {'lambda_star': throughput_bound(BoundParams(delta=1.0 / law.tau, K=law.K)),
            'blocking_limit': blocking_limit(lam, 1.0 / law.tau, law.K),
            'blocking_finite': blocking_finite(N, lam, law),
            'messages_per_job_analytic': messages_per_admitted_job(law),
            'jobs_ahead_analytic': None, 'message_budget': 1.0 / law.tau}


POINT_COLUMNS = ['policy', 'service', 'N', 'lambda', 'tau', 'K', 'tau1', 'tau2', 'tau3']
OVERLAY_COLUMNS = ['lambda_star', 'blocking_limit', 'blocking_finite', 'messages_per_job_analytic',
                   'jobs_ahead_analytic', 'message_budget']


def point_row(config: SimConfig) -> Row:
    scheme = config.scheme
    return {'policy': scheme.label(), 'service': config.service.label(), 'N': config.N, 'lambda': config.lam,
            'tau': scheme.tau, 'K': scheme.K, 'tau1': scheme.tau1, 'tau2': scheme.tau2, 'tau3': scheme.tau3}


def expand_sweep(spec: ExperimentSpec) -> List[SimConfig]:
    """All simulation points of a sweep: variants x services x the cartesian product of the sweep grids."""
    base = spec.sim
    variants = spec.variants or [base.scheme]
    services = spec.services or [base.service]
    keys = sorted(spec.sweep)
    points = []
    for variant, service in itertools.product(variants, services):
        for values in itertools.product(*(spec.sweep[k] for k in keys)):
            policy_updates = {k: v for k, v in zip(keys, values) if k in POLICY_SWEEP_KEYS}
            sim_updates = {('lam' if k == 'lambda' else k): v for k, v in zip(keys, values)
                           if k not in POLICY_SWEEP_KEYS}
            scheme = PolicyConfig(**{**variant.dict(), **policy_updates})
            points.append(SimConfig(**{**base.dict(), **sim_updates, 'scheme': scheme, 'service': service}))
    return points


def _run_one(config: SimConfig) -> Metrics:
    return run(config)


def run_all(configs: List[SimConfig], workers: int = 1) -> List[Metrics]:
    """Run independent simulations, in a process pool when workers > 1. Results keep the input order."""
    if workers > 1 and len(configs) > 1:
        with multiprocessing.Pool(processes=workers) as pool:
            return pool.map(_run_one, configs)
    return [_run_one(x) for x in configs]


def with_seed(config: SimConfig, seed: int) -> SimConfig:
    return config.copy(update={'seed': seed, 'trace_path': None if seed != config.seed else config.trace_path})


def cmd_simulate(spec: ExperimentSpec, workers: int = 1) -> CommandResult:
    """One row per seed for the single configured point."""
    configs = [with_seed(spec.sim, s) for s in spec.seed_list()]
    overlays = analytic_overlays(spec.sim)
    rows = []
    passed = True
    for config, metrics in zip(configs, run_all(configs, workers)):
        passed &= metrics.audits_passed
        rows.append({**point_row(config), 'seed': config.seed, **metrics.summary(), **overlays,
                     'audits_passed': metrics.audits_passed})
    columns = POINT_COLUMNS + ['seed'] + list(SUMMARY_FIELDS) + OVERLAY_COLUMNS + ['audits_passed']
    return CommandResult(columns, rows, passed=passed)


def cmd_sweep(spec: ExperimentSpec, workers: int = 1) -> CommandResult:
    """One row per sweep point with means and 95% half-widths over seeds, plus analytic overlays."""
    points = expand_sweep(spec)
    seeds = spec.seed_list()
    configs = [with_seed(p, s) for p in points for s in seeds]
    logging.info(f"Sweep: {len(points)} points x {len(seeds)} seeds")
    results = run_all(configs, workers)

    rows = []
    passed = True
    for i, point in enumerate(points):
        runs = results[i * len(seeds):(i + 1) * len(seeds)]
        audits_passed = all(m.audits_passed for m in runs)
        passed &= audits_passed
        row = {**point_row(point), 'seeds': len(runs)}
        if len(runs) > 1:
            ci = estimate_ci(runs)
            for field in SUMMARY_FIELDS:
                row[field] = ci.mean[field]
                row[f"{field}_hw"] = ci.half_width[field]
        else:
            row.update(runs[0].summary())
        row.update(analytic_overlays(point))
        row['audits_passed'] = audits_passed
        rows.append(row)

    columns = POINT_COLUMNS + ['seeds']
    for field in SUMMARY_FIELDS:
        columns += [field, f"{field}_hw"]
    return CommandResult(columns + OVERLAY_COLUMNS + ['audits_passed'], rows, passed=passed)


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> CommandResult:
    if spec.mode == "bound":
        return cmd_bound(spec.deltas, spec.Ks, spec.products)
    if spec.mode == "pmf":
        if spec.N is None or spec.lam is None:
            raise UsageError("pmf needs N and lambda")
        extension = None
        if spec.tau1s and spec.tau2s and spec.tau3s:
            extension = ExtensionParams(tau1=spec.tau1s[0], tau2=spec.tau2s[0], tau3=spec.tau3s[0])
        tau = spec.taus[0] if spec.taus else None
        return cmd_pmf(spec.N, spec.lam, tau, (spec.Ks or [2])[0], extension)
    if spec.mode == "simulate":
        return cmd_simulate(spec, workers)
    if spec.mode == "sweep":
        return cmd_sweep(spec, workers)
    if spec.mode == "verify":
        return cmd_verify(spec.max_states)
    if spec.mode == "extension":
        return cmd_extension(spec.tau1s, spec.tau2s or [], spec.tau3s or [])
    raise UsageError(f"mode {spec.mode} cannot run directly")


def apply_overrides(spec: ExperimentSpec, args: argparse.Namespace) -> ExperimentSpec:
    """Command-line flags take precedence over the experiment file."""
    updates = {}
    if getattr(args, 'seeds', None) is not None:
        updates['seeds'] = args.seeds[0] if len(args.seeds) == 1 and not args.seed_list else args.seeds
    if getattr(args, 'output', None):
        updates['output'] = args.output
    if spec.sim is not None:
        sim_updates = {k: getattr(args, k) for k in ('seed', 'horizon', 'warmup') if getattr(args, k, None) is not None}
        if getattr(args, 'trace', None):
            sim_updates['trace_path'] = args.trace
        if sim_updates:
            updates['sim'] = SimConfig(**{**spec.sim.dict(), **sim_updates})
    return spec.copy(update=updates)


def cmd_reproduce(name: str, args: argparse.Namespace) -> Tuple[ExperimentSpec, CommandResult]:
    """Run a shipped preset from config/presets."""
    path = os.path.join(PRESET_DIR, f"{name}.json")
    if not os.path.exists(path):
        available = sorted(x[:-5] for x in os.listdir(PRESET_DIR) if x.endswith(".json"))
        raise UsageError(f"unknown preset {name}, available: {', '.join(available)}")
    spec = apply_overrides(load_experiment(path), args)
    return spec, run_experiment(spec, args.workers)


class HyperlbArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = HyperlbArgumentParser(description='Hyper-scalable load balancing: bounds, product forms and simulation')
    parser.add_argument('--verbose', action='store_true', default=False, help='log at DEBUG level')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    def _common(p: argparse.ArgumentParser, sim: bool = False):
        p.add_argument('--config', type=str, help='experiment file (JSON)')
        p.add_argument('--output', type=str, help='CSV output path, default stdout')
        if sim:
            p.add_argument('--seed', type=int, help='base seed')
            p.add_argument('--seeds', type=int, nargs='+', help='number of seeds, or an explicit list with --seed-list')
            p.add_argument('--seed-list', dest='seed_list', action='store_true', default=False,
                           help='interpret --seeds as explicit seeds')
            p.add_argument('--horizon', type=float, help='simulated time T')
            p.add_argument('--warmup', type=float, help='fraction of T discarded')
            p.add_argument('--workers', type=int, default=1, help='parallel simulation processes')
            p.add_argument('--trace', type=str, help='dump the events of the first seed to this file')

    p = sub.add_parser('bound', help='throughput bound lambda*(delta, K)')
    _common(p)
    p.add_argument('--deltas', type=float, nargs='+')
    p.add_argument('--Ks', type=int, nargs='+')
    p.add_argument('--products', type=float, nargs='+', help='curves lambda*(a/K, K) over integer K')

    p = sub.add_parser('pmf', help='open/closed distribution and finite-N blocking')
    _common(p)
    p.add_argument('--N', type=int)
    p.add_argument('--lambda', dest='lam', type=float)
    p.add_argument('--tau', type=float)
    p.add_argument('--K', type=int, default=2)
    p.add_argument('--tau1', type=float)
    p.add_argument('--tau2', type=float)
    p.add_argument('--tau3', type=float)

    for name, help_text in (('simulate', 'simulate one configuration over seeds'),
                            ('sweep', 'simulate a parameter grid with confidence intervals')):
        p = sub.add_parser(name, help=help_text)
        _common(p, sim=True)

    p = sub.add_parser('verify', help='product form vs Markov chain cross-checks')
    _common(p)
    p.add_argument('--max-states', dest='max_states', type=int, default=10 ** 7)
    p.add_argument('--tolerance', type=float, default=DEFAULT_TOLERANCE)
    p.add_argument('--network', type=str, nargs='+', default=[], help='network files (JSON) to cross-check as well')
    p.add_argument('--N', type=int, help='population of the networks read with --network')
    p.add_argument('--export-networks', dest='export_dir', type=str, help='write the suite networks to this directory')

    p = sub.add_parser('extension', help='cool-down extension metrics')
    _common(p)
    p.add_argument('--tau1', type=float, nargs='+')
    p.add_argument('--tau2', type=float, nargs='+')
    p.add_argument('--tau3', type=float, nargs='+')

    p = sub.add_parser('reproduce', help='run a preset from config/presets')
    _common(p, sim=True)
    p.add_argument('preset', type=str)
    return parser


def _dispatch(args: argparse.Namespace) -> Tuple[CommandResult, Optional[str]]:
    if args.command == 'reproduce':
        spec, result = cmd_reproduce(args.preset, args)
        return result, spec.output

    if args.config:
        spec = apply_overrides(load_experiment(args.config), args)
        if args.command != spec.mode and args.command in ('simulate', 'sweep'):
            spec = spec.copy(update={'mode': args.command})
        return run_experiment(spec, getattr(args, 'workers', 1)), spec.output

    if args.command == 'bound':
        return cmd_bound(args.deltas, args.Ks, args.products), args.output
    if args.command == 'pmf':
        if args.N is None or args.lam is None:
            raise UsageError("pmf needs --N and --lambda")
        extension = None
        if None not in (args.tau1, args.tau2, args.tau3):
            extension = ExtensionParams(tau1=args.tau1, tau2=args.tau2, tau3=args.tau3)
        return cmd_pmf(args.N, args.lam, args.tau, args.K, extension), args.output
    if args.command == 'verify':
        return cmd_verify(args.max_states, args.tolerance, args.network, args.N, args.export_dir), args.output
    if args.command == 'extension':
        if not (args.tau1 and args.tau2 and args.tau3):
            raise UsageError("extension needs --tau1, --tau2 and --tau3")
        return cmd_extension(args.tau1, args.tau2, args.tau3), args.output
    raise UsageError(f"{args.command} needs --config")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command.
    :return: 0 on success, 1 on usage errors, 2 on configuration errors, 3 on audit or verification failures
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as ex:
        logging.error(f"Usage: {ex}")
        return EXIT_USAGE

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        result, output = _dispatch(args)
    except UsageError as ex:
        logging.error(f"Usage: {ex}")
        return EXIT_USAGE
    except AuditError as ex:
        logging.error(str(ex))
        logging.error("Aborting - simulation audit failed")
        return EXIT_AUDIT
    except ValidationError as ex:
        logging.error(str(ex))
        logging.error("Aborting - invalid configuration")
        return EXIT_CONFIG
    except ValueError as ex:
        logging.error(str(ex))
        logging.error("Aborting - invalid configuration")
        return EXIT_CONFIG

    write_csv(result, output)
    if not result.passed:
        logging.error("Audit or verification failures, see the passed/audits_passed columns")
        return EXIT_AUDIT
    return EXIT_OK


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    sys.exit(main())
