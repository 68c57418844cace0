"""Command-line entry point: ``lccd simulate | discover | rank-test | experiment``.

Exit codes: 0 success, 2 configuration error, 3 data or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from lccd.config import ConfigError, RunConfig
from lccd.experiments import run_experiment
from lccd.graphs import Dag, GraphError, random_dag
from lccd.phase1 import SkeletonState
from lccd.pipeline import discover
from lccd.rank import chi2_rank_test, empirical_prob_matrix
from lccd.scm import Dataset, MixtureScm, default_equations, exact_joint, jitter, random_equations, sample
from lccd.tables import EmpiricalSource, ExactSource, UnderpopulatedStratum

EXIT_CONFIG = 2
EXIT_DATA = 3

# CLI flag -> RunConfig field
OVERRIDES = {
    "k": int,
    "alpha": float,
    "removal_rule": str,
    "rank_variant": str,
    "dof_rule": str,
    "removal_scope": str,
    "min_count": int,
    "candidate_radius": int,
    "em_restarts": int,
    "ci_alpha": float,
    "seed": int,
    "workers": int,
}


class DataError(Exception):
    pass


def _vertices(text: str) -> tuple:
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated vertex indices, got {text!r}") from None


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _read_dataset(path) -> Dataset:
    try:
        with open(path) as fh:
            return Dataset.from_csv(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise DataError(f"malformed dataset {path}: {exc}") from None


def _load_model(path) -> MixtureScm:
    """An SCM JSON, or a bare graph JSON that gets the default equations."""
    obj = _read_json(path)
    try:
        if "dag" in obj:
            return MixtureScm.from_json(obj)
        return default_equations(Dag.from_json(obj), obj.get("k", 2))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad model file {path}: {exc}") from None


def _config(args) -> RunConfig:
    base = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {f: getattr(args, f) for f in OVERRIDES if getattr(args, f, None) is not None}
    if getattr(args, "phase", None) is not None:
        changes["phases"] = args.phase
    return base.replace(**changes) if changes else base


def _add_overrides(p):
    p.add_argument("--config", help="flat JSON config file; flags below override it")
    for name, typ in OVERRIDES.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_simulate(args) -> int:
    if args.graph:
        scm = _load_model(args.graph)
        if scm.k != args.k and "dag" not in _read_json(args.graph):
            scm = default_equations(scm.dag, args.k)
    else:
        if args.chain:
            dag = Dag(args.chain, [(v, v + 1) for v in range(args.chain - 1)])
        elif args.random:
            n, p = args.random
            dag = random_dag(int(n), float(p), args.seed)
        else:
            raise DataError("one of --graph, --chain or --random is required")
        if args.equations == "random":
            scm = random_equations(dag, args.k, args.seed)
        else:
            scm = default_equations(dag, args.k)
    if args.jitter:
        scm = jitter(scm, args.jitter, args.seed)
    data = sample(scm, args.N, args.seed)
    _write(args.out, data.to_csv(with_labels=args.labels))
    if args.scm_out:
        _write(args.scm_out, _dump(scm.to_json()))
    return 0


def cmd_discover(args) -> int:
    config = _config(args)
    if bool(args.data) == bool(args.oracle):
        raise DataError("give exactly one of --data or --oracle")
    if args.oracle:
        scm = _load_model(args.oracle)
        try:
            source = ExactSource(exact_joint(scm))
        except ValueError as exc:
            raise DataError(str(exc)) from None
    else:
        source = EmpiricalSource(_read_dataset(args.data), config.min_count)
    if args.phase1:
        state = SkeletonState.from_json(_read_json(args.phase1))
        if state.g1.n != source.n_vars:
            raise DataError("Phase I graph and dataset disagree on the number of vertices")
        result = discover_from_phase1(source, state, config)
    else:
        try:
            result = discover(source, config)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    outputs = {"phase1.json": result.phase1.to_json()}
    if result.phase2 is not None:
        outputs["phase2.json"] = {**result.phase2.to_json(), "diagnostics": result.report.get("phase2", {})}
    if result.cpdag is not None:
        outputs["cpdag.json"] = result.cpdag.to_json()
    outputs["report.json"] = {k: v for k, v in result.report.items() if k != "phase2"}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for name, obj in outputs.items():
            _write(os.path.join(args.out, name), _dump(obj))
    final = outputs.get("cpdag.json") or outputs.get("phase2.json") or outputs["phase1.json"]
    sys.stdout.write(_dump(final))
    return 0


def discover_from_phase1(source, state: SkeletonState, config: RunConfig):
    """Resume the pipeline from a saved Phase I skeleton."""
    from lccd.orient import meek_close, orient_immoralities
    from lccd.phase2 import run_phase2
    from lccd.pipeline import DiscoveryResult

    result = DiscoveryResult(state)
    if config.phases >= 2:
        result.phase2 = run_phase2(source, state, config.k, config)
        result.report["phase2"] = result.phase2.diagnostics["phase2"]
    if config.phases >= 3:
        rep = {}
        result.cpdag = meek_close(orient_immoralities(result.skeleton, rep), strict=False, report=rep)
        result.report["orientation"] = rep
    return result


def cmd_rank_test(args) -> int:
    data = _read_dataset(args.data)
    config = _config(args)
    n = data.n_vars
    for v in args.S + args.S2 + args.C:
        if not 0 <= v < n:
            raise DataError(f"vertex {v} outside 0..{n - 1}")
    try:
        A = empirical_prob_matrix(data, args.S, args.S2, args.C, args.c, config.min_count)
        res = chi2_rank_test(A, config.k, variant=config.rank_variant, dof_rule=config.dof_rule)
    except (UnderpopulatedStratum, ValueError) as exc:
        raise DataError(str(exc)) from None
    out = {
        "statistic": res.statistic,
        "dof": res.dof,
        "p_value": res.p_value,
        "sigma_kplus1": res.sigma_kplus1,
        "stratum_count": A.count,
        "removal_threshold": config.removal_threshold,
        "rank_at_most_k": res.p_value > config.removal_threshold,
    }
    sys.stdout.write(_dump(out))
    return 0


def cmd_experiment(args) -> int:
    config = _config(args)
    result = run_experiment(args.name, config, quick=args.quick, runs=args.runs)
    paths = result.write(args.out)
    sys.stdout.write(result.json_text())
    logging.getLogger(__name__).info("wrote %s", ", ".join(paths))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lccd", description="Causal discovery under a latent mixture class.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a dataset CSV from a mixture SCM")
    p.add_argument("--graph", help="graph JSON {n, edges} or SCM JSON")
    p.add_argument("--chain", type=int, help="chain v0 -> ... -> v{n-1}")
    p.add_argument("--random", nargs=2, metavar=("N_VERTICES", "P"), help="Erdos-Renyi DAG")
    p.add_argument("--equations", choices=("default", "random"), default="default")
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", action="store_true", help="append the hidden class column u")
    p.add_argument("--out", default="-")
    p.add_argument("--scm-out", dest="scm_out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("discover", help="learn a CPDAG from data or exact tables")
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--oracle", help="SCM or graph JSON; use exact population tables")
    p.add_argument("--phase", type=int, choices=(1, 2, 3), help="last phase to run")
    p.add_argument("--phase1", help="resume from a saved Phase I JSON")
    p.add_argument("--out", help="directory for per-phase JSON and the run report")
    _add_overrides(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("rank-test", help="chi-square test of rank(M[S, S2 | C=c]) <= k")
    p.add_argument("--data", required=True)
    p.add_argument("--S", type=_vertices, required=True)
    p.add_argument("--S2", type=_vertices, required=True)
    p.add_argument("--C", type=_vertices, default=())
    p.add_argument("--c", type=int, default=0, help="little-endian code of the C assignment")
    _add_overrides(p)
    p.set_defaults(func=cmd_rank_test)

    p = sub.add_parser("experiment", help="reproduce test1, test2 or test3")
    p.add_argument("name", choices=("test1", "test2", "test3"))
    p.add_argument("--quick", action="store_true", help="reduced run counts")
    p.add_argument("--runs", type=int, help="override the run count")
    p.add_argument("--out", default="results")
    _add_overrides(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GraphError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
