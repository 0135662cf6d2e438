"""Batch front door.

Commands:
    funlong simulate  --config F --out D [--seed S]
    funlong estimate  --config F --data D --out D [--seed S]
    funlong study     --config F --out D [--seed S] [--jobs J]
    funlong list-dgps

Configs are INI files with a [run] section plus one section per command
(multiple [study.NAME] sections fan out to a worker pool).  Unknown keys
are errors, every default is echoed into the emitted resolved.cfg, and
re-running from that file reproduces all outputs bitwise.

Exit codes: 0 success, 2 config validation error, 3 positivity violation,
64 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from multiprocessing import get_context
from pathlib import Path

from funlong.core.errors import InvalidConfigError, PositivityError
from funlong.core.grid import Partition, make_uniform_partition
from funlong.core.io import dataset_from_csv, dataset_to_csv
from funlong.core.view import PartitionView
from funlong.dgp.instances import INSTANCES
from funlong.dgp.interventional import simulate_interventional, simulate_observational
from funlong.estimators.estimate import dr_estimate, fit_h_process, gcomp_estimate, ipw_estimate
from funlong.estimators.features import FeatureSpec
from funlong.estimators.nuisance import (
    DiscreteTrueCensoring,
    DiscreteTruePropensity,
    fit_censoring,
    fit_propensity,
)
from funlong.estimators.regression import ExactFiniteState, LeastSquaresBasis
from funlong.estimators.weights import ModelQProcess
from funlong.studies.runners import REGIMES, StudyConfig, resolve_target, run_study

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_POSITIVITY = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# ------------------------------------------------------------- config schema

_RUN_KEYS = {"kind": str, "seed": int}
_SIM_KEYS = {"instance": str, "n": int, "seed": int, "regime": str}
_EST_KEYS = {"estimator": str, "instance": str, "regime": str, "target": str,
             "propensity": str, "censoring": str, "backend": str,
             "partition_k": int, "censored": bool}
_STUDY_KEYS = {"study_kind": str, "instance": str, "regime": str, "target": str,
               "n": int, "replicates": int, "seed": int, "ladder": str}

_SIM_DEFAULTS = {"n": 1000, "seed": 0, "regime": ""}
_EST_DEFAULTS = {"regime": "two_visit_always", "target": "terminal",
                 "propensity": "true", "censoring": "none", "backend": "tabular",
                 "partition_k": 0, "censored": False}
_STUDY_DEFAULTS = {"target": "terminal", "n": 100_000, "replicates": 20,
                   "seed": 20240801, "ladder": "2,4,8,16,32,64"}


def _coerce(raw: str, typ, section: str, key: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise InvalidConfigError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}",
                                 [f"{section}.{key}"]) from exc


def _read_section(cp: configparser.ConfigParser, section: str, keys: dict,
                  defaults: dict, required: tuple = ()) -> dict:
    out = dict(defaults)
    if cp.has_section(section):
        for key, raw in cp.items(section):
            base = key.split(".", 1)[0]
            if base == "option":
                out.setdefault("options", {})[key.split(".", 1)[1]] = _auto(raw)
                continue
            if key not in keys:
                raise InvalidConfigError(f"[{section}] unknown key {key!r}",
                                         [f"{section}.{key}"])
            out[key] = _coerce(raw, keys[key], section, key)
    missing = [k for k in required if k not in out]
    if missing:
        raise InvalidConfigError(
            f"[{section}] missing required key(s): {', '.join(missing)}",
            [f"{section}.{k}" for k in missing])
    return out


def _auto(raw: str):
    for typ in (int, float):
        try:
            return typ(raw)
        except ValueError:
            continue
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    return raw


def _validate_common(section: str, got: dict) -> None:
    if "n" in got and got["n"] < 1:
        raise InvalidConfigError(f"[{section}] n must be positive", [f"{section}.n"])
    if "instance" in got and got["instance"] not in INSTANCES:
        raise InvalidConfigError(
            f"[{section}] unknown instance {got['instance']!r}; see list-dgps",
            [f"{section}.instance"])
    if got.get("regime") and got["regime"] not in REGIMES:
        raise InvalidConfigError(
            f"[{section}] unknown regime {got['regime']!r}; see list-dgps",
            [f"{section}.regime"])


def validate_config(path: str, seed_override: int | None = None) -> dict:
    """Parse and normalize a config file; raises InvalidConfigError."""
    if not Path(path).exists():
        raise InvalidConfigError(f"config file not found: {path}", ["config"])
    cp = configparser.ConfigParser()
    cp.read(path)
    if not cp.has_section("run"):
        raise InvalidConfigError("missing [run] section", ["run"])
    run = _read_section(cp, "run", _RUN_KEYS, {}, required=("kind",))
    kind = run["kind"]
    norm: dict = {"run": run}
    if kind == "simulate":
        sim = _read_section(cp, "simulate", _SIM_KEYS, _SIM_DEFAULTS, required=("instance",))
        _validate_common("simulate", sim)
        norm["simulate"] = sim
    elif kind == "estimate":
        est = _read_section(cp, "estimate", _EST_KEYS, _EST_DEFAULTS,
                            required=("estimator", "instance"))
        _validate_common("estimate", est)
        if est["estimator"] not in ("ipw", "gcomp", "dr"):
            raise InvalidConfigError("[estimate] estimator must be ipw|gcomp|dr",
                                     ["estimate.estimator"])
        norm["estimate"] = est
    elif kind == "study":
        sections = [s for s in cp.sections() if s == "study" or s.startswith("study.")]
        if not sections:
            raise InvalidConfigError("study run needs at least one [study] section",
                                     ["study"])
        studies = {}
        for sec in sections:
            got = _read_section(cp, sec, _STUDY_KEYS, _STUDY_DEFAULTS,
                                required=("study_kind", "instance", "regime"))
            _validate_common(sec, got)
            ladder = tuple(int(v) for v in str(got["ladder"]).split(",") if v.strip())
            if list(ladder) != sorted(set(ladder)):
                raise InvalidConfigError(f"[{sec}] partition ladder must increase",
                                         [f"{sec}.ladder"])
            got["ladder"] = ladder
            studies[sec.split(".", 1)[1] if "." in sec else "main"] = got
        norm["studies"] = studies
    else:
        raise InvalidConfigError(f"[run] unknown kind {kind!r}", ["run.kind"])
    if seed_override is not None:
        norm["run"]["seed"] = seed_override
    return norm


def _emit_resolved(norm: dict, outdir: Path) -> None:
    cp = configparser.ConfigParser()
    cp["run"] = {k: str(v) for k, v in norm["run"].items()}
    for name in ("simulate", "estimate"):
        if name in norm:
            sec = {}
            for k, v in norm[name].items():
                if k == "options":
                    sec.update({f"option.{ok}": str(ov) for ok, ov in v.items()})
                else:
                    sec[k] = str(v)
            cp[name] = sec
    for name, got in norm.get("studies", {}).items():
        sec = {}
        for k, v in got.items():
            if k == "options":
                sec.update({f"option.{ok}": str(ov) for ok, ov in v.items()})
            elif k == "ladder":
                sec[k] = ",".join(str(x) for x in v)
            else:
                sec[k] = str(v)
        cp[f"study.{name}"] = sec
    with open(outdir / "resolved.cfg", "w") as fh:
        cp.write(fh)
    (outdir / "manifest.json").write_text(json.dumps(_manifest_dict(norm), indent=2,
                                                     sort_keys=True, default=str))


def _manifest_dict(norm: dict) -> dict:
    return {"tool": "funlong", "config": norm}


# ------------------------------------------------------------- commands


def _study_config(name: str, got: dict, run_seed: int | None) -> StudyConfig:
    seed = run_seed if run_seed is not None else got["seed"]
    return StudyConfig(
        kind=got["study_kind"], instance=got["instance"], regime=got["regime"],
        target=got["target"], ladder=tuple(got["ladder"]), n=got["n"],
        replicates=got["replicates"], seed=seed, options=got.get("options", {}),
    )


def _run_one_study(args):
    name, sc = args
    return name, run_study(sc)


def _cmd_study(norm: dict, outdir: Path, jobs: int) -> int:
    run_seed = norm["run"].get("seed")
    jobs_spec = [(name, _study_config(name, got, run_seed))
                 for name, got in norm["studies"].items()]
    if jobs > 1 and len(jobs_spec) > 1:
        with get_context("spawn").Pool(processes=jobs) as pool:
            results = pool.map(_run_one_study, jobs_spec)
    else:
        results = [_run_one_study(j) for j in jobs_spec]
    ok = True
    by_name = dict(jobs_spec)
    for name, rep in results:
        target = outdir / name if len(results) > 1 else outdir
        rep.write(target)
        sc = by_name[name]
        n_dump = int(sc.options.get("dump_trajectories", 0))
        if n_dump > 0:
            cfg = INSTANCES[sc.instance]()
            ds = simulate_observational(cfg, n_dump, sc.seed)
            dataset_to_csv(ds, target / "trajectories.csv",
                           target / "trajectories_manifest.json")
        print(rep)
        ok = ok and rep.all_passed
    return EXIT_OK


def _cmd_simulate(norm: dict, outdir: Path) -> int:
    sim = norm["simulate"]
    seed = norm["run"].get("seed", sim["seed"])
    cfg = INSTANCES[sim["instance"]]()
    if sim["regime"]:
        ds = simulate_interventional(cfg, REGIMES[sim["regime"]](), sim["n"], seed)
    else:
        ds = simulate_observational(cfg, sim["n"], seed)
    dataset_to_csv(ds, outdir / "data.csv", outdir / "data_manifest.json")
    print(f"wrote {ds.n} trajectories to {outdir / 'data.csv'}")
    return EXIT_OK


def _cmd_estimate(norm: dict, outdir: Path, datadir: Path) -> int:
    est = norm["estimate"]
    ds = dataset_from_csv(datadir / "data.csv", datadir / "data_manifest.json")
    cfg = INSTANCES[est["instance"]]()
    regime = REGIMES[est["regime"]]()
    target = resolve_target(est["target"])
    if est["partition_k"]:
        part = make_uniform_partition(est["partition_k"], ds.grid.tau)
    else:
        part = Partition(tuple(ds.grid.points))
    view = PartitionView(ds, part)
    prop = {
        "true": lambda: DiscreteTruePropensity(cfg),
        "tabular": lambda: fit_propensity(view, family="tabular"),
        "tabular_no_l": lambda: fit_propensity(view, family="tabular", include_l=False),
        "gaussian": lambda: fit_propensity(view, family="gaussian"),
        "gaussian_no_l": lambda: fit_propensity(view, family="gaussian", include_l=False),
    }.get(est["propensity"])
    if prop is None:
        raise InvalidConfigError(f"unknown propensity mode {est['propensity']!r}",
                                 ["estimate.propensity"])
    cens = {
        "none": lambda: None,
        "true": lambda: DiscreteTrueCensoring(cfg),
        "fitted": lambda: fit_censoring(view, include_l=True),
        "fitted_no_l": lambda: fit_censoring(view, include_l=False),
    }.get(est["censoring"])
    if cens is None:
        raise InvalidConfigError(f"unknown censoring mode {est['censoring']!r}",
                                 ["estimate.censoring"])
    backend = (ExactFiniteState(FeatureSpec("tabular")) if est["backend"] == "tabular"
               else LeastSquaresBasis(FeatureSpec("poly", degree=2)))
    seed = norm["run"].get("seed", 0)
    kind = est["estimator"]
    if kind == "ipw":
        report = ipw_estimate(ds, part, regime, prop(), cens(), target)
    elif kind == "gcomp":
        report = gcomp_estimate(ds, part, regime, backend, target,
                                censored=est["censored"], seed=seed)
    else:
        h = fit_h_process(ds, part, regime, backend, target, censored=est["censored"])
        q = ModelQProcess(regime, prop(), cens())
        report = dr_estimate(ds, part, h, q, regime, target)
    (outdir / "estimate.json").write_text(report.to_json())
    report.csv_row().to_csv(outdir / "estimate.csv", index=False)
    print(report.to_json())
    return EXIT_OK


def _cmd_list_dgps() -> int:
    print("instances:")
    for name in sorted(INSTANCES):
        print(f"  {name}")
    print("regimes:")
    for name in sorted(REGIMES):
        print(f"  {name}")
    return EXIT_OK


def _default_out(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    root = os.environ.get("FUNLONG_OUT")
    if not root:
        raise InvalidConfigError("no --out given and FUNLONG_OUT is not set", ["out"])
    return Path(root)


def main(argv=None) -> int:
    parser = _Parser(prog="funlong", description="longitudinal causal workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "estimate", "study"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        if name == "estimate":
            p.add_argument("--data", required=True)
        if name == "study":
            p.add_argument("--jobs", type=int, default=1)
    sub.add_parser("list-dgps")

    args = parser.parse_args(argv)
    if args.command == "list-dgps":
        return _cmd_list_dgps()
    try:
        norm = validate_config(args.config, seed_override=args.seed)
        outdir = _default_out(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        expected = {"simulate": "simulate", "estimate": "estimate", "study": "study"}
        if norm["run"]["kind"] != expected[args.command]:
            raise InvalidConfigError(
                f"config [run] kind={norm['run']['kind']!r} does not match "
                f"command {args.command!r}", ["run.kind"])
        _emit_resolved(norm, outdir)
        if args.command == "study":
            return _cmd_study(norm, outdir, args.jobs)
        if args.command == "simulate":
            return _cmd_simulate(norm, outdir)
        return _cmd_estimate(norm, outdir, Path(args.data))
    except InvalidConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        if exc.fields:
            sys.stderr.write(f"fields: {', '.join(exc.fields)}\n")
        return EXIT_CONFIG
    except PositivityError as exc:
        sys.stderr.write(f"positivity violation: {exc}")
        if exc.index is not None:
            sys.stderr.write(f" (index {exc.index}, history {exc.history})")
        sys.stderr.write("\n")
        return EXIT_POSITIVITY


if __name__ == "__main__":
    sys.exit(main())
