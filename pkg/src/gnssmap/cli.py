"""Command-line entry point: ``gnssmap {estimate,simulate,sweep,fit-classifier}``.

Exit codes: 0 success, 1 usage or data error, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import _backend, __version__
from .errors import ConfigError, GnssMapError
from .geo import DEFAULT_ELEVATION_BOUNDS, footprint_to_dict, load_footprint
from .ingest import build_dataset, load_observations, summarize
from .mapper import ALGORITHMS, HeightEstimate, estimate, sweep, threshold_values
from .report import sweep_rows_to_csv, sweep_summary, sweep_svg
from .signal_model import SIGNAL_INIT, FourPLParams, fit_4pl_mle, label_by_signal, mcfadden_r2
from .synth import (
    SignalDistributionSpec,
    default_scene,
    export,
    generate,
    load_scene_config,
    scene_to_dict,
)

logger = logging.getLogger("gnssmap")

EXIT_OK, EXIT_ERROR, EXIT_NONCONVERGED = 0, 1, 2
DEFAULT_INIT_C = 30.0


@dataclass
class RunConfig:
    command: str
    obs: Path | None = None
    footprint: Path | None = None
    algo: str = "4plb"
    elev_min: float = DEFAULT_ELEVATION_BOUNDS[0]
    elev_max: float = DEFAULT_ELEVATION_BOUNDS[1]
    init_a: float = SIGNAL_INIT["a"]
    init_b: float = SIGNAL_INIT["b"]
    init_c: float = DEFAULT_INIT_C
    init_d: float = SIGNAL_INIT["d"]
    sweep_c_min: float = 20.0
    sweep_c_max: float = 40.0
    sweep_c_step: float = 1.0
    seed: int | None = None
    out: Path | None = None
    dem_alt: float | None = None
    truth: str | None = None
    config: Path | None = None
    jobs: int = 1

    @classmethod
    def from_args(cls, ns):
        kw = {k: v for k, v in vars(ns).items() if k in cls.__dataclass_fields__ and v is not None}
        return cls(**kw)

    def validate(self):
        if self.command in ("estimate", "sweep", "fit-classifier") and self.obs is None:
            raise ConfigError(f"{self.command} needs --obs")
        if self.command in ("estimate", "sweep") and self.footprint is None:
            raise ConfigError(f"{self.command} needs --footprint")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}")
        if not self.elev_min < self.elev_max:
            raise ConfigError("--elev-min must be below --elev-max")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if self.seed is not None and self.seed < 0:
            raise ConfigError("--seed must be non-negative")
        self.init_params()
        if self.command == "sweep":
            threshold_values(self.sweep_c_min, self.sweep_c_max, self.sweep_c_step)
        return self

    def init_params(self):
        return FourPLParams(self.init_a, self.init_b, self.init_c, self.init_d)

    def to_dict(self):
        """Options echoed into reports; paths reduced to file names so
        identical inputs give identical bytes wherever they live."""
        d = asdict(self)
        d.pop("out")
        return {k: (v.name if isinstance(v, Path) else v) for k, v in d.items()}


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _dumps(doc):
    return json.dumps(_jsonable(doc), indent=2, sort_keys=False, allow_nan=False) + "\n"


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _metadata():
    return {"version": __version__, "backend": _backend.NAME}


def _load_inputs(cfg):
    records = load_observations(cfg.obs)
    fp = load_footprint(cfg.footprint)
    ds = build_dataset(records, fp, (cfg.elev_min, cfg.elev_max), dem_alt=cfg.dem_alt)
    return records, fp, ds


def _truth_height(spec):
    if spec is None:
        return None
    try:
        return float(spec)
    except ValueError:
        pass
    path = Path(spec)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return float(doc["height"])
    except FileNotFoundError as exc:
        raise ConfigError(f"truth file {path} not found") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"truth file {path} has no numeric 'height'") from exc


def _summary_line(est):
    if isinstance(est, HeightEstimate):
        if est.map_params is None:
            return f"{est.algorithm}: no estimate ({est.reason})"
        state = "converged" if est.converged else "NOT converged"
        return (f"{est.algorithm}: height {est.point:.2f} m, range ({est.range_low:.2f}, "
                f"{est.range_high:.2f}) m, {state} after {est.iterations} iteration(s): {est.reason}")
    note = f" [{est.warning}]" if est.warning else ""
    return f"{est.algorithm}: height {est.point:.2f} m{note}"


def cmd_estimate(cfg):
    records, fp, ds = _load_inputs(cfg)
    est = estimate(ds, cfg.algo, cfg.init_params())
    doc = {
        "building_id": fp.id,
        "estimate": est.to_dict(),
        "dataset": {**summarize(records, ds).to_dict(), **ds.provenance_counts},
        "config": cfg.to_dict(),
        "metadata": _metadata(),
    }
    line = _summary_line(est)
    if cfg.out:
        _write(cfg.out / "estimate.json", _dumps(doc))
        _write(cfg.out / "summary.txt", line + "\n")
        print(line)
    else:
        sys.stdout.write(_dumps(doc))
        print(line, file=sys.stderr)
    return EXIT_OK if est.converged else EXIT_NONCONVERGED


def _resolve_seed(seed):
    if seed is not None:
        return seed
    derived = int(np.random.SeedSequence().entropy % (2 ** 63))
    print(f"seed: {derived}", file=sys.stderr)
    return derived


def cmd_simulate(cfg):
    if cfg.config is not None:
        scene, dist = load_scene_config(cfg.config)
    else:
        scene, dist = default_scene(), SignalDistributionSpec()
    seed = _resolve_seed(cfg.seed if cfg.seed is not None else (scene.seed if cfg.config else None))
    scene = replace(scene, seed=seed)
    data = generate(scene, dist)
    out = cfg.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    export(data, out / "observations.csv")
    _write(out / "footprint.json", _dumps(footprint_to_dict(scene.footprint)))
    _write(out / "truth.json", _dumps({"height": scene.true_height, "seed": seed,
                                       "scene": scene_to_dict(scene, dist)}))
    print(f"wrote {len(data.records)} records to {out / 'observations.csv'}")
    return EXIT_OK


def cmd_sweep(cfg):
    records, fp, ds = _load_inputs(cfg)
    truth = _truth_height(cfg.truth)
    c_values = threshold_values(cfg.sweep_c_min, cfg.sweep_c_max, cfg.sweep_c_step)
    base = {"a": cfg.init_a, "b": cfg.init_b, "d": cfg.init_d}
    rows = sweep(ds, c_values, base, ALGORITHMS, jobs=cfg.jobs)
    summary = sweep_summary(rows, truth)
    envelope = {
        "building_id": fp.id,
        "truth_height": truth,
        "thresholds": c_values,
        "summary": summary,
        "dataset": {**summarize(records, ds).to_dict(), **ds.provenance_counts},
        "config": cfg.to_dict(),
        "metadata": _metadata(),
    }
    out = cfg.out or Path(".")
    # every estimate is gathered before anything is written
    _write(out / "sweep.csv", sweep_rows_to_csv(rows))
    _write(out / "sweep.json", _dumps(envelope))
    _write(out / "sweep.svg", sweep_svg(rows, truth))
    for algo, rep in summary.items():
        rmse = "n/a" if rep["rmse"] is None else f"{rep['rmse']:.2f} m"
        print(f"{algo:6s} converged {rep['n_converged']}/{rep['n_total']}  RMSE {rmse}")
    return EXIT_OK


def confusion_matrix(truth_open, pred_open):
    t = np.asarray(truth_open, dtype=bool)
    p = np.asarray(pred_open, dtype=bool)
    return {
        "open": {"open": int(np.sum(t & p)), "closed": int(np.sum(t & ~p))},
        "closed": {"open": int(np.sum(~t & p)), "closed": int(np.sum(~t & ~p))},
    }


def cmd_fit_classifier(cfg):
    records = load_observations(cfg.obs)
    lo, hi = cfg.elev_min, cfg.elev_max
    use = [r for r in records if r.truth_label and r.cn0 is not None and lo <= r.sat_elevation <= hi]
    if not use:
        raise ConfigError("no received records with a truth_label inside the elevation filter")
    y = np.array([r.truth_label == "open" for r in use], dtype=np.int8)
    x = np.array([r.cn0 for r in use])
    fit = fit_4pl_mle(y, x, cfg.init_params())
    pred = label_by_signal(fit.params, x).astype(bool)
    doc = {
        "fit": fit.to_dict(),
        "mcfadden_r2": mcfadden_r2(fit.log_likelihood, y),
        "n": len(y),
        "confusion": confusion_matrix(y.astype(bool), pred),
        "config": cfg.to_dict(),
        "metadata": _metadata(),
    }
    if cfg.out:
        _write(cfg.out / "classifier.json", _dumps(doc))
    else:
        sys.stdout.write(_dumps(doc))
    p = fit.params
    print(f"a={p.a:.4f} b={p.b:.4f} c={p.c:.3f} d={p.d:.4f}  McFadden R2={doc['mcfadden_r2']:.3f}",
          file=sys.stderr)
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


COMMANDS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "fit-classifier": cmd_fit_classifier,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--obs", type=Path, help="observation CSV")
    common.add_argument("--footprint", type=Path, help="footprint JSON")
    common.add_argument("--algo", choices=ALGORITHMS)
    common.add_argument("--elev-min", type=float, metavar="DEG")
    common.add_argument("--elev-max", type=float, metavar="DEG")
    for p in "abcd":
        common.add_argument(f"--init-{p}", type=float, dest=f"init_{p}")
    common.add_argument("--sweep-c-min", type=float)
    common.add_argument("--sweep-c-max", type=float, help="exclusive upper bound")
    common.add_argument("--sweep-c-step", "--sweep-step", type=float, dest="sweep_c_step")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, metavar="DIR")
    common.add_argument("--dem-alt", type=float, metavar="METRES",
                        help="set every receiver altitude to METRES + 1")
    common.add_argument("--truth", help="true height in metres, or a truth.json path")
    common.add_argument("--config", type=Path, help="scene JSON for simulate")
    common.add_argument("--jobs", type=int, help="worker processes for sweep")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="gnssmap", description="Building height from GNSS signal strength.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_args(ns).validate()
        return COMMANDS[cfg.command](cfg)
    except GnssMapError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
