"""Command-line interface: ``unravel <command> ...``.

Outputs are JSON/CSV files in an output directory (``--out``, else the
``UNRAVEL_OUTPUT_DIR`` environment variable, else ``./unravel-out``), each
run accompanied by ``manifest.json`` with the config hash, seeds, schema
version and a sha256 of every file written.

Exit codes: 0 ok, 1 validation or statistical failure, 2 I/O error,
3 numerical abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import METHODS, compare, ensemble_density, run_ensemble, run_one
from .grw import (build_grw_family, gaussian_wavepacket, grw_localization_experiment,
                  lattice_hamiltonian, tune_width)
from .master import StepSizeError, integrate_master
from .model import ModelError, basis, load_model, model_from_dict, normalize, projector, validate_model
from .pdp import ForbiddenJump, replay_normalized, simulate_linear
from .poisson import PoissonPath, sample_unit_poisson

SCHEMA_VERSION = 1
OUTPUT_ENV = "UNRAVEL_OUTPUT_DIR"
DEFAULT_OUTPUT = "unravel-out"

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


@dataclasses.dataclass
class RunConfig:
    model: str | None = None
    method: str = "exact"
    dt: float = 0.01
    horizon: float = 2.0
    trajectories: int = 1
    seed: int = 0
    out: str | None = None
    checkpoints: tuple = ()
    stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.trajectories < 1:
            raise ValueError("need at least one trajectory")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        self.checkpoints = tuple(float(t) for t in self.checkpoints)
        bad = [t for t in self.checkpoints if not 0.0 <= t <= self.horizon]
        if bad:
            raise ValueError(f"checkpoints {bad} outside [0, horizon]")

    def hashed(self) -> dict:
        """Fields that determine the outputs (not where they are written)."""
        doc = dataclasses.asdict(self)
        doc.pop("out")
        doc["checkpoints"] = list(self.checkpoints)
        if self.model is not None:
            doc["model_sha256"] = _sha256(Path(self.model).read_bytes())
            doc["model"] = Path(self.model).name
        return doc


# -- persistence --------------------------------------------------------------

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, default=_default)


class Collector:
    """Writes all files of a run and the manifest that describes them."""

    def __init__(self, out: Path, command: str, config: dict):
        self.out = out
        self.command = command
        self.config = config
        self.files = {}
        self.extra = {}
        out.mkdir(parents=True, exist_ok=True)

    def write_text(self, name: str, text: str) -> Path:
        p = self.out / name
        data = text.encode()
        p.write_bytes(data)
        self.files[name] = _sha256(data)
        return p

    def write_json(self, name: str, doc) -> Path:
        return self.write_text(name, json.dumps(doc, sort_keys=True, indent=1, default=_default) + "\n")

    def write_jsonl(self, name: str, docs) -> Path:
        return self.write_text(name, "".join(dumps(d) + "\n" for d in docs))

    def write_csv(self, name: str, header, rows) -> Path:
        lines = [",".join(header)]
        lines += [",".join(_fmt(x) for x in row) for row in rows]
        return self.write_text(name, "\n".join(lines) + "\n")

    def finish(self) -> Path:
        cfg = dumps(self.config)
        manifest = {
            "schema_version": SCHEMA_VERSION, "package_version": __version__,
            "command": self.command, "config": self.config,
            "config_hash": _sha256(cfg.encode()), "outputs": self.files, **self.extra,
        }
        p = self.out / "manifest.json"
        p.write_text(json.dumps(manifest, sort_keys=True, indent=1, default=_default) + "\n")
        return p


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _state_rows(times, states):
    return [[t] + [v for z in s.ravel() for v in (z.real, z.imag)] for t, s in zip(times, states)]


def _state_header(d: int, prefix: str = "psi") -> list:
    return ["t"] + [f"{p}_{prefix}_{i}" for i in range(d) for p in ("re", "im")]


def _rho_header(d: int, stderr: bool = False) -> list:
    cols = ["t"]
    for i in range(d):
        for j in range(d):
            cols += [f"re_rho_{i}{j}", f"im_rho_{i}{j}"]
    if stderr:
        cols += [f"se_rho_{i}{j}" for i in range(d) for j in range(d)]
    return cols


# -- helpers ----------------------------------------------------------------

def _output_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _load(path):
    m, psi0 = load_model(path)
    if psi0 is None:
        psi0 = basis(m.dim, m.dim - 1)
    return m, normalize(psi0)


def _config(args, **over) -> RunConfig:
    doc = {}
    if getattr(args, "config", None):
        doc.update(json.loads(Path(args.config).read_text()))
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            doc[f.name] = v
    doc.update(over)
    return RunConfig(**doc)


def _checkpoints(text: str | None):
    if text is None:
        return None
    return tuple(float(s) for s in text.split(",") if s.strip())


def _sim_kwargs(method: str, full: bool = False) -> dict:
    """Simulator options; ``full`` keeps knots and the norm process as written by ``trajectory``."""
    if method == "linear":
        return {"keep_knots": full}
    return {"keep_knots": full, "with_norm": full}


# -- commands -----------------------------------------------------------------

def cmd_validate(args) -> int:
    with open(args.model) as fh:
        doc = json.load(fh)
    m, _ = model_from_dict(doc)
    report = validate_model(m)
    print(report.render())
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_master(args) -> int:
    cfg = _config(args)
    m, psi0 = _load(cfg.model)
    mt = integrate_master(m, projector(psi0), cfg.horizon, cfg.dt)
    col = Collector(_output_dir(cfg.out), "master", cfg.hashed())
    col.write_csv("master.csv", _rho_header(m.dim), _state_rows(mt.times, mt.states))
    col.write_json("master.json", {"times": mt.times, "max_correction": float(np.max(mt.corrections, initial=0.0))})
    col.finish()
    print(f"master: {len(mt.times)} grid points written to {col.out}")
    return EXIT_OK


def cmd_trajectory(args) -> int:
    cfg = _config(args)
    m, psi0 = _load(cfg.model)
    rec = run_one(m, psi0, cfg.method, cfg.horizon, cfg.dt, cfg.seed, args.index, **_sim_kwargs(cfg.method, True))
    col = Collector(_output_dir(cfg.out), "trajectory", {**cfg.hashed(), "index": args.index})
    doc = rec.to_dict(cfg.stride)
    col.write_json("trajectory.json", doc)
    col.write_csv("trajectory.csv", _state_header(m.dim), _state_rows(doc["times"], _states_of(doc)))
    col.extra["seeds"] = {"master": cfg.seed, "trajectories": [[cfg.seed, args.index]]}
    col.finish()
    print(f"trajectory {args.index} ({cfg.method}): {_count_events(rec)} jumps, written to {col.out}")
    return EXIT_OK


def _states_of(doc):
    return [np.array(s["re"]) + 1j * np.array(s["im"]) for s in doc["states"]]


def _count_events(rec) -> int:
    if hasattr(rec, "events"):
        return len(rec.events)
    return sum(len(j) for j in rec.path.jumps)


def _jump_path(rec) -> PoissonPath:
    return rec.path if hasattr(rec, "path") else rec.jump_path()


def _ensemble(cfg: RunConfig, workers: int, m, psi0, full: bool = False):
    return run_ensemble(m, psi0, cfg.method, cfg.trajectories, cfg.seed, cfg.horizon, cfg.dt,
                        workers=workers, **_sim_kwargs(cfg.method, full))


def _write_ensemble(col: Collector, cfg: RunConfig, records, dump_paths: bool, dump_traj: bool):
    ens = ensemble_density(records)
    d = ens.mean.shape[1]
    rows = [r + list(se.ravel()) for r, se in zip(_state_rows(ens.times, ens.mean), ens.stderr)]
    col.write_csv("ensemble.csv", _rho_header(d, stderr=True), rows)
    col.write_jsonl("events.jsonl", ({"trajectory": i, "jumps": _jump_path(r).to_dict()["jumps"]}
                                     for i, r in enumerate(records)))
    if dump_paths:
        col.write_jsonl("paths.jsonl", (_jump_path(r).to_dict() for r in records))
    if dump_traj:
        col.write_jsonl("trajectories.jsonl", (r.to_dict(cfg.stride) for r in records))
    col.extra["seeds"] = {"master": cfg.seed,
                          "trajectories": [[cfg.seed, i] for i in range(len(records))]}
    return ens


def cmd_ensemble(args) -> int:
    cfg = _config(args)
    m, psi0 = _load(cfg.model)
    records = _ensemble(cfg, args.workers, m, psi0, full=args.dump_trajectories)
    col = Collector(_output_dir(cfg.out), "ensemble", cfg.hashed())
    _write_ensemble(col, cfg, records, args.dump_paths, args.dump_trajectories)
    col.finish()
    print(f"ensemble: {len(records)} {cfg.method} trajectories written to {col.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    if not cfg.checkpoints:
        raise ValueError("compare needs --checkpoints")
    m, psi0 = _load(cfg.model)
    ref_model = m
    if args.master_model:
        ref_model, _ = _load(args.master_model)
    records = _ensemble(cfg, args.workers, m, psi0)
    mt = integrate_master(ref_model, projector(psi0), cfg.horizon, cfg.dt)
    hashed = cfg.hashed()
    if args.master_model:
        hashed["master_model_sha256"] = _sha256(Path(args.master_model).read_bytes())
    col = Collector(_output_dir(cfg.out), "compare", hashed)
    ens = _write_ensemble(col, cfg, records, args.dump_paths, False)
    col.write_csv("master.csv", _rho_header(m.dim), _state_rows(mt.times, mt.states))
    report = compare(ens, mt, cfg.checkpoints)
    col.write_json("compare.json", report.to_dict())
    col.finish()
    print(report.table())
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_grw(args) -> int:
    box = (0.0, float(args.box))
    a = args.width_a if args.width_a is not None else tune_width(args.sites, box, args.grid)
    fam = build_grw_family(args.sites, box, args.grid, a)
    h = lattice_hamiltonian(args.sites, args.hopping) if args.hopping else None
    width = args.packet_width if args.packet_width is not None else 0.1 * args.box
    psi0 = gaussian_wavepacket(fam.sites, 0.5 * args.box, width)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        rep = grw_localization_experiment(fam, psi0, args.horizon, args.trajectories, args.seed,
                                          hamiltonian=h, dt=args.dt)
    config = {"sites": args.sites, "grid": args.grid, "width_a": a, "box": args.box,
              "hopping": args.hopping, "packet_width": width, "horizon": args.horizon,
              "dt": args.dt, "trajectories": args.trajectories, "seed": args.seed}
    col = Collector(_output_dir(args.out), "grw-demo", config)
    col.write_json("grw_summary.json", {**rep.summary(), "width_a": a, "delta": fam.delta})
    col.write_csv("grw_histogram.csv", ["channel", "center", "count", "expected_probability"],
                  [[i, x, c, p] for i, (x, c, p) in enumerate(zip(fam.centers, rep.counts, rep.expected))])
    col.write_csv("grw_variance.csv", ["jump", "pre_mean", "pre_var", "post_mean", "post_var"],
                  [[i, *row] for i, row in enumerate(zip(rep.pre_mean, rep.pre_var, rep.post_mean, rep.post_var))])
    col.extra["seeds"] = {"master": args.seed}
    col.finish()
    s = rep.summary()
    print(f"defect {s['completeness_defect']:.4g}  a {a:.6g}  jumped {s['jumped']}/{s['trajectories']}")
    print(f"variance reduced in {s['variance_reduced_fraction']:.4f} of jumps; "
          f"chi2 {s['chi2']:.3f} (dof {s['chi2_dof']}), p = {s['chi2_pvalue']:.4g}")
    for note in rep.notes:
        print("note:", note)
    return EXIT_OK


def cmd_paths_dump(args) -> int:
    if args.channels < 1 or args.trajectories < 1:
        raise ValueError("need at least one channel and one trajectory")
    paths = [sample_unit_poisson(args.channels, args.horizon, args.seed, i) for i in range(args.trajectories)]
    config = {"channels": args.channels, "horizon": args.horizon, "seed": args.seed,
              "trajectories": args.trajectories}
    col = Collector(_output_dir(args.out), "paths-dump", config)
    col.write_jsonl("paths.jsonl", (p.to_dict() for p in paths))
    col.extra["seeds"] = {"master": args.seed, "trajectories": [[args.seed, i] for i in range(len(paths))]}
    col.finish()
    print(f"{len(paths)} unit-rate paths written to {col.out}")
    return EXIT_OK


def cmd_paths_replay(args) -> int:
    m, psi0 = _load(args.model)
    lines = [ln for ln in Path(args.paths).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty path file")
    paths = [PoissonPath.from_json(ln) for ln in lines]
    config = {"model": Path(args.model).name, "model_sha256": _sha256(Path(args.model).read_bytes()),
              "paths_sha256": _sha256(Path(args.paths).read_bytes()), "dt": args.dt, "stride": args.stride}
    col = Collector(_output_dir(args.out), "paths-replay", config)
    docs = []
    for i, p in enumerate(paths):
        lin = simulate_linear(m, psi0, p.horizon, args.dt, trajectory=i, path=p)
        rec = replay_normalized(m, psi0, p, args.dt, trajectory=i)
        docs.append({"index": i, "linear": lin.to_dict(args.stride), "normalized": rec.to_dict(args.stride)})
    col.write_jsonl("replay.jsonl", docs)
    col.finish()
    print(f"replayed {len(paths)} paths, written to {col.out}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unravel", description="Piecewise-deterministic unravellings of GKSL dynamics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("model", help="JSON model file")
    run.add_argument("--config", help="JSON file with RunConfig fields (flags override)")
    run.add_argument("--dt", type=float)
    run.add_argument("--horizon", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")

    traj = argparse.ArgumentParser(add_help=False)
    traj.add_argument("--method", choices=METHODS)
    traj.add_argument("--stride", type=int, help="write every stride-th grid point")

    ens = argparse.ArgumentParser(add_help=False)
    ens.add_argument("-N", "--trajectories", type=int)
    ens.add_argument("--workers", type=int, default=1)
    ens.add_argument("--dump-paths", action="store_true", help="also write realized jump paths")

    s = sub.add_parser("validate", help="check a model file")
    s.add_argument("model")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("master", parents=[run], help="integrate the master equation")
    s.set_defaults(func=cmd_master)

    s = sub.add_parser("trajectory", parents=[run, traj], help="simulate one trajectory")
    s.add_argument("--index", type=int, default=0, help="trajectory index (substream)")
    s.set_defaults(func=cmd_trajectory)

    s = sub.add_parser("ensemble", parents=[run, traj, ens], help="simulate N trajectories")
    s.add_argument("--dump-trajectories", action="store_true", help="write all states (large)")
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("compare", parents=[run, traj, ens], help="ensemble mean vs master solution")
    s.add_argument("--checkpoints", type=_checkpoints, help="comma-separated times, e.g. 0.5,1,2")
    s.add_argument("--master-model", help="integrate the master equation of this model instead")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("grw-demo", help="localization experiment on a 1D lattice")
    s.add_argument("--sites", type=int, default=64)
    s.add_argument("--grid", type=int, default=64, help="number of localization centres k")
    s.add_argument("--width-a", type=float, help="Gaussian width parameter (default: tuned)")
    s.add_argument("--box", type=float, default=1.0, help="box length")
    s.add_argument("--hopping", type=float, default=0.0, help="nearest-neighbour hopping (0: H = 0)")
    s.add_argument("--packet-width", type=float, help="initial packet std (default 0.1 * box)")
    s.add_argument("-N", "--trajectories", type=int, default=1000)
    s.add_argument("--horizon", type=float, default=10.0)
    s.add_argument("--dt", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_grw)

    s = sub.add_parser("paths", help="dump or replay unit-rate Poisson paths")
    psub = s.add_subparsers(dest="action", required=True)
    d = psub.add_parser("dump", help="sample unit-rate paths to JSON lines")
    d.add_argument("--channels", type=int, required=True)
    d.add_argument("--horizon", type=float, required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("-N", "--trajectories", type=int, default=1)
    d.add_argument("--out")
    d.set_defaults(func=cmd_paths_dump)
    r = psub.add_parser("replay", help="run linear and normalized evolutions on stored paths")
    r.add_argument("model")
    r.add_argument("paths", help="JSON-lines file of paths")
    r.add_argument("--dt", type=float, default=0.01)
    r.add_argument("--stride", type=int, default=1)
    r.add_argument("--out")
    r.set_defaults(func=cmd_paths_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (StepSizeError, ForbiddenJump, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ModelError as exc:
        print(f"invalid model:\n{exc}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
