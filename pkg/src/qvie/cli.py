"""Command line entry point: ``qvie validate|run|mesh <config.json>``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .assembly import Discretization, operator_terms
from .config import ConfigError, load
from .fields import (FieldCoefficient, efield_coefficient, bfield_coefficient,
                     observation_grid, write_field_csv)
from .geometry import uniform_matter_basis, write_mesh_csv
from .qstat import (InitialState, counting_rate_mat, counting_rate_rad, counting_rate_total,
                    nu_grid)
from .solver import (DrivingSpec, NumericalFailure, march_on_time_oracle, sweep_and_reconstruct,
                     write_history_csv, write_spectrum_csv)

log = logging.getLogger("qvie")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _atomic_json(path, obj):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".manifest", suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _threads(arg):
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("QVIE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"QVIE_THREADS: not an integer ({env!r})"]) from None
    return 1


class _Pipeline:
    """Stage runner sharing mesh, quadrature tables and the manifest."""

    def __init__(self, cfg, workers):
        self.cfg = cfg
        self.workers = workers
        self.units = cfg.units
        self.mesh = cfg.mesh
        self.disc = Discretization(cfg.mesh, cfg.units)
        self.basis = uniform_matter_basis(cfg.mesh)
        self.grid = observation_grid(cfg.mesh, cfg.points, cfg.times)
        self._eterms = None
        self.manifest = dict(
            status="running", version=__version__, config=cfg.document,
            units=cfg.units.as_dict(), tolerances=cfg.tolerances, workers=workers,
            mesh=dict(fingerprint=cfg.mesh.fingerprint(), n_voxels=cfg.mesh.n_voxels,
                      n_facets=cfg.mesh.n_facets, h=cfg.mesh.h),
            stages={}, drives={}, residual_max={})

    def _terms(self):
        if self._eterms is None:
            from .assembly import curl_terms
            self._eterms = (operator_terms(self.mesh, self.units, self.grid.points),
                            curl_terms(self.mesh, self.grid.points, self.units))
        return self._eterms

    def solve(self, spec, check_initial=True):
        cfg = self.cfg
        res = sweep_and_reconstruct(cfg.plan, spec, self.mesh, cfg.model, self.units,
                                    self.basis, self.disc, workers=self.workers)
        tol = cfg.tolerances
        self.manifest["residual_max"][spec.label] = float(res.residuals.max())
        if res.noncausal_fraction > tol["noncausal"]:
            raise NumericalFailure(f"{spec.label}: non-causal share {res.noncausal_fraction:.2e} "
                                   f"exceeds {tol['noncausal']:g}")
        if check_initial and spec.kind != "pulse" and res.p0_error > tol["initial_condition"]:
            raise NumericalFailure(f"{spec.label}: initial condition error {res.p0_error:.2e} "
                                   f"exceeds {tol['initial_condition']:g}")
        return res

    def fields(self, res, with_b=True):
        et, bt = self._terms()
        E = efield_coefficient(res, self.grid, self.mesh, self.cfg.model, self.units, self.basis, et)
        B = bfield_coefficient(res, self.grid, self.mesh, self.units, bt) if with_b else None
        return FieldCoefficient(res.spec.label, self.grid, E, B)


def _timed(man, name):
    class _T:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, *exc):
            man["stages"][name] = round(time.perf_counter() - self.t0, 6)
    return _T()


def _write_rates(path, grid, rates):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "z", "w_rad", "w_mat", "w_total"])
        for k, t in enumerate(grid.times):
            for p, x in enumerate(grid.points):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x]
                           + [repr(float(rates.w_rad[k, p])), repr(float(rates.w_mat[k, p])),
                              repr(float(rates.w_total[k, p]))])


def _matter_rate(pipe, grid_nu, shape):
    coeffs = []
    for nu in grid_nu.nodes:
        stack = []
        for m in range(len(pipe.basis)):
            res = pipe.solve(DrivingSpec.matter(m, nu))
            stack.append(pipe.fields(res, with_b=False).E)
        coeffs.append(np.array(stack))
    state = InitialState(pipe.cfg.reservoir)
    return counting_rate_mat(state, pipe.cfg.model, grid_nu, coeffs, shape, pipe.units)


def _mot_report(pipe, results, outdir):
    cfg = pipe.cfg
    mesh = pipe.mesh
    if mesh.n_voxels > 8:
        raise ConfigError([f"--oracle mot: mesh has {mesh.n_voxels} voxels, the oracle allows at most 8"])
    report = {}
    for res in results:
        hist = res.history
        dt_max = cfg.mot.get("dt", 0.2 * mesh.h / pipe.units.c0)
        ratio = max(1, int(np.ceil(hist.dt / min(dt_max, 0.24 * mesh.h / pipe.units.c0))))
        dt = hist.dt / ratio
        t_end = min(cfg.mot.get("t_end", 0.5 * hist.t_end), hist.t_end)
        mot = march_on_time_oracle(res.spec, mesh, cfg.model, dt, t_end, pipe.units, pipe.basis)
        ns = min(int(t_end / hist.dt) + 1, len(mot.values[::ratio]))
        a = hist.values[:ns]
        b = mot.values[::ratio][:ns]
        err = float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
        report[res.spec.label] = dict(dt=dt, t_end=t_end, relative_l2_error=err, samples=ns)
    _atomic_json(os.path.join(outdir, "mot_report.json"), report)
    return report


def run(cfg, workers=1, oracle=None):
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    pipe = _Pipeline(cfg, workers)
    man = pipe.manifest
    path = os.path.join(outdir, "manifest.json")
    try:
        results = []
        with _timed(man, "drives"):
            for spec in cfg.drives:
                res = pipe.solve(spec)
                results.append(res)
                coeff = pipe.fields(res)
                write_field_csv(os.path.join(outdir, f"fields_{spec.label}.csv"), coeff)
                write_spectrum_csv(os.path.join(outdir, f"spectrum_{spec.label}.csv"), res)
                write_history_csv(os.path.join(outdir, f"history_{spec.label}.csv"), res.history)
                man["drives"][spec.label] = dict(
                    p0_error=res.p0_error, noncausal_fraction=res.noncausal_fraction,
                    tail_spread=res.metadata["tail_spread"], dt=res.history.dt)

        shape = (len(pipe.grid.times), pipe.grid.n_points)
        with _timed(man, "rates_radiation"):
            state = InitialState(cfg.reservoir, cfg.photon_modes, cfg.amplitudes, cfg.weights)
            coeffs = [pipe.fields(pipe.solve(DrivingSpec.radiation(mode)), with_b=False).E
                      for mode in state.modes]
            w_rad = counting_rate_rad(state, coeffs, shape)
            man["photon_modes"] = [dict(k=list(map(float, m.k)), s_pol=m.s, omega=m.omega,
                                        b=[b.real, b.imag], weight=w)
                                   for m, b, w in zip(state.modes, state.amplitudes, state.weights)]
        with _timed(man, "rates_matter"):
            g = nu_grid(cfg.model, cfg.reservoir, pipe.units, cfg.nu_nodes, cfg.nu_threshold)
            w_mat = _matter_rate(pipe, g, shape)
            man["nu_grid"] = dict(lo=g.lo, hi=g.hi, nodes=len(g.nodes), truncation=g.truncation)
            if cfg.nu_refinement_check and len(g.nodes):
                w_ref = _matter_rate(pipe, g.refined(), shape)
                drift = float(np.abs(w_ref - w_mat).max() / max(np.abs(w_ref).max(), 1e-300))
                man["nu_grid"]["refinement_drift"] = drift
                if drift > cfg.tolerances["nu_drift"]:
                    raise NumericalFailure(f"nu-quadrature drift {drift:.2e} exceeds "
                                           f"{cfg.tolerances['nu_drift']:g}")
        rates = counting_rate_total(w_rad, w_mat)
        _write_rates(os.path.join(outdir, "rates.csv"), pipe.grid, rates)

        if oracle == "mot":
            with _timed(man, "mot_oracle"):
                man["mot"] = _mot_report(pipe, results, outdir)
        man["status"] = "ok"
    except Exception as e:
        man["status"] = "failed"
        man["error"] = f"{type(e).__name__}: {e}"
        _atomic_json(path, man)
        raise
    _atomic_json(path, man)
    return man


def _parser():
    p = argparse.ArgumentParser(prog="qvie", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qvie {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)
    v = sub.add_parser("validate", help="check a configuration file")
    v.add_argument("file")
    r = sub.add_parser("run", help="run the full pipeline")
    r.add_argument("file")
    r.add_argument("--threads", type=int, default=None)
    r.add_argument("--oracle", choices=["mot"], default=None)
    m = sub.add_parser("mesh", help="dump the voxel mesh as CSV")
    m.add_argument("file")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.file)
        if args.cmd == "validate":
            print(f"{args.file}: ok ({cfg.mesh.n_voxels} voxels, {len(cfg.drives)} drives)")
            return EXIT_OK
        if args.cmd == "mesh":
            os.makedirs(cfg.output_dir, exist_ok=True)
            vp = os.path.join(cfg.output_dir, "mesh_voxels.csv")
            fp = os.path.join(cfg.output_dir, "mesh_facets.csv")
            write_mesh_csv(cfg.mesh, vp, fp)
            print(f"{cfg.mesh.n_voxels} voxels, {cfg.mesh.n_facets} facets -> {vp}, {fp}")
            return EXIT_OK
        man = run(cfg, _threads(args.threads), args.oracle)
        print(f"run ok: {len(cfg.drives)} drives, outputs in {cfg.output_dir}")
        if "mot" in man:
            for label, r in man["mot"].items():
                print(f"  mot {label}: relative L2 error {r['relative_l2_error']:.3e}")
        return EXIT_OK
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
