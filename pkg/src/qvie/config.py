"""Run configuration: a single JSON document, validated before any compute.

Every problem is reported with a dotted path into the document and nothing
is accepted partially.  ``emit`` writes back the normalized document with
defaults filled in, so ``validate(emit(cfg))`` reproduces ``cfg``.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .constants import get_units
from .dispersion import LorentzModel, ThermalReservoir
from .geometry import build_box_mesh, build_sphere_mesh, plane_wave_mode
from .solver import DrivingSpec, SweepPlan

_SCHEMA = {
    "": {"units", "dispersion", "geometry", "sweep", "drive", "state", "observation",
         "output", "tolerances", "mot"},
    "dispersion": {"omega_p", "omega_0", "gamma"},
    "geometry": {"shape", "radius", "extents", "n"},
    "sweep": {"omega_max", "n_omega", "eps_reg", "taper", "upsample"},
    "drive": {"kind", "k", "s_pol", "m", "nu", "width", "delay", "amplitude"},
    "state": {"T0", "photon_modes", "nu_nodes", "nu_threshold", "nu_refinement_check"},
    "photon_mode": {"k", "s_pol", "b", "weight"},
    "observation": {"points", "times", "t_max", "n_t"},
    "output": {"directory"},
    "tolerances": {"noncausal", "initial_condition", "nu_drift"},
    "mot": {"dt", "t_end"},
}

DEFAULT_TOLERANCES = {"noncausal": 1e-2, "initial_condition": 1e-2, "nu_drift": 1e-2}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(eq=False)
class RunConfig:
    document: dict
    units: object
    model: LorentzModel
    mesh: object
    plan: SweepPlan
    drives: list
    reservoir: ThermalReservoir
    photon_modes: list
    amplitudes: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    times: np.ndarray
    output_dir: str
    tolerances: dict
    nu_nodes: int = 32
    nu_threshold: float = 1e-6
    nu_refinement_check: bool = True
    mot: dict = field(default_factory=dict)


class _Collector:
    def __init__(self):
        self.errors = []

    def add(self, path, msg):
        self.errors.append(f"{path or '<root>'}: {msg}")

    def keys(self, block, name, path):
        if not isinstance(block, dict):
            self.add(path, "must be an object")
            return False
        for k in sorted(set(block) - _SCHEMA[name]):
            self.add(f"{path}.{k}" if path else k, "unknown key")
        return True

    def number(self, block, key, path, positive=False, nonneg=False, default=None, integer=False):
        p = f"{path}.{key}"
        if key not in block:
            if default is None:
                self.add(p, "required")
            return default
        v = block[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            self.add(p, "must be a finite number")
            return None
        if integer and int(v) != v:
            self.add(p, "must be an integer")
            return None
        if positive and not v > 0:
            self.add(p, "must be > 0")
            return None
        if nonneg and not v >= 0:
            self.add(p, "must be >= 0")
            return None
        return int(v) if integer else float(v)

    def vector(self, block, key, path, length=3):
        p = f"{path}.{key}"
        if key not in block:
            self.add(p, "required")
            return None
        v = block[key]
        try:
            arr = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            self.add(p, "must be a list of numbers")
            return None
        if arr.shape != (length,) or not np.all(np.isfinite(arr)):
            self.add(p, f"must be a list of {length} finite numbers")
            return None
        return arr


def _model(c, doc):
    blk = doc.get("dispersion")
    if blk is None:
        c.add("dispersion", "required")
        return None
    if not c.keys(blk, "dispersion", "dispersion"):
        return None
    vals = {k: c.number(blk, k, "dispersion") for k in ("omega_p", "omega_0", "gamma")}
    if any(v is None for v in vals.values()):
        return None
    if vals["gamma"] <= 0:
        c.add("dispersion.gamma", "must be > 0 (strictly lossy required)")
        return None
    try:
        return LorentzModel(**vals)
    except ValueError as e:
        c.add("dispersion", str(e))
        return None


def _mesh(c, doc):
    blk = doc.get("geometry")
    if blk is None:
        c.add("geometry", "required")
        return None
    if not c.keys(blk, "geometry", "geometry"):
        return None
    shape = blk.get("shape")
    try:
        if shape == "sphere":
            r = c.number(blk, "radius", "geometry", positive=True)
            n = c.number(blk, "n", "geometry", integer=True)
            if r is None or n is None:
                return None
            for k in ("extents",):
                if k in blk:
                    c.add(f"geometry.{k}", "not used for a sphere")
            return build_sphere_mesh(r, n)
        if shape == "box":
            ext = c.vector(blk, "extents", "geometry")
            n = c.vector(blk, "n", "geometry")
            if "radius" in blk:
                c.add("geometry.radius", "not used for a box")
            if ext is None or n is None:
                return None
            if np.any(n != np.round(n)):
                c.add("geometry.n", "must be integers")
                return None
            return build_box_mesh(ext, n.astype(int))
    except ValueError as e:
        c.add("geometry", str(e))
        return None
    c.add("geometry.shape", "must be 'sphere' or 'box'")
    return None


def _drive(c, blk, path, units):
    if not c.keys(blk, "drive", path):
        return None
    kind = blk.get("kind")
    allowed = {"radiation": {"kind", "k", "s_pol"},
               "matter": {"kind", "m", "nu"},
               "pulse": {"kind", "m", "nu", "width", "delay", "amplitude"}}
    if kind not in allowed:
        c.add(f"{path}.kind", "must be 'radiation', 'matter' or 'pulse'")
        return None
    for k in sorted(set(blk) - allowed[kind]):
        c.add(f"{path}.{k}", f"not used for {kind} driving")
    try:
        if kind == "radiation":
            k = c.vector(blk, "k", path)
            sp = c.number(blk, "s_pol", path, integer=True)
            if k is None or sp is None:
                return None
            return DrivingSpec.radiation(plane_wave_mode(k, sp, units))
        m = c.number(blk, "m", path, integer=True, nonneg=True)
        nu = c.number(blk, "nu", path, positive=True)
        if m is None or nu is None:
            return None
        if m > 2:
            c.add(f"{path}.m", "uniform basis has members 0, 1, 2")
            return None
        if kind == "matter":
            return DrivingSpec.matter(m, nu)
        w = c.number(blk, "width", path, positive=True)
        d = c.number(blk, "delay", path, positive=True)
        a = c.number(blk, "amplitude", path, default=1.0)
        if w is None or d is None or a is None:
            return None
        return DrivingSpec.pulse(m, nu, w, d, a)
    except ValueError as e:
        c.add(path, str(e))
        return None


def _state(c, doc, units):
    blk = doc.get("state", {})
    out = dict(reservoir=ThermalReservoir(0.0), modes=[], b=np.zeros(0, complex), w=np.zeros(0),
               nu_nodes=32, nu_threshold=1e-6, nu_refinement_check=True)
    if not c.keys(blk, "state", "state"):
        return out
    T0 = c.number(blk, "T0", "state", nonneg=True, default=0.0)
    if T0 is not None:
        out["reservoir"] = ThermalReservoir(T0)
    n = c.number(blk, "nu_nodes", "state", positive=True, integer=True, default=32)
    out["nu_nodes"] = n or 32
    th = c.number(blk, "nu_threshold", "state", positive=True, default=1e-6)
    out["nu_threshold"] = th or 1e-6
    chk = blk.get("nu_refinement_check", True)
    if not isinstance(chk, bool):
        c.add("state.nu_refinement_check", "must be true or false")
    out["nu_refinement_check"] = bool(chk)
    modes, bs, ws = [], [], []
    pm = blk.get("photon_modes", [])
    if not isinstance(pm, list):
        c.add("state.photon_modes", "must be a list")
        pm = []
    for i, mb in enumerate(pm):
        path = f"state.photon_modes[{i}]"
        if not c.keys(mb, "photon_mode", path):
            continue
        k = c.vector(mb, "k", path)
        sp = c.number(mb, "s_pol", path, integer=True)
        b = c.vector(mb, "b", path, length=2)
        w = c.number(mb, "weight", path, positive=True, default=1.0)
        if k is None or sp is None or b is None or w is None:
            continue
        try:
            modes.append(plane_wave_mode(k, sp, units))
        except ValueError as e:
            c.add(path, str(e))
            continue
        bs.append(complex(b[0], b[1]))
        ws.append(w)
    if modes:
        norm = sum(w * abs(b) ** 2 for w, b in zip(ws, bs))
        if abs(norm - 1) > 1e-12:
            c.add("state.photon_modes", f"sum of weight*|b|^2 is {norm:.15g}, must be 1")
    out.update(modes=modes, b=np.array(bs, dtype=complex), w=np.array(ws, dtype=float))
    return out


def _observation(c, doc, mesh):
    blk = doc.get("observation")
    if blk is None:
        c.add("observation", "required")
        return None, None
    if not c.keys(blk, "observation", "observation"):
        return None, None
    pts = blk.get("points")
    try:
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0 or not np.all(np.isfinite(pts)):
            raise ValueError
    except (TypeError, ValueError):
        c.add("observation.points", "must be a non-empty list of 3-vectors")
        pts = None
    if "times" in blk:
        if "t_max" in blk or "n_t" in blk:
            c.add("observation", "give either times or t_max/n_t")
        try:
            times = np.asarray(blk["times"], dtype=float)
            if times.ndim != 1 or len(times) == 0 or np.any(times < 0) or not np.all(np.isfinite(times)):
                raise ValueError
        except (TypeError, ValueError):
            c.add("observation.times", "must be a non-empty list of times >= 0")
            times = None
    else:
        tm = c.number(blk, "t_max", "observation", positive=True)
        nt = c.number(blk, "n_t", "observation", positive=True, integer=True)
        times = None if tm is None or nt is None else np.linspace(0.0, tm, nt)
    if pts is not None and mesh is not None:
        from .fields import observation_grid
        try:
            observation_grid(mesh, pts, [0.0])
        except ValueError as e:
            c.add("observation.points", str(e))
    return pts, times


def validate(doc):
    """Parse a config document; returns ``RunConfig`` or raises ``ConfigError``."""
    c = _Collector()
    if not isinstance(doc, dict):
        raise ConfigError(["<root>: must be a JSON object"])
    c.keys(doc, "", "")
    try:
        units = get_units(doc.get("units", "SI"))
    except ValueError as e:
        c.add("units", str(e))
        units = get_units("SI")
    model = _model(c, doc)
    mesh = _mesh(c, doc)

    plan = None
    sw = doc.get("sweep")
    if sw is None:
        c.add("sweep", "required")
    elif c.keys(sw, "sweep", "sweep"):
        vals = dict(omega_max=c.number(sw, "omega_max", "sweep", positive=True),
                    n_omega=c.number(sw, "n_omega", "sweep", positive=True, integer=True),
                    eps_reg=c.number(sw, "eps_reg", "sweep", positive=True),
                    taper=c.number(sw, "taper", "sweep", nonneg=True, default=0.1),
                    upsample=c.number(sw, "upsample", "sweep", positive=True, integer=True, default=1))
        if all(v is not None for v in vals.values()):
            try:
                plan = SweepPlan(**vals)
            except ValueError as e:
                c.add("sweep", str(e))

    drives = []
    raw = doc.get("drive", [])
    items = raw if isinstance(raw, list) else [raw]
    for i, blk in enumerate(items):
        path = f"drive[{i}]" if isinstance(raw, list) else "drive"
        d = _drive(c, blk, path, units)
        if d is not None:
            drives.append((path, d))

    st = _state(c, doc, units)
    pts, times = _observation(c, doc, mesh)

    out = doc.get("output", {"directory": "qvie_out"})
    if c.keys(out, "output", "output"):
        if not isinstance(out.get("directory"), str) or not out.get("directory"):
            c.add("output.directory", "must be a non-empty string")
    tol = dict(DEFAULT_TOLERANCES)
    tb = doc.get("tolerances", {})
    if c.keys(tb, "tolerances", "tolerances"):
        for k in tb:
            if k in tol:
                v = c.number(tb, k, "tolerances", positive=True)
                if v is not None:
                    tol[k] = v
    mot = {}
    mb = doc.get("mot")
    if mb is not None and c.keys(mb, "mot", "mot"):
        for k in ("dt", "t_end"):
            if k in mb:
                v = c.number(mb, k, "mot", positive=True)
                if v is not None:
                    mot[k] = v

    # cross-field constraints
    if plan is not None and model is not None:
        for path, d in drives:
            for msg in plan.problems(model, d):
                c.add(path, msg)
        for i, mode in enumerate(st["modes"]):
            for msg in plan.problems(model, DrivingSpec.radiation(mode)):
                c.add(f"state.photon_modes[{i}]", msg)
        if mesh is not None and plan.dt * units.c0 >= 0.5 * mesh.h:
            need = int(2 ** np.ceil(np.log2(plan.upsample * plan.dt * units.c0 / (0.5 * mesh.h) * 1.01)))
            c.add("sweep.upsample", f"time step too coarse for field reconstruction (c0*dt >= h/2); "
                                    f"use upsample >= {need}")
        if times is not None and times.max() > 0.5 * plan.period - plan.dt:
            c.add("observation", f"times must stay below half the sweep period ({0.5 * plan.period:g})")
        if st["reservoir"].T0 > 0:
            from .qstat import nu_grid
            try:
                nu_grid(model, st["reservoir"], units, st["nu_nodes"], st["nu_threshold"])
            except ValueError as e:
                c.add("state", str(e))

    if c.errors:
        raise ConfigError(c.errors)
    return RunConfig(
        document=emit_document(doc, plan, tol, st), units=units, model=model, mesh=mesh, plan=plan,
        drives=[d for _, d in drives], reservoir=st["reservoir"], photon_modes=st["modes"],
        amplitudes=st["b"], weights=st["w"], points=pts, times=times,
        output_dir=out["directory"], tolerances=tol, nu_nodes=st["nu_nodes"],
        nu_threshold=st["nu_threshold"], nu_refinement_check=st["nu_refinement_check"], mot=mot)


def emit_document(doc, plan, tol, st):
    out = json.loads(json.dumps(doc))
    out.setdefault("units", "SI")
    out["sweep"] = dict(out["sweep"], taper=plan.taper, upsample=plan.upsample)
    out["tolerances"] = dict(tol)
    state = dict(out.get("state", {}))
    state.setdefault("T0", 0.0)
    state.setdefault("photon_modes", [])
    state["photon_modes"] = [dict(pm, weight=pm.get("weight", 1.0)) for pm in state["photon_modes"]]
    state["nu_nodes"] = st["nu_nodes"]
    state["nu_threshold"] = st["nu_threshold"]
    state["nu_refinement_check"] = st["nu_refinement_check"]
    out["state"] = state
    out.setdefault("output", {"directory": "qvie_out"})
    drives = out.get("drive", [])
    items = drives if isinstance(drives, list) else [drives]
    items = [dict(d, amplitude=d.get("amplitude", 1.0)) if d.get("kind") == "pulse" else d for d in items]
    out["drive"] = items
    return out


def emit(cfg: RunConfig):
    return json.loads(json.dumps(cfg.document))


def load(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError([f"<root>: not valid JSON ({e})"]) from None
    return validate(doc)
