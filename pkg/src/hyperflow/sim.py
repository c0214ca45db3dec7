"""Simulation driver: case configuration, preparation, time marching
with snapshots and restart, and post-processing.

A case is one JSON document.  prep() validates it, builds the grids
(splitting a single declared block into nblocks pieces when asked),
writes native grid and initial-flow files, and emits a fully-expanded
config with every default materialised; re-running prep on that
expanded config reproduces every output byte for byte.  run() marches
the case from the latest snapshot to max_time or max_step, writing
atomic snapshots at the dt_plot cadence, so an interrupted run resumed
from disk retraces the uninterrupted one (bitwise for explicit
schemes).  post() turns snapshots into legacy-ASCII VTK files,
boundary-profile tables (wall pressure and heat flux), manufactured-
solution error norms, and the Amdahl scaling fit.
"""

import itertools
import json
import math
from pathlib import Path

import numpy as np

from . import advance as ad
from . import block as bk
from . import grid as gd
from . import mms as mm
from . import parallel as pr
from . import state as sm
from . import turbulence as tb
from .gas import load_gas_model
from .chemistry import load_mechanism
from .state import FlowDivergence


class ConfigError(Exception):
    """Invalid case configuration; the message lists every violation."""


CONFIG_FORMAT_VERSION = 1

DIMENSIONALITIES = ("2D", "axisymmetric", "3D")
THERMAL_MODES = ("single", "two_temperature")
FLUXES = ("ausmdv", "dissipative", "adaptive")
RECONSTRUCTIONS = ("quadratic", "first")
MMS_VARIANTS = ("euler2d", "ns3d")

_TOP_KEYS = {
    "format_version", "title", "dimensionality", "gas_model", "mechanism",
    "viscous", "turbulence", "thermal_mode", "scheme", "cfl",
    "jacobian_refresh", "max_time", "max_step", "dt_plot", "nblocks",
    "nworkers", "flux", "reconstruction", "limiter", "flow_states",
    "blocks", "mms", "expanded",
}
_STATE_KEYS = {"p", "T", "velx", "vely", "velz", "massf", "Tv", "nuhat"}
_BLOCK_KEYS = {"grid", "grid_file", "su2_file", "initial", "bcs"}
_BC_KEYS = {
    "supersonic_inflow": {"type", "state"},
    "outflow_simple": {"type"},
    "slip_wall": {"type"},
    "noslip_wall": {"type", "T_wall", "catalytic", "massf_wall"},
    "exchange": {"type", "neighbor", "face"},
}
_MMS_KEYS = {"enable", "variant", "L", "compare"}


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) \
        and math.isfinite(v)


# -- configuration ingestion -------------------------------------------------

def read_case(path):
    """Read a case JSON file; OSError and parse failures mean a bad file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise gd.GridError(f"cannot read case file {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise gd.GridError(f"corrupt case file {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise gd.GridError(f"corrupt case file {path}: not a JSON object")
    return cfg


def _resolve_ref(name, base_dir):
    """Resolve a gas/mechanism reference: absolute path, path relative
    to the case file, or a bundled data-file name (kept verbatim)."""
    p = Path(name)
    if p.is_absolute():
        return str(p)
    local = Path(base_dir) / p
    if local.exists():
        return str(local.resolve())
    bundled = Path(__file__).parent / "data" / name
    if bundled.exists():
        return name
    return None


def _data_path(ref):
    p = Path(ref)
    if p.is_absolute():
        return p
    return Path(__file__).parent / "data" / ref


def validate_config(cfg, base_dir):
    """Validate a case dict and return the fully-expanded copy.

    Every violation is collected; the raised ConfigError lists them
    all, one per line.
    """
    errs = []
    out = {}

    def err(msg):
        errs.append(msg)

    if not isinstance(cfg, dict):
        raise ConfigError("case config must be a JSON object")
    for k in cfg:
        if k not in _TOP_KEYS:
            err(f"unknown config key {k!r}")
    if cfg.get("format_version") != CONFIG_FORMAT_VERSION:
        err(f"format_version must be {CONFIG_FORMAT_VERSION}, "
            f"got {cfg.get('format_version')!r}")
    out["format_version"] = CONFIG_FORMAT_VERSION

    title = cfg.get("title")
    if not isinstance(title, str) or not title \
            or not all(c.isalnum() or c in "._-" for c in title):
        err(f"title must be a nonempty name of [A-Za-z0-9._-], "
            f"got {title!r}")
        title = "case"
    out["title"] = title

    dim = cfg.get("dimensionality", "2D")
    if dim not in DIMENSIONALITIES:
        err(f"dimensionality must be one of {DIMENSIONALITIES}, got {dim!r}")
        dim = "2D"
    out["dimensionality"] = dim

    gas = None
    ref = cfg.get("gas_model")
    if not isinstance(ref, str):
        err(f"gas_model must name a gas file, got {ref!r}")
    else:
        resolved = _resolve_ref(ref, base_dir)
        if resolved is None:
            err(f"gas_model file {ref!r} not found")
        else:
            out["gas_model"] = resolved
            try:
                gas = load_gas_model(_data_path(resolved))
            except Exception as exc:
                err(f"gas_model {ref!r} failed to load: {exc}")

    mech_ref = cfg.get("mechanism")
    out["mechanism"] = None
    if mech_ref is not None:
        if not isinstance(mech_ref, str):
            err(f"mechanism must be a file name or null, got {mech_ref!r}")
        else:
            resolved = _resolve_ref(mech_ref, base_dir)
            if resolved is None:
                err(f"mechanism file {mech_ref!r} not found")
            elif gas is not None:
                if gas.nsp < 2:
                    err("mechanism requires a multi-species gas model")
                else:
                    out["mechanism"] = resolved
                    try:
                        load_mechanism(_data_path(resolved), gas)
                    except Exception as exc:
                        err(f"mechanism {mech_ref!r} failed to load: {exc}")

    for key, default in (("viscous", False), ("turbulence", False),
                         ("limiter", True)):
        v = cfg.get(key, default)
        if not isinstance(v, bool):
            err(f"{key} must be true or false, got {v!r}")
            v = default
        out[key] = v
    if out["turbulence"] and not out["viscous"]:
        err("turbulence requires viscous: true")

    tm = cfg.get("thermal_mode", "single")
    if tm not in THERMAL_MODES:
        err(f"thermal_mode must be one of {THERMAL_MODES}, got {tm!r}")
        tm = "single"
    if tm == "two_temperature" and gas is not None \
            and not gas.two_temperature:
        err("two_temperature thermal mode needs vibrational data "
            "(theta_v) in the gas model")
    out["thermal_mode"] = tm

    scheme = cfg.get("scheme", "rk2")
    if scheme not in ad.Integrator.SCHEMES:
        err(f"scheme must be one of {ad.Integrator.SCHEMES}, got {scheme!r}")
        scheme = "rk2"
    out["scheme"] = scheme

    cfl = cfg.get("cfl", 0.5)
    if not _is_num(cfl) or cfl <= 0:
        err(f"cfl must be a positive number, got {cfl!r}")
        cfl = 0.5
    out["cfl"] = cfl

    jref = cfg.get("jacobian_refresh", 10)
    if not isinstance(jref, int) or isinstance(jref, bool) or jref < 1:
        err(f"jacobian_refresh must be an integer >= 1, got {jref!r}")
        jref = 10
    out["jacobian_refresh"] = jref

    max_time = cfg.get("max_time")
    if not _is_num(max_time) or max_time <= 0:
        err(f"max_time must be a positive number of seconds, "
            f"got {max_time!r}")
        max_time = 1.0
    out["max_time"] = max_time

    max_step = cfg.get("max_step")
    if not isinstance(max_step, int) or isinstance(max_step, bool) \
            or max_step <= 0:
        err(f"max_step must be a positive integer, got {max_step!r}")
        max_step = 1
    out["max_step"] = max_step

    dt_plot = cfg.get("dt_plot")
    if dt_plot is not None and (not _is_num(dt_plot) or dt_plot <= 0):
        err(f"dt_plot must be a positive number or null, got {dt_plot!r}")
        dt_plot = None
    out["dt_plot"] = dt_plot

    nworkers = cfg.get("nworkers", 1)
    if not isinstance(nworkers, int) or isinstance(nworkers, bool) \
            or nworkers < 1:
        err(f"nworkers must be an integer >= 1, got {nworkers!r}")
        nworkers = 1
    out["nworkers"] = nworkers

    flux = cfg.get("flux", "ausmdv")
    if flux not in FLUXES:
        err(f"flux must be one of {FLUXES}, got {flux!r}")
        flux = "ausmdv"
    out["flux"] = flux

    recon = cfg.get("reconstruction", "quadratic")
    if recon not in RECONSTRUCTIONS:
        err(f"reconstruction must be one of {RECONSTRUCTIONS}, "
            f"got {recon!r}")
        recon = "quadratic"
    out["reconstruction"] = recon

    mms_cfg = cfg.get("mms", {"enable": False})
    out["mms"] = _validate_mms(mms_cfg, out, err)

    out["flow_states"] = _validate_states(cfg.get("flow_states", {}),
                                          gas, out, err)
    out["blocks"] = _validate_blocks(cfg.get("blocks"), gas, out, err)

    nblocks = cfg.get("nblocks", len(out["blocks"]) or 1)
    if not isinstance(nblocks, int) or isinstance(nblocks, bool) \
            or nblocks < 1:
        err(f"nblocks must be an integer >= 1, got {nblocks!r}")
        nblocks = len(out["blocks"]) or 1
    if nblocks != len(out["blocks"]):
        if len(out["blocks"]) != 1:
            err(f"nblocks={nblocks} requires a single declared block to "
                f"split, got {len(out['blocks'])}")
            nblocks = len(out["blocks"]) or 1
        elif "grid" not in out["blocks"][0]:
            err("nblocks splitting needs an inline structured grid spec")
            nblocks = 1
    out["nblocks"] = nblocks
    out["expanded"] = True

    if errs:
        raise ConfigError("invalid case configuration:\n  "
                          + "\n  ".join(errs))
    return out


def _validate_mms(mcfg, out, err):
    if not isinstance(mcfg, dict):
        err(f"mms must be an object, got {mcfg!r}")
        return {"enable": False, "variant": None, "L": 1.0, "compare": None}
    for k in mcfg:
        if k not in _MMS_KEYS:
            err(f"unknown mms key {k!r}")
    enable = mcfg.get("enable", False)
    if not isinstance(enable, bool):
        err(f"mms.enable must be true or false, got {enable!r}")
        enable = False
    if not enable:
        return {"enable": False, "variant": None, "L": 1.0, "compare": None}
    res = {"enable": True, "variant": mcfg.get("variant"),
           "L": mcfg.get("L", 1.0), "compare": mcfg.get("compare")}
    if res["variant"] not in MMS_VARIANTS:
        err(f"mms.variant must be one of {MMS_VARIANTS}, "
            f"got {res['variant']!r}")
    if not _is_num(res["L"]) or res["L"] <= 0:
        err(f"mms.L must be a positive length, got {res['L']!r}")
        res["L"] = 1.0
    if res["compare"] is not None and not isinstance(res["compare"], str):
        err(f"mms.compare must be a case file path or null, "
            f"got {res['compare']!r}")
        res["compare"] = None
    if res["variant"] == "euler2d":
        if out["viscous"] or out["turbulence"]:
            err("mms variant euler2d is inviscid; set viscous and "
                "turbulence false")
        if out["dimensionality"] != "2D":
            err("mms variant euler2d requires dimensionality 2D")
    if res["variant"] == "ns3d":
        if not (out["viscous"] and out["turbulence"]):
            err("mms variant ns3d requires viscous and turbulence true")
        if out["dimensionality"] != "3D":
            err("mms variant ns3d requires dimensionality 3D")
    return res


def _validate_states(states, gas, out, err):
    if not isinstance(states, dict):
        err(f"flow_states must be an object, got {states!r}")
        return {}
    res = {}
    for name, st in states.items():
        if not isinstance(st, dict):
            err(f"flow state {name!r} must be an object")
            continue
        for k in st:
            if k not in _STATE_KEYS:
                err(f"flow state {name!r}: unknown key {k!r}")
        good = {}
        for k in ("p", "T"):
            v = st.get(k)
            if not _is_num(v) or v <= 0:
                err(f"flow state {name!r}: {k} must be a positive number, "
                    f"got {v!r}")
                v = 1.0
            good[k] = v
        for k in ("velx", "vely", "velz"):
            v = st.get(k, 0.0)
            if not _is_num(v):
                err(f"flow state {name!r}: {k} must be a number, got {v!r}")
                v = 0.0
            good[k] = v
        massf = st.get("massf")
        if gas is not None and gas.nsp > 1:
            if not isinstance(massf, dict):
                err(f"flow state {name!r}: massf (species -> mass "
                    f"fraction) is required for a multi-species gas")
                massf = {}
            unknown = set(massf) - set(gas.species_names)
            for s in sorted(unknown):
                err(f"flow state {name!r}: unknown species {s!r}")
            vals = {s: massf.get(s, 0.0) for s in gas.species_names}
            if any(not _is_num(v) or v < 0 for v in vals.values()):
                err(f"flow state {name!r}: mass fractions must be "
                    f"numbers >= 0")
                vals = {s: 1.0 if i == 0 else 0.0
                        for i, s in enumerate(gas.species_names)}
            elif not unknown and abs(sum(vals.values()) - 1.0) > 1e-8:
                err(f"flow state {name!r}: mass fractions must sum to 1, "
                    f"got {sum(vals.values())!r}")
            good["massf"] = vals
        elif massf is not None:
            err(f"flow state {name!r}: massf given for a single-species "
                f"gas")
        if out["thermal_mode"] == "two_temperature":
            tv = st.get("Tv", good["T"])
            if not _is_num(tv) or tv <= 0:
                err(f"flow state {name!r}: Tv must be a positive number")
                tv = good["T"]
            good["Tv"] = tv
        elif "Tv" in st:
            err(f"flow state {name!r}: Tv given without two_temperature "
                f"thermal mode")
        if out["turbulence"]:
            nuhat = st.get("nuhat", 0.0)
            if not _is_num(nuhat) or nuhat < 0:
                err(f"flow state {name!r}: nuhat must be a number >= 0")
                nuhat = 0.0
            good["nuhat"] = nuhat
        elif "nuhat" in st:
            err(f"flow state {name!r}: nuhat given without turbulence")
        res[name] = good
    return res


def _validate_blocks(blocks, gas, out, err):
    if not isinstance(blocks, list) or not blocks:
        err("blocks must be a nonempty list")
        return []
    mms_on = out["mms"]["enable"]
    if mms_on and len(blocks) != 1:
        err("mms cases declare exactly one block")
    res = []
    nd = 3 if out["dimensionality"] == "3D" else 2
    tags = bk.FACE_TAGS[:2 * nd]
    for i, blk in enumerate(blocks):
        if not isinstance(blk, dict):
            err(f"block {i}: must be an object")
            continue
        for k in blk:
            if k not in _BLOCK_KEYS:
                err(f"block {i}: unknown key {k!r}")
        good = {}
        sources = [k for k in ("grid", "grid_file", "su2_file") if k in blk]
        if len(sources) != 1:
            err(f"block {i}: exactly one of grid, grid_file, su2_file "
                f"is required")
        else:
            key = sources[0]
            if key == "grid":
                good["grid"] = blk["grid"]
                try:
                    g = gd.build_structured(blk["grid"])
                    if (g.ndim == 3) != (nd == 3):
                        err(f"block {i}: grid is {g.ndim}D but the case "
                            f"is {out['dimensionality']}")
                except (gd.GridError, KeyError, TypeError,
                        ValueError) as exc:
                    err(f"block {i}: bad grid spec: {exc}")
            else:
                path = blk[key]
                if not isinstance(path, str):
                    err(f"block {i}: {key} must be a path, got {path!r}")
                else:
                    good[key] = path
                if key == "su2_file" and nd != 2:
                    err(f"block {i}: unstructured blocks are 2D only")
        good["initial"] = _validate_initial(
            f"block {i}", blk.get("initial", "initial"), out, mms_on, err)
        bcs = blk.get("bcs", {})
        if not isinstance(bcs, dict):
            err(f"block {i}: bcs must be an object")
            bcs = {}
        if mms_on:
            for t, spec in bcs.items():
                if t in tags and not (isinstance(spec, dict)
                                      and spec.get("type") == "exchange"):
                    err(f"block {i}: mms boundaries come from the exact "
                        f"field; only exchange bcs may be declared")
            good["bcs"] = {t: _validate_bc(f"block {i} face {t}", b, gas,
                                           out, len(blocks), err)
                           for t, b in bcs.items() if t in tags}
        elif "su2_file" in good:
            good["bcs"] = {m: _validate_bc(f"block {i} marker {m}", b,
                                           gas, out, len(blocks), err)
                           for m, b in bcs.items()}
        else:
            for t in tags:
                if t not in bcs:
                    err(f"block {i}: missing boundary condition for {t!r}")
            for t in bcs:
                if t not in tags:
                    err(f"block {i}: unknown face tag {t!r}")
            good["bcs"] = {t: _validate_bc(f"block {i} face {t}", b, gas,
                                           out, len(blocks), err)
                           for t, b in bcs.items() if t in tags}
        res.append(good)
    return res


def _validate_initial(where, init, out, mms_on, err):
    """A block's initial fill: a flow-state name, or a diaphragm object
    selecting one of two states by a centroid coordinate threshold."""
    if isinstance(init, str):
        if init not in out["flow_states"] and not mms_on:
            err(f"{where}: initial state {init!r} is not in flow_states")
        return init
    if isinstance(init, dict):
        good = {"type": "diaphragm"}
        for k in init:
            if k not in ("type", "axis", "position", "left", "right"):
                err(f"{where}: unknown initial key {k!r}")
        if init.get("type") != "diaphragm":
            err(f"{where}: initial object type must be 'diaphragm', "
                f"got {init.get('type')!r}")
        axis = init.get("axis", "x")
        if axis not in ("x", "y", "z"):
            err(f"{where}: diaphragm axis must be x, y, or z")
            axis = "x"
        good["axis"] = axis
        pos = init.get("position")
        if not _is_num(pos):
            err(f"{where}: diaphragm position must be a number, "
                f"got {pos!r}")
            pos = 0.0
        good["position"] = pos
        for side in ("left", "right"):
            st = init.get(side)
            if st not in out["flow_states"]:
                err(f"{where}: diaphragm {side} state {st!r} is not in "
                    f"flow_states")
            good[side] = st
        if mms_on:
            err(f"{where}: mms cases take their initial field from the "
                f"exact solution")
        return good
    err(f"{where}: initial must be a flow-state name or a diaphragm "
        f"object, got {init!r}")
    return "initial"


def _validate_bc(where, spec, gas, out, nblocks, err):
    if not isinstance(spec, dict) or "type" not in spec:
        err(f"{where}: boundary condition must be an object with a type")
        return {"type": "slip_wall"}
    kind = spec["type"]
    if kind not in _BC_KEYS:
        err(f"{where}: unknown boundary type {kind!r}")
        return {"type": "slip_wall"}
    for k in spec:
        if k not in _BC_KEYS[kind]:
            err(f"{where}: unknown key {k!r} for {kind}")
    good = {"type": kind}
    if kind == "supersonic_inflow":
        st = spec.get("state")
        if st not in out["flow_states"]:
            err(f"{where}: inflow state {st!r} is not in flow_states")
        good["state"] = st
    elif kind == "noslip_wall":
        if not out["viscous"]:
            err(f"{where}: noslip_wall requires viscous: true")
        tw = spec.get("T_wall")
        if tw is not None and (not _is_num(tw) or tw <= 0):
            err(f"{where}: T_wall must be a positive temperature or null "
                f"(adiabatic)")
            tw = None
        good["T_wall"] = tw
        cat = spec.get("catalytic", "non")
        if cat not in ("non", "super"):
            err(f"{where}: catalytic must be 'non' or 'super'")
            cat = "non"
        good["catalytic"] = cat
        mw = spec.get("massf_wall")
        if cat == "super":
            if gas is not None and gas.nsp < 2:
                err(f"{where}: super-catalytic wall requires a "
                    f"multi-species gas")
            if not isinstance(mw, dict):
                err(f"{where}: super-catalytic wall requires massf_wall")
                mw = None
            elif gas is not None:
                unknown = set(mw) - set(gas.species_names)
                for s in sorted(unknown):
                    err(f"{where}: unknown species {s!r} in massf_wall")
                bad = any(not _is_num(v) or v < 0 for v in mw.values())
                if bad:
                    err(f"{where}: massf_wall values must be numbers >= 0")
                elif not unknown and abs(sum(mw.values()) - 1.0) > 1e-8:
                    err(f"{where}: massf_wall must sum to 1")
            good["massf_wall"] = mw
        elif mw is not None:
            err(f"{where}: massf_wall is only used by super-catalytic "
                f"walls")
    elif kind == "exchange":
        nb = spec.get("neighbor")
        if not isinstance(nb, int) or isinstance(nb, bool) \
                or not (0 <= nb < nblocks):
            err(f"{where}: exchange neighbor must be a block id in "
                f"[0, {nblocks})")
            nb = 0
        good["neighbor"] = nb
        face = spec.get("face")
        if face not in bk.FACE_TAGS:
            err(f"{where}: exchange face must be one of {bk.FACE_TAGS}")
            face = "imin"
        good["face"] = face
    return good


# -- case directories and files ----------------------------------------------

def case_dir(case_path, cfg):
    """Output directory: beside the case file, named by the title; an
    expanded config already lives inside its own output directory."""
    case_path = Path(case_path)
    if cfg.get("expanded") and case_path.name == "config.json":
        return case_path.parent
    return case_path.parent / cfg["title"]


def _grid_file(i):
    return f"grid.b{i:04d}.bin"


def _flow_file(tidx, i):
    return f"flow.t{tidx:04d}.b{i:04d}.bin"


def _snapshot_indices(out_dir, nblocks):
    """Sorted snapshot indices with a complete block set each."""
    idxs = []
    for p in sorted(Path(out_dir).glob("flow.t*.b0000.bin")):
        try:
            t = int(p.name[6:10])
        except ValueError:
            continue
        if all((Path(out_dir) / _flow_file(t, b)).exists()
               for b in range(1, nblocks)):
            idxs.append(t)
    return idxs


# -- prep ----------------------------------------------------------------------

def _choose_splits(ncell, k):
    """Factor k into per-direction split counts minimising the exchange
    interface area; deterministic lexicographic tie-break."""
    nd = len(ncell)
    best = None
    for splits in itertools.product(range(1, k + 1), repeat=nd):
        if math.prod(splits) != k:
            continue
        if any(ncell[d] // splits[d] < bk.NG for d in range(nd)):
            continue
        cost = sum((splits[d] - 1)
                   * math.prod(ncell[e] for e in range(nd) if e != d)
                   for d in range(nd))
        if best is None or (cost, splits) < best:
            best = (cost, splits)
    if best is None:
        raise ConfigError(f"cannot split a {'x'.join(map(str, ncell))} "
                          f"grid into {k} blocks of >= {bk.NG} cells")
    return best[1]


def _split_declared_block(cfg):
    """Replace the single declared structured block by nblocks pieces.

    Pieces are numbered in raster order (last direction fastest); the
    outer faces keep the declared boundary conditions and the interior
    faces become reciprocal exchanges.  Returns the piece grids.
    """
    entry = cfg["blocks"][0]
    grid = gd.build_structured(entry["grid"])
    nd = grid.ndim
    ncell = [grid.verts.shape[d] - 1 for d in range(nd)]
    splits = _choose_splits(ncell, cfg["nblocks"])
    ranges = [pr.split_ranges(ncell[d], splits[d]) for d in range(nd)]
    grids = []
    pieces = []
    for pos in np.ndindex(*splits):
        vidx = tuple(slice(ranges[d][pos[d]][0], ranges[d][pos[d]][1] + 1)
                     for d in range(nd))
        grids.append(gd.StructuredGrid(grid.verts[vidx], ndim=nd))
        bcs = {}
        for d in range(nd):
            for hi in (False, True):
                tag = bk.FACE_TAGS[2 * d + int(hi)]
                if pos[d] == (splits[d] - 1 if hi else 0):
                    if tag in entry["bcs"]:
                        bcs[tag] = entry["bcs"][tag]
                    continue
                npos = list(pos)
                npos[d] += 1 if hi else -1
                bcs[tag] = {
                    "type": "exchange",
                    "neighbor": int(np.ravel_multi_index(tuple(npos),
                                                         splits)),
                    "face": bk.FACE_TAGS[2 * d + int(not hi)],
                }
        pieces.append({"initial": entry["initial"], "bcs": bcs})
    cfg["blocks"] = pieces
    return grids


def _load_block_grids(cfg, base_dir):
    """Read or build every block grid; paths resolve against base_dir."""
    grids = []
    for entry in cfg["blocks"]:
        if "grid_file" in entry:
            grids.append(gd.read_grid(Path(base_dir) / entry["grid_file"]))
        elif "grid" in entry:
            grids.append(gd.build_structured(entry["grid"]))
        else:
            grids.append(gd.import_su2(Path(base_dir) / entry["su2_file"]))
    return grids


def prep(case_path):
    """Validate the case, write grids, the initial flow snapshot, and
    the expanded config; returns the output directory.

    Snapshots from earlier runs of the same case are removed so a
    following run starts from the fresh initial state.
    """
    case_path = Path(case_path)
    raw = read_case(case_path)
    cfg = validate_config(raw, case_path.parent)
    out_dir = case_dir(case_path, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg["nblocks"] != len(cfg["blocks"]):
        grids = _split_declared_block(cfg)
    else:
        grids = _load_block_grids(cfg, case_path.parent)
    for i, entry in enumerate(cfg["blocks"]):
        entry.pop("grid", None)
        entry.pop("su2_file", None)
        entry["grid_file"] = _grid_file(i)
        gd.write_grid(out_dir / entry["grid_file"], grids[i])

    _check_topology(cfg)
    blocks = build_blocks(cfg, out_dir)
    _set_initial(cfg, blocks)
    for stale in out_dir.glob("flow.t*.bin"):
        stale.unlink()
    write_snapshot(out_dir, blocks, tidx=0, step=0, time=0.0, plot_index=0)

    text = json.dumps(cfg, indent=2, sort_keys=True) + "\n"
    (out_dir / "config.json").write_text(text)
    return out_dir


def _check_topology(cfg):
    """Exchange declarations must be reciprocal along the same axis."""
    errs = []
    for i, entry in enumerate(cfg["blocks"]):
        for tag, spec in entry.get("bcs", {}).items():
            if spec.get("type") != "exchange" or tag not in bk.FACE_TAGS:
                continue
            j, face = spec["neighbor"], spec["face"]
            back = cfg["blocks"][j].get("bcs", {}).get(face)
            d, hi = bk.face_of(tag)
            if not back or back.get("type") != "exchange" \
                    or back.get("neighbor") != i or back.get("face") != tag:
                errs.append(f"block {i} face {tag}: neighbour {j} face "
                            f"{face} does not exchange back")
                continue
            dn, dhi = bk.face_of(face)
            if dn != d or dhi == hi:
                errs.append(f"block {i} face {tag}: rotated or same-side "
                            f"interfaces are not supported")
    if errs:
        raise ConfigError("invalid block topology:\n  " + "\n  ".join(errs))


# -- block construction --------------------------------------------------------

def _gas_layout(cfg):
    gas = load_gas_model(_data_path(cfg["gas_model"]))
    layout = sm.ConservedLayout(
        gas, two_temperature=cfg["thermal_mode"] == "two_temperature",
        turbulence=cfg["turbulence"])
    return gas, layout


def _state_point(gas, layout, st):
    """Uniform one-entry FlowState for a config flow state."""
    massf = None
    if gas.nsp > 1:
        massf = np.array([st["massf"][s] for s in gas.species_names])
    tv = st.get("Tv") if layout.two_temperature else None
    mf = massf if massf is not None else np.array([1.0])
    rho = st["p"] / float(bk.gm_pressure_coeff(gas, st["T"], mf, tv))
    fs = sm.make_flow_state(
        gas, 1, rho=rho, T=st["T"],
        vel=(st["velx"], st["vely"], st["velz"]), massf=massf,
        Tv=tv, nuhat=st.get("nuhat", 0.0))
    # pin to the decode fixed point so uniform regions stay uniform
    sm.decode(gas, layout, sm.encode(gas, layout, fs), fs=fs)
    return fs


def _bc_object(gas, layout, spec, cfg):
    kind = spec["type"]
    if kind == "supersonic_inflow":
        st = cfg["flow_states"][spec["state"]]
        massf = None
        if gas.nsp > 1:
            massf = [st["massf"][s] for s in gas.species_names]
        return bk.SupersonicInflow(
            gas, layout, p=st["p"], T=st["T"],
            vel=(st["velx"], st["vely"], st["velz"]), massf=massf,
            Tv=st.get("Tv"), nuhat=st.get("nuhat", 0.0))
    if kind == "outflow_simple":
        return bk.OutflowSimple()
    if kind == "slip_wall":
        return bk.SlipWall()
    if kind == "noslip_wall":
        massf_wall = None
        if spec.get("catalytic") == "super":
            massf_wall = [spec["massf_wall"].get(s, 0.0)
                          for s in gas.species_names]
        return bk.NoslipWall(gas, T_wall=spec.get("T_wall"),
                             massf_wall=massf_wall)
    if kind == "exchange":
        return bk.Exchange(spec["neighbor"], spec["face"])
    raise ConfigError(f"unknown boundary type {kind!r}")


def _vplane(verts, d, pos):
    idx = [slice(None)] * (verts.ndim - 1)
    idx[d] = pos
    return verts[tuple(idx)]


def _donate_halos(verts_list, bc_maps):
    """Extend each block's vertex array into its exchange neighbours.

    NG vertex layers per interface side, donated direction by
    direction, so later directions read neighbours already extended in
    the earlier ones and corner halos match the unsplit grid exactly.
    Returns the extended vertex arrays and the halo depths per block.
    """
    nd = verts_list[0].ndim - 1
    verts = list(verts_list)
    ext = [[[0, 0] for _ in range(nd)] for _ in verts_list]
    diag = max(float(np.linalg.norm(v.reshape(-1, 3).max(axis=0)
                                    - v.reshape(-1, 3).min(axis=0)))
               for v in verts_list)
    tol = 1e-9 * max(diag, 1.0)
    for d in range(nd):
        new = list(verts)
        for i, bcm in enumerate(bc_maps):
            pieces = [verts[i]]
            for hi in (False, True):
                tag = bk.FACE_TAGS[2 * d + int(hi)]
                spec = bcm.get(tag)
                if not spec or spec.get("type") != "exchange":
                    continue
                nb = verts[spec["neighbor"]]
                dn, dhi = bk.face_of(spec["face"])
                own_plane = _vplane(verts[i], d, -1 if hi else 0)
                nb_plane = _vplane(nb, dn, -1 if dhi else 0)
                if own_plane.shape != nb_plane.shape:
                    raise ConfigError(
                        f"block {i} face {tag}: interface with block "
                        f"{spec['neighbor']} is not conformal "
                        f"({own_plane.shape} vs {nb_plane.shape})")
                if not np.allclose(own_plane, nb_plane, atol=tol,
                                   rtol=0.0):
                    raise ConfigError(
                        f"block {i} face {tag}: interface vertices do "
                        f"not match block {spec['neighbor']} face "
                        f"{spec['face']}")
                take = [slice(None)] * (nd + 1)
                take[dn] = slice(-bk.NG - 1, -1) if dhi \
                    else slice(1, bk.NG + 1)
                slab = nb[tuple(take)]
                if hi:
                    pieces.append(slab)
                else:
                    pieces.insert(0, slab)
                ext[i][d][int(hi)] = bk.NG
            if len(pieces) > 1:
                new[i] = np.concatenate(pieces, axis=d)
        verts = new
    return verts, [tuple(tuple(s) for s in e) for e in ext]


def build_blocks(cfg, out_dir):
    """Construct the runtime blocks for a prepped case."""
    gas, layout = _gas_layout(cfg)
    mech = None
    if cfg["mechanism"]:
        mech = load_mechanism(_data_path(cfg["mechanism"]), gas)
    field = None
    if cfg["mms"]["enable"]:
        field = mm.ManufacturedField(cfg["mms"]["variant"],
                                     L=cfg["mms"]["L"])
    axisym = cfg["dimensionality"] == "axisymmetric"
    common = dict(axisymmetric=axisym, viscous=cfg["viscous"],
                  flux=cfg["flux"], limiter=cfg["limiter"], mech=mech,
                  mms_field=field)
    grids = _load_block_grids(cfg, out_dir)
    structured = [isinstance(g, gd.StructuredGrid) for g in grids]
    if any(structured):
        sverts, sext = _donate_halos(
            [g.verts for g, s in zip(grids, structured) if s],
            [e["bcs"] for e, s in zip(cfg["blocks"], structured) if s])
    else:
        sverts, sext = [], []
    blocks = []
    si = 0
    nd = 3 if cfg["dimensionality"] == "3D" else 2
    for i, (g, entry) in enumerate(zip(grids, cfg["blocks"])):
        bcs = {t: _bc_object(gas, layout, s, cfg)
               for t, s in entry["bcs"].items()}
        if field is not None:
            for t in bk.FACE_TAGS[:2 * nd]:
                bcs.setdefault(t, bk.MMSDirichlet(gas, field))
        if structured[i]:
            if axisym and sverts[si][..., 1].min() < -1e-12:
                raise ConfigError(f"block {i}: axisymmetric grids need "
                                  f"y >= 0")
            blocks.append(bk.StructuredBlock(
                gas, layout, sverts[si], sext[si], bcs, blk_id=i,
                reconstruction=cfg["reconstruction"], **common))
            si += 1
        else:
            blocks.append(bk.UnstructuredBlock(
                gas, layout, g, bcs, blk_id=i, **common))
    if cfg["turbulence"] and field is None:
        walls = np.concatenate([b.wall_face_mids() for b in blocks])
        if len(walls):
            for b in blocks:
                b.dist = tb.wall_distance(b.cent[b.interior], walls)
    return blocks


def _diaphragm_fn(left, right, axis, pos):
    """Piecewise-uniform fill: left state below pos along axis."""
    def pick(m, al, ar):
        return np.where(m, al, ar)

    def fn(x, y, z):
        m = (x, y, z)[axis] < pos
        out = {"rho": pick(m, left.rho[0], right.rho[0]),
               "u": pick(m, left.vel[0, 0], right.vel[0, 0]),
               "v": pick(m, left.vel[0, 1], right.vel[0, 1]),
               "w": pick(m, left.vel[0, 2], right.vel[0, 2]),
               "e": pick(m, left.e[0], right.e[0]),
               "massf": np.where(m[..., None], left.massf[0],
                                 right.massf[0])}
        if left.e_v is not None:
            out["e_v"] = pick(m, left.e_v[0], right.e_v[0])
        if left.nuhat is not None:
            out["nuhat"] = pick(m, left.nuhat[0], right.nuhat[0])
        return out
    return fn


def _set_initial(cfg, blocks):
    gas, layout = blocks[0].gas, blocks[0].layout
    if cfg["mms"]["enable"]:
        field = mm.ManufacturedField(cfg["mms"]["variant"],
                                     L=cfg["mms"]["L"])
        for b in blocks:
            b.set_initial_fn(lambda x, y, z: field.prim(gas, x, y, z))
        return
    for b, entry in zip(blocks, cfg["blocks"]):
        init = entry["initial"]
        if isinstance(init, str):
            b.set_initial(_state_point(gas, layout,
                                       cfg["flow_states"][init]))
            continue
        left = _state_point(gas, layout, cfg["flow_states"][init["left"]])
        right = _state_point(gas, layout,
                             cfg["flow_states"][init["right"]])
        b.set_initial_fn(_diaphragm_fn(left, right,
                                       "xyz".index(init["axis"]),
                                       init["position"]))


# -- snapshots -------------------------------------------------------------------

def write_snapshot(out_dir, blocks, tidx, step, time, plot_index):
    """One flow file per block, written atomically.

    The conserved interior plus the full padded temperature fields go
    in; the temperatures seed the decode Newton iterations on load so a
    restarted march reproduces the uninterrupted one bitwise.  Interior
    primitives ride along for post-processing.
    """
    for b in blocks:
        header = {"step": int(step), "time": float(time),
                  "plot_index": int(plot_index), "block": int(b.blk_id),
                  "nblocks": len(blocks)}
        fs = b.fs
        it = b.interior
        arrays = {
            "U": b.Ui, "T_guess": fs.T,
            "rho": fs.rho[it], "p": fs.p[it], "T": fs.T[it],
            "a": fs.a[it], "e": fs.e[it],
            "velx": fs.vel[it + (0,)],
            "vely": fs.vel[it + (1,)],
            "velz": fs.vel[it + (2,)],
            "massf": fs.massf[it],
        }
        if fs.Tv is not None:
            arrays["Tv_guess"] = fs.Tv
            arrays["Tv"] = fs.Tv[it]
            arrays["e_v"] = fs.e_v[it]
        if fs.nuhat is not None:
            arrays["nuhat"] = fs.nuhat[it]
        gd.write_flow(Path(out_dir) / _flow_file(tidx, b.blk_id),
                      header, arrays)


def load_snapshot(out_dir, tidx, blocks):
    """Restore conserved state and decode-guess temperatures."""
    header = None
    for b in blocks:
        h, arrays = gd.read_flow(Path(out_dir) / _flow_file(tidx, b.blk_id))
        if h["block"] != b.blk_id or h["nblocks"] != len(blocks):
            raise gd.GridError(
                f"snapshot t{tidx:04d} does not match the case blocks")
        if arrays["U"].shape != b.Ui.shape:
            raise gd.GridError(
                f"snapshot t{tidx:04d} block {b.blk_id}: conserved shape "
                f"{arrays['U'].shape} does not match {b.Ui.shape}")
        b.Ui[...] = arrays["U"]
        b.fs.T[...] = arrays["T_guess"]
        if b.fs.Tv is not None:
            b.fs.Tv[...] = arrays["Tv_guess"]
        b.decode_interior()
        header = h
    return header


# -- run ---------------------------------------------------------------------------

class RunLog:
    """Tee progress lines to stdout and the case's run.log."""

    def __init__(self, path, echo=True):
        self.path = Path(path)
        self.echo = echo
        self._fh = open(self.path, "a")

    def line(self, msg):
        self._fh.write(msg + "\n")
        self._fh.flush()
        if self.echo:
            print(msg)

    def close(self):
        self._fh.close()


def _expanded_config(case_path):
    """The expanded config and output directory for a case reference.

    Accepts either the original case file (whose prep output must
    exist) or the expanded config.json inside the output directory.
    """
    case_path = Path(case_path)
    raw = read_case(case_path)
    if raw.get("expanded"):
        cfg = validate_config(raw, case_path.parent)
        return cfg, case_dir(case_path, cfg)
    cfg = validate_config(raw, case_path.parent)
    out_dir = case_dir(case_path, cfg)
    expanded = out_dir / "config.json"
    if not expanded.exists():
        raise gd.GridError(f"{expanded} not found; run 'hyperflow prep "
                           f"-f {case_path}' first")
    cfg = validate_config(read_case(expanded), out_dir)
    return cfg, out_dir


def run(case_path, nworkers=None, echo=True):
    """March the case from its latest snapshot; returns (step, time)."""
    cfg, out_dir = _expanded_config(case_path)
    blocks = build_blocks(cfg, out_dir)
    idxs = _snapshot_indices(out_dir, len(blocks))
    if not idxs:
        raise gd.GridError(f"no snapshots in {out_dir}; run prep first")
    header = load_snapshot(out_dir, idxs[-1], blocks)
    step = int(header["step"])
    t = float(header["time"])
    tidx = idxs[-1]
    plot_index = int(header["plot_index"])
    nw = nworkers if nworkers is not None else cfg["nworkers"]

    log = RunLog(out_dir / "run.log", echo=echo)
    log.line(f"# {cfg['title']}: {len(blocks)} blocks, {nw} workers, "
             f"scheme {cfg['scheme']}, starting at step {step} "
             f"t {t:.6e}")
    pool = pr.WorkerPool(nw)
    advanced = False
    at_snapshot = True
    try:
        integ = ad.Integrator(
            blocks, scheme=cfg["scheme"], cfl=cfg["cfl"],
            exchange=pr.exchange_ghosts, runner=pool.run,
            jacobian_refresh=cfg["jacobian_refresh"])
        while step < cfg["max_step"] \
                and t < cfg["max_time"] * (1.0 - 1e-14):
            dt = min(integ.dt(), cfg["max_time"] - t)
            integ.step(dt=dt)
            step += 1
            t += dt
            advanced = True
            at_snapshot = False
            if step % 50 == 0 or step == 1:
                rn = ad.residual_norm(integ.last_residuals)
                log.line(f"step {step:6d}  t {t:.6e}  dt {dt:.6e}  "
                         f"|R| {rn:.6e}")
            if cfg["dt_plot"] is not None and t >= (plot_index + 1) \
                    * cfg["dt_plot"] * (1.0 - 1e-12):
                plot_index += 1
                tidx += 1
                write_snapshot(out_dir, blocks, tidx, step, t, plot_index)
                log.line(f"snapshot t{tidx:04d} at step {step} "
                         f"t {t:.6e}")
                at_snapshot = True
        if advanced and not at_snapshot:
            tidx += 1
            write_snapshot(out_dir, blocks, tidx, step, t, plot_index)
            log.line(f"snapshot t{tidx:04d} at step {step} t {t:.6e}")
        log.line(f"# finished at step {step} t {t:.6e}")
    except (FlowDivergence, ad.StepError) as exc:
        log.line(f"# diverged at step {step + 1}: {exc}")
        raise
    finally:
        pool.close()
        log.close()
    return step, t


# -- post --------------------------------------------------------------------------

def post_vtk(case_path):
    """Write legacy-ASCII VTK files for every snapshot; returns paths."""
    cfg, out_dir = _expanded_config(case_path)
    grids = _load_block_grids(cfg, out_dir)
    gas, _ = _gas_layout(cfg)
    plot_dir = out_dir / "plot"
    plot_dir.mkdir(exist_ok=True)
    paths = []
    for tidx in _snapshot_indices(out_dir, len(grids)):
        for i, g in enumerate(grids):
            header, arrays = gd.read_flow(out_dir / _flow_file(tidx, i))
            path = plot_dir / f"{cfg['title']}.t{tidx:04d}.b{i:04d}.vtk"
            _write_vtk(path, cfg, g, header, arrays, gas)
            paths.append(path)
    return paths


def _vtk_scalars(arrays, gas):
    out = [("rho", arrays["rho"]), ("p", arrays["p"]), ("T", arrays["T"])]
    speed = np.sqrt(arrays["velx"] ** 2 + arrays["vely"] ** 2
                    + arrays["velz"] ** 2)
    out.append(("M", speed / arrays["a"]))
    if gas.nsp > 1:
        for k, name in enumerate(gas.species_names):
            out.append((f"massf_{name}", arrays["massf"][..., k]))
    if "Tv" in arrays:
        out.append(("Tv", arrays["Tv"]))
    if "nuhat" in arrays:
        out.append(("nuhat", arrays["nuhat"]))
    return out


def _write_vtk(path, cfg, grid, header, arrays, gas):
    lines = ["# vtk DataFile Version 2.0",
             f"{cfg['title']} step={header['step']} time={header['time']}",
             "ASCII"]
    if isinstance(grid, gd.StructuredGrid):
        v = grid.verts
        # legacy VTK orders points and cells first index fastest
        dims = v.shape[:grid.ndim] + (1,) * (3 - grid.ndim)
        axes = tuple(range(grid.ndim))[::-1] + (grid.ndim,)
        pts = v.transpose(axes).reshape(-1, 3)
        lines.append("DATASET STRUCTURED_GRID")
        lines.append(f"DIMENSIONS {dims[0]} {dims[1]} {dims[2]}")
        lines.append(f"POINTS {len(pts)} double")
        lines.extend(f"{p[0]:.12g} {p[1]:.12g} {p[2]:.12g}" for p in pts)
        ncell = arrays["rho"].size

        def order(q):
            if q.ndim == grid.ndim:
                q = q[..., None]
            return q.transpose(axes).reshape(-1, q.shape[-1])
    else:
        pts = grid.points
        lines.append("DATASET UNSTRUCTURED_GRID")
        lines.append(f"POINTS {len(pts)} double")
        lines.extend(f"{p[0]:.12g} {p[1]:.12g} {p[2]:.12g}" for p in pts)
        cells = grid.cells
        total = sum(len(c) + 1 for c in cells)
        lines.append(f"CELLS {len(cells)} {total}")
        lines.extend(" ".join(map(str, (len(c),) + tuple(c)))
                     for c in cells)
        lines.append(f"CELL_TYPES {len(cells)}")
        lines.extend("9" if len(c) == 4 else "5" for c in cells)
        ncell = len(cells)

        def order(q):
            return q.reshape(ncell, -1)

    lines.append(f"CELL_DATA {ncell}")
    for name, q in _vtk_scalars(arrays, gas):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{val:.12g}" for val in order(q)[:, 0])
    lines.append("VECTORS velocity double")
    vel = np.stack([arrays["velx"], arrays["vely"], arrays["velz"]],
                   axis=-1)
    lines.extend(f"{v3[0]:.12g} {v3[1]:.12g} {v3[2]:.12g}"
                 for v3 in order(vel))
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def post_slice(case_path, spec):
    """Boundary-profile table for `--slice BLOCK,FACE`.

    One row per boundary face: face-midpoint x and y, adjacent-cell
    pressure and temperature, and the wall heat flux in W/cm2
    (positive into the wall; nonzero only on fixed-temperature no-slip
    walls).
    """
    cfg, out_dir = _expanded_config(case_path)
    try:
        bstr, face = spec.split(",")
        blk_id = int(bstr)
    except ValueError as exc:
        raise ConfigError(f"--slice wants BLOCK,FACE (e.g. 1,jmin), "
                          f"got {spec!r}") from exc
    if face not in bk.FACE_TAGS:
        raise ConfigError(f"unknown face tag {face!r}")
    blocks = build_blocks(cfg, out_dir)
    if not (0 <= blk_id < len(blocks)):
        raise ConfigError(f"block id {blk_id} out of range "
                          f"[0, {len(blocks)})")
    idxs = _snapshot_indices(out_dir, len(blocks))
    if not idxs:
        raise gd.GridError(f"no snapshots in {out_dir}")
    load_snapshot(out_dir, idxs[-1], blocks)
    b = blocks[blk_id]
    if not isinstance(b, bk.StructuredBlock):
        raise ConfigError("--slice supports structured blocks only")
    d, hi = bk.face_of(face)
    if d >= b.nd:
        raise ConfigError(f"face {face!r} does not exist on a {b.nd}D "
                          f"block")
    tang = [s for s in b.interior]
    flat = bk.NG + b.ncell[d] if hi else bk.NG
    fidx = b.side_index(d, flat, tang)
    mids = b.fmid[d][fidx].reshape(-1, 3)
    normals = b.fnorm[d][fidx].reshape(-1, 3)
    cidx = b.side_index(d, b.interior_edge(d, hi), tang)
    pw = b.fs.p[cidx].reshape(-1)
    Ti = b.fs.T[cidx].reshape(-1)
    ci = b.cent[cidx].reshape(-1, 3)
    q = np.zeros_like(pw)
    bc = b.bcs[(d, hi)]
    if isinstance(bc, bk.NoslipWall) and cfg["viscous"] \
            and bc.T_wall is not None:
        dn = np.abs(np.einsum("ij,ij->i", ci - mids, normals))
        massf = b.fs.massf[cidx].reshape(-1, b.gas.nsp)
        Tw = np.full_like(pw, bc.T_wall)
        mu = b.gas.viscosity(Tw, massf)
        kappa = b.gas.conductivity(mu, Tw, massf)
        # positive into the wall, reported in W/cm2
        q = kappa * (Ti - bc.T_wall) / dn / 1.0e4
    lines = [f"# {cfg['title']} block {blk_id} face {face} "
             f"(snapshot t{idxs[-1]:04d})",
             "# x y p T q_wall[W/cm2]"]
    for k in range(len(pw)):
        lines.append(f"{mids[k, 0]:.8e} {mids[k, 1]:.8e} {pw[k]:.8e} "
                     f"{Ti[k]:.8e} {q[k]:.8e}")
    return "\n".join(lines)


def _case_norms(case_path):
    """Manufactured-solution L2 error norms at a case's latest snapshot."""
    cfg, out_dir = _expanded_config(case_path)
    if not cfg["mms"]["enable"]:
        raise ConfigError(f"{case_path}: not a manufactured-solution case")
    gas, _ = _gas_layout(cfg)
    field = mm.ManufacturedField(cfg["mms"]["variant"], L=cfg["mms"]["L"])
    blocks = build_blocks(cfg, out_dir)
    idxs = _snapshot_indices(out_dir, len(blocks))
    if not idxs:
        raise gd.GridError(f"no snapshots in {out_dir}")
    load_snapshot(out_dir, idxs[-1], blocks)
    names = ["rho", "u", "v", "p"]
    if cfg["dimensionality"] == "3D":
        names.insert(3, "w")
    if cfg["turbulence"]:
        names.append("nuhat")
    nums = {n: [] for n in names}
    exact = {n: [] for n in names}
    vols = []
    for b in blocks:
        it = b.interior
        c = b.cent[it].reshape(-1, 3)
        ex = field.prim(gas, c[:, 0], c[:, 1], c[:, 2])
        fsv = {"rho": b.fs.rho[it], "p": b.fs.p[it],
               "u": b.fs.vel[it + (0,)], "v": b.fs.vel[it + (1,)],
               "w": b.fs.vel[it + (2,)]}
        if b.fs.nuhat is not None:
            fsv["nuhat"] = b.fs.nuhat[it]
        for n in names:
            nums[n].append(fsv[n].reshape(-1))
            exact[n].append(ex[n] + np.zeros(len(c)))
        vols.append(b.vol[it].reshape(-1))
    vol = np.concatenate(vols)
    ndim = 3 if cfg["dimensionality"] == "3D" else 2
    h = float((vol.sum() / vol.size) ** (1.0 / ndim))
    norms = {n: mm.error_norms(np.concatenate(nums[n]),
                               np.concatenate(exact[n]), vol)
             for n in names}
    return names, norms, h


def post_mms_norms(case_path):
    """Error-norm table; adds the observed order when the case names a
    coarser companion through mms.compare."""
    names, norms, h = _case_norms(case_path)
    cfg, _ = _expanded_config(case_path)
    compare = cfg["mms"]["compare"]
    lines = [f"# {cfg['title']}: manufactured-solution L2 error norms "
             f"(h = {h:.6e})"]
    if compare is None:
        lines.append("# variable L2")
        for n in names:
            lines.append(f"{n} {norms[n]:.10e}")
        return "\n".join(lines)
    cpath = Path(compare)
    if not cpath.is_absolute():
        cpath = Path(case_path).parent / cpath
    cnames, cnorms, ch = _case_norms(cpath)
    lines.append(f"# order against {cpath.name} (h = {ch:.6e})")
    lines.append("# variable L2 order")
    for n in names:
        slope = mm.observed_order([cnorms[n], norms[n]], [ch, h])[0]
        lines.append(f"{n} {norms[n]:.10e} {slope:.4f}")
    return "\n".join(lines)


def post_scaling_fit(timings_path):
    """Fit the two-term runtime model t(n) = a + b/n to an `n time`
    table and format the serial fraction and speedup columns."""
    try:
        data = np.loadtxt(timings_path, comments="#", ndmin=2)
    except OSError as exc:
        raise gd.GridError(f"cannot read timings file {timings_path}: "
                           f"{exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"timings file {timings_path} must hold "
                          f"`n time` pairs: {exc}") from exc
    if data.shape[1] != 2:
        raise ConfigError(f"timings file {timings_path} must hold "
                          f"`n time` pairs, got {data.shape[1]} columns")
    try:
        model = pr.amdahl_fit(data)
    except pr.ScalingFitError as exc:
        raise ConfigError(str(exc)) from exc
    ns, ts = data[:, 0], data[:, 1]
    n0, t0 = ns[0], ts[0]
    lines = [f"serial fraction s = {model.s:.6e}",
             f"parallel fraction p = {model.p:.6f}",
             "# n time/iter speedup(measured) speedup(model)"]
    for n, t in zip(ns, ts):
        meas = n0 * t0 / t
        lines.append(f"{n:.0f} {t:.6e} {meas:.6f} "
                     f"{pr.predict_speedup(model, n):.6f}")
    return "\n".join(lines)
