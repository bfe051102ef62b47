"""Declarative run configuration: YAML parsing, schema and cross-field
validation, and construction of the runtime objects a run needs."""

from dataclasses import dataclass, field as dfield

import numpy as np
import yaml

from . import fields_io, mesh, methods, transport

METHOD_NAMES = ("reference", "mmsfem", "mgmsfem")
FIELD_KINDS = ("uniform", "layered", "channel", "spe10")
WELL_CASES = ("case1", "case2", "custom")


@dataclass
class MethodConfig:
    name: str = "reference"
    offline: int = 2
    online: int = 0
    oversample_layers: int | None = None


@dataclass
class RunConfig:
    dims: tuple = (16, 16, 8)
    spacing: tuple = (1.0, 1.0, 1.0)
    coarsening: tuple = (4, 4, 4)
    field_kind: str = "uniform"
    contrast: float = 1.0
    seed: int = 0
    field_path: str | None = None
    file_dims: tuple | None = None
    layers: tuple | None = None
    mu_w: float = 1.0
    mu_o: float = 5.0
    exp_w: float = 2.0
    exp_o: float = 2.0
    well_case: str = "case1"
    rate: float = 1.0
    injectors: tuple = ()
    producers: tuple = ()  # (label, ((i,j,k), ...)) pairs for custom wells
    method: MethodConfig = dfield(default_factory=MethodConfig)
    compare_methods: tuple = ()
    steps: int = 100
    pressure_interval: int = 5
    dt: float | None = None
    cfl_safety: float = 0.5
    max_dt: float = 1.0
    postprocess: str = "auto"
    snapshot_instants: tuple = ()
    threads: int = 1


def _section(raw, name, diags):
    sub = raw.get(name, {})
    if sub is None:
        sub = {}
    if not isinstance(sub, dict):
        diags.append(f"{name}: expected a mapping")
        return {}
    return sub


def _triple(value, path, diags, cast=int, scalar_ok=True):
    if value is None:
        return None
    if np.isscalar(value) and scalar_ok:
        return (cast(value),) * 3
    try:
        t = tuple(cast(v) for v in value)
    except (TypeError, ValueError):
        diags.append(f"{path}: expected a number or a triple")
        return None
    if len(t) != 3:
        diags.append(f"{path}: expected 3 entries, got {len(t)}")
        return None
    return t


def _method_config(raw, path, diags):
    m = MethodConfig()
    name = raw.get("name", m.name)
    if name not in METHOD_NAMES:
        diags.append(f"{path}.name: unknown method {name!r}")
    else:
        m.name = name
    for key in ("offline", "online"):
        val = raw.get(key)
        if val is not None:
            try:
                setattr(m, key, int(val))
            except (TypeError, ValueError):
                diags.append(f"{path}.{key}: expected an integer")
    if raw.get("oversample_layers") is not None:
        try:
            m.oversample_layers = int(raw["oversample_layers"])
        except (TypeError, ValueError):
            diags.append(f"{path}.oversample_layers: expected an integer")
    for key in raw:
        if key not in ("name", "offline", "online", "oversample_layers"):
            diags.append(f"{path}.{key}: unknown key")
    return m


def parse_config(raw):
    """Turn a raw mapping (parsed YAML) into a RunConfig plus a list of
    schema diagnostics with field paths."""
    diags = []
    cfg = RunConfig()
    if not isinstance(raw, dict):
        return cfg, ["config root: expected a mapping"]

    grid = _section(raw, "grid", diags)
    dims = _triple(grid.get("dims"), "grid.dims", diags, scalar_ok=False)
    if dims:
        cfg.dims = dims
    spacing = _triple(grid.get("spacing"), "grid.spacing", diags, float)
    if spacing:
        cfg.spacing = spacing
    coarse = _triple(grid.get("coarsening"), "grid.coarsening", diags)
    if coarse:
        cfg.coarsening = coarse

    fld = _section(raw, "field", diags)
    cfg.field_kind = fld.get("kind", cfg.field_kind)
    if cfg.field_kind not in FIELD_KINDS:
        diags.append(f"field.kind: unknown kind {cfg.field_kind!r}")
    cfg.contrast = float(fld.get("contrast", cfg.contrast))
    cfg.seed = int(raw.get("seed", fld.get("seed", cfg.seed)))
    cfg.field_path = fld.get("path", None)
    cfg.file_dims = _triple(fld.get("file_dims"), "field.file_dims", diags,
                            scalar_ok=False)
    layers = fld.get("layers")
    if layers is not None:
        try:
            cfg.layers = (int(layers[0]), int(layers[1]))
        except (TypeError, ValueError, IndexError):
            diags.append("field.layers: expected [first, last]")

    mob = _section(raw, "mobility", diags)
    cfg.mu_w = float(mob.get("mu_w", cfg.mu_w))
    cfg.mu_o = float(mob.get("mu_o", cfg.mu_o))
    cfg.exp_w = float(mob.get("exp_w", cfg.exp_w))
    cfg.exp_o = float(mob.get("exp_o", cfg.exp_o))

    wells = _section(raw, "wells", diags)
    cfg.well_case = wells.get("case", cfg.well_case)
    if cfg.well_case not in WELL_CASES:
        diags.append(f"wells.case: unknown case {cfg.well_case!r}")
    cfg.rate = float(wells.get("rate", cfg.rate))
    if cfg.well_case == "custom":
        try:
            cfg.injectors = tuple(
                tuple(int(x) for x in c) for c in wells.get("injectors", ())
            )
            cfg.producers = tuple(
                (str(p["label"]), tuple(tuple(int(x) for x in c) for c in p["cells"]))
                for p in wells.get("producers", ())
            )
        except (TypeError, ValueError, KeyError):
            diags.append("wells: custom wells need injectors and labeled producers")
        if not cfg.injectors or not cfg.producers:
            diags.append("wells: custom wells need at least one injector and producer")

    cfg.method = _method_config(_section(raw, "method", diags), "method", diags)
    cmp_raw = raw.get("compare", {}) or {}
    cfg.compare_methods = tuple(
        _method_config(m, f"compare.methods[{i}]", diags)
        for i, m in enumerate(cmp_raw.get("methods", ()))
    )

    tim = _section(raw, "time", diags)
    cfg.steps = int(tim.get("steps", cfg.steps))
    cfg.pressure_interval = int(tim.get("pressure_interval", cfg.pressure_interval))
    if tim.get("dt") is not None:
        cfg.dt = float(tim["dt"])
    cfg.cfl_safety = float(tim.get("cfl_safety", cfg.cfl_safety))
    cfg.max_dt = float(tim.get("max_dt", cfg.max_dt))

    cfg.postprocess = raw.get("postprocess", cfg.postprocess)
    out = _section(raw, "output", diags)
    cfg.snapshot_instants = tuple(int(s) for s in out.get("snapshots", ()))
    cfg.threads = int(raw.get("threads", cfg.threads))
    return cfg, diags


def min_edge_snapshot_count(coarsening, dims):
    """Smallest J_i over the edge axes that actually occur."""
    counts = []
    for axis in range(3):
        if dims[axis] // coarsening[axis] > 1:
            t1, t2 = [a for a in range(3) if a != axis]
            counts.append(coarsening[t1] * coarsening[t2])
    return min(counts) if counts else None


def validate_config(cfg):
    """Cross-field checks; returns diagnostics (empty = runnable)."""
    diags = []
    for axis in range(3):
        if cfg.dims[axis] < 1:
            diags.append(f"grid.dims: axis {'xyz'[axis]} must be >= 1")
        elif cfg.coarsening[axis] < 1:
            diags.append(f"grid.coarsening: axis {'xyz'[axis]} must be >= 1")
        elif cfg.dims[axis] % cfg.coarsening[axis]:
            diags.append(
                f"grid.coarsening: {cfg.coarsening[axis]} does not divide the "
                f"{'xyz'[axis]}-axis cell count {cfg.dims[axis]}"
            )
        if cfg.spacing[axis] <= 0:
            diags.append(f"grid.spacing: axis {'xyz'[axis]} must be positive")
    if cfg.contrast < 1.0:
        diags.append("field.contrast: must be >= 1")
    if cfg.field_kind == "spe10":
        if not cfg.field_path:
            diags.append("field.path: required for spe10 fields")
        if cfg.file_dims is None:
            diags.append("field.file_dims: required for spe10 fields")
        else:
            if cfg.file_dims[0] != cfg.dims[0] or cfg.file_dims[1] != cfg.dims[1]:
                diags.append("field.file_dims: x/y extents must match grid.dims")
            lo, hi = cfg.layers if cfg.layers else (0, cfg.file_dims[2] - 1)
            if not 0 <= lo <= hi < cfg.file_dims[2]:
                diags.append("field.layers: outside the file layer range")
            elif hi - lo + 1 != cfg.dims[2]:
                diags.append(
                    f"field.layers: selects {hi - lo + 1} layers but grid.dims "
                    f"has {cfg.dims[2]}"
                )
    if cfg.mu_w <= 0 or cfg.mu_o <= 0:
        diags.append("mobility: viscosities must be positive")
    if cfg.exp_w < 1 or cfg.exp_o < 1:
        diags.append("mobility: exponents must be >= 1")
    if cfg.rate <= 0:
        diags.append("wells.rate: must be positive")
    for where, cells in (("injectors", cfg.injectors),) + tuple(
        (f"producers[{lbl}]", cc) for lbl, cc in cfg.producers
    ):
        for c in cells:
            if any(not 0 <= c[a] < cfg.dims[a] for a in range(3)):
                diags.append(f"wells.{where}: cell {tuple(c)} outside the domain")
    if cfg.steps < 0:
        diags.append("time.steps: must be >= 0")
    if cfg.pressure_interval < 1:
        diags.append("time.pressure_interval: must be >= 1")
    if not 0 < cfg.cfl_safety <= 1:
        diags.append("time.cfl_safety: must be in (0, 1]")
    if cfg.dt is not None and cfg.dt <= 0:
        diags.append("time.dt: must be positive")
    if cfg.max_dt <= 0:
        diags.append("time.max_dt: must be positive")
    if cfg.postprocess not in ("auto", "always", "never"):
        diags.append(f"postprocess: unknown policy {cfg.postprocess!r}")
    j_min = min_edge_snapshot_count(cfg.coarsening, cfg.dims)
    for label, m in (("method", cfg.method),) + tuple(
        (f"compare.methods[{i}]", mm) for i, mm in enumerate(cfg.compare_methods)
    ):
        if m.name == "mgmsfem":
            if m.offline < 1:
                diags.append(f"{label}.offline: must be >= 1")
            elif j_min is not None and m.offline > j_min:
                diags.append(
                    f"{label}.offline: {m.offline} exceeds J_i={j_min} snapshots"
                )
            if m.online < 0:
                diags.append(f"{label}.online: must be >= 0")
            if m.oversample_layers is not None and m.oversample_layers < 0:
                diags.append(f"{label}.oversample_layers: must be >= 0")
    if cfg.threads < 1:
        diags.append("threads: must be >= 1")
    return diags


def load_config(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw)


# -- runtime object construction -------------------------------------------


def build_grid(cfg):
    return mesh.FineGrid(cfg.dims, cfg.spacing)


def build_partition(cfg, grid):
    return mesh.build_coarse_partition(grid, cfg.coarsening)


def build_field(cfg, seed=None):
    if cfg.field_kind == "spe10":
        return fields_io.load_spe10(cfg.field_path, cfg.file_dims, cfg.layers)
    return fields_io.gen_synthetic(
        cfg.field_kind, cfg.dims, cfg.contrast,
        cfg.seed if seed is None else seed,
    )


def build_mobility(cfg):
    return transport.MobilityModel(cfg.mu_w, cfg.mu_o, cfg.exp_w, cfg.exp_o)


def build_wells(cfg, grid):
    if cfg.well_case == "case1":
        return transport.wells_case1(grid, cfg.rate)
    if cfg.well_case == "case2":
        return transport.wells_case2(grid, cfg.rate)
    inj = np.array([grid.cell_id(*c) for c in cfg.injectors])
    inj_rates = np.full(inj.size, cfg.rate / inj.size)
    producers = []
    total_prod_cells = sum(len(cc) for _, cc in cfg.producers)
    for label, cc in cfg.producers:
        cells = np.array([grid.cell_id(*c) for c in cc])
        rates = np.full(cells.size, -cfg.rate / total_prod_cells)
        producers.append((label, cells, rates))
    return transport.WellSet(inj, inj_rates, producers)


def build_stepper(cfg, mcfg, grid, partition, kappa, wells, mobility, threads=None):
    """Construct the pressure-method handle one run uses."""
    threads = cfg.threads if threads is None else threads
    source = wells.source_density(grid)
    if mcfg.name == "reference":
        return methods.make_reference(grid, kappa, source)
    lam_basis = mobility.total(np.zeros(grid.num_cells))
    if mcfg.name == "mmsfem":
        return methods.make_mmsfem(
            partition, kappa, lam_basis, source,
            postprocess=cfg.postprocess, threads=threads,
        )
    return methods.make_mgmsfem(
        partition, kappa, lam_basis, source,
        offline=mcfg.offline, online=mcfg.online,
        oversample_layers=mcfg.oversample_layers,
        postprocess=cfg.postprocess, threads=threads,
    )
