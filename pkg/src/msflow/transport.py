"""Explicit upwind saturation transport and the IMPES time loop.

The pressure equation is solved implicitly (by whichever method the caller
hands in), the saturation update is an explicit first-order upwind finite
volume step.  Wells are cell sources/sinks with a zero-flux outer boundary;
injectors add water at the injected saturation, producers remove the local
mixture at the cell's fractional flow.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics

EPS_SAT = 1e-12


class CflViolation(RuntimeError):
    def __init__(self, cell, value):
        super().__init__(
            f"saturation {value:.6g} outside [0, 1] in cell {cell}; "
            "time step violates the CFL bound"
        )
        self.cell = cell
        self.value = value


@dataclass
class MobilityModel:
    """Corey-type two-phase mobilities.

    k_rw = S^exp_w, k_ro = (1-S)^exp_o (quadratic by default), so the total
    mobility lam(S) = k_rw/mu_w + k_ro/mu_o stays positive on [0, 1] and the
    fractional flow f(S) = lam_w / lam is monotone from 0 to 1.
    """

    mu_w: float = 1.0
    mu_o: float = 5.0
    exp_w: float = 2.0
    exp_o: float = 2.0

    def __post_init__(self):
        if self.mu_w <= 0 or self.mu_o <= 0:
            raise ValueError("viscosities must be positive")
        if self.exp_w < 1 or self.exp_o < 1:
            raise ValueError("relative permeability exponents must be >= 1")

    def water(self, s):
        return np.asarray(s) ** self.exp_w / self.mu_w

    def oil(self, s):
        return (1.0 - np.asarray(s)) ** self.exp_o / self.mu_o

    def total(self, s):
        return self.water(s) + self.oil(s)

    def frac_flow(self, s):
        lw = self.water(s)
        return lw / (lw + self.oil(s))

    def max_frac_slope(self, samples=2001):
        """max_S f'(S), sampled; used in the CFL bound."""
        s = np.linspace(0.0, 1.0, samples)
        f = self.frac_flow(s)
        return float(np.max(np.abs(np.diff(f))) / (s[1] - s[0]))


@dataclass
class WellSet:
    """Cell-based injectors and labeled producer groups.

    Rates are volumetric (volume per time), positive for injection; each
    producer group keeps its own label so water-cut curves can be reported
    per producer.
    """

    injector_cells: np.ndarray
    injector_rates: np.ndarray
    producers: list  # (label, cells, rates) with rates < 0

    def total_rates(self, num_cells):
        q = np.zeros(num_cells)
        np.add.at(q, self.injector_cells, self.injector_rates)
        for _, cells, rates in self.producers:
            np.add.at(q, cells, rates)
        return q

    def source_density(self, grid):
        return self.total_rates(grid.num_cells) / grid.cell_volume


def _column(grid, i, j):
    nx, ny, nz = grid.dims
    return grid.cell_id(i, j, np.arange(nz))


def wells_case1(grid, rate=1.0):
    """Injection down the four vertical domain edges, production in the
    center column."""
    nx, ny, nz = grid.dims
    corners = [(0, 0), (nx - 1, 0), (0, ny - 1), (nx - 1, ny - 1)]
    inj_cells = np.concatenate([_column(grid, i, j) for i, j in corners])
    inj_rates = np.full(inj_cells.size, rate / inj_cells.size)
    prod_cells = _column(grid, nx // 2, ny // 2)
    prod_rates = np.full(prod_cells.size, -rate / prod_cells.size)
    return WellSet(inj_cells, inj_rates, [("producer", prod_cells, prod_rates)])


def wells_case2(grid, rate=1.0):
    """Injectors and producers of case 1 exchanged: center column injects,
    the four vertical edges produce."""
    nx, ny, nz = grid.dims
    inj_cells = _column(grid, nx // 2, ny // 2)
    inj_rates = np.full(inj_cells.size, rate / inj_cells.size)
    corners = [(0, 0), (nx - 1, 0), (0, ny - 1), (nx - 1, ny - 1)]
    producers = []
    for n, (i, j) in enumerate(corners, start=1):
        cells = _column(grid, i, j)
        rates = np.full(cells.size, -rate / (4 * cells.size))
        producers.append((f"producer{n}", cells, rates))
    return WellSet(inj_cells, inj_rates, producers)


def advance_saturation(grid, sat, v, q_rates, dt, frac_flow, inflow_sat=1.0):
    """One explicit upwind step of the saturation equation.

    ``v`` is the face flux field (assumed conservative at the scale of the
    sources), ``q_rates`` the per-cell volumetric well rates, ``frac_flow``
    the fractional flow function.  Raises :class:`CflViolation` if the new
    saturation leaves [0, 1] beyond rounding, i.e. the step was too long.
    """
    sat = np.asarray(sat, dtype=float)
    flux = v * grid.face_area
    fc = grid.face_cells
    acc = np.zeros(grid.num_cells)

    interior = grid.interior_faces
    lo, hi = fc[interior, 0], fc[interior, 1]
    up = np.where(flux[interior] > 0, sat[lo], sat[hi])
    w = flux[interior] * frac_flow(up)
    np.subtract.at(acc, lo, w)
    np.add.at(acc, hi, w)

    bdry = grid.boundary_faces
    if bdry.size:
        f_in = frac_flow(inflow_sat)
        low_missing = bdry[fc[bdry, 0] < 0]
        c = fc[low_missing, 1]
        phi = flux[low_missing]
        w = phi * np.where(phi > 0, f_in, frac_flow(sat[c]))
        np.add.at(acc, c, w)
        high_missing = bdry[fc[bdry, 1] < 0]
        c = fc[high_missing, 0]
        phi = flux[high_missing]
        w = phi * np.where(phi > 0, frac_flow(sat[c]), f_in)
        np.subtract.at(acc, c, w)

    q_water = np.maximum(q_rates, 0.0) * inflow_sat \
        + np.minimum(q_rates, 0.0) * frac_flow(sat)
    new = sat + (dt / grid.cell_volume) * (acc + q_water)
    bad = np.flatnonzero((new < -EPS_SAT) | (new > 1.0 + EPS_SAT))
    if bad.size:
        cell = int(bad[np.argmax(np.abs(new[bad] - 0.5))])
        raise CflViolation(cell, float(new[cell]))
    return np.clip(new, 0.0, 1.0)


def cfl_dt(grid, v, mobility, q_rates=None, safety=1.0, max_dt=np.inf):
    """Largest stable step: safety * min over cells of
    cell volume / (total outflux * max_S f'(S)).

    Producer sinks count toward the outflux.  A velocity field with no
    outflow anywhere returns ``max_dt``.
    """
    if not 0 < safety <= 1:
        raise ValueError("safety factor must be in (0, 1]")
    slope = mobility.max_frac_slope() if hasattr(mobility, "max_frac_slope") \
        else float(mobility)
    flux = v * grid.face_area
    signed = grid.cell_face_signs * flux[grid.cell_faces]
    out = np.maximum(signed, 0.0).sum(axis=1)
    if q_rates is not None:
        out += np.maximum(-np.asarray(q_rates), 0.0)
    active = out > 0
    if not active.any() or slope == 0.0:
        return max_dt
    dt = safety * float(np.min(grid.cell_volume / (out[active] * slope)))
    return min(dt, max_dt)


@dataclass
class SimResult:
    method: str
    dof: int
    dt: float
    times: np.ndarray
    water_cut: dict
    saturations: list | None
    checkpoints: dict
    setup_seconds: float
    sim_seconds: float
    pressure_solves: int = 0

    def series_rows(self):
        labels = list(self.water_cut)
        header = ["method", "step", "t"] + [f"wc_{l}" for l in labels]
        rows = []
        for n, t in enumerate(self.times):
            rows.append(
                [self.method, n + 1, t] + [self.water_cut[l][n] for l in labels]
            )
        return header, rows


def impes_run(
    grid,
    stepper,
    wells,
    mobility,
    steps,
    pressure_interval=5,
    dt=None,
    cfl_safety=0.5,
    max_dt=np.inf,
    record_saturation=True,
    checkpoint_instants=(),
    initial_saturation=None,
    inflow_sat=1.0,
):
    """Alternate implicit pressure solves with explicit saturation updates.

    ``stepper`` provides ``solve_pressure(lam_per_cell) -> (v, p)`` plus
    ``method``, ``dof`` and ``setup_seconds``; the pressure (and with it the
    velocity) is refreshed every ``pressure_interval`` transport steps.  A
    fixed ``dt`` keeps time instants aligned across methods; with ``dt=None``
    the step is re-derived from the CFL bound at every refresh.
    """
    if steps < 0:
        raise ValueError("step count must be non-negative")
    sat = (
        np.zeros(grid.num_cells)
        if initial_saturation is None
        else np.asarray(initial_saturation, dtype=float).copy()
    )
    q_rates = wells.total_rates(grid.num_cells)
    labels = [label for label, _, _ in wells.producers]
    wc = {label: [] for label in labels}
    times = []
    sats = [] if record_saturation else None
    checkpoints = {}
    n_solves = 0
    v = None
    t = 0.0
    started = time.perf_counter()
    for step in range(1, steps + 1):
        if v is None or (step - 1) % pressure_interval == 0:
            lam = mobility.total(sat)
            v, _ = stepper.solve_pressure(lam)
            n_solves += 1
            if dt is None:
                step_dt = cfl_dt(grid, v, mobility, q_rates, cfl_safety, max_dt)
            else:
                step_dt = dt
        sat = advance_saturation(
            grid, sat, v, q_rates, step_dt, mobility.frac_flow, inflow_sat
        )
        t += step_dt
        times.append(t)
        for label, cells, _ in wells.producers:
            wc[label].append(metrics.water_cut(grid, v, sat, mobility, cells))
        if sats is not None:
            sats.append(sat.copy())
        if step in checkpoint_instants:
            checkpoints[step] = sat.copy()
    sim_seconds = time.perf_counter() - started
    return SimResult(
        method=getattr(stepper, "method", "unknown"),
        dof=getattr(stepper, "dof", 0),
        dt=float(step_dt) if steps else 0.0,
        times=np.array(times),
        water_cut={k: np.array(vv) for k, vv in wc.items()},
        saturations=sats,
        checkpoints=checkpoints,
        setup_seconds=getattr(stepper, "setup_seconds", 0.0),
        sim_seconds=sim_seconds,
        pressure_solves=n_solves,
    )
