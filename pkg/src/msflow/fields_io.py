"""Permeability ingestion, synthetic field generators, and output writers.

Cell ordering in every file format is x-fastest, then y, then z, matching
:class:`msflow.mesh.FineGrid` cell numbering.
"""

import csv
import io
import re

import numpy as np


class FieldFormatError(ValueError):
    """Raised on malformed permeability input, with the byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def _token_offset(text, index):
    """Byte offset of the index-th whitespace-separated token."""
    for n, m in enumerate(re.finditer(rb"\S+", text)):
        if n == index:
            return m.start()
    return len(text)


def load_spe10(source, dims, layers=None):
    """Read a single-channel SPE10-style permeability stream.

    ``source`` is a path, file object, or bytes holding whitespace-separated
    positive decimals, one per cell, x-fastest.  ``dims`` gives the full file
    extent (nx, ny, nz_file); ``layers = (lo, hi)`` selects the inclusive
    z-layer range, e.g. (5, 84) keeps the last 80 layers of an 85-layer file.
    Returns a flat array of nx*ny*(hi-lo+1) values.
    """
    if isinstance(source, bytes):
        text = source
    elif isinstance(source, str):
        with open(source, "rb") as fh:
            text = fh.read()
    else:
        text = source.read()
        if isinstance(text, str):
            text = text.encode()
    nx, ny, nz = (int(d) for d in dims)
    expected = nx * ny * nz
    tokens = text.split()
    if len(tokens) != expected:
        raise FieldFormatError(
            f"expected {expected} values for a {nx}x{ny}x{nz} grid, "
            f"got {len(tokens)}",
            offset=_token_offset(text, min(len(tokens), expected)),
        )
    try:
        values = np.array(tokens, dtype=float)
    except ValueError:
        for idx, tok in enumerate(tokens):
            try:
                float(tok)
            except ValueError:
                raise FieldFormatError(
                    f"malformed number {tok.decode(errors='replace')!r}",
                    offset=_token_offset(text, idx),
                ) from None
        raise
    bad = np.flatnonzero(~(values > 0) | ~np.isfinite(values))
    if bad.size:
        idx = int(bad[0])
        raise FieldFormatError(
            f"non-positive permeability value {values[idx]!r}",
            offset=_token_offset(text, idx),
        )
    if layers is not None:
        lo, hi = (int(l) for l in layers)
        if not 0 <= lo <= hi < nz:
            raise FieldFormatError(
                f"layer range ({lo}, {hi}) outside the {nz} layers of the file"
            )
        values = values.reshape(nz, ny * nx)[lo : hi + 1].ravel()
    return values


def gen_synthetic(kind, dims, contrast=1.0, seed=0):
    """Deterministic synthetic permeability, flat x-fastest array.

    kinds: ``uniform`` (all ones), ``layered`` (two populations, value 1 and
    ``contrast``, assigned per layer), ``channel`` (winding high-permeability
    channels of value ``contrast`` through a mildly heterogeneous background).
    For the latter two the max/min ratio equals ``contrast`` exactly.
    """
    nx, ny, nz = (int(d) for d in dims)
    if contrast < 1.0:
        raise ValueError("contrast must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "uniform" or contrast == 1.0:
        if kind not in ("uniform", "layered", "channel"):
            raise ValueError(f"unknown synthetic field kind {kind!r}")
        return np.ones(nx * ny * nz)
    if kind == "layered":
        axis_sizes = {2: nz, 1: ny, 0: nx}
        axis = next((a for a in (2, 1, 0) if axis_sizes[a] >= 2), None)
        if axis is None:
            raise ValueError("layered field needs an axis with >= 2 cells")
        n_layers = axis_sizes[axis]
        pattern = rng.integers(0, 2, size=n_layers).astype(bool)
        pattern[0], pattern[1] = False, True
        layer_vals = np.where(pattern, contrast, 1.0)
        field = np.ones((nz, ny, nx))
        sl = [slice(None)] * 3
        for layer in range(n_layers):
            sl[2 - axis] = layer
            field[tuple(sl)] = layer_vals[layer]
        return field.ravel()
    if kind == "channel":
        # fluvial-style texture: winding high-permeability channels through
        # a log-uniform background spanning [1, sqrt(contrast)]
        n_cells = nx * ny * nz
        if n_cells > 1:
            noise = rng.standard_normal(n_cells)
            lo, hi = noise.min(), noise.max()
            bg = np.exp((noise - lo) / (hi - lo) * (0.5 * np.log(contrast)))
        else:
            bg = np.ones(1)
        field = bg.reshape(nz, ny, nx)
        n_channels = max(1, (ny * nz) // 48)
        for _ in range(n_channels):
            cy = int(rng.integers(0, ny))
            cz = int(rng.integers(0, nz))
            radius = int(rng.integers(0, 2))
            for i in range(nx):
                cy = int(np.clip(cy + rng.integers(-1, 2), 0, ny - 1))
                cz = int(np.clip(cz + rng.integers(-1, 2), 0, nz - 1))
                ylo, yhi = max(0, cy - radius), min(ny, cy + radius + 1)
                zlo, zhi = max(0, cz - radius), min(nz, cz + radius + 1)
                field[zlo:zhi, ylo:yhi, i] = contrast
        flat = field.ravel()
        if not (flat == contrast).any():
            flat[np.argmax(flat)] = contrast
        if not (flat == 1.0).any():
            flat[np.argmin(flat)] = 1.0
        return flat
    raise ValueError(f"unknown synthetic field kind {kind!r}")


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_series(path, rows, header):
    """Write a CSV time series: one header row, one row per instant.
    Floats are written with full round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_series(path):
    """Read back a CSV written by :func:`write_series`.  Numeric cells are
    parsed to float, the rest kept as strings."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for raw in reader:
            row = []
            for cell in raw:
                try:
                    row.append(float(cell))
                except ValueError:
                    row.append(cell)
            rows.append(tuple(row))
    return header, rows


def write_volume(path, values, dims, spacing, name="field", location="cell"):
    """Write a legacy structured-points volume file (ASCII, double precision).

    ``location`` is ``cell`` (one value per cell, CELL_DATA) or ``point``
    (one value per grid vertex, POINT_DATA); values run x-fastest.
    """
    nx, ny, nz = (int(d) for d in dims)
    values = np.asarray(values, dtype=float).ravel()
    if location == "cell":
        count = nx * ny * nz
    elif location == "point":
        count = (nx + 1) * (ny + 1) * (nz + 1)
    else:
        raise ValueError(f"unknown data location {location!r}")
    if values.size != count:
        raise ValueError(
            f"{location} data for a {nx}x{ny}x{nz} grid needs {count} values, "
            f"got {values.size}"
        )
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write(f"{name}\n")
    buf.write("ASCII\n")
    buf.write("DATASET STRUCTURED_POINTS\n")
    buf.write(f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}\n")
    buf.write("ORIGIN 0 0 0\n")
    sx, sy, sz = (float(s) for s in spacing)
    buf.write(f"SPACING {sx!r} {sy!r} {sz!r}\n")
    buf.write(f"{'CELL_DATA' if location == 'cell' else 'POINT_DATA'} {count}\n")
    buf.write(f"SCALARS {name} double 1\n")
    buf.write("LOOKUP_TABLE default\n")
    for start in range(0, values.size, 6):
        buf.write(" ".join(repr(float(v)) for v in values[start : start + 6]))
        buf.write("\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_volume(path):
    """Read back a structured-points file written by :func:`write_volume`.
    Returns (values, dims, spacing, name, location)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    name = lines[1]
    point_dims = tuple(int(t) for t in lines[4].split()[1:])
    spacing = tuple(float(t) for t in lines[6].split()[1:])
    loc_line = lines[7].split()
    location = "cell" if loc_line[0] == "CELL_DATA" else "point"
    count = int(loc_line[1])
    values = np.array(" ".join(lines[10:]).split(), dtype=float)
    if values.size != count:
        raise ValueError(f"volume file holds {values.size} values, header says {count}")
    dims = tuple(d - 1 for d in point_dims)
    return values, dims, spacing, name, location
