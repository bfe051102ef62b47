"""Comparison quantities: relative saturation error and water-cut."""

import warnings

import numpy as np


def saturation_error(ref_times, ref_sats, test_times, test_sats, cell_volume=1.0):
    """Per-instant relative L2 saturation error and its average.

    Both series must be sampled at identical time instants on the same grid.
    Instants where the reference saturation is identically zero cannot be
    normalized and are skipped with a warning.  Returns (per-instant errors,
    average, skipped instant indices).
    """
    ref_times = np.asarray(ref_times, dtype=float)
    test_times = np.asarray(test_times, dtype=float)
    if ref_times.shape != test_times.shape or not np.allclose(
        ref_times, test_times, rtol=1e-12, atol=0.0
    ):
        raise ValueError("saturation series are not aligned on the same instants")
    if len(ref_sats) != len(test_sats) or len(ref_sats) != ref_times.size:
        raise ValueError("series length does not match the instant count")
    per_instant = np.full(ref_times.size, np.nan)
    skipped = []
    for n, (s_ref, s_test) in enumerate(zip(ref_sats, test_sats)):
        s_ref = np.asarray(s_ref)
        s_test = np.asarray(s_test)
        denom = float(np.sum(s_ref * s_ref) * cell_volume)
        if denom == 0.0:
            skipped.append(n)
            continue
        num = float(np.sum((s_ref - s_test) ** 2) * cell_volume)
        per_instant[n] = np.sqrt(num / denom)
    if skipped:
        warnings.warn(
            f"skipped {len(skipped)} instants with zero reference saturation"
        )
    kept = np.isfinite(per_instant)
    if not kept.any():
        raise ValueError("no instants left to compare")
    average = float(per_instant[kept].mean())
    return per_instant, average, skipped


def water_cut(grid, v, sat, mobility, producer_cells):
    """Fraction of water in the fluid produced by the given sink cells.

    Production rates come from the divergence of the velocity field, so any
    conservative field can be queried directly; the water part weights each
    cell's rate by the fractional flow at that cell's saturation.
    """
    producer_cells = np.asarray(producer_cells)
    b = grid.divergence_matrix()
    out = np.zeros(producer_cells.size)
    for n, c in enumerate(producer_cells):
        lo = b.indptr[c]
        hi = b.indptr[c + 1]
        out[n] = b.data[lo:hi] @ v[b.indices[lo:hi]]
    q_t = -float(out.sum())
    if q_t <= 0.0:
        raise ValueError(
            f"water-cut undefined: net production flux {q_t:.3e} is not positive"
        )
    q_w = -float(out @ mobility.frac_flow(sat[producer_cells]))
    return q_w / q_t
