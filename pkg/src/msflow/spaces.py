"""Coarse velocity spaces: ordered basis functions as fine-face coefficient
columns, plus an optional on-disk cache."""

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


def parallel_map(fn, items, threads=1):
    """Order-preserving map, optionally over a thread pool.  Results are
    identical regardless of thread count; items must not share mutable
    state."""
    if threads <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class MultiscaleSpace:
    """Ordered coarse velocity basis functions.

    ``coeffs`` stacks one fine-face coefficient column per basis function;
    ``edge_ids``/``kinds`` record which coarse edge each column belongs to
    and how it was built (``limited``, ``offline`` or ``online``).  Spaces
    are immutable; enrichment returns a new space whose leading columns are
    the old ones (nestedness).
    """

    partition: object
    edge_ids: np.ndarray
    kinds: list
    coeffs: sparse.csc_matrix
    generation: int = 0
    fallback_edges: tuple = ()

    @property
    def dim(self):
        return self.coeffs.shape[1]

    def per_edge_counts(self):
        counts = np.zeros(self.partition.num_edges, dtype=int)
        np.add.at(counts, self.edge_ids, 1)
        return counts

    def extended(self, edge_ids, kinds, columns):
        """New space with extra columns appended (next generation)."""
        if columns.shape[1] == 0:
            return MultiscaleSpace(
                self.partition,
                self.edge_ids,
                list(self.kinds),
                self.coeffs,
                self.generation + 1,
                self.fallback_edges,
            )
        return MultiscaleSpace(
            self.partition,
            np.concatenate([self.edge_ids, edge_ids]),
            list(self.kinds) + list(kinds),
            sparse.hstack([self.coeffs, columns], format="csc"),
            self.generation + 1,
            self.fallback_edges,
        )


def columns_from_coo(num_faces, rows, cols, vals, ncols):
    return sparse.csc_matrix(
        (vals, (rows, cols)), shape=(num_faces, ncols)
    )


def cache_key(kappa, lam, factors, tag):
    """Content hash identifying a basis build: field, basis mobility,
    coarsening and a scenario token."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(kappa, dtype=float).tobytes())
    h.update(np.ascontiguousarray(lam, dtype=float).tobytes())
    h.update(repr(tuple(factors)).encode())
    h.update(str(tag).encode())
    return h.hexdigest()


def save_space(path, space, key=""):
    coo = space.coeffs.tocoo()
    np.savez_compressed(
        path,
        key=np.array(key),
        edge_ids=space.edge_ids,
        kinds=np.array(space.kinds),
        generation=np.array(space.generation),
        fallback=np.array(space.fallback_edges, dtype=np.int64),
        shape=np.array(coo.shape),
        row=coo.row,
        col=coo.col,
        data=coo.data,
    )


def load_space(path, partition, key=""):
    """Load a cached space; returns None when the key does not match."""
    with np.load(path, allow_pickle=False) as z:
        if key and str(z["key"]) != key:
            return None
        coeffs = sparse.csc_matrix(
            (z["data"], (z["row"], z["col"])), shape=tuple(z["shape"])
        )
        return MultiscaleSpace(
            partition,
            z["edge_ids"],
            [str(k) for k in z["kinds"]],
            coeffs,
            int(z["generation"]),
            tuple(int(e) for e in z["fallback"]),
        )
