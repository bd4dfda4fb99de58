"""Marking strategies and the adapt step: indicators -> flags -> new mesh.

Two strategies:

* "cells": exactly ceil(refine_fraction * N) cells with the largest
  indicators are refined and ceil(coarsen_fraction * N) with the smallest
  are coarsened; ties break towards the lower cell index.
* "error": cells are marked from the extremes inward until the marked
  (squared, by default) indicator mass reaches the requested fraction of
  the total -- the minimal such prefix.

Level bounds are applied after marking; cells already at max_level are
not refined, cells at min_level not coarsened.  A cell picked by both
sets keeps the refine flag.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import mesh as meshmod


@dataclass
class MarkingPolicy:
    strategy: str = "cells"        # "cells" | "error"
    refine_fraction: float = 0.10
    coarsen_fraction: float = 0.05
    min_level: int = 0
    max_level: int = 30
    squared: bool = True           # "error" strategy: use squared indicators

    def __post_init__(self):
        if self.strategy not in ("cells", "error"):
            raise ValueError(f"unknown marking strategy: {self.strategy}")


def mark(indicator, mesh, policy):
    """Convert per-cell indicator values into refine/coarsen flags."""
    ind = np.asarray(indicator, dtype=float)
    n = mesh.n_cells
    refine = np.zeros(n, dtype=bool)
    coarsen = np.zeros(n, dtype=bool)

    if policy.strategy == "cells":
        n_ref = math.ceil(policy.refine_fraction * n)
        n_coa = math.ceil(policy.coarsen_fraction * n)
        desc = np.argsort(-ind, kind="stable")   # ties: ascending cell index
        asc = np.argsort(ind, kind="stable")
        refine[desc[:n_ref]] = True
        coarsen[asc[:n_coa]] = True
    else:
        e = ind ** 2 if policy.squared else ind
        total = float(e.sum())
        if total > 0:
            desc = np.argsort(-e, kind="stable")
            cum = np.cumsum(e[desc])
            n_ref = int(np.searchsorted(cum, policy.refine_fraction * total) + 1)
            refine[desc[:n_ref]] = True
            asc = np.argsort(e, kind="stable")
            cum = np.cumsum(e[asc])
            n_coa = int(np.searchsorted(cum, policy.coarsen_fraction * total) + 1)
            coarsen[asc[:n_coa]] = True

    coarsen &= ~refine
    refine &= mesh.level < policy.max_level
    coarsen &= mesh.level > policy.min_level
    return meshmod.MarkFlags(refine, coarsen)


def adapt_step(mesh, indicator, policy):
    """Mark and execute: returns (new_mesh, transfer_map, flags)."""
    flags = mark(indicator, mesh, policy)
    new_mesh, tmap = meshmod.execute_adaptation(mesh, flags)
    return new_mesh, tmap, flags
