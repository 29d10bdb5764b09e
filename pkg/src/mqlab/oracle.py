"""Exact first-order oracle with deterministic tie-breaking.

On a query x the oracle reports F(x) together with the subgradient of the
achieving term: the signed row a_j/sqrt(d) (smallest j, sign taken from
<a_j, x>, + at an exact zero) when a signed row term attains the inner max,
otherwise v_i/(sqrt(d)*L) for the smallest maximizing staircase index. Ties
between row and staircase terms resolve toward rows. Value and tie detection
share one code path with eval_f, so replays are bit-stable.
"""

import math
from dataclasses import dataclass

import numpy as np

from .instance import (EvalResult, HardInstance, Provenance, batch_values,
                       check_query_norm, eval_f, inner_max)
from .seeding import rng_from

SUBGRAD_TOL = 1e-9


@dataclass(frozen=True)
class OracleAnswer:
    value: float
    subgradient: np.ndarray
    provenance: Provenance
    row_absmax: float  # ||A x||_inf at the query; diagnostic, not serialized


def first_order(inst: HardInstance, x: np.ndarray) -> OracleAnswer:
    p = inst.params
    check_query_norm(x, p.d)
    inner, prov, row_absmax = inner_max(inst, x)
    sqd = math.sqrt(p.d)
    if prov.kind == "row":
        g = (prov.sign / sqd) * inst.a_matrix[prov.index - 1]
    else:
        g = inst.nemirovski_vectors[prov.index - 1] / (sqd * p.l_scale)
    return OracleAnswer(value=inner / (sqd * p.l_scale), subgradient=g,
                        provenance=prov, row_absmax=row_absmax)


def sample_ball(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """Uniform points in the unit ball (gaussian direction, radial cdf)."""
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(count) ** (1.0 / d)
    return g * r[:, None]


def verify_subgradient(inst: HardInstance, x: np.ndarray, ans: OracleAnswer,
                       probes: int, seed: int) -> dict:
    """Probe the subgradient inequality F(y) >= F(x) + <g, y-x> - tol.

    Returns {"violations": count, "worst_gap": max signed slack}, where a
    positive gap means the affine minorant overshot F(y). probes=0 yields the
    -inf sentinel.
    """
    if probes <= 0:
        return {"violations": 0, "worst_gap": -math.inf}
    rng = rng_from(seed, "subgrad-probe")
    ys = sample_ball(rng, probes, inst.params.d)
    fy = batch_values(inst, ys)
    lin = ans.value + (ys - x) @ ans.subgradient
    gaps = lin - fy
    return {"violations": int(np.sum(gaps > SUBGRAD_TOL)),
            "worst_gap": float(np.max(gaps))}
