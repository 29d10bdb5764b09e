"""The hard objective family and its parameter schedule.

F(x) = (1/(sqrt(d)*L)) * max{ L*||A x||_inf - 1,  max_i (<v_i, x> - i*gamma) }

with A a uniform (d/2) x d sign matrix and v_1..v_N uniform over the scaled
hypercube (1/sqrt(d))*{-1,1}^d. The outer 1/(sqrt(d)*L) factor is applied
after the inner max so term comparison happens on well-scaled quantities.

Two parameter profiles exist: "paper" applies the asymptotic formulas
verbatim (the scaling factor exp(log^5 d) overflows to inf beyond tiny d;
such instances cannot be evaluated), and "desk" substitutes finite values
that preserve every structural property used downstream.
"""

import io
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .seeding import rng_from, sample_scaled_sign_vectors, sample_sign_matrix

NORM_TOL = 1e-12


class InstanceError(Exception):
    pass


class NonEvenDimension(InstanceError):
    pass


class DeltaOutOfRange(InstanceError):
    pass


class OverrideViolatesInvariant(InstanceError):
    pass


class NormTooLarge(InstanceError):
    pass


@dataclass(frozen=True)
class Params:
    """Full parameter pack: the function family plus the game-side constants.

    k_msg and n_rows stay None until a memory budget / query budget binds them
    (k = S/d and n = 40T/N only make sense relative to an algorithm).
    """

    d: int
    delta: float
    gamma: float
    n_terms: int
    l_scale: float
    s_corr: float
    xi: float
    xi_prime: float
    eps: float
    log_base: float = 2.0
    k_msg: Optional[int] = None
    n_rows: Optional[int] = None

    def __post_init__(self):
        if self.d < 4 or self.d % 2 != 0:
            raise NonEvenDimension(f"d must be even and >= 4, got {self.d}")
        if not (0.0 < self.delta < 1.0):
            raise DeltaOutOfRange(f"delta must lie in (0,1), got {self.delta}")
        checks = [
            (self.gamma > 0.0, "gamma must be positive"),
            (self.n_terms >= 2, "need at least two staircase terms"),
            (self.l_scale >= 1.0, "scaling factor must be >= 1"),
            (self.eps > 0.0, "eps must be positive"),
            (self.xi > 0.0, "xi must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise OverrideViolatesInvariant(msg)
        if math.isfinite(self.xi_prime) and not math.isclose(
                self.xi_prime, math.sqrt(self.d) * self.xi, rel_tol=1e-12):
            raise OverrideViolatesInvariant("xi_prime must equal sqrt(d)*xi")

    @property
    def corr_threshold(self) -> float:
        """Correlation-time threshold gamma/4."""
        return self.gamma / 4.0


def _log(d: int, base: float) -> float:
    return math.log(d) / math.log(base)


_DESK_OVERRIDE_KEYS = {"l_scale", "gamma", "n_terms", "s_corr", "k_msg", "n_rows"}


def derive_params(d: int, delta: float, profile: str = "desk", *,
                  log_base: float = 2.0, overrides: Optional[dict] = None,
                  mem_bits: Optional[int] = None,
                  query_budget: Optional[int] = None) -> Params:
    """Populate a Params pack for the given profile.

    "paper": gamma = log^2 d / d^(delta/4), N = d^(delta/6)/log^4 d rounded to
    >= 2, L = exp(log^5 d) (inf past tiny d), s = d^(1-delta/2) log^2 d,
    k = mem_bits/d and n = 40*query_budget/N when those budgets are given.

    "desk": L defaults to d^3; gamma defaults to a value small enough that the
    staircase depth N*gamma stays below the certified descent depth
    1/(sqrt(N) log^2 d); s defaults to d*gamma^2/16 so the game's correlation
    threshold sqrt(s/d) coincides with gamma/4. All desk fields accept
    overrides.
    """
    if d < 4 or d % 2 != 0:
        raise NonEvenDimension(f"d must be even and >= 4, got {d}")
    if not (0.0 < delta < 1.0):
        raise DeltaOutOfRange(f"delta must lie in (0,1), got {delta}")
    overrides = dict(overrides or {})
    unknown = set(overrides) - _DESK_OVERRIDE_KEYS
    if unknown:
        raise OverrideViolatesInvariant(f"unknown override keys: {sorted(unknown)}")

    ld = _log(d, log_base)
    n_formula = max(2, round(d ** (delta / 6.0) / ld ** 4))

    if profile == "paper":
        if overrides:
            raise OverrideViolatesInvariant("paper profile accepts no overrides")
        try:
            l_scale = math.exp(ld ** 5)
        except OverflowError:
            l_scale = math.inf
        gamma = ld ** 2 / d ** (delta / 4.0)
        n_terms = n_formula
        s_corr = d ** (1.0 - delta / 2.0) * ld ** 2
    elif profile == "desk":
        l_scale = float(overrides.get("l_scale", float(d) ** 3))
        n_terms = int(overrides.get("n_terms", n_formula))
        gamma = float(overrides.get(
            "gamma", 1.0 / (2.0 * n_terms * math.sqrt(n_terms) * ld ** 2)))
        s_corr = float(overrides.get("s_corr", d * gamma ** 2 / 16.0))
    else:
        raise OverrideViolatesInvariant(f"unknown profile {profile!r}")

    k_msg = overrides.get("k_msg")
    n_rows = overrides.get("n_rows")
    if mem_bits is not None:
        if mem_bits % d != 0:
            raise OverrideViolatesInvariant("memory bits must be divisible by d")
        k_msg = mem_bits // d
    if query_budget is not None:
        n_rows = max(1, round(40.0 * query_budget / n_terms))
    if profile == "desk" and n_rows is None and "n_rows" not in overrides:
        n_rows = d

    xi = 2.0 / l_scale
    return Params(d=d, delta=delta, gamma=gamma, n_terms=n_terms,
                  l_scale=l_scale, s_corr=s_corr, xi=xi,
                  xi_prime=math.sqrt(d) * xi, eps=1.0 / (d * d * l_scale),
                  log_base=log_base,
                  k_msg=None if k_msg is None else int(k_msg),
                  n_rows=None if n_rows is None else int(n_rows))


@dataclass(frozen=True)
class Provenance:
    """Which term attained the inner max. Indices are 1-based as reported."""

    kind: str  # "row" or "nem"
    index: int
    sign: int  # +1/-1 for rows, 0 for staircase terms

    @classmethod
    def row(cls, j: int, sign: float) -> "Provenance":
        return cls("row", j, 1 if sign >= 0 else -1)

    @classmethod
    def nem(cls, i: int) -> "Provenance":
        return cls("nem", i, 0)

    def __str__(self):
        if self.kind == "row":
            return f"Row({self.index},{'+' if self.sign >= 0 else '-'})"
        return f"Nem({self.index})"


@dataclass(frozen=True)
class EvalResult:
    value: float
    achieving_term: Provenance
    raw_terms: Optional[np.ndarray] = None


@dataclass
class HardInstance:
    """Sampled (A, v_1..v_N) pair; immutable after construction."""

    params: Params
    a_matrix: np.ndarray
    nemirovski_vectors: np.ndarray
    seed: Optional[int] = None
    _fingerprint: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        d = self.params.d
        if self.a_matrix.shape != (d // 2, d):
            raise InstanceError("sign matrix has wrong shape")
        if self.nemirovski_vectors.shape != (self.params.n_terms, d):
            raise InstanceError("staircase vectors have wrong shape")
        self.a_matrix = np.ascontiguousarray(self.a_matrix, dtype=np.float64)
        self.nemirovski_vectors = np.ascontiguousarray(
            self.nemirovski_vectors, dtype=np.float64)
        self.a_matrix.flags.writeable = False
        self.nemirovski_vectors.flags.writeable = False

    @property
    def fingerprint(self) -> str:
        if not self._fingerprint:
            import hashlib
            h = hashlib.sha256()
            h.update(repr(self.params).encode())
            h.update(self.a_matrix.tobytes())
            h.update(self.nemirovski_vectors.tobytes())
            self._fingerprint = h.hexdigest()[:16]
        return self._fingerprint


def sample_instance(params: Params, seed: int) -> HardInstance:
    """Draw A and v_1..v_N i.i.d. uniform from a Philox stream keyed by seed."""
    rng = rng_from(seed, "instance")
    d = params.d
    a = sample_sign_matrix(rng, d // 2, d)
    v = sample_scaled_sign_vectors(rng, params.n_terms, d)
    return HardInstance(params=params, a_matrix=a, nemirovski_vectors=v, seed=seed)


def check_query_norm(x: np.ndarray, d: int) -> None:
    if x.shape != (d,):
        raise NormTooLarge(f"query must be a {d}-vector")
    nrm = float(np.linalg.norm(x))
    if nrm > 1.0 + NORM_TOL:
        raise NormTooLarge(f"query norm {nrm} exceeds unit ball tolerance")


def inner_max(inst: HardInstance, x: np.ndarray):
    """Shared inner-max routine used by both evaluation and the oracle.

    Returns (inner, provenance, row_absmax). Row terms win exact ties, with
    the smallest row index; sign is + at a zero inner product.
    """
    p = inst.params
    if not math.isfinite(p.l_scale):
        raise OverrideViolatesInvariant(
            "scaling factor is not finite; paper-profile instances at this d "
            "cannot be evaluated")
    j0, absd, sign = _kernels.row_argmax(inst.a_matrix, x)
    row_inner = p.l_scale * absd - 1.0
    i0, nem_inner = _kernels.nem_argmax(inst.nemirovski_vectors, x, p.gamma)
    if row_inner >= nem_inner:
        return row_inner, Provenance.row(j0 + 1, sign), absd
    return nem_inner, Provenance.nem(i0 + 1), absd


def eval_f(inst: HardInstance, x: np.ndarray, keep_terms: bool = False) -> EvalResult:
    """Evaluate F at x (||x||_2 <= 1 + 1e-12)."""
    p = inst.params
    check_query_norm(x, p.d)
    inner, prov, _ = inner_max(inst, x)
    value = inner / (math.sqrt(p.d) * p.l_scale)
    raw = None
    if keep_terms:
        dots = inst.a_matrix @ x
        nem = inst.nemirovski_vectors @ x - p.gamma * np.arange(1, p.n_terms + 1)
        raw = np.concatenate([p.l_scale * dots - 1.0, -p.l_scale * dots - 1.0, nem])
    return EvalResult(value=value, achieving_term=prov, raw_terms=raw)


def batch_values(inst: HardInstance, xs: np.ndarray) -> np.ndarray:
    """Vectorized F over the rows of xs (norms assumed already feasible)."""
    p = inst.params
    row_inf = np.abs(inst.a_matrix @ xs.T).max(axis=0)
    nem = (inst.nemirovski_vectors @ xs.T
           - p.gamma * np.arange(1, p.n_terms + 1)[:, None]).max(axis=0)
    return np.maximum(p.l_scale * row_inf - 1.0, nem) / (math.sqrt(p.d) * p.l_scale)


# ---------------------------------------------------------------------------
# serialization: versioned binary container plus a text export for micro sizes

MAGIC = b"MTIN1"
_HEADER_FMT = "<q d d q d d d d d d q q q"
# d, delta, gamma, n_terms, l_scale, s_corr, xi, xi_prime, eps, log_base,
# k_msg, n_rows, seed


def _pack_header(p: Params, seed: Optional[int]) -> bytes:
    return struct.pack(
        _HEADER_FMT,
        p.d, p.delta, p.gamma, p.n_terms, p.l_scale, p.s_corr, p.xi,
        p.xi_prime, p.eps, p.log_base,
        -1 if p.k_msg is None else p.k_msg,
        -1 if p.n_rows is None else p.n_rows,
        -1 if seed is None else seed)


def _unpack_header(raw: bytes):
    (d, delta, gamma, n_terms, l_scale, s_corr, xi, xi_prime, eps, log_base,
     k_msg, n_rows, seed) = struct.unpack(_HEADER_FMT, raw)
    params = Params(d=d, delta=delta, gamma=gamma, n_terms=n_terms,
                    l_scale=l_scale, s_corr=s_corr, xi=xi, xi_prime=xi_prime,
                    eps=eps, log_base=log_base,
                    k_msg=None if k_msg < 0 else k_msg,
                    n_rows=None if n_rows < 0 else n_rows)
    return params, (None if seed < 0 else seed)


_HEADER_SIZE = struct.calcsize(_HEADER_FMT)


def save_instance(inst: HardInstance, path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_pack_header(inst.params, inst.seed))
    buf.write(np.packbits((inst.a_matrix > 0).astype(np.uint8)).tobytes())
    buf.write(np.packbits((inst.nemirovski_vectors > 0).astype(np.uint8)).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_instance(path) -> HardInstance:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:len(MAGIC)] != MAGIC:
        raise InstanceError("bad magic bytes; not an instance file")
    off = len(MAGIC)
    params, seed = _unpack_header(raw[off:off + _HEADER_SIZE])
    off += _HEADER_SIZE
    d = params.d
    n_a_bits = (d // 2) * d
    n_a_bytes = (n_a_bits + 7) // 8
    a_bits = np.unpackbits(np.frombuffer(raw[off:off + n_a_bytes], dtype=np.uint8),
                           count=n_a_bits)
    off += n_a_bytes
    n_v_bits = params.n_terms * d
    n_v_bytes = (n_v_bits + 7) // 8
    v_bits = np.unpackbits(np.frombuffer(raw[off:off + n_v_bytes], dtype=np.uint8),
                           count=n_v_bits)
    a = (a_bits.astype(np.float64) * 2 - 1).reshape(d // 2, d)
    v = (v_bits.astype(np.float64) * 2 - 1).reshape(params.n_terms, d) / math.sqrt(d)
    return HardInstance(params=params, a_matrix=a, nemirovski_vectors=v, seed=seed)


def instance_to_text(inst: HardInstance) -> str:
    """Human-readable export, intended for micro instances only."""
    p = inst.params
    lines = [
        "mqlab instance",
        f"d={p.d} delta={p.delta!r} gamma={p.gamma!r} n_terms={p.n_terms}",
        f"l_scale={p.l_scale!r} s_corr={p.s_corr!r} xi={p.xi!r} eps={p.eps!r}",
        f"log_base={p.log_base!r} seed={inst.seed}",
        "sign matrix rows (+/-):",
    ]
    for row in inst.a_matrix:
        lines.append("  " + "".join("+" if v > 0 else "-" for v in row))
    lines.append("staircase vectors (signs of sqrt(d)*v_i):")
    for row in inst.nemirovski_vectors:
        lines.append("  " + "".join("+" if v > 0 else "-" for v in row))
    return "\n".join(lines) + "\n"
