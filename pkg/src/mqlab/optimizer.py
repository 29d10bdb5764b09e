"""Memory-constrained optimizers as bit-string state machines.

An algorithm here is four pure functions over an explicit bit string: init a
state of declared size S, pick a query from the state, fold an oracle answer
back into the state, and read the output point off the state. The harness
enforces that no other channel exists: it re-checks the state length every
round and the unit-ball constraint on every query. Float-valued state is
counted at 64 bits per coordinate.

By convention the output point equals the last query; if an algorithm's
output map disagrees with its query map, the harness appends one extra oracle
round at the output point.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import _kernels
from .instance import HardInstance, NormTooLarge, check_query_norm
from .oracle import OracleAnswer, first_order


class OptimizerError(Exception):
    pass


class StateSizeViolation(OptimizerError):
    def __init__(self, round_idx: int, got: int, want: int):
        super().__init__(f"round {round_idx}: state is {got} bits, declared {want}")
        self.round_idx = round_idx


class QueryOutOfBall(OptimizerError):
    def __init__(self, round_idx: int, norm: float):
        super().__init__(f"round {round_idx}: query norm {norm} leaves the unit ball")
        self.round_idx = round_idx


class DegenerateEllipsoid(OptimizerError):
    pass


@dataclass(frozen=True)
class MemoryState:
    """Explicit bit string; the only state carried between rounds.

    Bits are stored packed (8 per byte) with the logical length kept
    separately, so float-vector states round-trip through raw IEEE-754 bytes.
    """

    data: bytes
    bit_length: int

    def __post_init__(self):
        if len(self.data) * 8 < self.bit_length:
            raise OptimizerError("bit_length exceeds stored bytes")

    @classmethod
    def from_floats(cls, arr: np.ndarray) -> "MemoryState":
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        return cls(data=arr.tobytes(), bit_length=arr.size * 64)

    def to_floats(self, count: int) -> np.ndarray:
        if count * 64 != self.bit_length:
            raise OptimizerError(
                f"state holds {self.bit_length} bits, wanted {count} floats")
        return np.frombuffer(self.data, dtype=np.float64, count=count).copy()

    @classmethod
    def zeros(cls, bit_length: int) -> "MemoryState":
        return cls(data=bytes((bit_length + 7) // 8), bit_length=bit_length)


class Algorithm:
    """Behavioral interface; subclasses must not keep state outside MemoryState."""

    name = "algorithm"
    declared_size: int

    def init(self, seed: int) -> MemoryState:
        raise NotImplementedError

    def query(self, state: MemoryState) -> np.ndarray:
        raise NotImplementedError

    def update(self, state: MemoryState, value: float,
               subgradient: np.ndarray) -> MemoryState:
        raise NotImplementedError

    def output(self, state: MemoryState) -> np.ndarray:
        return self.query(state)


Round = Tuple[np.ndarray, OracleAnswer]


@dataclass
class Transcript:
    instance_fingerprint: str
    t_budget: int
    rounds: List[Round] = field(default_factory=list)
    state_sizes: List[int] = field(default_factory=list)
    final_output: Optional[np.ndarray] = None
    stopped_at: Optional[int] = None
    state_at_stop: Optional[MemoryState] = None
    final_state: Optional[MemoryState] = None

    def queries(self) -> np.ndarray:
        return np.stack([x for x, _ in self.rounds])

    def values(self) -> np.ndarray:
        return np.array([a.value for _, a in self.rounds])

    def write_jsonl(self, path, header: Optional[dict] = None) -> None:
        with open(path, "w") as fh:
            head = {"record": "header",
                    "instance": self.instance_fingerprint,
                    "t_budget": self.t_budget}
            if header:
                head.update(header)
            fh.write(json.dumps(head, sort_keys=True) + "\n")
            for t, ((x, ans), bits) in enumerate(zip(self.rounds, self.state_sizes), 1):
                fh.write(json.dumps({
                    "t": t, "x": [float(v) for v in x],
                    "value": ans.value, "provenance": str(ans.provenance),
                    "state_bits": bits}) + "\n")
            if self.final_output is not None:
                fh.write(json.dumps({"record": "output",
                                     "x": [float(v) for v in self.final_output]}) + "\n")


StopCallback = Callable[[int, np.ndarray, OracleAnswer], bool]


def run(alg: Algorithm, inst: HardInstance, t_budget: int, seed: int,
        stop_before_update: Optional[StopCallback] = None) -> Transcript:
    """Drive the init/query/oracle/update loop for t_budget rounds.

    stop_before_update, when given, is evaluated after the oracle answer of
    each round; returning True halts the run with the pre-update state
    exposed as state_at_stop (that state produced the round's query). A
    stopped transcript has no final output.
    """
    if t_budget < 1:
        raise OptimizerError("t_budget must be >= 1")
    state = alg.init(seed)
    if state.bit_length != alg.declared_size:
        raise StateSizeViolation(0, state.bit_length, alg.declared_size)
    tr = Transcript(instance_fingerprint=inst.fingerprint, t_budget=t_budget)
    prev_state = state
    for t in range(1, t_budget + 1):
        x = alg.query(state)
        nrm = float(np.linalg.norm(x))
        if nrm > 1.0 + 1e-12:
            raise QueryOutOfBall(t, nrm)
        ans = first_order(inst, x)
        tr.rounds.append((x, ans))
        tr.state_sizes.append(state.bit_length)
        if stop_before_update is not None and stop_before_update(t, x, ans):
            tr.stopped_at = t
            tr.state_at_stop = state
            tr.final_state = state
            return tr
        prev_state = state
        state = alg.update(state, ans.value, ans.subgradient)
        if state.bit_length != alg.declared_size:
            raise StateSizeViolation(t, state.bit_length, alg.declared_size)
    out = alg.output(prev_state)
    check_query_norm(out, inst.params.d)
    last_x = tr.rounds[-1][0]
    if not np.array_equal(out, last_x):
        ans = first_order(inst, out)
        tr.rounds.append((out, ans))
        tr.state_sizes.append(state.bit_length)
    tr.final_output = out
    tr.final_state = state
    return tr


def _project_ball(x: np.ndarray) -> np.ndarray:
    nrm = float(np.linalg.norm(x))
    return x / nrm if nrm > 1.0 else x


class _SubgradientDescent(Algorithm):
    """Projected subgradient method x <- proj(x - eta_t * g).

    Fixed rule: state is the iterate alone (64d bits). Decreasing rule uses
    eta/sqrt(t) and keeps the round counter as one extra state coordinate.
    """

    def __init__(self, d: int, step_rule: str, eta: float):
        if step_rule not in ("fixed", "decreasing"):
            raise OptimizerError(f"unknown step rule {step_rule!r}")
        if eta < 0:
            raise OptimizerError("step size must be nonnegative")
        self.d = d
        self.step_rule = step_rule
        self.eta = eta
        self._floats = d if step_rule == "fixed" else d + 1
        self.declared_size = 64 * self._floats
        self.name = f"pgd-{step_rule}"

    def init(self, seed: int) -> MemoryState:
        vec = np.zeros(self._floats)
        if self.step_rule == "decreasing":
            vec[-1] = 1.0
        return MemoryState.from_floats(vec)

    def query(self, state: MemoryState) -> np.ndarray:
        return state.to_floats(self._floats)[:self.d]

    def update(self, state: MemoryState, value: float,
               subgradient: np.ndarray) -> MemoryState:
        vec = state.to_floats(self._floats)
        x = vec[:self.d]
        if self.step_rule == "fixed":
            eta = self.eta
        else:
            eta = self.eta / math.sqrt(vec[-1])
            vec[-1] += 1.0
        vec[:self.d] = _project_ball(x - eta * subgradient)
        return MemoryState.from_floats(vec)


def subgradient_descent(d: int, step_rule: str = "fixed", eta: float = 0.1) -> Algorithm:
    return _SubgradientDescent(d, step_rule, eta)


class _Ellipsoid(Algorithm):
    """Classical central-cut ellipsoid; state is center plus shape matrix.

    The query is the center, projected onto the ball when it drifts outside;
    in that case the update applies the ball-feasibility cut through the
    center instead of the returned subgradient. The shape matrix is
    symmetrized every round.
    """

    def __init__(self, d: int):
        self.d = d
        self._floats = d + d * d
        self.declared_size = 64 * self._floats
        self.name = "ellipsoid"

    def init(self, seed: int) -> MemoryState:
        vec = np.concatenate([np.zeros(self.d), np.eye(self.d).ravel()])
        return MemoryState.from_floats(vec)

    def _decode(self, state: MemoryState):
        vec = state.to_floats(self._floats)
        return vec[:self.d], vec[self.d:].reshape(self.d, self.d)

    def query(self, state: MemoryState) -> np.ndarray:
        c = state.to_floats(self._floats)[:self.d]
        return _project_ball(c)

    def update(self, state: MemoryState, value: float,
               subgradient: np.ndarray) -> MemoryState:
        c, p_mat = self._decode(state)
        cut = c if float(np.linalg.norm(c)) > 1.0 else subgradient
        c2, p2, ok = _kernels.ellipsoid_step(c, p_mat, cut)
        if not ok:
            raise DegenerateEllipsoid("shape matrix lost positive-definiteness")
        return MemoryState.from_floats(np.concatenate([c2, p2.ravel()]))


def ellipsoid_method(d: int) -> Algorithm:
    return _Ellipsoid(d)


def measure_frontier(algs, d_list, seeds, t_budget: int, gap_thresholds,
                     params_for=None, instance_seed_salt: str = "frontier"):
    """Frontier table: one row per (algorithm, d, seed).

    queries_to_gap(g) is the first round whose best-so-far value comes within
    g of the certified reference value; None when the budget runs out first.
    Algorithms are given as factories d -> Algorithm.
    """
    from .instance import derive_params, sample_instance
    from .instrument import reference_optimum

    if not algs or not d_list or not seeds:
        raise OptimizerError("algs, d_list and seeds must be nonempty")
    thresholds = sorted(gap_thresholds, reverse=True)
    rows = []
    for d in d_list:
        params = params_for(d) if params_for is not None else derive_params(d, 0.5)
        for seed in seeds:
            inst = sample_instance(params, seed)
            ref = reference_optimum(inst)
            for make_alg in algs:
                alg = make_alg(d)
                hits = {}
                remaining = list(thresholds)
                best = math.inf

                def on_round(t, x, ans):
                    nonlocal best
                    if ans.value < best:
                        best = ans.value
                        gap = best - ref.value
                        while remaining and gap <= remaining[-0 if False else -1]:
                            hits[remaining.pop()] = t
                    return not remaining

                run(alg, inst, t_budget, seed, stop_before_update=on_round if remaining else None)
                row = {"alg": alg.name, "d": d, "seed": seed,
                       "state_bits": alg.declared_size}
                for g in gap_thresholds:
                    row[f"queries_to_gap_{g:g}"] = hits.get(g)
                rows.append(row)
    return rows
