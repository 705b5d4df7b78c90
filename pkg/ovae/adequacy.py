"""Multi-area adequacy model.

Areas exchange power over transfer-limited lines. For a state (available generation
g, demand d) the curtailment dispatch sheds as little load as possible and spreads
it in proportion to demand; the margin LP measures how far a healthy state is from
its first shortfall. Line (a, b) with a < b carries positive flow from a to b.
"""
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np

from .config import ADEQUACY_CONFIG, DESK_NETWORK, QP_CONFIG
from .errors import (ConfigError, DimensionMismatchError, QpInfeasibleError,
                     ShortfallStateError)
from .parallel_runner import ParallelRunner
from .qp_solver import QuadProgram, solve_lp_via_regularization, solve_qp

logger = logging.getLogger(__name__)


def unit_size_rule(total_capacity: float, max_unit: int = None) -> Tuple[int, int]:
    """Largest integer divisor of the capacity not above ``max_unit`` MW, and the unit count"""
    max_unit = ADEQUACY_CONFIG['max_unit_size'] if max_unit is None else max_unit
    if total_capacity <= 0 or float(total_capacity) != int(total_capacity):
        raise ConfigError(f"unit sizing needs a positive integer capacity, got {total_capacity}")
    total = int(total_capacity)
    for size in range(min(total, max_unit), 0, -1):
        if total % size == 0:
            return size, total // size
    return 1, total


@dataclass
class Area:
    name: str
    conventional_capacity: float
    wind_nameplate: float = 0.0
    unit_size: float = 0.0
    unit_count: int = 0
    availability: float = ADEQUACY_CONFIG['availability']

    def __post_init__(self):
        if not 0.0 < self.availability <= 1.0:
            raise ConfigError(f"area '{self.name}': availability must lie in (0, 1]")
        if self.conventional_capacity < 0 or self.wind_nameplate < 0:
            raise ConfigError(f"area '{self.name}': capacities must be nonnegative")
        if self.conventional_capacity > 0 and self.unit_count == 0:
            self.unit_size, self.unit_count = unit_size_rule(self.conventional_capacity)
        if not np.isclose(self.unit_size * self.unit_count, self.conventional_capacity):
            raise ConfigError(f"area '{self.name}': unit_size x unit_count != conventional_capacity")


@dataclass
class Line:
    start: int
    end: int
    f_min: float
    f_max: float

    def __post_init__(self):
        if self.start == self.end:
            raise ConfigError(f"line {self.start}-{self.end} connects an area to itself")
        if self.start > self.end:
            self.start, self.end = self.end, self.start
            self.f_min, self.f_max = -self.f_max, -self.f_min
        if self.f_min > self.f_max:
            raise ConfigError(f"line {self.start}-{self.end}: f_min exceeds f_max")


@dataclass
class NetworkModel:
    areas: List[Area]
    lines: List[Line] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.areas)
        if n == 0:
            raise ConfigError("network has no areas")
        names = [a.name for a in self.areas]
        if len(set(names)) != n:
            raise ConfigError("area names must be unique")
        self.graph = nx.Graph()
        self.graph.add_nodes_from(range(n))
        for line in self.lines:
            if not (0 <= line.start < n and 0 <= line.end < n):
                raise ConfigError(f"line {line.start}-{line.end} references an unknown area")
            if self.graph.has_edge(line.start, line.end):
                raise ConfigError(f"duplicate line {line.start}-{line.end}")
            self.graph.add_edge(line.start, line.end)
        if self.lines:
            self.incidence = nx.incidence_matrix(
                self.graph, nodelist=range(n), edgelist=[(l.start, l.end) for l in self.lines], oriented=True
            ).toarray()
        else:
            self.incidence = np.zeros((n, 0))
        islands = nx.number_connected_components(self.graph)
        if islands > 1:
            logger.info(f"Network has {islands} islands")

    @property
    def n_areas(self) -> int:
        return len(self.areas)

    @property
    def names(self) -> List[str]:
        return [a.name for a in self.areas]

    @property
    def unit_sizes(self) -> np.ndarray:
        return np.array([a.unit_size for a in self.areas], dtype=np.float64)

    @property
    def unit_counts(self) -> np.ndarray:
        return np.array([a.unit_count for a in self.areas], dtype=np.int64)

    @property
    def availabilities(self) -> np.ndarray:
        return np.array([a.availability for a in self.areas], dtype=np.float64)

    @property
    def wind_nameplates(self) -> np.ndarray:
        return np.array([a.wind_nameplate for a in self.areas], dtype=np.float64)

    @property
    def flow_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return (np.array([l.f_min for l in self.lines], dtype=np.float64),
                np.array([l.f_max for l in self.lines], dtype=np.float64))

    @classmethod
    def from_dict(cls, data: Dict) -> 'NetworkModel':
        try:
            areas = [Area(**spec) for spec in data.get('area', [])]
        except TypeError as e:
            raise ConfigError(f"invalid area entry: {e}")
        index = {a.name: i for i, a in enumerate(areas)}
        lines = []
        for spec in data.get('line', []):
            try:
                start = index[spec['from']] if isinstance(spec['from'], str) else int(spec['from'])
                end = index[spec['to']] if isinstance(spec['to'], str) else int(spec['to'])
            except KeyError as e:
                raise ConfigError(f"line references unknown area {e}")
            lines.append(Line(start, end, float(spec['f_min']), float(spec['f_max'])))
        return cls(areas, lines)

    @classmethod
    def from_toml(cls, path) -> 'NetworkModel':
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"network file not found: {path}")
        try:
            with open(path, 'rb') as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid network file {path}: {e}")
        network = cls.from_dict(data)
        logger.info(f"Loaded network with {network.n_areas} areas and {len(network.lines)} lines from {path}")
        return network


def desk_network() -> NetworkModel:
    return NetworkModel.from_dict(DESK_NETWORK)


@dataclass
class SystemState:
    available_gen: np.ndarray
    demand: np.ndarray

    def __post_init__(self):
        self.available_gen = np.asarray(self.available_gen, dtype=np.float64)
        self.demand = np.asarray(self.demand, dtype=np.float64)
        if self.available_gen.shape != self.demand.shape:
            raise DimensionMismatchError("state vectors", self.demand.shape, self.available_gen.shape)
        if np.any(self.available_gen < 0) or np.any(self.demand < 0):
            raise ConfigError("generation and demand must be nonnegative")


@dataclass
class DispatchResult:
    curtailment: np.ndarray
    flows: np.ndarray
    epns: float


class Metric(str, Enum):
    EPNS = 'EPNS'
    EENS = 'EENS'
    LOLE = 'LOLE'


class FeatureKind(str, Enum):
    TOTAL_LOAD = 'total_load'
    EENS = 'eens'


@dataclass
class FeatureLabel:
    value: float
    kind: FeatureKind


def sample_generation(network: NetworkModel, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Binomial unit outages plus a fixed wind share; one row per draw when ``size`` is given"""
    shape = network.n_areas if size is None else (size, network.n_areas)
    up = rng.binomial(network.unit_counts, network.availabilities, size=shape)
    return up * network.unit_sizes + ADEQUACY_CONFIG['wind_share'] * network.wind_nameplates


def _check_state(network: NetworkModel, state: SystemState):
    if state.demand.shape != (network.n_areas,):
        raise DimensionMismatchError("state length", network.n_areas, state.demand.shape)


def dispatch(network: NetworkModel, state: SystemState) -> DispatchResult:
    """Minimize sum_i c_i^2/(2 d_i) + c_i over flows f and curtailments c.

    Nodal band: d_i - g_i <= imports_i + c_i <= d_i. Areas whose demand is at or below
    the EPNS threshold carry no curtailment variable. Curtailment is solved in the
    scaled unit s_i = c_i / sqrt(d_i * r), r the flow regularization, so the Hessian
    is r * I for any demand.
    """
    _check_state(network, state)
    d, g = state.demand, state.available_gen
    n_lines = len(network.lines)
    reg = QP_CONFIG['flow_regularization']
    curtailable = np.flatnonzero(d > ADEQUACY_CONFIG['epns_zero_threshold'])
    scale = np.sqrt(d[curtailable] * reg)
    n_vars = n_lines + curtailable.size

    Q = reg * np.eye(n_vars)
    c = np.concatenate([np.zeros(n_lines), scale])
    A = np.zeros((network.n_areas, n_vars))
    A[:, :n_lines] = network.incidence
    A[curtailable, n_lines + np.arange(curtailable.size)] = scale
    f_min, f_max = network.flow_bounds
    var_lb = np.concatenate([f_min, np.zeros(curtailable.size)])
    var_ub = np.concatenate([f_max, d[curtailable] / scale])

    solution = solve_qp(QuadProgram(Q, c, A, d - g, d, var_lb, var_ub))
    if not solution.optimal:
        raise QpInfeasibleError(f"curtailment dispatch infeasible for demand {d.tolist()}")

    curtailment = np.zeros(network.n_areas)
    curtailment[curtailable] = np.clip(scale * solution.primal[n_lines:], 0.0, d[curtailable])
    flows = np.clip(solution.primal[:n_lines], f_min, f_max)
    epns = float(curtailment.sum())
    if epns < ADEQUACY_CONFIG['epns_zero_threshold']:
        epns = 0.0
    return DispatchResult(curtailment, flows, epns)


def dispatch_islanded(network: NetworkModel, state: SystemState) -> DispatchResult:
    """Curtailment with every line open; an upper bound on the networked EPNS"""
    _check_state(network, state)
    curtailment = np.maximum(state.demand - state.available_gen, 0.0)
    return DispatchResult(curtailment, np.zeros(len(network.lines)), float(curtailment.sum()))


def margin(network: NetworkModel, state: SystemState, result: Optional[DispatchResult] = None) -> float:
    """Largest uniform demand increase k * sum(d) (MW) the state absorbs without curtailment"""
    result = dispatch(network, state) if result is None else result
    if result.epns > 0:
        raise ShortfallStateError(f"margin needs a state without shortfall (EPNS={result.epns:.6g} MW)")
    d, g = state.demand, state.available_gen
    total = float(d.sum())
    if total == 0:
        return 0.0
    n_lines = len(network.lines)
    c = np.zeros(n_lines + 1)
    c[-1] = -total
    A = np.hstack([network.incidence, -d[:, None]])
    f_min, f_max = network.flow_bounds
    var_lb = np.concatenate([f_min, [-np.inf]])
    var_ub = np.concatenate([f_max, [np.inf]])

    solution = solve_lp_via_regularization(c, A, d - g, d, var_lb, var_ub)
    if not solution.optimal:
        raise QpInfeasibleError("margin LP infeasible")
    return max(0.0, -solution.objective)


def impact_of_epns(epns, metric: Metric):
    """EPNS in MW, EENS in MWh/y, LOLE in h/y; scalars or arrays. EPNS below the threshold counts as 0."""
    epns = np.asarray(epns, dtype=np.float64)
    epns = np.where(epns < ADEQUACY_CONFIG['epns_zero_threshold'], 0.0, epns)
    hours = ADEQUACY_CONFIG['hours_per_year']
    metric = Metric(metric)
    if metric is Metric.EPNS:
        out = epns
    elif metric is Metric.EENS:
        out = hours * epns
    else:
        out = hours * (epns > 0).astype(np.float64)
    return float(out) if out.ndim == 0 else out


def impact(network: NetworkModel, state: SystemState, metric: Metric) -> float:
    return impact_of_epns(dispatch(network, state).epns, metric)


def label_f_total_load(demand: np.ndarray) -> FeatureLabel:
    return FeatureLabel(float(np.sum(demand)), FeatureKind.TOTAL_LOAD)


def label_f_eens(demand: np.ndarray, network: NetworkModel, rng: np.random.Generator,
                 k: int = None) -> FeatureLabel:
    """8760 x mean EPNS over k generation draws, or -8760 x the smallest margin if none shorts"""
    k = ADEQUACY_CONFIG['label_draws'] if k is None else k
    if k < 1:
        raise ConfigError("label_f_eens needs at least one generation draw")
    demand = np.asarray(demand, dtype=np.float64)
    hours = ADEQUACY_CONFIG['hours_per_year']
    draws = sample_generation(network, rng, size=k)
    states = [SystemState(g, demand) for g in draws]
    results = [dispatch(network, s) for s in states]
    mean_epns = float(np.mean([r.epns for r in results]))
    if mean_epns > 0:
        return FeatureLabel(hours * mean_epns, FeatureKind.EENS)
    smallest = min(margin(network, s, r) for s, r in zip(states, results))
    return FeatureLabel(-hours * smallest, FeatureKind.EENS)


def label_states(states: np.ndarray, network: NetworkModel, kind: FeatureKind, seed: int,
                 runner: Optional[ParallelRunner] = None, k: int = None,
                 indices: Optional[np.ndarray] = None) -> np.ndarray:
    """Feature value per demand row; EENS labels draw from default_rng([seed, indices[i]])"""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    indices = np.arange(states.shape[0]) if indices is None else np.asarray(indices)
    if FeatureKind(kind) is FeatureKind.TOTAL_LOAD:
        return states.sum(axis=1)
    runner = runner or ParallelRunner()
    values = runner.map_indexed(
        lambda i: label_f_eens(states[i], network, np.random.default_rng([seed, int(indices[i])]), k).value,
        states.shape[0], desc="Labeling f_EENS"
    )
    return np.asarray(values, dtype=np.float64)


def evaluate_epns(demands: np.ndarray, network: NetworkModel, rng: np.random.Generator) -> np.ndarray:
    """EPNS of each demand row paired with one fresh generation draw"""
    demands = np.atleast_2d(np.asarray(demands, dtype=np.float64))
    if demands.shape[1] != network.n_areas:
        raise DimensionMismatchError("demand width", network.n_areas, demands.shape[1])
    draws = sample_generation(network, rng, size=demands.shape[0])
    epns = np.zeros(demands.shape[0])
    for i, (g, d) in enumerate(zip(draws, demands)):
        # Skip the QP when no area can short even islanded
        if np.all(g >= d):
            continue
        epns[i] = dispatch(network, SystemState(g, d)).epns
    return epns

