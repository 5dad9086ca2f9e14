"""Grid-world construction for the bundled experiments.

Cells are (col, row) with (0, 0) in the south-west corner; north increases
the row.  Movement actions are N, S, E, W with a slip model: the intended
direction succeeds with probability 1 - 2*alpha and each perpendicular
direction occurs with probability alpha.  Moves into obstacles or off the
grid leave the agent in place.  Goal cells are absorbing self-loops whose
reward keeps accruing under discounting.  Obstacle cells are not states.

Rewards are state-action tables; a cell's reward (goal reward, fire
penalty, or step reward) applies to every action taken in that cell.

Configs are YAML documents with top-level keys ``grid``, ``types``,
``sensors``, ``prior``, ``payment_support``, ``initial`` and optional
``temperature``; see the bundled files under ``configs/`` for the schema.
"""

from dataclasses import dataclass
from importlib.resources import files
from typing import NamedTuple

import numpy as np
import yaml

from .errors import ConfigurationError
from .mdp import FollowerSpec
from .hmm import SensorModel
from .optimize import IncentiveProblem

ACTIONS = ("N", "S", "E", "W")
_DELTAS = {"N": (0, 1), "S": (0, -1), "E": (1, 0), "W": (-1, 0)}
_PERPENDICULAR = {"N": ("E", "W"), "S": ("E", "W"), "E": ("N", "S"), "W": ("N", "S")}

NULL_OBSERVATION = "n"


class Cell(NamedTuple):
    col: int
    row: int


@dataclass(frozen=True)
class TypeParams:
    """Per-type dynamics noise and reward shape."""

    slip: float
    fire_penalty: float
    goal_reward: float
    step_reward: float
    discount: float


@dataclass(frozen=True)
class SensorZone:
    """Rectangular detector: emits its label with p_hit inside the range."""

    label: str
    col_min: int
    row_min: int
    col_max: int
    row_max: int
    p_hit: float

    def contains(self, cell):
        return (
            self.col_min <= cell.col <= self.col_max
            and self.row_min <= cell.row <= self.row_max
        )


@dataclass(frozen=True)
class GridConfig:
    width: int
    height: int
    obstacles: frozenset
    fires: frozenset
    goals: frozenset
    initial: Cell
    types: tuple
    sensors: tuple
    prior: tuple
    payment_cell: Cell
    payment_actions: tuple
    max_payment: float = 10.0
    temperature: float = 0.1
    strict_sensors: bool = False

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("grid dimensions must be positive")
        for name in ("obstacles", "fires", "goals"):
            for cell in getattr(self, name):
                self._check_bounds(cell, name)
        self._check_bounds(self.initial, "initial")
        self._check_bounds(self.payment_cell, "payment_support.cell")
        for name_a, name_b in (("obstacles", "fires"), ("obstacles", "goals"),
                               ("fires", "goals")):
            overlap = getattr(self, name_a) & getattr(self, name_b)
            if overlap:
                raise ConfigurationError(
                    f"{name_a} and {name_b} overlap at {sorted(overlap)}"
                )
        for name in ("obstacles", "fires", "goals"):
            if self.initial in getattr(self, name):
                raise ConfigurationError(
                    f"initial: cell {tuple(self.initial)} collides with {name}"
                )
        if self.payment_cell in self.obstacles:
            raise ConfigurationError("payment_support.cell: cell is an obstacle")
        if not self.payment_actions:
            raise ConfigurationError("payment_support.actions: must be nonempty")
        for action in self.payment_actions:
            if action not in ACTIONS:
                raise ConfigurationError(
                    f"payment_support.actions: unknown action {action!r}"
                )
        if len(set(self.payment_actions)) != len(self.payment_actions):
            raise ConfigurationError("payment_support.actions: duplicate action")
        if not self.types:
            raise ConfigurationError("types: at least one follower type is required")
        for i, params in enumerate(self.types):
            if not 0.0 <= params.slip < 0.5:
                raise ConfigurationError(f"types[{i}].slip: must lie in [0, 0.5)")
            if not 0.0 < params.discount < 1.0:
                raise ConfigurationError(f"types[{i}].discount: must lie in (0, 1)")
        if len(self.prior) != len(self.types):
            raise ConfigurationError(
                f"prior: got {len(self.prior)} entries for {len(self.types)} types"
            )
        if any(p < 0 for p in self.prior) or abs(sum(self.prior) - 1.0) > 1e-9:
            raise ConfigurationError("prior: must be a probability distribution")
        labels = [z.label for z in self.sensors]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("sensors: duplicate sensor id")
        for i, zone in enumerate(self.sensors):
            if not 0.0 <= zone.p_hit <= 1.0:
                raise ConfigurationError(f"sensors[{i}].p_hit: must lie in [0, 1]")
            if zone.col_min > zone.col_max or zone.row_min > zone.row_max:
                raise ConfigurationError(f"sensors[{i}].range: empty rectangle")
            for corner in (Cell(zone.col_min, zone.row_min),
                           Cell(zone.col_max, zone.row_max)):
                self._check_bounds(corner, f"sensors[{i}].range")
        if self.temperature <= 0:
            raise ConfigurationError("temperature: must be positive")
        if self.max_payment <= 0:
            raise ConfigurationError("payment_support.max_value: must be positive")

    def _check_bounds(self, cell, name):
        if not (0 <= cell.col < self.width and 0 <= cell.row < self.height):
            raise ConfigurationError(
                f"{name}: cell {tuple(cell)} outside the {self.width}x{self.height} grid"
            )

    @property
    def n_types(self):
        return len(self.types)


def state_cells(config):
    """Non-obstacle cells in row-major order; the state space of the MDPs."""
    return tuple(
        Cell(col, row)
        for row in range(config.height)
        for col in range(config.width)
        if Cell(col, row) not in config.obstacles
    )


def cell_index(config):
    """Mapping from cell to state index."""
    return {cell: i for i, cell in enumerate(state_cells(config))}


def _slip_outcomes(action, alpha):
    yield _DELTAS[action], 1.0 - 2.0 * alpha
    for perp in _PERPENDICULAR[action]:
        yield _DELTAS[perp], alpha


def build_followers(config):
    """One FollowerSpec per type, sharing the state and action spaces."""
    cells = state_cells(config)
    index = {cell: i for i, cell in enumerate(cells)}
    if config.initial not in index:
        raise ConfigurationError("initial: cell is an obstacle")
    n, n_actions = len(cells), len(ACTIONS)
    specs = []
    for params in config.types:
        transition = np.zeros((n, n_actions, n))
        reward = np.empty((n, n_actions))
        for s, cell in enumerate(cells):
            if cell in config.goals:
                transition[s, :, s] = 1.0
                reward[s, :] = params.goal_reward
                continue
            reward[s, :] = (
                params.fire_penalty if cell in config.fires else params.step_reward
            )
            for a, action in enumerate(ACTIONS):
                for (dc, dr), prob in _slip_outcomes(action, params.slip):
                    target = Cell(cell.col + dc, cell.row + dr)
                    if target not in index:
                        target = cell
                    transition[s, a, index[target]] += prob
        initial = np.zeros(n)
        initial[index[config.initial]] = 1.0
        specs.append(
            FollowerSpec(
                transition=transition,
                initial=initial,
                discount=params.discount,
                base_reward=reward,
                temperature=config.temperature,
            )
        )
    return specs


def build_sensor(config):
    """Emission matrix over sensor ids plus the null symbol.

    A state inside a zone emits the zone's id with p_hit and null
    otherwise; overlaps resolve to the first zone in config order unless
    strict_sensors demands disjoint ranges.
    """
    cells = state_cells(config)
    labels = tuple(z.label for z in config.sensors) + (NULL_OBSERVATION,)
    n_obs = len(labels)
    null = n_obs - 1
    emission = np.zeros((n_obs, len(cells)))
    for s, cell in enumerate(cells):
        covering = [i for i, z in enumerate(config.sensors) if z.contains(cell)]
        if len(covering) > 1 and config.strict_sensors:
            names = [config.sensors[i].label for i in covering]
            raise ConfigurationError(
                f"sensors: ranges {names} overlap at cell {tuple(cell)}"
            )
        if covering:
            zone = config.sensors[covering[0]]
            emission[covering[0], s] = zone.p_hit
            emission[null, s] = 1.0 - zone.p_hit
        else:
            emission[null, s] = 1.0
    return SensorModel(emission=emission, labels=labels)


def support_pairs(config):
    """Payment support as (state index, action index) pairs."""
    index = cell_index(config)
    if config.payment_cell not in index:
        raise ConfigurationError("payment_support.cell: cell is an obstacle")
    s = index[config.payment_cell]
    return tuple((s, ACTIONS.index(a)) for a in config.payment_actions)


def build_problem(config):
    """Assemble the full incentive problem from a grid config."""
    followers = build_followers(config)
    sensor = build_sensor(config)
    return IncentiveProblem(
        followers=tuple(followers),
        sensors=(sensor,) * len(followers),
        prior=np.array(config.prior, dtype=float),
        support=support_pairs(config),
        max_payment=config.max_payment,
    )


def reachable_cells(config, slip):
    """Cells reachable from the initial cell with positive probability."""
    specs_like = build_followers(
        _replace_types(config, slip)
    )[0]
    cells = state_cells(config)
    index = {cell: i for i, cell in enumerate(cells)}
    frontier = [index[config.initial]]
    seen = set(frontier)
    any_action = specs_like.transition.sum(axis=1)
    while frontier:
        s = frontier.pop()
        for t in np.nonzero(any_action[s] > 0)[0]:
            if t not in seen:
                seen.add(int(t))
                frontier.append(int(t))
    return {cells[i] for i in seen}


def _replace_types(config, slip):
    params = config.types[0]
    new = TypeParams(
        slip=slip,
        fire_penalty=params.fire_penalty,
        goal_reward=params.goal_reward,
        step_reward=params.step_reward,
        discount=params.discount,
    )
    return GridConfig(
        width=config.width,
        height=config.height,
        obstacles=config.obstacles,
        fires=config.fires,
        goals=config.goals,
        initial=config.initial,
        types=(new,),
        sensors=config.sensors,
        prior=(1.0,),
        payment_cell=config.payment_cell,
        payment_actions=config.payment_actions,
        max_payment=config.max_payment,
        temperature=config.temperature,
    )


def _require(mapping, key, path):
    if key not in mapping:
        raise ConfigurationError(f"{path}.{key}: missing required key")
    return mapping[key]


def _as_cell(value, path):
    try:
        col, row = value
        return Cell(int(col), int(row))
    except (TypeError, ValueError):
        raise ConfigurationError(f"{path}: expected a [col, row] pair, got {value!r}")


def _as_cell_set(values, path):
    if values is None:
        return frozenset()
    return frozenset(_as_cell(v, f"{path}[{i}]") for i, v in enumerate(values))


def load_config(text):
    """Parse and fully validate a YAML grid config document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}")
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a mapping at the top level")
    grid = _require(doc, "grid", "config")
    types = []
    for i, entry in enumerate(_require(doc, "types", "config")):
        path = f"types[{i}]"
        types.append(
            TypeParams(
                slip=float(_require(entry, "slip", path)),
                fire_penalty=float(_require(entry, "fire_penalty", path)),
                goal_reward=float(_require(entry, "goal_reward", path)),
                step_reward=float(_require(entry, "step_reward", path)),
                discount=float(_require(entry, "discount", path)),
            )
        )
    sensors = []
    for i, entry in enumerate(doc.get("sensors", [])):
        path = f"sensors[{i}]"
        rng = _require(entry, "range", path)
        if not (isinstance(rng, (list, tuple)) and len(rng) == 4):
            raise ConfigurationError(
                f"{path}.range: expected [col_min, row_min, col_max, row_max]"
            )
        sensors.append(
            SensorZone(
                label=str(_require(entry, "id", path)),
                col_min=int(rng[0]),
                row_min=int(rng[1]),
                col_max=int(rng[2]),
                row_max=int(rng[3]),
                p_hit=float(_require(entry, "p_hit", path)),
            )
        )
    payment = _require(doc, "payment_support", "config")
    actions = _require(payment, "actions", "payment_support")
    if isinstance(actions, str):
        actions = [actions]
    return GridConfig(
        width=int(_require(grid, "width", "grid")),
        height=int(_require(grid, "height", "grid")),
        obstacles=_as_cell_set(grid.get("obstacles"), "grid.obstacles"),
        fires=_as_cell_set(grid.get("fires"), "grid.fires"),
        goals=_as_cell_set(grid.get("goals"), "grid.goals"),
        initial=_as_cell(_require(doc, "initial", "config"), "initial"),
        types=tuple(types),
        sensors=tuple(sensors),
        prior=tuple(float(p) for p in _require(doc, "prior", "config")),
        payment_cell=_as_cell(_require(payment, "cell", "payment_support"),
                              "payment_support.cell"),
        payment_actions=tuple(str(a) for a in actions),
        max_payment=float(payment.get("max_value", 10.0)),
        temperature=float(doc.get("temperature", 0.1)),
        strict_sensors=bool(doc.get("strict_sensors", False)),
    )


def load_config_file(path):
    with open(path, "r", encoding="utf-8") as handle:
        return load_config(handle.read())


def bundled_config(name):
    """Load one of the packaged experiment configs by name."""
    resource = files("incentive_inference").joinpath(f"configs/{name}.yaml")
    try:
        text = resource.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"no bundled config named {name!r}")
    return load_config(text)
