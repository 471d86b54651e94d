"""Configuration dataclasses, constants and the TOML scenario loader.

Config files are TOML documents whose keys mirror the dataclass fields below, grouped by
section (``material``, ``env``, ``contact``, ``solver``, ``output``, ``bc``, ``initial``)::

    shell_mode = "midedge"
    material.youngs_rod = 2e9
    env.gravity = [0.0, 0.0, -9.8]
    env.floor.mu = 0.25

Node and edge indices in files are 1-based. They are converted to 0-based here, and
nowhere else.
"""

from __future__ import annotations

import math
import sys
from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

# Newton residual tolerance on ‖f_free‖ (N)
DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 25

# Backtracking floor for the line search
ALPHA_MIN = 2.0**-10

# The "15" in K1 = 15/δ and K2 = 15/ν_slip
STIFFNESS_SCALE = 15.0

# Default hinge stiffness multiplier on Eh³/12
HINGE_STIFFNESS_FACTOR = 1.0 / math.sqrt(3.0)

# Multiplier that gives an equilateral hinge lattice a cylindrical bending modulus of Eh³/12
HINGE_LATTICE_FACTOR = 2.0 / math.sqrt(3.0)

SHELL_MODES = ("hinge", "midedge")
INTEGRATORS = ("backward-euler", "implicit-midpoint", "forward-euler")
FRICTION_JACOBIANS = ("analytic", "fd")
ACTUATED_QUANTITIES = ("kappa1", "kappa2", "twist", "length", "phi")

BUNDLED_SCENARIOS = ("pneunet", "earthworm", "manta", "snake", "parachute", "rod-drop", "gripper")

_AXES = {"x": 0, "y": 1, "z": 2}


def _vector(value: Any, name: str) -> tuple[float, float, float]:
    vec = tuple(float(v) for v in value)
    if len(vec) != 3:
        raise ValueError(f"Invalid {name}: {value!r}. Must be a 3-vector.")
    return vec  # type: ignore[return-value]


@dataclass
class MaterialParams:
    """Densities, moduli and section sizes for rods and shells (SI units)."""

    rho_rod: float = 1200.0
    rho_shell: float = 1200.0
    youngs_rod: float = 2e9
    youngs_shell: float = 2e9
    nu_rod: float = 0.5
    nu_shell: float = 0.3
    r0: float = 1e-3
    h: float = 1e-3
    hinge_stiffness_factor: float = HINGE_STIFFNESS_FACTOR

    def __post_init__(self) -> None:
        for name in ("rho_rod", "rho_shell", "youngs_rod", "youngs_shell", "r0", "h", "hinge_stiffness_factor"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"Invalid {name}: {value!r}. Must be > 0.")
        for name in ("nu_rod", "nu_shell"):
            value = getattr(self, name)
            if not -1.0 < value <= 0.5:
                raise ValueError(f"Invalid {name}: {value!r}. Must be in (-1, 0.5].")

    @property
    def shear_modulus_rod(self) -> float:
        return self.youngs_rod / (2.0 * (1.0 + self.nu_rod))


@dataclass
class FloorParams:
    """Penalty floor with smoothed Coulomb friction."""

    enabled: bool = False
    stiffness: float = 20.0
    delta: float = 1e-3
    mu: float = 0.0
    slip_tolerance: float = 1e-3
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    height: float = 0.0

    def __post_init__(self) -> None:
        self.normal = _vector(self.normal, "floor normal")
        norm = math.sqrt(sum(c * c for c in self.normal))
        if norm == 0.0:
            raise ValueError(f"Invalid floor normal: {self.normal!r}. Must be non-zero.")
        self.normal = (self.normal[0] / norm, self.normal[1] / norm, self.normal[2] / norm)
        if self.enabled:
            if self.stiffness <= 0:
                raise ValueError(f"Invalid floor stiffness: {self.stiffness!r}. Must be > 0.")
            if self.delta <= 0:
                raise ValueError(f"Invalid floor delta: {self.delta!r}. Must be > 0.")
        if self.mu < 0:
            raise ValueError(f"Invalid floor mu: {self.mu!r}. Must be >= 0.")
        if self.slip_tolerance <= 0:
            raise ValueError(f"Invalid floor slip_tolerance: {self.slip_tolerance!r}. Must be > 0.")

    @property
    def k1(self) -> float:
        return STIFFNESS_SCALE / self.delta

    @property
    def k2(self) -> float:
        return STIFFNESS_SCALE / self.slip_tolerance


@dataclass
class SphereObstacle:
    """A fixed rigid sphere the structure can touch."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.02
    stiffness: float = 20.0
    delta: float = 1e-3
    mu: float = 0.0
    slip_tolerance: float = 1e-3

    def __post_init__(self) -> None:
        self.center = _vector(self.center, "sphere center")
        if self.radius <= 0:
            raise ValueError(f"Invalid sphere radius: {self.radius!r}. Must be > 0.")
        if self.stiffness <= 0 or self.delta <= 0:
            raise ValueError(
                f"Invalid sphere stiffness/delta: {(self.stiffness, self.delta)!r}. Must both be > 0."
            )
        if self.mu < 0:
            raise ValueError(f"Invalid sphere mu: {self.mu!r}. Must be >= 0.")
        if self.slip_tolerance <= 0:
            raise ValueError(f"Invalid sphere slip_tolerance: {self.slip_tolerance!r}. Must be > 0.")

    @property
    def k1(self) -> float:
        return STIFFNESS_SCALE / self.delta

    @property
    def k2(self) -> float:
        return STIFFNESS_SCALE / self.slip_tolerance


@dataclass
class EnvironmentParams:
    """External-force settings. A coefficient of zero switches its force off."""

    gravity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rho_medium: float = 0.0
    viscosity: float = 0.0
    rft_ct: float = 0.0
    rft_cn: float = 0.0
    drag_cd: float = 0.0
    floor: FloorParams = field(default_factory=FloorParams)
    obstacles: tuple[SphereObstacle, ...] = ()

    def __post_init__(self) -> None:
        self.gravity = _vector(self.gravity, "gravity")
        for name in ("rho_medium", "viscosity", "rft_ct", "rft_cn", "drag_cd"):
            value = getattr(self, name)
            if value < 0:
                raise ValueError(f"Invalid {name}: {value!r}. Must be >= 0.")
        if isinstance(self.floor, Mapping):
            self.floor = _from_mapping(FloorParams, self.floor, "env.floor.")
        self.obstacles = tuple(
            _from_mapping(SphereObstacle, ob, "env.obstacles.") if isinstance(ob, Mapping) else ob
            for ob in self.obstacles
        )

    @property
    def has_gravity(self) -> bool:
        return any(g != 0.0 for g in self.gravity)

    @property
    def has_rft(self) -> bool:
        return self.rft_ct > 0 or self.rft_cn > 0


@dataclass
class ContactParams:
    """Implicit-contact (IMC) settings for edge-edge self-contact."""

    enabled: bool = False
    stiffness: float = 20.0
    delta: float = 1e-3
    mu: float = 0.0
    slip_tolerance: float = 1e-3
    friction_jacobian: str = "analytic"

    def __post_init__(self) -> None:
        if self.stiffness <= 0:
            raise ValueError(f"Invalid contact stiffness: {self.stiffness!r}. Must be > 0.")
        if self.delta <= 0:
            raise ValueError(f"Invalid contact delta: {self.delta!r}. Must be > 0.")
        if self.mu < 0:
            raise ValueError(f"Invalid contact mu: {self.mu!r}. Must be >= 0.")
        if self.slip_tolerance <= 0:
            raise ValueError(f"Invalid contact slip_tolerance: {self.slip_tolerance!r}. Must be > 0.")
        if self.friction_jacobian not in FRICTION_JACOBIANS:
            raise ValueError(
                f"Invalid friction_jacobian: {self.friction_jacobian!r}. Must be 'analytic' or 'fd'."
            )

    @property
    def k1(self) -> float:
        return STIFFNESS_SCALE / self.delta

    @property
    def k2(self) -> float:
        return STIFFNESS_SCALE / self.slip_tolerance


@dataclass
class SolverSettings:
    """Time stepping and Newton settings."""

    dt: float = 1e-3
    total_time: float = 1.0
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    line_search: bool = True
    integrator: str = "backward-euler"
    static: bool = False
    planar: bool = False
    adaptive_dt: bool = False
    max_halvings: int = 5
    predictor: bool = False
    continuation_steps: int = 10
    divergence_limit: float = 1e8

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError(f"Invalid dt: {self.dt!r}. Must be > 0.")
        if self.total_time < 0:
            raise ValueError(f"Invalid total_time: {self.total_time!r}. Must be >= 0.")
        if self.tolerance <= 0:
            raise ValueError(f"Invalid tolerance: {self.tolerance!r}. Must be > 0.")
        if self.max_iterations < 1:
            raise ValueError(f"Invalid max_iterations: {self.max_iterations!r}. Must be >= 1.")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"Invalid integrator: {self.integrator!r}. Must be one of {', '.join(INTEGRATORS)}.")
        if self.continuation_steps < 1:
            raise ValueError(f"Invalid continuation_steps: {self.continuation_steps!r}. Must be >= 1.")
        if self.max_halvings < 0:
            raise ValueError(f"Invalid max_halvings: {self.max_halvings!r}. Must be >= 0.")

    @property
    def n_steps(self) -> int:
        return max(1, round(self.total_time / self.dt))


@dataclass
class OutputSettings:
    """What the runner logs and how often."""

    log_every: int = 1
    tracked_nodes: tuple[int, ...] = ()
    log_energy: bool = False

    def __post_init__(self) -> None:
        if self.log_every < 1:
            raise ValueError(f"Invalid log_every: {self.log_every!r}. Must be >= 1.")
        self.tracked_nodes = tuple(int(n) for n in self.tracked_nodes)


@dataclass
class BoundaryConditions:
    """Fixed scalar DOFs, addressed by node / twist edge / shell edge (0-based)."""

    fixed_nodes: tuple[int, ...] = ()
    fixed_node_axes: tuple[tuple[int, int], ...] = ()
    fixed_twist_edges: tuple[int, ...] = ()
    fixed_shell_edges: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        self.fixed_nodes = tuple(int(n) for n in self.fixed_nodes)
        self.fixed_twist_edges = tuple(int(e) for e in self.fixed_twist_edges)
        self.fixed_shell_edges = tuple(int(e) for e in self.fixed_shell_edges)
        axes = []
        for node, axis in self.fixed_node_axes:
            if isinstance(axis, str):
                if axis not in _AXES:
                    raise ValueError(f"Invalid axis: {axis!r}. Must be 'x', 'y' or 'z'.")
                axis = _AXES[axis]
            if axis not in (0, 1, 2):
                raise ValueError(f"Invalid axis: {axis!r}. Must be 0, 1 or 2.")
            axes.append((int(node), int(axis)))
        self.fixed_node_axes = tuple(axes)
        for name in ("fixed_nodes", "fixed_twist_edges", "fixed_shell_edges"):
            if any(i < 0 for i in getattr(self, name)):
                raise ValueError(f"Invalid {name}: {getattr(self, name)!r}. Indices must be >= 0.")


@dataclass
class InitialConditions:
    """Uniform initial velocity, twist angle and twist rate."""

    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    theta: float = 0.0
    theta_rate: float = 0.0

    def __post_init__(self) -> None:
        self.velocity = _vector(self.velocity, "initial velocity")


@dataclass
class ActuationRef:
    """A CSV schedule file driving one natural quantity."""

    file: str
    quantity: str

    def __post_init__(self) -> None:
        if self.quantity not in ACTUATED_QUANTITIES:
            raise ValueError(
                f"Invalid actuation quantity: {self.quantity!r}. Must be one of {', '.join(ACTUATED_QUANTITIES)}."
            )


@dataclass
class ScenarioConfig:
    """Everything a simulation run needs apart from the geometry itself."""

    material: MaterialParams = field(default_factory=MaterialParams)
    environment: EnvironmentParams = field(default_factory=EnvironmentParams)
    contact: ContactParams = field(default_factory=ContactParams)
    solver: SolverSettings = field(default_factory=SolverSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    boundary: BoundaryConditions = field(default_factory=BoundaryConditions)
    initial: InitialConditions = field(default_factory=InitialConditions)
    actuation: tuple[ActuationRef, ...] = ()
    shell_mode: str = "hinge"

    def __post_init__(self) -> None:
        if self.shell_mode not in SHELL_MODES:
            raise ValueError(f"Invalid shell_mode: {self.shell_mode!r}. Must be 'hinge' or 'midedge'.")
        self.actuation = tuple(
            _from_mapping(ActuationRef, ref, "actuation.") if isinstance(ref, Mapping) else ref
            for ref in self.actuation
        )


# --- mapping / file loading ------------------------------------------------

# TOML section name -> (ScenarioConfig attribute, dataclass)
_SECTIONS: dict[str, tuple[str, type]] = {
    "material": ("material", MaterialParams),
    "env": ("environment", EnvironmentParams),
    "contact": ("contact", ContactParams),
    "solver": ("solver", SolverSettings),
    "output": ("output", OutputSettings),
    "bc": ("boundary", BoundaryConditions),
    "initial": ("initial", InitialConditions),
}

_NESTED: dict[tuple[type, str], type] = {
    (EnvironmentParams, "floor"): FloorParams,
}


def _from_mapping(cls: type, data: Mapping[str, Any], prefix: str) -> Any:
    known = {f.name for f in fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"Unknown config key: {prefix + key!r}")
        nested = _NESTED.get((cls, key))
        if nested is not None:
            if not isinstance(value, Mapping):
                raise ValueError(f"Invalid {prefix + key}: {value!r}. Must be a table.")
            value = _from_mapping(nested, value, f"{prefix}{key}.")
        elif isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    return cls(**kwargs)


def _to_zero_based(section: str, data: dict[str, Any]) -> dict[str, Any]:
    """Shift file (1-based) indices to internal (0-based) ones."""
    out = dict(data)
    if section == "bc":
        for key in ("fixed_nodes", "fixed_twist_edges", "fixed_shell_edges"):
            if key in out:
                out[key] = [_index_from_file(i, f"bc.{key}") for i in out[key]]
        if "fixed_node_axes" in out:
            out["fixed_node_axes"] = [
                (_index_from_file(node, "bc.fixed_node_axes"), axis) for node, axis in out["fixed_node_axes"]
            ]
    elif section == "output" and "tracked_nodes" in out:
        out["tracked_nodes"] = [_index_from_file(i, "output.tracked_nodes") for i in out["tracked_nodes"]]
    return out


def _index_from_file(value: Any, name: str) -> int:
    index = int(value)
    if index < 1:
        raise ValueError(f"Invalid {name} index: {value!r}. Indices in files are 1-based.")
    return index - 1


def config_from_mapping(data: Mapping[str, Any], base_dir: Path | None = None) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed TOML mapping (file conventions: 1-based indices).

    Unknown keys raise ValueError naming the key. Actuation file paths are resolved
    against ``base_dir`` when given.
    """
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            attr, cls = _SECTIONS[key]
            if not isinstance(value, Mapping):
                raise ValueError(f"Invalid section {key!r}: expected a table.")
            kwargs[attr] = _from_mapping(cls, _to_zero_based(key, dict(value)), f"{key}.")
        elif key == "actuation":
            refs = []
            for item in value:
                ref = _from_mapping(ActuationRef, item, "actuation.")
                if base_dir is not None and not Path(ref.file).is_absolute():
                    ref = replace(ref, file=str(base_dir / ref.file))
                refs.append(ref)
            kwargs["actuation"] = tuple(refs)
        elif key == "shell_mode":
            kwargs["shell_mode"] = value
        else:
            raise ValueError(f"Unknown config key: {key!r}")
    return ScenarioConfig(**kwargs)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a TOML scenario config file."""
    path = Path(path)
    with path.open("rb") as fh:
        data = tomllib.load(fh)
    config = config_from_mapping(data, base_dir=path.parent)
    for ref in config.actuation:
        if not Path(ref.file).exists():
            raise ValueError(f"Invalid actuation file: {ref.file!r}. File does not exist.")
    return config


def parse_override(text: str) -> tuple[str, Any]:
    """Split a ``key=value`` override; the value is read as a TOML literal, else kept as text."""
    if "=" not in text:
        raise ValueError(f"Invalid override: {text!r}. Must be key=value.")
    key, raw = text.split("=", 1)
    key, raw = key.strip(), raw.strip()
    if not key:
        raise ValueError(f"Invalid override: {text!r}. Key must be non-empty.")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def with_overrides(config: ScenarioConfig, overrides: Mapping[str, Any]) -> ScenarioConfig:
    """Return a copy of ``config`` with dotted-key overrides applied.

    Keys use the file section names (``env.floor.mu``) and, like files, 1-based indices.
    """
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        if parts[0] == "shell_mode" and len(parts) == 1:
            config = replace(config, shell_mode=value)
            continue
        if parts[0] not in _SECTIONS or len(parts) < 2:
            raise ValueError(f"Unknown config key: {dotted!r}")
        attr, _ = _SECTIONS[parts[0]]
        if parts[0] in ("bc", "output"):
            value = _to_zero_based(parts[0], {parts[-1]: value})[parts[-1]]
        section = _replace_path(getattr(config, attr), parts[1:], value, dotted)
        config = replace(config, **{attr: section})
    return config


def _replace_path(obj: Any, path: list[str], value: Any, dotted: str) -> Any:
    name = path[0]
    if name not in {f.name for f in fields(obj)}:
        raise ValueError(f"Unknown config key: {dotted!r}")
    if len(path) > 1:
        return replace(obj, **{name: _replace_path(getattr(obj, name), path[1:], value, dotted)})
    if isinstance(value, list):
        value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return replace(obj, **{name: value})
