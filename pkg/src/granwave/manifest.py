"""Run manifests: INI-backed configuration for the full pipeline.

A manifest collects every knob of a study (physics constants, packing
target, integrator schedule, experiment ports and frequencies, optimizer
hyperparameters) in one file so a run is reproducible from the manifest
and a seed alone.  Ports may be given explicitly or as "auto", which
places them with default_ports for the lattice in use.
"""

import configparser
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from .engine import SimConfig
from .errors import ConfigError
from .losses import ExperimentSpec, default_ports
from .optimize import EvoConfig, TrainConfig
from .packing import FireConfig, LatticeSpec
from .physics import DampingParams, MaterialParams

AUTO = "auto"


@dataclass(frozen=True)
class RunManifest:
    """Typed view of one study configuration."""

    name: str = "run"
    seed: int = 0
    # physics
    mass: float = 1.0
    diameter: float = 0.1
    alpha: float = 2.5
    damping_background: float = 1.0
    damping_particle_particle: float = 0.0
    damping_particle_wall: float = 0.0
    # packing
    nx: int = 10
    ny: int = 11
    phi: float = 0.1
    force_tol: float = 1e-10
    sigma_step: float = 0.01
    # sim
    n_steps: int = 3000
    dt: float = 5e-3
    record_stride: int = 1
    neighbor_method: str = "all_pairs"
    # experiment
    kind: str = "waveguide"
    input_ports: tuple | str = AUTO
    output_ports: tuple | str = AUTO
    frequencies: tuple = (7.0, 15.0)
    amplitude: float = 1e-3
    loss: str = "cross_entropy"
    axis: int = 0
    # train
    epochs: int = 200
    lr: float = 1e-3
    lr_milestones: tuple = ()
    lr_gamma: float = 0.1
    init: str = "fixed"
    init_value: float = 5.0
    snapshot_epochs: tuple = ()
    # evolve
    population: int = 100
    generations: int = 1000
    mutation_sigma: float = 0.1
    # search
    trials: int = 100

    def resolved_ports(self):
        """Input and output port tuples with "auto" placement applied."""
        if self.input_ports == AUTO or self.output_ports == AUTO:
            auto_in, auto_out = default_ports(self.kind, self.nx, self.ny)
        inputs = (auto_in if self.input_ports == AUTO
                  else tuple(self.input_ports))
        outputs = (auto_out if self.output_ports == AUTO
                   else tuple(self.output_ports))
        return inputs, outputs

    def lattice_spec(self) -> LatticeSpec:
        return LatticeSpec(nx=self.nx, ny=self.ny, phi=self.phi,
                           diameter=self.diameter)

    def fire_config(self) -> FireConfig:
        return FireConfig(force_tol=self.force_tol)

    def material_params(self, stiffness) -> MaterialParams:
        return MaterialParams(stiffness=np.asarray(stiffness, dtype=float),
                              mass=self.mass, diameter=self.diameter,
                              alpha=self.alpha)

    def damping_params(self) -> DampingParams:
        return DampingParams(
            background=self.damping_background,
            particle_particle=self.damping_particle_particle,
            particle_wall=self.damping_particle_wall)

    def sim_config(self) -> SimConfig:
        return SimConfig(n_steps=self.n_steps, dt=self.dt,
                         damping=self.damping_params(),
                         record_stride=self.record_stride,
                         neighbor_method=self.neighbor_method)

    def experiment_spec(self) -> ExperimentSpec:
        inputs, outputs = self.resolved_ports()
        return ExperimentSpec(kind=self.kind, input_ports=inputs,
                              output_ports=outputs,
                              frequencies=tuple(self.frequencies),
                              amplitude=self.amplitude, loss=self.loss,
                              axis=self.axis)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr,
                           lr_milestones=tuple(self.lr_milestones),
                           lr_gamma=self.lr_gamma, init=self.init,
                           init_value=self.init_value, seed=self.seed,
                           snapshot_epochs=tuple(self.snapshot_epochs))

    def evo_config(self) -> EvoConfig:
        return EvoConfig(population=self.population,
                         generations=self.generations,
                         mutation_sigma=self.mutation_sigma, seed=self.seed)


_SECTIONS = {
    "run": ("name", "seed"),
    "physics": ("mass", "diameter", "alpha", "damping_background",
                "damping_particle_particle", "damping_particle_wall"),
    "packing": ("nx", "ny", "phi", "force_tol", "sigma_step"),
    "sim": ("n_steps", "dt", "record_stride", "neighbor_method"),
    "experiment": ("kind", "input_ports", "output_ports", "frequencies",
                   "amplitude", "loss", "axis"),
    "train": ("epochs", "lr", "lr_milestones", "lr_gamma", "init",
              "init_value", "snapshot_epochs"),
    "evolve": ("population", "generations", "mutation_sigma"),
    "search": ("trials",),
}

_INT_FIELDS = {"seed", "nx", "ny", "n_steps", "record_stride", "axis",
               "epochs", "population", "generations", "trials"}
_STR_FIELDS = {"name", "neighbor_method", "kind", "loss", "init"}
_INT_TUPLE_FIELDS = {"lr_milestones", "snapshot_epochs"}
_FLOAT_TUPLE_FIELDS = {"frequencies"}
_PORT_FIELDS = {"input_ports", "output_ports"}


def _parse_tuple(text, cast):
    text = text.strip()
    if not text:
        return ()
    return tuple(cast(tok) for tok in text.replace(",", " ").split())


def _parse_value(name, text):
    if name in _STR_FIELDS:
        return text.strip()
    if name in _INT_FIELDS:
        return int(text)
    if name in _PORT_FIELDS:
        return AUTO if text.strip() == AUTO else _parse_tuple(text, int)
    if name in _INT_TUPLE_FIELDS:
        return _parse_tuple(text, int)
    if name in _FLOAT_TUPLE_FIELDS:
        return _parse_tuple(text, float)
    return float(text)


def _format_value(name, value):
    if name in _PORT_FIELDS and value == AUTO:
        return AUTO
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) if isinstance(v, float) else str(v)
                         for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_manifest(path) -> RunManifest:
    """Parse an INI manifest; unknown sections or keys are errors."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read manifest {path}")
    known = {name for names in _SECTIONS.values() for name in names}
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown manifest section [{section}]")
        for key, text in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]")
            try:
                values[key] = _parse_value(key, text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {text!r}") from exc
    assert set(values) <= known
    try:
        return RunManifest(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def write_manifest(manifest: RunManifest, path):
    """Write a manifest as INI, round-tripping floats exactly."""
    parser = configparser.ConfigParser()
    by_name = {f.name: getattr(manifest, f.name) for f in fields(manifest)}
    for section, names in _SECTIONS.items():
        parser[section] = {
            name: _format_value(name, by_name[name]) for name in names
        }
    with open(path, "w") as fh:
        parser.write(fh)


def preset_names():
    """Names of the packaged preset manifests."""
    root = resources.files("granwave").joinpath("presets")
    return sorted(p.name[:-4] for p in root.iterdir()
                  if p.name.endswith(".ini"))


def load_preset(name: str) -> RunManifest:
    """Load a packaged preset manifest by name."""
    root = resources.files("granwave").joinpath("presets")
    candidate = root.joinpath(f"{name}.ini")
    if not candidate.is_file():
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    with resources.as_file(candidate) as path:
        return read_manifest(path)
