"""Differentiable granular-crystal simulation and inverse design."""

from .adjoint import (
    Tape,
    backward,
    forward_tape,
    grad_check,
    loss_and_grad,
    series_loss_and_grad,
)
from .engine import (
    DriveSignal,
    ProbeRecord,
    SimConfig,
    export_trajectory_csv,
    run_sim,
    step_verlet,
    wave_intensity,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateInputError,
    GradientError,
    GranwaveError,
    PackingError,
    SimulationError,
)
from .losses import (
    ExperimentSpec,
    LossReport,
    cross_entropy_loss,
    default_ports,
    evaluate_experiment,
    mae_loss,
    make_dataset,
    output_intensities,
    sample_losses,
    spectral_gain,
)
from .manifest import (
    RunManifest,
    load_preset,
    preset_names,
    read_manifest,
    write_manifest,
)
from . import cli
from .optimize import (
    STIFFNESS_BOUNDS,
    EvoConfig,
    EvoResult,
    TrainConfig,
    TrainResult,
    afpo_evolve,
    init_stiffness,
    mann_whitney_u,
    random_search,
    train_gd,
)
from .packing import (
    FireConfig,
    FireResult,
    LatticeSpec,
    compression_protocol,
    fire_minimize,
    hexagonal_lattice,
    load_packing,
    packing_fraction,
    save_packing,
)
from .physics import (
    DampingParams,
    MaterialParams,
    PackingGeometry,
    ParticleState,
    count_contacts,
    effective_stiffness,
    pair_force,
    pair_potential,
    total_accel,
    total_energy,
    wall_force,
)
from .verify import run_checks

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DegenerateInputError",
    "GradientError",
    "GranwaveError",
    "PackingError",
    "SimulationError",
    "DampingParams",
    "MaterialParams",
    "PackingGeometry",
    "ParticleState",
    "count_contacts",
    "effective_stiffness",
    "pair_force",
    "pair_potential",
    "total_accel",
    "total_energy",
    "wall_force",
    "FireConfig",
    "FireResult",
    "LatticeSpec",
    "compression_protocol",
    "fire_minimize",
    "hexagonal_lattice",
    "load_packing",
    "packing_fraction",
    "save_packing",
    "DriveSignal",
    "ProbeRecord",
    "SimConfig",
    "export_trajectory_csv",
    "run_sim",
    "step_verlet",
    "wave_intensity",
    "ExperimentSpec",
    "LossReport",
    "cross_entropy_loss",
    "default_ports",
    "evaluate_experiment",
    "mae_loss",
    "make_dataset",
    "output_intensities",
    "sample_losses",
    "spectral_gain",
    "Tape",
    "forward_tape",
    "grad_check",
    "loss_and_grad",
    "series_loss_and_grad",
    "STIFFNESS_BOUNDS",
    "EvoConfig",
    "EvoResult",
    "TrainConfig",
    "TrainResult",
    "afpo_evolve",
    "init_stiffness",
    "mann_whitney_u",
    "random_search",
    "train_gd",
    "RunManifest",
    "load_preset",
    "preset_names",
    "read_manifest",
    "write_manifest",
    "run_checks",
]

__version__ = "0.1.0"
