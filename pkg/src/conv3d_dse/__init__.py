"""Analytical and functional modeling of tiled 3D convolution on a flexible
accelerator, with a configuration search over loop orders, tiles and
parallelism."""

from .arch import (ArchSpec, BankAssignment, BankError, BufferLevel, FsmProgram,
                   ParallelSchedule, allocate_banks, assign_banks, fsm_run, loop_program,
                   parallel_assignment, psum_width_bits, required_bus_bw)
from .cost import (AccessTable, CostReport, EnergyTable, MissingEntry, cycles, energy,
                   energy_breakdown, evaluate, perf_per_watt)
from .funcsim import EventTrace, count_accesses, cross_check, random_config, simulate
from .netmodel import (ConfigError, DimensionMismatch, LayerShape, Network, Tensor,
                       conv3d_reference, data_path, load_arch, load_energy, load_network,
                       random_operands)
from .optimizer import (EmptySearchSpace, SearchOptions, allocate, baseline_fixed,
                        budget_options, f_reuse, generate_configs, load_configs,
                        optimize_layer, optimize_network, save_configs, search_network)
from .schedule import (CapacityError, Config, LoopOrder, TileSpec, TrafficCounts,
                       enumerate_loop_orders, metadata, reload_position, traffic_model)
from .sweeps import hierarchy_sweep

__version__ = "0.1.0"

__all__ = [
    "AccessTable",
    "allocate",
    "allocate_banks",
    "ArchSpec",
    "assign_banks",
    "BankAssignment",
    "BankError",
    "baseline_fixed",
    "budget_options",
    "BufferLevel",
    "CapacityError",
    "Config",
    "ConfigError",
    "conv3d_reference",
    "CostReport",
    "count_accesses",
    "cross_check",
    "cycles",
    "data_path",
    "DimensionMismatch",
    "EmptySearchSpace",
    "energy",
    "energy_breakdown",
    "EnergyTable",
    "enumerate_loop_orders",
    "evaluate",
    "EventTrace",
    "f_reuse",
    "fsm_run",
    "FsmProgram",
    "generate_configs",
    "hierarchy_sweep",
    "LayerShape",
    "load_arch",
    "load_configs",
    "load_energy",
    "load_network",
    "loop_program",
    "LoopOrder",
    "metadata",
    "MissingEntry",
    "Network",
    "optimize_layer",
    "optimize_network",
    "parallel_assignment",
    "ParallelSchedule",
    "perf_per_watt",
    "psum_width_bits",
    "random_config",
    "random_operands",
    "reload_position",
    "required_bus_bw",
    "save_configs",
    "search_network",
    "SearchOptions",
    "simulate",
    "Tensor",
    "TileSpec",
    "traffic_model",
    "TrafficCounts",
]
